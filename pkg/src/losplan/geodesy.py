"""Spherical-earth geodesic helpers.

All angles are in degrees at the API boundary and distances in meters.
The earth is a sphere of mean radius ``EARTH_RADIUS_M``; no ellipsoid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

EARTH_RADIUS_M = 6371008.8


class CoincidentPoints(ValueError):
    """Raised when a direction is requested between two identical points."""


class ZeroDistance(ValueError):
    pass


def normalize_lon(lon: float) -> float:
    lon = ((lon + 180.0) % 360.0) - 180.0
    # float modulo can round up to exactly +180 for tiny negative inputs
    return -180.0 if lon >= 180.0 else lon


@dataclass(frozen=True)
class GeoPoint:
    """Geodetic coordinate; longitude is normalized into [-180, 180)."""

    lat: float
    lon: float

    def __post_init__(self):
        lat, lon = float(self.lat), float(self.lon)
        if not (math.isfinite(lat) and math.isfinite(lon)):
            raise ValueError(f"non-finite coordinate ({lat}, {lon})")
        if not -90.0 <= lat <= 90.0:
            raise ValueError(f"latitude {lat} outside [-90, 90]")
        object.__setattr__(self, "lat", lat)
        object.__setattr__(self, "lon", normalize_lon(lon))


@dataclass(frozen=True)
class PathGeometry:
    total_distance: float
    azimuth_fwd: float
    azimuth_rev: float


def great_circle_distance(a: GeoPoint, b: GeoPoint) -> float:
    """Haversine distance in meters."""
    phi1, phi2 = math.radians(a.lat), math.radians(b.lat)
    dphi = phi2 - phi1
    dlam = math.radians(b.lon - a.lon)
    h = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2) ** 2
    h = min(1.0, h)
    return 2.0 * EARTH_RADIUS_M * math.asin(math.sqrt(h))


def initial_bearing(a: GeoPoint, b: GeoPoint) -> float:
    """Forward azimuth from ``a`` to ``b``, clockwise from true north, in [0, 360)."""
    if a == b:
        raise CoincidentPoints(f"azimuth undefined for coincident points {a}")
    phi1, phi2 = math.radians(a.lat), math.radians(b.lat)
    dlam = math.radians(b.lon - a.lon)
    x = math.sin(dlam) * math.cos(phi2)
    y = math.cos(phi1) * math.sin(phi2) - math.sin(phi1) * math.cos(phi2) * math.cos(dlam)
    brng = math.degrees(math.atan2(x, y)) % 360.0
    return 0.0 if brng >= 360.0 else brng


def path_geometry(a: GeoPoint, b: GeoPoint) -> PathGeometry:
    return PathGeometry(
        total_distance=great_circle_distance(a, b),
        azimuth_fwd=initial_bearing(a, b),
        azimuth_rev=initial_bearing(b, a),
    )


def _unit_vector(p: GeoPoint) -> np.ndarray:
    phi, lam = math.radians(p.lat), math.radians(p.lon)
    return np.array([math.cos(phi) * math.cos(lam), math.cos(phi) * math.sin(lam), math.sin(phi)])


def intermediate_points(a: GeoPoint, b: GeoPoint, fractions) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized great-circle interpolation.

    Returns ``(lats, lons)`` arrays in degrees for each fraction of the arc.
    Fractions of exactly 0 and 1 return the endpoints unchanged.
    """
    if a == b:
        raise CoincidentPoints(f"no great-circle path between coincident points {a}")
    f = np.asarray(fractions, dtype=float)
    va, vb = _unit_vector(a), _unit_vector(b)
    delta = great_circle_distance(a, b) / EARTH_RADIUS_M
    sin_delta = math.sin(delta)
    if sin_delta < 1e-15:
        # antipodal: the great circle is not unique
        raise CoincidentPoints(f"great circle undefined between antipodes {a} and {b}")
    wa = np.sin((1.0 - f) * delta) / sin_delta
    wb = np.sin(f * delta) / sin_delta
    x = wa * va[0] + wb * vb[0]
    y = wa * va[1] + wb * vb[1]
    z = wa * va[2] + wb * vb[2]
    lats = np.degrees(np.arctan2(z, np.hypot(x, y)))
    lons = np.degrees(np.arctan2(y, x))
    lons = np.where(lons >= 180.0, lons - 360.0, lons)
    lats = np.where(f == 0.0, a.lat, np.where(f == 1.0, b.lat, lats))
    lons = np.where(f == 0.0, a.lon, np.where(f == 1.0, b.lon, lons))
    return lats, lons


def intermediate_point(a: GeoPoint, b: GeoPoint, fraction: float) -> GeoPoint:
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"fraction {fraction} outside [0, 1]")
    if fraction == 0.0:
        return a
    if fraction == 1.0:
        return b
    lats, lons = intermediate_points(a, b, [fraction])
    return GeoPoint(float(lats[0]), float(lons[0]))


def destination_point(origin: GeoPoint, bearing: float, distance: float) -> GeoPoint:
    """Point reached travelling ``distance`` meters from ``origin`` on the given bearing."""
    delta = distance / EARTH_RADIUS_M
    theta = math.radians(bearing)
    phi1, lam1 = math.radians(origin.lat), math.radians(origin.lon)
    sin_phi2 = math.sin(phi1) * math.cos(delta) + math.cos(phi1) * math.sin(delta) * math.cos(theta)
    phi2 = math.asin(max(-1.0, min(1.0, sin_phi2)))
    lam2 = lam1 + math.atan2(
        math.sin(theta) * math.sin(delta) * math.cos(phi1),
        math.cos(delta) - math.sin(phi1) * sin_phi2,
    )
    return GeoPoint(math.degrees(phi2), math.degrees(lam2))


def curvature_drop(d: float, k: float) -> float:
    """Angular drop (radians) of the effective-earth horizon at range ``d``."""
    return d / (2.0 * k * EARTH_RADIUS_M)


def elevation_angle(d: float, h_start: float, h_end: float, k: float = 4.0 / 3.0) -> float:
    """Aiming elevation in degrees from a point at ``h_start`` toward one at
    ``h_end`` (both AMSL) at ground range ``d``, corrected for effective-earth
    curvature with k-factor ``k`` (``math.inf`` gives the flat-earth angle)."""
    if not d > 0:
        raise ZeroDistance(f"elevation angle needs a positive range, got {d}")
    return math.degrees(math.atan((h_end - h_start) / d - curvature_drop(d, k)))
