"""Terrain profiles and line-of-sight evaluation.

Curvature is folded into the terrain: each sample is raised by the
effective-earth bulge and the radio ray is kept straight.  A link is

* ``CLEAR`` when the ray clears terrain by the required fraction of the
  first Fresnel zone everywhere,
* ``MARGINAL`` when the ray itself is unobstructed but the Fresnel band is
  infringed,
* ``OBSTRUCTED`` when terrain cuts the ray; each maximal run of blocked
  samples counts as one obstacle.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .dem import MissingTile, TileStore
from .geodesy import (
    EARTH_RADIUS_M,
    CoincidentPoints,
    PathGeometry,
    elevation_angle,
    great_circle_distance,
    intermediate_points,
    path_geometry,
)
from .sites import Site, SiteKind

SPEED_OF_LIGHT = 299_792_458.0
DEFAULT_K = 4.0 / 3.0
KNIFE_EDGE_MIN_NU = -0.78


class Classification(enum.Enum):
    CLEAR = "CLEAR"
    MARGINAL = "MARGINAL"
    OBSTRUCTED = "OBSTRUCTED"
    UNEVALUATED = "UNEVALUATED"


@dataclass(eq=False)
class TerrainProfile:
    start: Site
    end: Site
    distances: np.ndarray
    elevations: np.ndarray
    void_samples: int = 0

    @property
    def n_samples(self) -> int:
        return len(self.distances)

    @property
    def length(self) -> float:
        return float(self.distances[-1])

    def reversed(self) -> "TerrainProfile":
        return TerrainProfile(
            start=self.end,
            end=self.start,
            distances=np.linspace(0.0, self.length, self.n_samples),
            elevations=self.elevations[::-1].copy(),
            void_samples=self.void_samples,
        )


@dataclass(eq=False)
class ClearanceTrace:
    los_height: np.ndarray
    bulge: np.ndarray
    fresnel_radius: np.ndarray
    clearance: np.ndarray
    required: np.ndarray

    @property
    def margin(self) -> np.ndarray:
        return self.clearance - self.required


@dataclass(frozen=True)
class Obstacle:
    start_index: int
    end_index: int
    peak_index: int
    intrusion: float


@dataclass
class LinkAssessment:
    school_id: str
    tower_id: str
    path: PathGeometry
    classification: Classification
    min_clearance_margin: float | None = None
    obstacles: list[Obstacle] = field(default_factory=list)
    knife_edge_loss_db: float | None = None
    azimuth_to_tower: float | None = None
    elevation_to_tower: float | None = None
    fspl_db: float | None = None
    void_samples: int = 0
    missing_tile: str | None = None
    error: str | None = None

    @property
    def n_obstacles(self) -> int:
        return len(self.obstacles)

    @property
    def distance(self) -> float:
        return self.path.total_distance


def sample_count(distance: float, spacing: float) -> int:
    return max(2, math.ceil(distance / spacing) + 1)


def build_profile(a: Site, b: Site, store: TileStore, spacing: float = 30.0) -> TerrainProfile:
    """Sample terrain at uniform arc fractions from ``a`` to ``b``.

    Raises ``MissingTile`` when any sample falls on an absent tile.
    """
    if spacing <= 0:
        raise ValueError(f"sample spacing must be positive, got {spacing}")
    total = great_circle_distance(a.location, b.location)
    n = sample_count(total, spacing)
    fractions = np.linspace(0.0, 1.0, n)
    lats, lons = intermediate_points(a.location, b.location, fractions)
    elevations, n_void = store.elevations(lats, lons)
    return TerrainProfile(a, b, np.linspace(0.0, total, n), elevations, n_void)


def wavelength(freq: float) -> float:
    return SPEED_OF_LIGHT / freq


def fresnel_radius(n, freq, d1, d2):
    """Radius of the n-th Fresnel zone; works on scalars or arrays."""
    total = np.add(d1, d2)
    r = np.sqrt(n * wavelength(freq) * np.multiply(d1, d2) / total)
    return float(r) if np.ndim(r) == 0 else r


def earth_bulge(d1, d2, k=DEFAULT_K):
    b = np.multiply(d1, d2) / (2.0 * k * EARTH_RADIUS_M)
    return float(b) if np.ndim(b) == 0 else b


def diffraction_parameter(h: float, d1: float, d2: float, freq: float) -> float:
    """Fresnel-Kirchhoff parameter for an edge ``h`` meters above the ray."""
    return h * math.sqrt(2.0 * (d1 + d2) / (wavelength(freq) * d1 * d2))


def knife_edge_loss_nu(nu: float) -> float:
    if nu <= KNIFE_EDGE_MIN_NU:
        return 0.0
    t = nu - 0.1
    return 6.9 + 20.0 * math.log10(math.sqrt(t * t + 1.0) + t)


def knife_edge_loss(intrusion: float, d1: float, d2: float, freq: float) -> float:
    """Single knife-edge diffraction loss in dB (ITU-R P.526 approximation)."""
    if d1 <= 0 or d2 <= 0:
        raise ValueError("knife edge must lie strictly between the terminals")
    return knife_edge_loss_nu(diffraction_parameter(intrusion, d1, d2, freq))


def free_space_path_loss(d: float, freq: float) -> float:
    if d <= 0 or freq <= 0:
        raise ValueError("free-space loss needs positive distance and frequency")
    return 20.0 * math.log10(d / 1000.0) + 20.0 * math.log10(freq / 1e6) + 32.44


def clearance_trace(
    profile: TerrainProfile, freq: float, fresnel_fraction: float, k: float = DEFAULT_K
) -> ClearanceTrace:
    d = profile.distances
    total = profile.length
    d2 = total - d
    h_start = profile.elevations[0] + profile.start.antenna_height
    h_end = profile.elevations[-1] + profile.end.antenna_height
    los = h_start + (h_end - h_start) * (d / total)
    bulge = d * d2 / (2.0 * k * EARTH_RADIUS_M)
    radius = np.sqrt(wavelength(freq) * d * d2 / total)
    clearance = los - profile.elevations - bulge
    return ClearanceTrace(los, bulge, radius, clearance, fresnel_fraction * radius)


def find_obstacles(clearance: np.ndarray) -> list[Obstacle]:
    """Maximal runs of interior samples with negative clearance."""
    blocked = np.zeros(len(clearance) + 2, dtype=np.int8)
    blocked[2:-2] = clearance[1:-1] < 0
    edges = np.flatnonzero(np.diff(blocked))
    obstacles = []
    for start, stop in zip(edges[::2], edges[1::2]):
        # blocked is offset by one relative to clearance
        lo, hi = int(start), int(stop) - 1
        run = clearance[lo : hi + 1]
        peak = lo + int(np.argmin(run))
        obstacles.append(Obstacle(lo, hi, peak, float(-clearance[peak])))
    return obstacles


def _school_and_tower(profile: TerrainProfile):
    if profile.start.kind is SiteKind.TOWER and profile.end.kind is not SiteKind.TOWER:
        return profile.end, profile.elevations[-1], profile.start, profile.elevations[0]
    return profile.start, profile.elevations[0], profile.end, profile.elevations[-1]


def assess_link(
    profile: TerrainProfile,
    freq: float = 5.0e9,
    fresnel_fraction: float = 0.6,
    k: float = DEFAULT_K,
) -> LinkAssessment:
    trace = clearance_trace(profile, freq, fresnel_fraction, k)
    obstacles = find_obstacles(trace.clearance)
    min_margin = float(np.min(trace.margin))
    if obstacles:
        cls = Classification.OBSTRUCTED
    elif min_margin >= 0:
        cls = Classification.CLEAR
    else:
        cls = Classification.MARGINAL
    loss = None
    if len(obstacles) == 1:
        peak = obstacles[0].peak_index
        d1 = float(profile.distances[peak])
        loss = knife_edge_loss(obstacles[0].intrusion, d1, profile.length - d1, freq)

    school, school_ground, tower, tower_ground = _school_and_tower(profile)
    geometry = path_geometry(school.location, tower.location)
    elev = elevation_angle(
        profile.length,
        school_ground + school.antenna_height,
        tower_ground + tower.antenna_height,
        k,
    )
    return LinkAssessment(
        school_id=school.id,
        tower_id=tower.id,
        path=geometry,
        classification=cls,
        min_clearance_margin=min_margin,
        obstacles=obstacles,
        knife_edge_loss_db=loss,
        azimuth_to_tower=geometry.azimuth_fwd,
        elevation_to_tower=elev,
        fspl_db=free_space_path_loss(profile.length, freq),
        void_samples=profile.void_samples,
    )


def unevaluated(school: Site, tower: Site, missing_tile: str | None = None) -> LinkAssessment:
    try:
        geometry = path_geometry(school.location, tower.location)
    except CoincidentPoints:
        geometry = PathGeometry(0.0, math.nan, math.nan)
    return LinkAssessment(
        school_id=school.id,
        tower_id=tower.id,
        path=geometry,
        classification=Classification.UNEVALUATED,
        azimuth_to_tower=None if math.isnan(geometry.azimuth_fwd) else geometry.azimuth_fwd,
        missing_tile=missing_tile,
    )


def evaluate_pair(
    school: Site,
    tower: Site,
    store: TileStore,
    freq: float = 5.0e9,
    fresnel_fraction: float = 0.6,
    k: float = DEFAULT_K,
    spacing: float = 30.0,
) -> LinkAssessment:
    """Profile and assess one school-tower path; absent DEM coverage yields UNEVALUATED."""
    try:
        profile = build_profile(school, tower, store, spacing)
    except MissingTile as exc:
        return unevaluated(school, tower, exc.key)
    except CoincidentPoints:
        return unevaluated(school, tower)
    return assess_link(profile, freq, fresnel_fraction, k)
