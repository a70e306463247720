"""Independent reference computations used to check the library.

None of these share code paths with ``losplan``: distances and bearings use
3-D vector algebra instead of haversine / the spherical bearing formula,
interpolation is done with explicit scalar loops, and so on.
"""

import math

import mpmath
import numpy as np

R = 6371008.8


def unit(lat, lon):
    phi, lam = math.radians(lat), math.radians(lon)
    return np.array([math.cos(phi) * math.cos(lam), math.cos(phi) * math.sin(lam), math.sin(phi)])


def vector_distance(a, b):
    va, vb = unit(*a), unit(*b)
    return R * math.atan2(np.linalg.norm(np.cross(va, vb)), float(va @ vb))


def vector_bearing(a, b):
    va, vb = unit(*a), unit(*b)
    phi, lam = math.radians(a[0]), math.radians(a[1])
    east = np.array([-math.sin(lam), math.cos(lam), 0.0])
    north = np.array([-math.sin(phi) * math.cos(lam), -math.sin(phi) * math.sin(lam), math.cos(phi)])
    t = vb - (va @ vb) * va
    return math.degrees(math.atan2(t @ east, t @ north)) % 360.0


def rodrigues_point(a, b, f):
    """Rotate ``a`` toward ``b`` by fraction ``f`` of the arc about their common normal."""
    va, vb = unit(*a), unit(*b)
    n = np.cross(va, vb)
    n /= np.linalg.norm(n)
    theta = f * math.atan2(np.linalg.norm(np.cross(va, vb)), float(va @ vb))
    v = va * math.cos(theta) + np.cross(n, va) * math.sin(theta) + n * (n @ va) * (1 - math.cos(theta))
    return math.degrees(math.asin(v[2])), math.degrees(math.atan2(v[1], v[0]))


def bilinear(grid, sw_lat, sw_lon, lat, lon):
    """Scalar bilinear interpolation straight from the tile registration rules."""
    n = grid.shape[0] - 1
    y = (sw_lat + 1 - lat) * n
    x = (lon - sw_lon) * n
    i = min(int(math.floor(y)), n - 1)
    j = min(int(math.floor(x)), n - 1)
    ty, tx = y - i, x - j
    g = grid.astype(float)
    return (
        g[i, j] * (1 - ty) * (1 - tx)
        + g[i, j + 1] * (1 - ty) * tx
        + g[i + 1, j] * ty * (1 - tx)
        + g[i + 1, j + 1] * ty * tx
    )


def clearance_loop(distances, elevations, h_start, h_end, k=4 / 3):
    total = distances[-1]
    out = []
    for d, e in zip(distances, elevations):
        ray = (elevations[0] + h_start) * (total - d) / total + (elevations[-1] + h_end) * d / total
        out.append(ray - e - d * (total - d) / (2 * k * R))
    return out


def blocked_runs(clearance):
    """Exhaustive scan: (start, end) of every maximal run of negative interior samples."""
    runs = []
    start = None
    last = len(clearance) - 1
    for i, c in enumerate(clearance):
        inside = 0 < i < last and c < 0
        if inside and start is None:
            start = i
        if not inside and start is not None:
            runs.append((start, i - 1))
            start = None
    return runs


def exact_knife_edge_db(nu):
    """Knife-edge loss from the Fresnel integrals (no curve-fit approximation)."""
    nu = mpmath.mpf(nu)
    c, s = mpmath.fresnelc(nu), mpmath.fresnels(nu)
    return float(-20 * mpmath.log10(mpmath.sqrt((1 - c - s) ** 2 + (c - s) ** 2) / 2))
