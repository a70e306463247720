"""Synthetic DEM tiles and site lists for tests, benchmarks and demos.

Terrain is a smooth analytic field (a sum of Gaussian hills) evaluated on
each tile grid, so neighbouring tiles agree on their shared edge.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np

from .dem import parse_tile_key, tile_key, write_hgt


@dataclass(frozen=True)
class Hill:
    lat: float
    lon: float
    height: float
    sigma: float


def random_hills(lat_range, lon_range, n: int, seed: int = 0, height=(40.0, 400.0), sigma=(0.01, 0.12)):
    rng = np.random.default_rng(seed)
    return [
        Hill(
            float(rng.uniform(*lat_range)),
            float(rng.uniform(*lon_range)),
            float(rng.uniform(*height)),
            float(rng.uniform(*sigma)),
        )
        for _ in range(n)
    ]


def hills_grid(key: str, hills, base: float = 400.0, resolution: int = 1201) -> np.ndarray:
    """int16 tile grid (north row first) of ``base`` plus the hills."""
    lat0, lon0 = parse_tile_key(key)
    lats = lat0 + 1 - np.arange(resolution) / (resolution - 1)
    lons = lon0 + np.arange(resolution) / (resolution - 1)
    z = np.full((resolution, resolution), float(base))
    for h in hills:
        gy = np.exp(-((lats - h.lat) ** 2) / (2 * h.sigma**2))
        gx = np.exp(-((lons - h.lon) ** 2) / (2 * h.sigma**2))
        z += h.height * np.outer(gy, gx)
    return np.round(z).astype(np.int16)


def write_tile(dem_dir: str, key: str, grid: np.ndarray) -> str:
    os.makedirs(dem_dir, exist_ok=True)
    path = os.path.join(dem_dir, f"{key}.hgt")
    write_hgt(path, grid)
    return path


def write_flat_tile(dem_dir: str, key: str, value: int = 0, resolution: int = 1201) -> str:
    return write_tile(dem_dir, key, np.full((resolution, resolution), value, dtype=np.int16))


def write_csv(path: str, header, rows) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


@dataclass
class Scenario:
    dem_dir: str
    towers_csv: str
    schools_csv: str
    tiles: list[str]


def make_scenario(
    root: str,
    n_towers: int = 5,
    n_schools: int = 200,
    sw=(-15, 33),
    tiles_lat: int = 2,
    tiles_lon: int = 2,
    seed: int = 7,
    n_hills: int = 60,
) -> Scenario:
    """Write tiles covering a ``tiles_lat`` x ``tiles_lon`` block plus site lists.

    Sites are kept 0.05 degrees inside the block so every 50 km path stays
    on the generated tiles.
    """
    lat_lo, lon_lo = sw
    lat_hi, lon_hi = lat_lo + tiles_lat, lon_lo + tiles_lon
    rng = np.random.default_rng(seed)
    hills = random_hills((lat_lo, lat_hi), (lon_lo, lon_hi), n_hills, seed=seed + 1)
    dem_dir = os.path.join(root, "dem")
    keys = []
    for la in range(lat_lo, lat_hi):
        for lo in range(lon_lo, lon_hi):
            key = tile_key(la, lo)
            write_tile(dem_dir, key, hills_grid(key, hills))
            keys.append(key)
    inset = 0.05
    tower_rows = []
    for i in range(n_towers):
        lat = rng.uniform(lat_lo + 0.4, lat_hi - 0.4)
        lon = rng.uniform(lon_lo + 0.4, lon_hi - 0.4)
        tower_rows.append([f"T{i + 1}", f"{lat:.6f}", f"{lon:.6f}", f"{rng.uniform(25, 60):.1f}"])
    school_rows = []
    for i in range(n_schools):
        # half of the schools cluster around towers, the rest anywhere
        if i % 2 == 0:
            t = tower_rows[int(rng.integers(n_towers))]
            lat = float(t[1]) + rng.normal(0, 0.2)
            lon = float(t[2]) + rng.normal(0, 0.2)
        else:
            lat = rng.uniform(lat_lo, lat_hi)
            lon = rng.uniform(lon_lo, lon_hi)
        lat = min(max(lat, lat_lo + inset), lat_hi - inset)
        lon = min(max(lon, lon_lo + inset), lon_hi - inset)
        level = "primary" if rng.random() < 0.7 else "secondary"
        height = "" if rng.random() < 0.8 else f"{rng.uniform(6, 18):.1f}"
        school_rows.append([f"S{i + 1:04d}", f"{lat:.6f}", f"{lon:.6f}", level, height])
    towers_csv = write_csv(os.path.join(root, "towers.csv"), ["id", "lat", "lon", "height_m"], tower_rows)
    schools_csv = write_csv(
        os.path.join(root, "schools.csv"), ["id", "lat", "lon", "level", "height_m"], school_rows
    )
    return Scenario(dem_dir, towers_csv, schools_csv, keys)
