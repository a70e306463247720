"""SRTM ``.hgt`` tile reader with bilinear elevation lookup.

A ``.hgt`` file is a raw grid of big-endian int16 heights, north row first,
covering one degree square whose SW corner is encoded in the file name
(``S14E033.hgt``).  Adjacent tiles share their edge row/column.
"""

from __future__ import annotations

import enum
import math
import os
import threading
from dataclasses import dataclass, field

import numpy as np

from .geodesy import GeoPoint

VOID = -32768
RESOLUTIONS = (1201, 3601)
MIN_PLAUSIBLE_M = -500
MAX_PLAUSIBLE_M = 9000
# grid coordinates within this many cells of a node snap onto it
_NODE_SNAP = 1e-9


class DemError(Exception):
    pass


class MissingTile(DemError):
    def __init__(self, key: str, path: str | None = None):
        self.key = key
        self.path = path
        super().__init__(f"missing DEM tile {key}" + (f" ({path})" if path else ""))


class CorruptTile(DemError):
    def __init__(self, key: str, reason: str):
        self.key = key
        super().__init__(f"corrupt DEM tile {key}: {reason}")


class VoidData(DemError):
    pass


class VoidPolicy(enum.Enum):
    ERROR = "error"
    TREAT_AS_ZERO = "zero"
    INTERPOLATE_NEIGHBORS = "interpolate"


def tile_key_for(p: GeoPoint) -> str:
    return tile_key(math.floor(p.lat), math.floor(p.lon))


def tile_key(lat0: int, lon0: int) -> str:
    ns = "N" if lat0 >= 0 else "S"
    ew = "E" if lon0 >= 0 else "W"
    return f"{ns}{abs(lat0):02d}{ew}{abs(lon0):03d}"


def parse_tile_key(key: str) -> tuple[int, int]:
    """Inverse of :func:`tile_key`; returns the SW corner ``(lat0, lon0)``."""
    if len(key) != 7 or key[0] not in "NS" or key[3] not in "EW":
        raise ValueError(f"not an SRTM tile name: {key!r}")
    lat0 = int(key[1:3])
    lon0 = int(key[4:7])
    return (lat0 if key[0] == "N" else -lat0), (lon0 if key[3] == "E" else -lon0)


@dataclass(frozen=True, eq=False)
class DemTile:
    """One parsed tile.

    ``samples`` holds the raw int16 grid as stored on disk (north row first);
    ``heights`` is the float grid used for lookups, with voids set to 0.
    """

    key: str
    sw_lat: int
    sw_lon: int
    resolution: int
    samples: np.ndarray
    heights: np.ndarray = field(repr=False)
    void_mask: np.ndarray | None = field(repr=False)

    @classmethod
    def from_samples(cls, key: str, samples: np.ndarray) -> "DemTile":
        samples = np.ascontiguousarray(samples, dtype=np.int16)
        res = samples.shape[0]
        if samples.shape != (res, res) or res not in RESOLUTIONS:
            raise CorruptTile(key, f"grid shape {samples.shape} is not a standard SRTM size")
        void = samples == VOID
        valid = samples[~void]
        if valid.size and (valid.min() < MIN_PLAUSIBLE_M or valid.max() > MAX_PLAUSIBLE_M):
            raise CorruptTile(
                key, f"heights {valid.min()}..{valid.max()} m outside plausible range"
            )
        heights = samples.astype(np.float64)
        heights[void] = 0.0
        heights.flags.writeable = False
        samples.flags.writeable = False
        lat0, lon0 = parse_tile_key(key)
        return cls(key, lat0, lon0, res, samples, heights, void if void.any() else None)


def resolution_from_size(nbytes: int) -> int | None:
    for res in RESOLUTIONS:
        if nbytes == 2 * res * res:
            return res
    return None


def read_hgt(path: str, key: str | None = None) -> DemTile:
    key = key or os.path.splitext(os.path.basename(path))[0].upper()
    size = os.path.getsize(path)
    res = resolution_from_size(size)
    if res is None:
        raise CorruptTile(key, f"file size {size} bytes matches no SRTM resolution")
    raw = np.fromfile(path, dtype=">i2")
    return DemTile.from_samples(key, raw.reshape(res, res).astype(np.int16))


def write_hgt(path: str, samples: np.ndarray) -> None:
    samples = np.asarray(samples)
    if samples.ndim != 2 or samples.shape[0] != samples.shape[1]:
        raise ValueError(f"expected a square grid, got shape {samples.shape}")
    samples.astype(">i2").tofile(path)


class TileStore:
    """Directory of ``.hgt`` tiles with a lazily filled, thread-safe cache.

    Each tile is parsed at most once per process; ``parse_counts`` records
    how many times each key was read from disk.
    """

    def __init__(self, root_dir: str, void_policy: VoidPolicy = VoidPolicy.TREAT_AS_ZERO):
        self.root_dir = root_dir
        self.void_policy = VoidPolicy(void_policy)
        self.loaded: dict[str, DemTile] = {}
        self.missing: set[str] = set()
        self.parse_counts: dict[str, int] = {}
        self._lock = threading.Lock()
        self._key_locks: dict[str, threading.Lock] = {}

    def __getstate__(self):
        # locks cannot cross process boundaries; loaded tiles travel with the store
        state = self.__dict__.copy()
        del state["_lock"], state["_key_locks"]
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)
        self._lock = threading.Lock()
        self._key_locks = {}

    def path_for(self, key: str) -> str:
        return os.path.join(self.root_dir, f"{key}.hgt")

    def load_tile(self, key: str) -> DemTile:
        tile = self.loaded.get(key)
        if tile is not None:
            return tile
        with self._lock:
            key_lock = self._key_locks.setdefault(key, threading.Lock())
        with key_lock:
            tile = self.loaded.get(key)
            if tile is not None:
                return tile
            if key in self.missing:
                raise MissingTile(key, self.path_for(key))
            path = self._find(key)
            if path is None:
                self.missing.add(key)
                raise MissingTile(key, self.path_for(key))
            tile = read_hgt(path, key)
            self.parse_counts[key] = self.parse_counts.get(key, 0) + 1
            self.loaded[key] = tile
            return tile

    def _find(self, key: str) -> str | None:
        for name in (f"{key}.hgt", f"{key.lower()}.hgt", f"{key}.HGT"):
            path = os.path.join(self.root_dir, name)
            if os.path.isfile(path):
                return path
        return None

    def preload(self, keys) -> list[str]:
        """Load every available tile in ``keys``; return the keys that are missing."""
        absent = []
        for key in sorted(set(keys)):
            try:
                self.load_tile(key)
            except MissingTile:
                absent.append(key)
        return absent

    def elevation_at(self, p: GeoPoint) -> float:
        values, _ = self.elevations(np.array([p.lat]), np.array([p.lon]))
        return float(values[0])

    def elevations(self, lats, lons) -> tuple[np.ndarray, int]:
        """Bilinear heights for arrays of coordinates.

        Returns ``(heights, n_void)`` where ``n_void`` counts the queries whose
        interpolation cell touched a void sample.
        """
        lats = np.asarray(lats, dtype=float)
        lons = np.asarray(lons, dtype=float)
        out = np.empty(lats.shape, dtype=float)
        lat0 = np.floor(lats).astype(int)
        lon0 = np.floor(lons).astype(int)
        n_void = 0
        if lat0.size and (lat0 == lat0.flat[0]).all() and (lon0 == lon0.flat[0]).all():
            groups = [((int(lat0.flat[0]), int(lon0.flat[0])), slice(None))]
        else:
            code = lat0 * 1000 + lon0
            masks = [code == c for c in np.unique(code)]
            groups = [((int(lat0[m].flat[0]), int(lon0[m].flat[0])), m) for m in masks]
        for (la, lo), sel in groups:
            tile = self.load_tile(tile_key(la, lo))
            vals, nv = self._interpolate(tile, lats[sel], lons[sel])
            out[sel] = vals
            n_void += nv
        return out, n_void

    def _interpolate(self, tile: DemTile, lats: np.ndarray, lons: np.ndarray):
        span = tile.resolution - 1
        row = (tile.sw_lat + 1 - lats) * span
        col = (lons - tile.sw_lon) * span
        row = _snap(row)
        col = _snap(col)
        r0 = np.clip(np.floor(row).astype(int), 0, span - 1)
        c0 = np.clip(np.floor(col).astype(int), 0, span - 1)
        fr = row - r0
        fc = col - c0
        h = tile.heights
        z00 = h[r0, c0]
        z01 = h[r0, c0 + 1]
        z10 = h[r0 + 1, c0]
        z11 = h[r0 + 1, c0 + 1]
        n_void = 0
        if tile.void_mask is not None:
            m = tile.void_mask
            v00, v01, v10, v11 = m[r0, c0], m[r0, c0 + 1], m[r0 + 1, c0], m[r0 + 1, c0 + 1]
            touched = v00 | v01 | v10 | v11
            n_void = int(touched.sum())
            if n_void and self.void_policy is VoidPolicy.ERROR:
                raise VoidData(f"void sample in tile {tile.key} at {n_void} queried point(s)")
            if n_void and self.void_policy is VoidPolicy.INTERPOLATE_NEIGHBORS:
                z00, z01, z10, z11 = _fill_voids((z00, z01, z10, z11), (v00, v01, v10, v11))
        top = z00 + (z01 - z00) * fc
        bottom = z10 + (z11 - z10) * fc
        vals = top + (bottom - top) * fr
        # keep exact node values exact
        vals = np.where((fr == 0) & (fc == 0), z00, vals)
        return vals, n_void


def _snap(x: np.ndarray) -> np.ndarray:
    nearest = np.round(x)
    return np.where(np.abs(x - nearest) < _NODE_SNAP, nearest, x)


def _fill_voids(corners, voids):
    """Replace void corners by the mean of the valid corners of the same cell."""
    z = np.stack(corners)
    v = np.stack(voids)
    valid = ~v
    count = valid.sum(axis=0)
    mean = np.where(count > 0, np.where(valid, z, 0.0).sum(axis=0) / np.maximum(count, 1), 0.0)
    z = np.where(v, mean, z)
    return tuple(z)


def load_tile(store: TileStore, key: str) -> DemTile:
    return store.load_tile(key)


def elevation_at(store: TileStore, p: GeoPoint) -> float:
    return store.elevation_at(p)
