"""Candidate enumeration, parallel assessment and serving-tower selection."""

from __future__ import annotations

import math
import multiprocessing as mp
import os
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .analysis import (
    DEFAULT_K,
    Classification,
    LinkAssessment,
    evaluate_pair,
    unevaluated,
)
from .dem import DemError, TileStore, tile_key
from .geodesy import EARTH_RADIUS_M, great_circle_distance
from .sites import Site


@dataclass(frozen=True)
class PlanConfig:
    radius: float = 50_000.0
    frequency: float = 5.0e9
    fresnel_fraction: float = 0.6
    k_factor: float = DEFAULT_K
    spacing: float = 30.0
    workers: int = 1

    def __post_init__(self):
        for name in ("radius", "frequency", "spacing", "k_factor"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if not 0.0 <= self.fresnel_fraction <= 1.0:
            raise ValueError(f"fresnel_fraction must be in [0, 1], got {self.fresnel_fraction}")
        if self.workers < 1:
            raise ValueError(f"workers must be at least 1, got {self.workers}")


class Candidate(NamedTuple):
    school: Site
    tower: Site
    distance: float


@dataclass
class PlanResult:
    towers: list[Site]
    schools: list[Site]
    config: PlanConfig
    assessments: list[LinkAssessment]
    assignments: dict[str, str | None]
    tallies: dict[str, Counter] = field(default_factory=dict)

    def assessment_for(self, school_id: str, tower_id: str) -> LinkAssessment | None:
        return self._index().get((school_id, tower_id))

    def chosen(self, school_id: str) -> LinkAssessment | None:
        tower_id = self.assignments.get(school_id)
        return None if tower_id is None else self.assessment_for(school_id, tower_id)

    def served_counts(self) -> dict[str, int]:
        counts = {t.id: 0 for t in self.towers}
        for tower_id in self.assignments.values():
            if tower_id is not None:
                counts[tower_id] += 1
        return counts

    def _index(self):
        idx = self.__dict__.get("_idx")
        if idx is None:
            idx = {(a.school_id, a.tower_id): a for a in self.assessments}
            self.__dict__["_idx"] = idx
        return idx


def enumerate_candidates(towers: list[Site], schools: list[Site], radius: float) -> list[Candidate]:
    """All school-tower pairs within ``radius`` meters (boundary inclusive).

    Ordered by school input order, then tower distance, then tower id.
    """
    if not towers:
        raise ValueError("at least one tower is required")
    if not radius > 0:
        raise ValueError(f"radius must be positive, got {radius}")
    t_lat = np.radians([t.location.lat for t in towers])
    t_lon = np.radians([t.location.lon for t in towers])
    # coarse vectorized screen; the exact scalar distance decides membership
    screen = radius * (1 + 1e-6) + 1.0
    pairs = []
    for school in schools:
        s_lat = math.radians(school.location.lat)
        s_lon = math.radians(school.location.lon)
        h = (
            np.sin((t_lat - s_lat) / 2) ** 2
            + np.cos(s_lat) * np.cos(t_lat) * np.sin((t_lon - s_lon) / 2) ** 2
        )
        approx = 2 * EARTH_RADIUS_M * np.arcsin(np.sqrt(np.minimum(h, 1.0)))
        near = []
        for i in np.flatnonzero(approx <= screen):
            tower = towers[i]
            d = great_circle_distance(school.location, tower.location)
            if d <= radius:
                near.append(Candidate(school, tower, d))
        near.sort(key=lambda c: (c.distance, c.tower.id))
        pairs.extend(near)
    return pairs


def tiles_for_pair(c: Candidate) -> set[str]:
    a, b = c.school.location, c.tower.location
    lat_lo, lat_hi = sorted((math.floor(a.lat), math.floor(b.lat)))
    lon_lo, lon_hi = sorted((math.floor(a.lon), math.floor(b.lon)))
    if lon_hi - lon_lo > 180:
        # antimeridian crossing: only the two end tiles are certain
        return {tile_key(math.floor(p.lat), math.floor(p.lon)) for p in (a, b)}
    return {tile_key(la, lo) for la in range(lat_lo, lat_hi + 1) for lo in range(lon_lo, lon_hi + 1)}


_worker_store: TileStore | None = None
_worker_config: PlanConfig | None = None


def _init_worker(store, config):
    global _worker_store, _worker_config
    _worker_store = store
    _worker_config = config


def _assess(c: Candidate, store: TileStore, config: PlanConfig) -> LinkAssessment:
    try:
        return evaluate_pair(
            c.school,
            c.tower,
            store,
            freq=config.frequency,
            fresnel_fraction=config.fresnel_fraction,
            k=config.k_factor,
            spacing=config.spacing,
        )
    except DemError as exc:
        result = unevaluated(c.school, c.tower, getattr(exc, "key", None))
        result.error = str(exc)
        return result


def _assess_chunk(chunk: list[Candidate]) -> list[LinkAssessment]:
    return [_assess(c, _worker_store, _worker_config) for c in chunk]


def _chunks(items: list, n_chunks: int) -> list[list]:
    size = max(1, math.ceil(len(items) / n_chunks))
    return [items[i : i + size] for i in range(0, len(items), size)]


def _pool_context():
    methods = mp.get_all_start_methods()
    return mp.get_context("fork" if "fork" in methods else methods[0])


def run_batch(pairs: list[Candidate], store: TileStore, config: PlanConfig) -> list[LinkAssessment]:
    """Assess every pair; output order matches ``pairs`` whatever the worker count.

    Pairs over missing or unreadable tiles come back ``UNEVALUATED`` instead
    of aborting the batch.
    """
    pairs = list(pairs)
    if config.workers == 1 or len(pairs) < 2:
        return [_assess(c, store, config) for c in pairs]
    keys = set()
    for c in pairs:
        keys |= tiles_for_pair(c)
    # loaded before the fork so workers share the parsed grids
    store.preload(keys)
    workers = min(config.workers, len(pairs))
    chunks = _chunks(pairs, workers * 4)
    with ProcessPoolExecutor(
        max_workers=workers,
        mp_context=_pool_context(),
        initializer=_init_worker,
        initargs=(store, config),
    ) as pool:
        results = []
        for part in pool.map(_assess_chunk, chunks):
            results.extend(part)
    return results


_PRIORITY = {Classification.CLEAR: 0, Classification.MARGINAL: 1, Classification.OBSTRUCTED: 2}


def _selection_key(a: LinkAssessment):
    rank = _PRIORITY[a.classification]
    if rank == 2:
        return (rank, a.knife_edge_loss_db, a.distance, a.tower_id)
    return (rank, 0.0, a.distance, a.tower_id)


def select_tower(school: Site | str, assessments: list[LinkAssessment]) -> LinkAssessment | None:
    """Pick the serving link for one school, or ``None`` when unserved.

    Clear beats Marginal beats a single obstacle (lowest diffraction loss);
    within a class the shorter path wins, then the lower tower id.  Links
    with two or more obstacles, or that could not be evaluated, never serve.
    """
    school_id = school if isinstance(school, str) else school.id
    eligible = [
        a
        for a in assessments
        if a.school_id == school_id
        and a.classification in _PRIORITY
        and (a.classification is not Classification.OBSTRUCTED or a.n_obstacles == 1)
    ]
    if not eligible:
        return None
    return min(eligible, key=_selection_key)


def tally(towers: list[Site], assessments: list[LinkAssessment]) -> dict[str, Counter]:
    counts = {t.id: Counter({c: 0 for c in Classification}) for t in towers}
    for a in assessments:
        counts[a.tower_id][a.classification] += 1
    return counts


def plan(
    towers: list[Site],
    schools: list[Site],
    store: TileStore,
    config: PlanConfig = PlanConfig(),
    pairs: list[Candidate] | None = None,
    assessments: list[LinkAssessment] | None = None,
) -> PlanResult:
    if pairs is None:
        pairs = enumerate_candidates(towers, schools, config.radius)
    if assessments is None:
        assessments = run_batch(pairs, store, config)
    by_school: dict[str, list[LinkAssessment]] = {s.id: [] for s in schools}
    for a in assessments:
        by_school[a.school_id].append(a)
    assignments = {}
    for s in schools:
        choice = select_tower(s, by_school[s.id])
        assignments[s.id] = None if choice is None else choice.tower_id
    return PlanResult(
        towers=list(towers),
        schools=list(schools),
        config=config,
        assessments=assessments,
        assignments=assignments,
        tallies=tally(towers, assessments),
    )


def default_workers() -> int:
    try:
        return max(1, len(os.sched_getaffinity(0)))
    except AttributeError:
        return max(1, os.cpu_count() or 1)
