"""Acceptance criteria 1 to 8, one marker per criterion.

``conftest.py`` prints a PASS/FAIL line per criterion at the end of the run.
"""

import csv
import filecmp
import io
import json
import math
import os
import re
import time

import numpy as np
import pytest

from losplan import cli, report
from losplan.analysis import (
    Classification,
    TerrainProfile,
    assess_link,
    build_profile,
    clearance_trace,
    earth_bulge,
    free_space_path_loss,
    fresnel_radius,
    knife_edge_loss_nu,
)
from losplan.dem import TileStore, read_hgt, resolution_from_size, write_hgt
from losplan.geodesy import EARTH_RADIUS_M, GeoPoint, great_circle_distance, initial_bearing
from losplan.planner import PlanConfig, enumerate_candidates, plan, run_batch
from losplan.sites import Site
from losplan.synthetic import make_scenario

import oracles
from scenes import DEG_M, meridian_ends, ridge_grid, triangle_rows

K = 4 / 3
F = 5.0e9


# -- 1. geodesy ---------------------------------------------------------------

# closed forms R * angle, angles exact in radians; values evaluated with mpmath
CANONICAL = [
    ((0, 0), (1, 0), 111195.08023353292),
    ((0, 0), (0, 1), 111195.08023353292),
    ((0, 0), (0, 180), 20015114.442035925),  # pi * R
    ((0, 0), (90, 0), 10007557.221017962),  # pi/2 * R
    ((-14, 33), (-13, 33), 111195.08023353292),  # along a meridian
    ((0, 179.5), (0, -179.5), 111195.08023353292),  # across the antimeridian
    ((45, 0), (45, 180), 10007557.221017962),  # over the pole
]


@pytest.mark.acceptance(1, "geodesy oracle suite")
def test_geodesy_canonical_distances():
    started = time.perf_counter()
    for a, b, expected in CANONICAL:
        got = great_circle_distance(GeoPoint(*a), GeoPoint(*b))
        assert abs(got - expected) < 1.0, (a, b, got)
        assert abs(got - oracles.vector_distance(a, b)) < 1.0
    assert abs(great_circle_distance(GeoPoint(0, 0), GeoPoint(0, 180)) - math.pi * EARTH_RADIUS_M) < 1.0
    for b, expected in (((0, 1), 90.0), ((1, 0), 0.0), ((0, -1), 270.0), ((-1, 0), 180.0)):
        assert abs(initial_bearing(GeoPoint(0, 0), GeoPoint(*b)) - expected) <= 1e-9
    assert time.perf_counter() - started < 1.0


# -- 2. analytic closed forms ---------------------------------------------------


@pytest.mark.acceptance(2, "Fresnel, bulge, knife-edge and FSPL closed forms")
def test_closed_forms():
    assert abs(fresnel_radius(1, F, 5000, 5000) - 12.24) <= 0.01
    assert abs(earth_bulge(25000, 25000, K) - 36.8) <= 0.1
    assert abs(knife_edge_loss_nu(0.0) - 6.03) <= 0.01
    assert abs(free_space_path_loss(31000, F) - 136.25) <= 0.05


# -- 3. synthetic terrain -------------------------------------------------------

# length at which the mid-path bulge is exactly 2 m: (D/2)^2 / (2kR) = 2
HILL_LENGTH = math.sqrt(16 * K * EARTH_RADIUS_M)


def meridian_link(store, length, h_school=10.0, h_tower=30.0):
    s, t = meridian_ends(length)
    school, tower = Site.school("S", *s, height=h_school), Site.tower("T", *t, h_tower)
    return build_profile(school, tower, store)


@pytest.mark.acceptance(3, "synthetic-terrain classification")
def test_flat_tile_ten_km_is_clear(flat_dem):
    profile = meridian_link(TileStore(flat_dem), 10_000)
    assert profile.length == pytest.approx(10_000, abs=0.01)
    a = assess_link(profile, F, 0.6, K)
    assert a.classification is Classification.CLEAR
    assert a.n_obstacles == 0


@pytest.mark.acceptance(3, "synthetic-terrain classification")
def test_hill_five_metres_above_ray(tile_dir):
    # ray is 20 m at mid-path; ground 23 m + 2 m bulge pokes 5 m through it
    dem = tile_dir("N00E000", ridge_grid(triangle_rows(600, 23)))
    profile = meridian_link(TileStore(dem), HILL_LENGTH)
    assert earth_bulge(HILL_LENGTH / 2, HILL_LENGTH / 2, K) == pytest.approx(2.0, abs=1e-9)
    a = assess_link(profile, F, 0.6, K)
    assert a.classification is Classification.OBSTRUCTED
    assert a.n_obstacles == 1
    spacing = profile.length / (profile.n_samples - 1)
    slope = 1.0 / (DEG_M / 1200)  # one metre per grid row
    assert abs(a.obstacles[0].intrusion - 5.0) <= slope * spacing
    assert a.knife_edge_loss_db is not None


@pytest.mark.acceptance(3, "synthetic-terrain classification")
def test_lowered_hill_is_marginal(tile_dir):
    # 16 m hill leaves +2 m of clearance, inside the ~7.9 m required band
    dem = tile_dir("N00E000", ridge_grid(triangle_rows(600, 16)))
    profile = meridian_link(TileStore(dem), HILL_LENGTH)
    a = assess_link(profile, F, 0.6, K)
    assert a.classification is Classification.MARGINAL
    trace = clearance_trace(profile, F, 0.6, K)
    assert trace.clearance.min() == pytest.approx(2.0, abs=0.35)


@pytest.mark.acceptance(3, "synthetic-terrain classification")
def test_obstacle_runs_match_brute_force():
    rng = np.random.default_rng(2024)
    kinds = {c: 0 for c in Classification}
    for _ in range(1000):
        n = int(rng.integers(2, 201))
        length = float(rng.uniform(500, 50_000))
        style = rng.integers(3)
        if style == 0:
            elev = rng.uniform(0, 80, n)
        elif style == 1:
            elev = np.cumsum(rng.normal(0, 6, n)) + 200
        else:
            x = np.linspace(0, 1, n)
            elev = sum(rng.uniform(0, 90) * np.exp(-((x - rng.uniform()) ** 2) / 0.002) for _ in range(3))
        hs, ht = float(rng.uniform(1, 60)), float(rng.uniform(1, 60))
        p = TerrainProfile(
            Site.school("S", 0.0, 0.0, height=hs), Site.tower("T", 0.1, 0.0, ht),
            np.linspace(0, length, n), np.asarray(elev, dtype=float),
        )
        a = assess_link(p, F, 0.6, K)
        loop = oracles.clearance_loop(list(p.distances), list(p.elevations), hs, ht, K)
        runs = oracles.blocked_runs(loop)
        assert [(o.start_index, o.end_index) for o in a.obstacles] == runs
        kinds[a.classification] += 1
    # the generator exercises every evaluated class
    assert kinds[Classification.CLEAR] and kinds[Classification.MARGINAL] and kinds[Classification.OBSTRUCTED]


# -- 4. nearer tower blocked ----------------------------------------------------


@pytest.mark.acceptance(4, "blocked nearer tower, clear farther tower")
def test_farther_clear_tower_is_assigned(tile_dir):
    # 200 m ridge between the school and the northern tower only
    dem = tile_dir("N00E000", ridge_grid({r: 200 for r in range(570, 577)}))
    school = Site.school("School", 0.5, 0.5)
    tower1 = Site.tower("Tower 1", 0.5 + 5000 / DEG_M, 0.5, 30)
    tower2 = Site.tower("Tower 2", 0.5 - 15000 / DEG_M, 0.5, 30)
    result = plan([tower1, tower2], [school], TileStore(dem))
    near = result.assessment_for("School", "Tower 1")
    far = result.assessment_for("School", "Tower 2")
    assert near.distance < far.distance
    assert near.classification is Classification.OBSTRUCTED
    assert far.classification is Classification.CLEAR
    assert result.assignments == {"School": "Tower 2"}


# -- 5. SRTM round trip ---------------------------------------------------------


@pytest.mark.acceptance(5, "SRTM round trip")
def test_srtm_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    grid = rng.integers(-450, 8800, size=(1201, 1201)).astype(np.int16)
    path = str(tmp_path / "S14E033.hgt")
    write_hgt(path, grid)
    raw = open(path, "rb").read()
    assert raw == grid.astype(">i2").tobytes()
    tile = read_hgt(path)
    assert np.array_equal(tile.samples, grid)
    store = TileStore(str(tmp_path))
    # row 0 and column 1200 belong to the neighbouring tiles
    nodes = np.column_stack([rng.integers(1, 1201, 500), rng.integers(0, 1200, 500)])
    for i, j in nodes:
        p = GeoPoint(-13 - i / 1200, 33 + j / 1200)
        assert store.elevation_at(p) == float(grid[i, j])
    assert resolution_from_size(2 * 1201 * 1201) == 1201
    assert resolution_from_size(2 * 3601 * 3601) == 3601


# -- 6 and 8. synthetic scenario ------------------------------------------------


@pytest.fixture(scope="module")
def scenario(tmp_path_factory):
    root = str(tmp_path_factory.mktemp("scenario"))
    sc = make_scenario(root, n_towers=5, n_schools=200, tiles_lat=2, tiles_lon=2)
    outs = {}
    for name, workers in (("a", 1), ("b", 1), ("w8", 8)):
        cfg = cli.RunConfig(sc.towers_csv, sc.schools_csv, sc.dem_dir, os.path.join(root, name), workers=workers)
        assert cli.run(cfg, io.StringIO()) == cli.EXIT_OK
        outs[name] = cfg.out_dir
    return sc, outs


def tree(root):
    files = []
    for dirpath, _, names in os.walk(root):
        files += [os.path.relpath(os.path.join(dirpath, n), root) for n in names]
    return sorted(f for f in files if f != "summary.txt")


@pytest.mark.acceptance(6, "determinism")
@pytest.mark.parametrize("other", ["b", "w8"])
def test_runs_are_bit_identical(scenario, other):
    sc, outs = scenario
    assert len(sc.tiles) == 4
    files = tree(outs["a"])
    assert {"links.csv", "map.geojson", "map.html"} <= set(files)
    assert sum(f.endswith(".svg") for f in files) > 100
    assert files == tree(outs[other])
    _, mismatch, errors = filecmp.cmpfiles(outs["a"], outs[other], files, shallow=False)
    assert mismatch == [] and errors == []


@pytest.mark.acceptance(8, "cross-artifact consistency")
def test_csv_geojson_popup_agree(scenario):
    _, outs = scenario
    out = outs["a"]
    with open(os.path.join(out, "links.csv"), newline="") as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 200
    geo = json.load(open(os.path.join(out, "map.geojson")))
    schools = {f["properties"]["id"]: f["properties"] for f in geo["features"] if f["properties"]["feature"] == "school"}
    popups = report.extract_embedded(open(os.path.join(out, "map.html"), encoding="utf-8").read(), "popup-data")
    served = 0
    for r in rows:
        g = schools[r["school_id"]]
        body = popups[f"school:{r['school_id']}"]
        assert g["classification"] == r["classification"]
        assert report.fmt(g["azimuth_deg"], 1) == r["azimuth_deg"]
        assert report.fmt(g["elevation_deg"], 1) == r["elevation_deg"]
        if r["classification"] == report.UNSERVED:
            assert report.UNSERVED in body
            continue
        served += 1
        assert re.search(r'class="azimuth">([^<]*)<', body).group(1) == r["azimuth_deg"]
        assert re.search(r'class="elevation">([^<]*)<', body).group(1) == r["elevation_deg"]
        assert re.search(r'class="classification">([^<]*)<', body).group(1) == r["classification"]
        assert g["tower_id"] == r["tower_id"]
    assert served > 0


# -- 7. performance ---------------------------------------------------------------


@pytest.fixture(scope="module")
def perf_batch(tmp_path_factory):
    root = str(tmp_path_factory.mktemp("perf"))
    sc = make_scenario(root, n_towers=20, n_schools=700, seed=11)
    towers = cli.parse_sites_csv(sc.towers_csv)
    schools = cli.parse_sites_csv(sc.schools_csv, cli.SiteKind.PRIMARY_SCHOOL)
    pairs = enumerate_candidates(towers, schools, 50_000)[:2000]
    assert len(pairs) == 2000
    store = TileStore(sc.dem_dir)
    store.preload(sc.tiles)  # cached tiles, as the criterion states
    return towers, schools, pairs, store


def timed_batch(pairs, store, workers):
    started = time.perf_counter()
    results = run_batch(pairs, store, PlanConfig(spacing=30.0, workers=workers))
    return time.perf_counter() - started, results


@pytest.mark.slow
@pytest.mark.acceptance(7, "performance")
def test_single_worker_under_a_minute(perf_batch):
    towers, schools, pairs, store = perf_batch
    elapsed, results = timed_batch(pairs, store, 1)
    result = plan(towers, schools, store, PlanConfig(workers=1), pairs=pairs, assessments=results)
    print()
    print("\n".join(report.summary_lines(result, len(pairs), elapsed)))
    assert elapsed < 60.0


@pytest.mark.slow
@pytest.mark.acceptance(7, "performance")
def test_four_workers_speedup(perf_batch):
    _, _, pairs, store = perf_batch
    timed_batch(pairs[:50], store, 4)  # warm the pool machinery
    t1, r1 = timed_batch(pairs, store, 1)
    t4, r4 = timed_batch(pairs, store, 4)
    speedup = t1 / t4
    cpus = len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count()
    print(f"\n1 worker: {t1:.2f} s, 4 workers: {t4:.2f} s, speedup {speedup:.2f}x on {cpus} CPU(s)")
    assert r1 == r4
    assert speedup >= 2.5, f"speedup {speedup:.2f}x with {cpus} CPU(s) available"
