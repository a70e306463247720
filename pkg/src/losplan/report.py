"""Output artifacts: CSV tables, GeoJSON, terrain-profile SVGs and the HTML map.

Layout under ``out_dir``::

    links.csv                       one row per school (its serving link)
    towers/<tower_id>.csv           every candidate school of one tower
    profiles/<school>__<tower>.svg  terrain profile of each evaluated link
    map.geojson, map.html, summary.txt

Everything except the timing lines of ``summary.txt`` is byte-for-byte
reproducible for identical inputs.
"""

from __future__ import annotations

import csv
import html
import io
import json
import math
import os
import re
import string
from concurrent.futures import ProcessPoolExecutor
from importlib import resources

import numpy as np

from .analysis import Classification, LinkAssessment, TerrainProfile, ClearanceTrace
from .analysis import build_profile, clearance_trace
from .dem import TileStore
from .geodesy import destination_point
from .planner import PlanResult, _chunks, _pool_context
from .sites import Site, SiteKind

LINKS_HEADER = [
    "school_id",
    "school_kind",
    "lat",
    "lon",
    "tower_id",
    "distance_km",
    "azimuth_deg",
    "elevation_deg",
    "classification",
    "min_margin_m",
    "n_obstacles",
    "knife_edge_loss_db",
    "fspl_db",
]
TOWER_HEADER = [
    "school_id",
    "school_kind",
    "lat",
    "lon",
    "distance_km",
    "azimuth_deg",
    "elevation_deg",
    "classification",
    "min_margin_m",
    "n_obstacles",
    "knife_edge_loss_db",
    "fspl_db",
    "assigned",
]
UNSERVED = "UNSERVED"
COVERAGE_VERTICES = 64

# fixed palette, matching the usual splat!-style profile plot
TERRAIN_GREEN = "#2e8b3a"
RAY_BLUE = "#1f4fd6"
FRESNEL_RED = "#d62728"
CURVATURE_BROWN = "#8b5a2b"
PRIMARY_GREEN = "#2ca02c"
SECONDARY_RED = "#d62728"
TOWER_BLUE = "#1f4fd6"

_UNSAFE = re.compile(r"[^A-Za-z0-9._-]")


def fmt(value, decimals: int) -> str:
    """Fixed-decimal string, empty for missing values, never ``-0.0``."""
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    text = f"{value:.{decimals}f}"
    if text.startswith("-") and float(text) == 0:
        text = text[1:]
    return text


def safe_name(token: str) -> str:
    return _UNSAFE.sub("_", token)


def profile_relpath(school_id: str, tower_id: str) -> str:
    return f"profiles/{safe_name(school_id)}__{safe_name(tower_id)}.svg"


def tower_table_relpath(tower_id: str) -> str:
    return f"towers/{safe_name(tower_id)}.csv"


def link_fields(a: LinkAssessment) -> dict[str, str]:
    """Formatted per-link columns shared by every artifact."""
    evaluated = a.classification is not Classification.UNEVALUATED
    return {
        "distance_km": fmt(a.distance / 1000.0, 3),
        "azimuth_deg": fmt(a.azimuth_to_tower, 1),
        "elevation_deg": fmt(a.elevation_to_tower, 1),
        "classification": a.classification.value,
        "min_margin_m": fmt(a.min_clearance_margin, 2),
        "n_obstacles": str(a.n_obstacles) if evaluated else "",
        "knife_edge_loss_db": fmt(a.knife_edge_loss_db, 2),
        "fspl_db": fmt(a.fspl_db, 2),
    }


def _writer(f):
    return csv.writer(f, lineterminator="\n", quoting=csv.QUOTE_MINIMAL)


def _open(path):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    return open(path, "w", encoding="utf-8", newline="")


def links_rows(plan: PlanResult) -> list[list[str]]:
    rows = []
    for school in sorted(plan.schools, key=lambda s: s.id):
        row = {
            "school_id": school.id,
            "school_kind": school.kind.value,
            "lat": fmt(school.location.lat, 6),
            "lon": fmt(school.location.lon, 6),
        }
        chosen = plan.chosen(school.id)
        if chosen is None:
            row.update({k: "" for k in LINKS_HEADER[4:]})
            row["classification"] = UNSERVED
        else:
            row["tower_id"] = chosen.tower_id
            row.update(link_fields(chosen))
        rows.append([row[k] for k in LINKS_HEADER])
    return rows


def write_links_csv(plan: PlanResult, path: str) -> str:
    with _open(path) as f:
        w = _writer(f)
        w.writerow(LINKS_HEADER)
        w.writerows(links_rows(plan))
    return path


def write_tower_tables(plan: PlanResult, out_dir: str) -> list[str]:
    schools = {s.id: s for s in plan.schools}
    by_tower: dict[str, list[LinkAssessment]] = {t.id: [] for t in plan.towers}
    for a in plan.assessments:
        by_tower[a.tower_id].append(a)
    paths = []
    for tower in plan.towers:
        path = os.path.join(out_dir, tower_table_relpath(tower.id))
        with _open(path) as f:
            w = _writer(f)
            w.writerow(TOWER_HEADER)
            for a in sorted(by_tower[tower.id], key=lambda a: a.school_id):
                s = schools[a.school_id]
                row = {
                    "school_id": s.id,
                    "school_kind": s.kind.value,
                    "lat": fmt(s.location.lat, 6),
                    "lon": fmt(s.location.lon, 6),
                    "assigned": "yes" if plan.assignments.get(s.id) == tower.id else "no",
                }
                row.update(link_fields(a))
                w.writerow([row[k] for k in TOWER_HEADER])
        paths.append(path)
    return paths


def _lonlat(site: Site) -> list[float]:
    return [round(site.location.lon, 7), round(site.location.lat, 7)]


def coverage_ring(tower: Site, radius: float, n: int = COVERAGE_VERTICES) -> list[list[float]]:
    ring = []
    for i in range(n):
        p = destination_point(tower.location, 360.0 * i / n, radius)
        ring.append([round(p.lon, 7), round(p.lat, 7)])
    ring.append(ring[0])
    return ring


def _round_or_none(value, decimals):
    text = fmt(value, decimals)
    return float(text) if text else None


def build_geojson(plan: PlanResult) -> dict:
    served = plan.served_counts()
    features = []
    for t in plan.towers:
        counts = plan.tallies[t.id]
        features.append(
            {
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": _lonlat(t)},
                "properties": {
                    "feature": "tower",
                    "id": t.id,
                    "height_m": t.antenna_height,
                    "clear": counts[Classification.CLEAR],
                    "marginal": counts[Classification.MARGINAL],
                    "obstructed": counts[Classification.OBSTRUCTED],
                    "unevaluated": counts[Classification.UNEVALUATED],
                    "served": served[t.id],
                    "marker-color": TOWER_BLUE,
                    "popup": f"tower:{t.id}",
                },
            }
        )
    for t in plan.towers:
        features.append(
            {
                "type": "Feature",
                "geometry": {"type": "Polygon", "coordinates": [coverage_ring(t, plan.config.radius)]},
                "properties": {"feature": "coverage", "tower_id": t.id, "radius_m": plan.config.radius},
            }
        )
    towers = {t.id: t for t in plan.towers}
    for s in plan.schools:
        chosen = plan.chosen(s.id)
        props = {
            "feature": "school",
            "id": s.id,
            "kind": s.kind.value,
            "classification": UNSERVED if chosen is None else chosen.classification.value,
            "tower_id": None if chosen is None else chosen.tower_id,
            "azimuth_deg": None if chosen is None else _round_or_none(chosen.azimuth_to_tower, 1),
            "elevation_deg": None if chosen is None else _round_or_none(chosen.elevation_to_tower, 1),
            "marker-color": PRIMARY_GREEN if s.kind is SiteKind.PRIMARY_SCHOOL else SECONDARY_RED,
            "popup": f"school:{s.id}",
        }
        if chosen is not None:
            props["profile"] = profile_relpath(s.id, chosen.tower_id)
            props["table"] = tower_table_relpath(chosen.tower_id)
        features.append(
            {"type": "Feature", "geometry": {"type": "Point", "coordinates": _lonlat(s)}, "properties": props}
        )
    for s in plan.schools:
        chosen = plan.chosen(s.id)
        if chosen is None:
            continue
        features.append(
            {
                "type": "Feature",
                "geometry": {
                    "type": "LineString",
                    "coordinates": [_lonlat(s), _lonlat(towers[chosen.tower_id])],
                },
                "properties": {
                    "feature": "link",
                    "school_id": s.id,
                    "tower_id": chosen.tower_id,
                    "classification": chosen.classification.value,
                    "stroke": "#e41a1c",
                },
            }
        )
    return {"type": "FeatureCollection", "features": features}


def write_geojson(plan: PlanResult, path: str) -> str:
    with _open(path) as f:
        f.write(json.dumps(build_geojson(plan), indent=1, ensure_ascii=False))
        f.write("\n")
    return path


# -- terrain profile SVG ---------------------------------------------------

_W, _H = 900, 440
_ML, _MR, _MT, _MB = 70, 20, 40, 50


def _nice_step(span: float, target: int = 8) -> float:
    raw = span / target if span > 0 else 1.0
    mag = 10 ** math.floor(math.log10(raw))
    for m in (1, 2, 2.5, 5, 10):
        if raw <= m * mag:
            return m * mag
    return 10 * mag


def _polyline(xs, ys) -> str:
    return " ".join(f"{x:.1f},{y:.1f}" for x, y in zip(xs.tolist(), ys.tolist()))


def render_profile_svg(
    profile: TerrainProfile, trace: ClearanceTrace, assessment: LinkAssessment, path: str | None = None
) -> str:
    """Render the profile plot; writes it to ``path`` when given and returns the SVG text.

    Series: terrain raised by the curvature bulge (green), the curvature
    band itself (brown), the direct ray (blue) and the ray lowered by the
    required Fresnel clearance (red).  Obstacle peaks get a marker.
    """
    if not (len(profile.distances) == len(trace.los_height) == len(profile.elevations)):
        raise ValueError("profile and trace lengths differ")
    km = profile.distances / 1000.0
    ground = profile.elevations + trace.bulge
    fresnel = trace.los_height - trace.required
    floor = float(np.min(profile.elevations))
    lo = min(floor, float(np.min(fresnel)))
    hi = max(float(np.max(ground)), float(np.max(trace.los_height)))
    pad = max(5.0, 0.05 * (hi - lo))
    y_step = _nice_step(hi - lo + 2 * pad, 6)
    y0 = math.floor((lo - pad) / y_step) * y_step
    y1 = math.ceil((hi + pad) / y_step) * y_step
    x1 = float(km[-1]) or 1.0
    pw, ph = _W - _ML - _MR, _H - _MT - _MB

    def sx(v):
        return _ML + np.asarray(v) / x1 * pw

    def sy(v):
        return _MT + (y1 - np.asarray(v)) / (y1 - y0) * ph

    base = sy(np.full_like(km, y0))
    x = sx(km)
    out = io.StringIO()
    title = (
        f"{assessment.school_id} to {assessment.tower_id}: {assessment.classification.value}"
        f" ({fmt(profile.length / 1000.0, 2)} km)"
    )
    out.write(
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="12">\n'
    )
    out.write(f"<title>{html.escape(title)}</title>\n")
    out.write(f'<rect x="0" y="0" width="{_W}" height="{_H}" fill="#ffffff"/>\n')
    out.write(f'<text x="{_W / 2:.1f}" y="22" text-anchor="middle" font-size="14">{html.escape(title)}</text>\n')

    # grid and axes
    out.write('<g class="axes" stroke="#cccccc" stroke-width="0.5">\n')
    x_step = _nice_step(x1, 8)
    ticks_x = np.arange(0.0, x1 + 1e-9, x_step)
    for t in ticks_x:
        px = float(sx(t))
        out.write(f'<line x1="{px:.1f}" y1="{_MT}" x2="{px:.1f}" y2="{_MT + ph}"/>\n')
    ticks_y = np.arange(y0, y1 + 1e-9, y_step)
    for t in ticks_y:
        py = float(sy(t))
        out.write(f'<line x1="{_ML}" y1="{py:.1f}" x2="{_ML + pw}" y2="{py:.1f}"/>\n')
    out.write("</g>\n")
    out.write(f'<rect x="{_ML}" y="{_MT}" width="{pw}" height="{ph}" fill="none" stroke="#000000"/>\n')
    out.write('<g class="tick-labels" fill="#000000">\n')
    for t in ticks_x:
        out.write(f'<text x="{float(sx(t)):.1f}" y="{_MT + ph + 16}" text-anchor="middle">{t:g}</text>\n')
    for t in ticks_y:
        out.write(f'<text x="{_ML - 6}" y="{float(sy(t)) + 4:.1f}" text-anchor="end">{t:g}</text>\n')
    out.write("</g>\n")
    out.write(f'<text x="{_ML + pw / 2:.1f}" y="{_H - 10}" text-anchor="middle">Distance (km)</text>\n')
    out.write(
        f'<text x="18" y="{_MT + ph / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 18 {_MT + ph / 2:.1f})">Height AMSL (m)</text>\n'
    )

    # curvature band and terrain, stacked from the chart floor
    bulge_top = sy(y0 + trace.bulge)
    xs_closed = np.concatenate([x, x[::-1]])
    out.write(
        f'<polygon class="curvature" fill="{CURVATURE_BROWN}" fill-opacity="0.6" stroke="none" '
        f'points="{_polyline(xs_closed, np.concatenate([bulge_top, base[::-1]]))}"/>\n'
    )
    out.write(
        f'<polygon class="terrain" fill="{TERRAIN_GREEN}" fill-opacity="0.75" stroke="{TERRAIN_GREEN}" '
        f'points="{_polyline(xs_closed, np.concatenate([sy(ground), bulge_top[::-1]]))}"/>\n'
    )
    out.write(
        f'<polyline class="fresnel" fill="none" stroke="{FRESNEL_RED}" stroke-width="1.5" '
        f'points="{_polyline(x, sy(fresnel))}"/>\n'
    )
    out.write(
        f'<polyline class="ray" fill="none" stroke="{RAY_BLUE}" stroke-width="1.5" '
        f'points="{_polyline(x[[0, -1]], sy(trace.los_height[[0, -1]]))}"/>\n'
    )
    for ob in assessment.obstacles:
        px, py = float(x[ob.peak_index]), float(sy(ground[ob.peak_index]))
        out.write(
            f'<circle class="obstacle" cx="{px:.1f}" cy="{py:.1f}" r="5" fill="none" '
            f'stroke="#000000" stroke-width="2"><title>obstacle: {fmt(ob.intrusion, 1)} m above ray'
            f"</title></circle>\n"
        )

    legend = [
        (TERRAIN_GREEN, "terrain"),
        (RAY_BLUE, "line of sight"),
        (FRESNEL_RED, f"{fmt(_fraction(trace) * 100, 0)}% first Fresnel zone"),
        (CURVATURE_BROWN, "earth curvature"),
    ]
    out.write('<g class="legend">\n')
    for i, (color, label) in enumerate(legend):
        lx = _ML + 10 + i * 175
        out.write(f'<rect x="{lx}" y="{_MT + 8}" width="14" height="8" fill="{color}"/>\n')
        out.write(f'<text x="{lx + 18}" y="{_MT + 16}">{html.escape(label)}</text>\n')
    out.write("</g>\n</svg>\n")
    text = out.getvalue()
    if path is not None:
        with _open(path) as f:
            f.write(text)
    return text


def _fraction(trace: ClearanceTrace) -> float:
    i = int(np.argmax(trace.fresnel_radius))
    r = float(trace.fresnel_radius[i])
    return float(trace.required[i]) / r if r > 0 else 0.0


_render_ctx = None


def _init_render(store, config, sites, out_dir):
    global _render_ctx
    _render_ctx = (store, config, sites, out_dir)


def _render_chunk(chunk: list[LinkAssessment]) -> list[str]:
    store, config, sites, out_dir = _render_ctx
    return [_render_one(a, store, config, sites, out_dir) for a in chunk]


def _render_one(a, store, config, sites, out_dir) -> str:
    school, tower = sites[a.school_id], sites[a.tower_id]
    profile = build_profile(school, tower, store, config.spacing)
    trace = clearance_trace(profile, config.frequency, config.fresnel_fraction, config.k_factor)
    rel = profile_relpath(a.school_id, a.tower_id)
    render_profile_svg(profile, trace, a, os.path.join(out_dir, rel))
    return rel


def write_profiles(plan: PlanResult, store: TileStore, out_dir: str, workers: int = 1) -> list[str]:
    """One SVG per evaluated assessment, rebuilt from the DEM."""
    todo = [a for a in plan.assessments if a.classification is not Classification.UNEVALUATED]
    sites = {s.id: s for s in plan.schools}
    sites.update({t.id: t for t in plan.towers})
    os.makedirs(os.path.join(out_dir, "profiles"), exist_ok=True)
    if workers <= 1 or len(todo) < 2:
        return [_render_one(a, store, plan.config, sites, out_dir) for a in todo]
    written = []
    with ProcessPoolExecutor(
        max_workers=min(workers, len(todo)),
        mp_context=_pool_context(),
        initializer=_init_render,
        initargs=(store, plan.config, sites, out_dir),
    ) as pool:
        for part in pool.map(_render_chunk, _chunks(todo, workers * 4)):
            written.extend(part)
    return written


# -- HTML map ----------------------------------------------------------------


def _row(label, value) -> str:
    return f"<tr><th>{html.escape(label)}</th><td>{value}</td></tr>"


def school_popup(school: Site, chosen: LinkAssessment | None) -> str:
    rows = [
        _row("School", html.escape(school.id)),
        _row("Level", school.kind.value),
        _row("Latitude", fmt(school.location.lat, 6)),
        _row("Longitude", fmt(school.location.lon, 6)),
    ]
    if chosen is None:
        rows.append(_row("Status", UNSERVED))
        return f'<table class="school">{"".join(rows)}</table>'
    f = link_fields(chosen)
    rows += [
        _row("Tower", html.escape(chosen.tower_id)),
        _row("Distance (km)", f["distance_km"]),
        _row("Azimuth (deg)", f'<span class="azimuth">{f["azimuth_deg"]}</span>'),
        _row("Elevation (deg)", f'<span class="elevation">{f["elevation_deg"]}</span>'),
        _row("Status", f'<span class="classification">{f["classification"]}</span>'),
    ]
    profile = html.escape(profile_relpath(school.id, chosen.tower_id), quote=True)
    table = html.escape(tower_table_relpath(chosen.tower_id), quote=True)
    links = (
        f'<p><a href="{profile}" target="_blank">Terrain profile of the link</a><br>'
        f'<a href="{table}" target="_blank">Schools table for this tower</a></p>'
    )
    return f'<table class="school">{"".join(rows)}</table>{links}'


def tower_popup(tower: Site, plan: PlanResult, served: int) -> str:
    counts = plan.tallies[tower.id]
    rows = [
        _row("Tower", html.escape(tower.id)),
        _row("Latitude", fmt(tower.location.lat, 6)),
        _row("Longitude", fmt(tower.location.lon, 6)),
        _row("Antenna height (m)", fmt(tower.antenna_height, 1)),
        _row("Clear LOS", str(counts[Classification.CLEAR])),
        _row("Marginal", str(counts[Classification.MARGINAL])),
        _row("Obstructed", str(counts[Classification.OBSTRUCTED])),
        _row("Unevaluated", str(counts[Classification.UNEVALUATED])),
        _row("Served", str(served)),
    ]
    table = html.escape(tower_table_relpath(tower.id), quote=True)
    return f'<table class="tower">{"".join(rows)}</table><p><a href="{table}" target="_blank">Schools table</a></p>'


def build_popups(plan: PlanResult) -> dict[str, str]:
    served = plan.served_counts()
    popups = {f"tower:{t.id}": tower_popup(t, plan, served[t.id]) for t in plan.towers}
    for s in plan.schools:
        popups[f"school:{s.id}"] = school_popup(s, plan.chosen(s.id))
    return popups


def _embed(obj) -> str:
    # keep "</script>" out of the inline data block
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":")).replace("</", "<\\/")


def write_map_html(plan: PlanResult, out_dir: str, title: str = "School connectivity plan") -> str:
    template = string.Template(resources.files("losplan").joinpath("templates/map.html").read_text("utf-8"))
    text = template.substitute(
        title=html.escape(title),
        geojson=_embed(build_geojson(plan)),
        popups=_embed(build_popups(plan)),
    )
    path = os.path.join(out_dir, "map.html")
    with _open(path) as f:
        f.write(text)
    return path


def extract_embedded(html_text: str, element_id: str):
    """Parse one of the inline JSON blocks back out of a generated map."""
    m = re.search(rf'<script type="application/json" id="{element_id}">(.*?)</script>', html_text, re.S)
    if m is None:
        raise ValueError(f"no embedded block {element_id!r}")
    return json.loads(m.group(1))


# -- summary -----------------------------------------------------------------


def summary_lines(plan: PlanResult, n_pairs: int, wall_time: float | None = None) -> list[str]:
    hist = {c: 0 for c in Classification}
    for a in plan.assessments:
        hist[a.classification] += 1
    n_served = sum(1 for t in plan.assignments.values() if t is not None)
    voids = sum(a.void_samples for a in plan.assessments)
    missing = sorted({a.missing_tile for a in plan.assessments if a.missing_tile})
    errors = sorted({a.error for a in plan.assessments if a.error and not a.missing_tile})
    lines = [
        f"towers: {len(plan.towers)}",
        f"schools: {len(plan.schools)}",
        f"candidate pairs: {n_pairs}",
    ]
    lines += [f"  {c.value.lower()}: {hist[c]}" for c in Classification]
    lines += [
        f"schools served: {n_served}",
        f"schools unserved: {len(plan.schools) - n_served}",
        f"void DEM samples: {voids}",
        f"missing tiles: {', '.join(missing) if missing else 'none'}",
    ]
    lines += [f"error: {e}" for e in errors]
    if not plan.schools:
        lines.append("warning: no schools in input")
    if wall_time is not None:
        rate = n_pairs / wall_time if wall_time > 0 else float("inf")
        lines.append(f"wall time: {wall_time:.2f} s")
        lines.append(f"throughput: {rate:.1f} pairs/s")
    return lines


def write_summary(plan: PlanResult, out_dir: str, n_pairs: int, wall_time: float | None = None) -> str:
    path = os.path.join(out_dir, "summary.txt")
    with _open(path) as f:
        f.write("\n".join(summary_lines(plan, n_pairs, wall_time)) + "\n")
    return path


def write_bundle(plan: PlanResult, store: TileStore, out_dir: str, workers: int = 1) -> dict[str, object]:
    """Write every artifact except ``summary.txt``."""
    os.makedirs(out_dir, exist_ok=True)
    profiles = write_profiles(plan, store, out_dir, workers)
    tables = write_tower_tables(plan, out_dir)
    return {
        "profiles": profiles,
        "tables": tables,
        "links_csv": write_links_csv(plan, os.path.join(out_dir, "links.csv")),
        "map_geojson": write_geojson(plan, os.path.join(out_dir, "map.geojson")),
        "map_html": write_map_html(plan, out_dir),
    }
