"""``losplan`` command: read tower/school lists, plan links, write the report tree.

Every flag can also be set through an environment variable named
``LOSPLAN_<FLAG>`` (``--radius-km`` -> ``LOSPLAN_RADIUS_KM``).  Flags win.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import os
import sys
import time
from dataclasses import dataclass, field

from . import report
from .analysis import Classification
from .dem import TileStore, VoidPolicy
from .geodesy import GeoPoint
from .planner import PlanConfig, default_workers, enumerate_candidates, plan, run_batch
from .sites import DEFAULT_SCHOOL_HEIGHT_M, Site, SiteKind

log = logging.getLogger("losplan")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INPUT = 3
EXIT_DEM_DIR = 4
ENV_PREFIX = "LOSPLAN_"
STAGES = ("candidates", "assess", "plan")


class InputError(Exception):
    def __init__(self, path: str, line: int | None, message: str):
        self.path = path
        self.line = line
        where = f"{path}:{line}" if line is not None else path
        super().__init__(f"{where}: {message}")


class ParseError(InputError):
    pass


class DuplicateId(InputError):
    pass


class OutOfRangeCoordinate(InputError):
    pass


@dataclass
class RunConfig:
    towers_path: str
    schools_path: str
    dem_dir: str
    out_dir: str
    radius: float = 50_000.0
    frequency: float = 5.0e9
    fresnel_fraction: float = 0.6
    k_factor: float = 4.0 / 3.0
    sample_spacing: float = 30.0
    default_school_height: float = DEFAULT_SCHOOL_HEIGHT_M
    workers: int = field(default_factory=default_workers)
    stop_after: str | None = None
    void_policy: VoidPolicy = VoidPolicy.TREAT_AS_ZERO

    def validate(self):
        positive = {
            "radius": self.radius,
            "frequency": self.frequency,
            "sample spacing": self.sample_spacing,
            "school height": self.default_school_height,
            "k-factor": self.k_factor,
        }
        for name, value in positive.items():
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive, got {value}")
        if not 0.0 <= self.fresnel_fraction <= 1.0:
            raise ValueError(f"fresnel fraction must be in [0, 1], got {self.fresnel_fraction}")
        if self.workers < 1:
            raise ValueError(f"workers must be at least 1, got {self.workers}")
        if self.stop_after not in (None,) + STAGES:
            raise ValueError(f"unknown stage {self.stop_after!r}")

    def plan_config(self) -> PlanConfig:
        return PlanConfig(
            radius=self.radius,
            frequency=self.frequency,
            fresnel_fraction=self.fresnel_fraction,
            k_factor=self.k_factor,
            spacing=self.sample_spacing,
            workers=self.workers,
        )


def _number(text: str, path: str, line: int, column: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ParseError(path, line, f"column {column!r}: {text!r} is not a number") from None
    if not math.isfinite(value):
        raise ParseError(path, line, f"column {column!r}: {text!r} is not finite")
    return value


def parse_sites_csv(
    path: str, kind: SiteKind = SiteKind.TOWER, default_height: float = DEFAULT_SCHOOL_HEIGHT_M
) -> list[Site]:
    """Read a tower list (``id,lat,lon,height_m``) or, for any school kind,
    a school list (``id,lat,lon,level[,height_m]``).

    Extra columns are ignored.  Blank lines are skipped.
    """
    towers = kind is SiteKind.TOWER
    required = ["id", "lat", "lon", "height_m"] if towers else ["id", "lat", "lon", "level"]
    sites: list[Site] = []
    seen: dict[str, int] = {}
    try:
        f = open(path, newline="", encoding="utf-8-sig")
    except OSError as exc:
        raise InputError(path, None, f"cannot read: {exc.strerror}") from None
    with f:
        reader = csv.reader(f)
        header = None
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if header is None:
                header = [c.strip().lower() for c in row]
                missing = [c for c in required if c not in header]
                if missing:
                    raise ParseError(path, line, f"missing column(s): {', '.join(missing)}")
                col = {name: header.index(name) for name in header}
                continue
            if len(row) < len(header):
                row = row + [""] * (len(header) - len(row))
            get = lambda name: row[col[name]].strip()  # noqa: E731
            site_id = get("id")
            if not site_id:
                raise ParseError(path, line, "empty id")
            if site_id in seen:
                raise DuplicateId(path, line, f"id {site_id!r} already used on line {seen[site_id]}")
            seen[site_id] = line
            lat = _number(get("lat"), path, line, "lat")
            lon = _number(get("lon"), path, line, "lon")
            if not -90.0 <= lat <= 90.0:
                raise OutOfRangeCoordinate(path, line, f"latitude {lat} outside [-90, 90]")
            if not -180.0 <= lon <= 180.0:
                raise OutOfRangeCoordinate(path, line, f"longitude {lon} outside [-180, 180]")
            if towers:
                height = _number(get("height_m"), path, line, "height_m")
                site_kind = SiteKind.TOWER
            else:
                level = get("level").lower()
                try:
                    site_kind = SiteKind(level)
                except ValueError:
                    raise ParseError(path, line, f"level {level!r} is not primary or secondary") from None
                raw = get("height_m") if "height_m" in col else ""
                height = _number(raw, path, line, "height_m") if raw else default_height
            if not height > 0:
                raise ParseError(path, line, f"antenna height must be positive, got {height}")
            sites.append(Site(site_id, GeoPoint(lat, lon), height, site_kind))
    return sites


def _env(name: str, default=None):
    return os.environ.get(ENV_PREFIX + name, default)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="losplan",
        description="Plan line-of-sight microwave links from schools to towers over SRTM terrain.",
    )
    p.add_argument("--towers", default=_env("TOWERS"), help="tower CSV: id,lat,lon,height_m")
    p.add_argument("--schools", default=_env("SCHOOLS"), help="school CSV: id,lat,lon,level[,height_m]")
    p.add_argument("--dem-dir", default=_env("DEM_DIR"), help="directory of SRTM .hgt tiles")
    p.add_argument("--out-dir", default=_env("OUT_DIR"), help="output directory")
    p.add_argument("--radius-km", type=float, default=_env("RADIUS_KM", "50.0"))
    p.add_argument("--freq-ghz", type=float, default=_env("FREQ_GHZ", "5.0"))
    p.add_argument("--fresnel-fraction", type=float, default=_env("FRESNEL_FRACTION", "0.6"))
    p.add_argument(
        "--k-factor",
        type=float,
        default=_env("K_FACTOR", str(4.0 / 3.0)),
        help="effective earth radius factor (default 4/3)",
    )
    p.add_argument("--spacing-m", type=float, default=_env("SPACING_M", "30.0"))
    p.add_argument("--school-height-m", type=float, default=_env("SCHOOL_HEIGHT_M", "10.0"))
    p.add_argument("--workers", default=_env("WORKERS", "auto"), help="worker processes, or 'auto'")
    p.add_argument("--stop-after", choices=STAGES, default=_env("STOP_AFTER"))
    p.add_argument(
        "--void-policy",
        choices=[v.value for v in VoidPolicy],
        default=_env("VOID_POLICY", VoidPolicy.TREAT_AS_ZERO.value),
    )
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def config_from_args(args: argparse.Namespace) -> RunConfig:
    for flag in ("towers", "schools", "dem_dir", "out_dir"):
        if not getattr(args, flag):
            raise ValueError(f"--{flag.replace('_', '-')} is required")
    if args.workers in (None, "auto"):
        workers = default_workers()
    else:
        try:
            workers = int(args.workers)
        except ValueError:
            raise ValueError(f"--workers must be an integer or 'auto', got {args.workers!r}") from None
    cfg = RunConfig(
        towers_path=args.towers,
        schools_path=args.schools,
        dem_dir=args.dem_dir,
        out_dir=args.out_dir,
        radius=args.radius_km * 1000.0,
        frequency=args.freq_ghz * 1e9,
        fresnel_fraction=args.fresnel_fraction,
        k_factor=args.k_factor,
        sample_spacing=args.spacing_m,
        default_school_height=args.school_height_m,
        workers=workers,
        stop_after=args.stop_after,
        void_policy=VoidPolicy(args.void_policy),
    )
    cfg.validate()
    return cfg


def _write_csv(path: str, header: list[str], rows) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_candidates_csv(pairs, path: str) -> None:
    _write_csv(
        path,
        ["school_id", "tower_id", "distance_km"],
        ([c.school.id, c.tower.id, report.fmt(c.distance / 1000.0, 3)] for c in pairs),
    )


def write_assessments_csv(assessments, path: str) -> None:
    header = ["school_id", "tower_id"] + report.LINKS_HEADER[5:]
    rows = []
    for a in assessments:
        fields = report.link_fields(a)
        rows.append([a.school_id, a.tower_id] + [fields[k] for k in header[2:]])
    _write_csv(path, header, rows)


def run(cfg: RunConfig, out=sys.stdout) -> int:
    """Execute the whole pipeline; returns the process exit status."""
    try:
        cfg.validate()
    except ValueError as exc:
        print(f"losplan: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if not os.path.isdir(cfg.dem_dir):
        print(f"losplan: DEM directory not found: {cfg.dem_dir}", file=sys.stderr)
        return EXIT_DEM_DIR
    try:
        towers = parse_sites_csv(cfg.towers_path, SiteKind.TOWER)
        schools = parse_sites_csv(cfg.schools_path, SiteKind.PRIMARY_SCHOOL, cfg.default_school_height)
        if not towers:
            raise InputError(cfg.towers_path, None, "no towers listed")
        clash = {t.id for t in towers} & {s.id for s in schools}
        if clash:
            raise DuplicateId(cfg.schools_path, None, f"ids shared with the tower list: {sorted(clash)}")
    except InputError as exc:
        print(f"losplan: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT

    started = time.perf_counter()
    pc = cfg.plan_config()
    store = TileStore(cfg.dem_dir, cfg.void_policy)
    os.makedirs(cfg.out_dir, exist_ok=True)
    pairs = enumerate_candidates(towers, schools, pc.radius)
    log.info("%d towers, %d schools, %d candidate pairs", len(towers), len(schools), len(pairs))
    if cfg.stop_after == "candidates":
        write_candidates_csv(pairs, os.path.join(cfg.out_dir, "candidates.csv"))
        print(f"candidate pairs: {len(pairs)}", file=out)
        return EXIT_OK

    assessments = run_batch(pairs, store, pc)
    if cfg.stop_after == "assess":
        write_assessments_csv(assessments, os.path.join(cfg.out_dir, "assessments.csv"))
        print(f"assessed pairs: {len(assessments)}", file=out)
        return EXIT_OK

    result = plan(towers, schools, store, pc, pairs=pairs, assessments=assessments)
    if cfg.stop_after == "plan":
        write_assessments_csv(assessments, os.path.join(cfg.out_dir, "assessments.csv"))
        report.write_links_csv(result, os.path.join(cfg.out_dir, "links.csv"))
    else:
        report.write_bundle(result, store, cfg.out_dir, cfg.workers)
    elapsed = time.perf_counter() - started
    report.write_summary(result, cfg.out_dir, len(pairs), elapsed)
    print("\n".join(report.summary_lines(result, len(pairs), elapsed)), file=out)
    n_uneval = sum(1 for a in assessments if a.classification is Classification.UNEVALUATED)
    if n_uneval:
        log.warning("%d pair(s) could not be evaluated", n_uneval)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        cfg = config_from_args(args)
    except ValueError as exc:
        print(f"losplan: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
