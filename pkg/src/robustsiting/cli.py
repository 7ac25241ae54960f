"""Command-line front end: discretize, estimate, solve, bound, validate, bench, gen.

Settings come from an optional flat ``key = value`` config file (``#`` starts a
comment); command-line flags override it. Exit codes: 0 success, 1 solver or
infeasibility error, 2 input error.
"""

from __future__ import annotations

import argparse
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from importlib import resources
from pathlib import Path

import numpy as np

from . import io
from .bounds import CSV_FIELDS, discretization_bound
from .engines import (EngineOptions, solve_direct, solve_expost, solve_nominal, solve_rcg, solve_rowgen)
from .errors import InputError, MalformedFile, NodeLimitExceeded, RobustSitingError, SolverError
from .geometry import METRICS, DistanceMetric, build_lattice, compute_distances, pairwise
from .riskdist import UncertaintyModel, estimate_lambda, wilson_interval
from .validation import COVERAGE_RADII, METHODS, ValidationSetup, generate_instance, make_city, run_validation

ROBUST_METHODS = ("rcg", "rowgen", "direct")
ALL_METHODS = ROBUST_METHODS + ("nominal", "expost")
BUNDLES = ("downtown", "toy")


@dataclass
class RunConfig:
    sites: str | None = None
    arrests: str | None = None
    regions: str | None = None
    area: str | None = None
    distances: str | None = None
    lambda_file: str | None = None
    bundle: str | None = None
    beta: float = 0.9
    p: int = 1
    sigma: float = 20.0
    metric: str = "euclidean"
    epsilon: float = 1e-6
    method: str = "rcg"
    seed: int = 0
    jobs: int = 1
    time_limit_s: float | None = None
    backend: str = "bb"
    out: str = "out"
    # validate
    bandwidths: str = "10,50,100,150"
    trials: int = 50
    per_trial_n: int = 100
    # bench
    spacings: str = "5,2.5,1.25,0.625"
    n_sites: int = 25
    n_regions: int = 5
    area_size: float = 106.8
    methods: str = "rcg,rowgen,direct"
    # bound
    z_d: float | None = None
    # gen
    what: str = "city"

    def validate(self):
        if not 0.0 <= self.beta < 1.0:
            raise InputError("beta must lie in [0, 1)")
        if self.p < 1:
            raise InputError("P must be at least 1")
        if not self.sigma > 0:
            raise InputError("sigma must be positive")
        if self.metric not in METRICS:
            raise InputError(f"metric must be one of {', '.join(METRICS)}")
        if self.method not in ALL_METHODS:
            raise InputError(f"method must be one of {', '.join(ALL_METHODS)}")
        if not self.epsilon > 0:
            raise InputError("epsilon must be positive")
        if self.jobs < 1:
            raise InputError("jobs must be at least 1")
        if self.bundle is not None and self.bundle not in BUNDLES:
            raise InputError(f"bundle must be one of {', '.join(BUNDLES)}")
        if self.backend not in ("bb", "highs"):
            raise InputError("backend must be bb or highs")
        return self

    def options(self) -> EngineOptions:
        return EngineOptions(backend=self.backend, time_limit=self.time_limit_s)


def _coerce(name, raw):
    types = {f.name: f.type for f in fields(RunConfig)}
    t = str(types[name])
    if raw is None:
        return None
    try:
        if "float" in t:
            return float(raw)
        if "int" in t:
            return int(raw)
    except ValueError:
        raise InputError(f"{name}: {raw!r} is not a valid number") from None
    return str(raw)


def read_config(path) -> dict:
    """Flat key = value lines; blank lines and # comments are skipped."""
    known = {f.name for f in fields(RunConfig)}
    out = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except FileNotFoundError:
        raise MalformedFile(path, 0, "file not found") from None
    for no, line in enumerate(lines, start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise MalformedFile(path, no, "expected key = value")
        key, value = (s.strip() for s in text.split("=", 1))
        key = key.replace("-", "_")
        if key not in known:
            raise MalformedFile(path, no, f"unknown key {key!r}")
        out[key] = _coerce(key, value)
    return out


def _bundle_file(bundle, name):
    return str(resources.files("robustsiting") / "data" / bundle / name)


def _resolve(cfg: RunConfig, attr, filename):
    path = getattr(cfg, attr)
    if path is None and cfg.bundle is not None:
        path = _bundle_file(cfg.bundle, filename)
    if path is None:
        raise InputError(f"--{attr.replace('_', '-')} is required (or pick a --bundle)")
    return path


def _load_regions(cfg):
    ids, regions = io.read_regions(_resolve(cfg, "regions", "regions.csv"))
    area = None
    area_path = cfg.area
    if area_path is None and cfg.bundle is not None:
        area_path = _bundle_file(cfg.bundle, "area.csv")
    if area_path is not None:
        _, polys = io.read_regions(area_path)
        area = polys[0]
    return ids, regions, area


def _lambda(cfg, region_ids, regions):
    if cfg.lambda_file is not None:
        ids, lam = io.read_lambda(cfg.lambda_file)
        if ids != region_ids:
            raise InputError("lambda file regions do not match the regions file")
        return lam
    lam, _ = estimate_lambda(io.read_points(_resolve(cfg, "arrests", "arrests.csv")), regions)
    return lam


def _metric(cfg, site_ids):
    if cfg.metric != "table":
        return DistanceMetric(cfg.metric)
    if cfg.distances is None:
        raise InputError("--metric table needs --distances")
    return DistanceMetric("table", io.read_distance_table(cfg.distances))


def _deployment_rows(site_ids, y):
    return [(i, int(v)) for i, v in zip(site_ids, y)]


def _telemetry_rows(report):
    return [(h.iteration, h.z_mp, h.z_sp, h.gap, h.k_plus_size, round(h.wall_ms, 3)) for h in report.history]


# ---------------------------------------------------------------- commands

def cmd_discretize(cfg: RunConfig) -> int:
    region_ids, regions, area = _load_regions(cfg)
    grid = build_lattice(area, regions, cfg.sigma)
    rows = []
    for k, (x, y) in enumerate(grid.points):
        members = ";".join(str(region_ids[j]) for j in np.flatnonzero(grid.membership[k]))
        rows.append((k, x, y, int(grid.subregion_of[k]), members))
    path = io.write_csv(Path(cfg.out) / "scenarios.csv", ("scenario_id", "x_m", "y_m", "subregion_id", "region_ids"), rows)
    print(f"{grid.n_scenarios} scenarios, {grid.n_subregions} subregions -> {path}")
    return 0


def cmd_estimate(cfg: RunConfig) -> int:
    region_ids, regions, _ = _load_regions(cfg)
    points = io.read_points(_resolve(cfg, "arrests", "arrests.csv"))
    lam, counts = estimate_lambda(points, regions)
    rows = []
    for rid, l, c in zip(region_ids, lam, counts):
        lo, hi = wilson_interval(int(c), len(points))
        rows.append((rid, l, int(c), lo, hi))
    path = io.write_csv(Path(cfg.out) / "lambda.csv", ("region_id", "lambda", "count", "ci_lo", "ci_hi"), rows)
    print(f"{len(points)} points in {len(regions)} regions -> {path}")
    return 0


def cmd_solve(cfg: RunConfig) -> int:
    site_ids, sites = io.read_sites(_resolve(cfg, "sites", "sites.csv"))
    metric = _metric(cfg, site_ids)
    out = Path(cfg.out)
    opts = cfg.options()
    if cfg.p > len(site_ids):
        raise InputError(f"P={cfg.p} exceeds the {len(site_ids)} candidate sites")
    if cfg.method in ("nominal", "expost"):
        points = io.read_points(_resolve(cfg, "arrests", "arrests.csv"))
        if metric.kind == "table":
            d = compute_distances(sites, points, metric, site_ids).values
        else:
            d = pairwise(sites, points, metric.kind)
        solver = solve_nominal if cfg.method == "nominal" else solve_expost
        report = solver(d, cfg.beta, cfg.p, options=opts)
    else:
        region_ids, regions, area = _load_regions(cfg)
        grid = build_lattice(area, regions, cfg.sigma)
        lam = _lambda(cfg, region_ids, regions)
        model = UncertaintyModel.from_grid(grid, lam)
        d = compute_distances(sites, grid, metric, site_ids).values
        if cfg.method == "direct":
            report = solve_direct(d, model, cfg.beta, cfg.p, options=opts)
        else:
            f = solve_rcg if cfg.method == "rcg" else solve_rowgen
            report = f(d, model, cfg.beta, cfg.p, epsilon=cfg.epsilon, options=opts)
        if metric.kind != "table":
            cert = discretization_bound(report.objective, cfg.sigma, metric, cfg.beta)
            io.write_csv(out / "bound.csv", CSV_FIELDS, [tuple(cert.as_row().values())])
    io.write_csv(out / "deployment.csv", ("site_id", "opened"), _deployment_rows(site_ids, report.y))
    io.write_csv(out / "telemetry.csv", ("iteration", "Z_MP", "Z_SP", "gap", "K_plus_size", "wall_ms"),
                 _telemetry_rows(report))
    opened = ", ".join(str(site_ids[i]) for i in report.open_sites)
    print(f"{cfg.method}: objective {report.objective:.4f} m after {report.iterations} iteration(s); open: {opened}")
    return 0


def cmd_bound(cfg: RunConfig) -> int:
    if cfg.z_d is None:
        raise InputError("--z-d is required")
    cert = discretization_bound(cfg.z_d, cfg.sigma, cfg.metric, cfg.beta)
    io.write_csv(Path(cfg.out) / "bound.csv", CSV_FIELDS, [tuple(cert.as_row().values())])
    eps, zc = cert.rounded()
    print(f"epsilon {eps:.1f}%  upper bound {zc:.1f} m")
    return 0


def _floats(text) -> list[float]:
    try:
        return [float(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise InputError(f"expected a comma-separated list of numbers, got {text!r}") from None


def cmd_validate(cfg: RunConfig) -> int:
    site_ids, sites = io.read_sites(_resolve(cfg, "sites", "sites.csv"))
    if cfg.metric == "table":
        raise InputError("validation samples off-lattice points and needs a coordinate metric")
    region_ids, regions, area = _load_regions(cfg)
    historical = io.read_points(_resolve(cfg, "arrests", "arrests.csv"))
    grid = build_lattice(area, regions, cfg.sigma)
    lam = _lambda(cfg, region_ids, regions)
    setup = ValidationSetup(sites, historical, grid, lam, cfg.beta, cfg.p, cfg.metric)
    bws = _floats(cfg.bandwidths)
    report = run_validation(setup, bws, cfg.trials, cfg.per_trial_n, cfg.seed, cfg.jobs, options=cfg.options())
    out = Path(cfg.out)
    rows = [(r.bandwidth, r.trial, r.method, r.metrics.mean, r.metrics.var, r.metrics.cvar, r.metrics.max)
            for r in sorted(report.trials, key=lambda r: (r.bandwidth, r.trial, METHODS.index(r.method)))]
    io.write_csv(out / "validate.csv", ("bandwidth", "trial", "method", "mean_m", "var_m", "cvar_m", "max_m"), rows)
    cov = [(h, m, r, c) for h in bws for m in METHODS for r, c in zip(COVERAGE_RADII, report.coverage(h, m))]
    io.write_csv(out / "coverage.csv", ("bandwidth", "method", "radius_m", "coverage"), cov)
    for h in bws:
        agg = {m: report.aggregate(h, m)["cvar"] for m in METHODS}
        p = report.p_value(h, "cvar", seed=cfg.seed) if cfg.trials > 1 else float("nan")
        print(f"h={h:g}: mean CVaR nominal {agg['nominal']:.1f}, robust {agg['robust']:.1f}, "
              f"ex-post {agg['expost']:.1f} (robust vs nominal p={p:.4f})")
    return 0


def _bench_one(args):
    spacing, methods, cfg, inst_id = args
    inst = generate_instance(cfg.n_sites, cfg.n_regions, cfg.p, spacing, cfg.area_size, cfg.seed, cfg.metric)
    rows = []
    for method in methods:
        opts = EngineOptions(backend=cfg.backend, time_limit=cfg.time_limit_s, mip_gap=1e-4)
        t0 = time.perf_counter()
        status, obj, its = "", float("nan"), 0
        try:
            if method == "direct":
                rep = solve_direct(inst.d, inst.model, cfg.beta, cfg.p, options=opts)
            else:
                f = solve_rcg if method == "rcg" else solve_rowgen
                rep = f(inst.d, inst.model, cfg.beta, cfg.p, epsilon=1e-4, options=opts)
            obj, its = rep.objective, rep.iterations
        except NodeLimitExceeded:
            status = "*"
        secs = time.perf_counter() - t0
        rows.append((inst_id, method, inst.grid.n_scenarios, secs, obj, its, status))
    return rows


def cmd_bench(cfg: RunConfig) -> int:
    methods = [m.strip() for m in cfg.methods.split(",") if m.strip()]
    bad = [m for m in methods if m not in ROBUST_METHODS]
    if bad:
        raise InputError(f"bench methods must be among {', '.join(ROBUST_METHODS)}")
    tasks = [(s, methods, cfg, i) for i, s in enumerate(_floats(cfg.spacings))]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(_bench_one, tasks))
    else:
        results = [_bench_one(t) for t in tasks]
    rows = [r for part in results for r in part]
    io.write_csv(Path(cfg.out) / "bench.csv",
                 ("instance_id", "method", "K", "solve_seconds", "objective", "iterations", "status"), rows)
    for r in rows:
        print(f"instance {r[0]} |K|={r[2]:>6} {r[1]:<7} {r[3]:9.2f}s {r[6] or ''}")
    return 0


def cmd_gen(cfg: RunConfig) -> int:
    out = Path(cfg.out)
    if cfg.what == "city":
        city = make_city(seed=cfg.seed)
        io.write_points(out / "sites.csv", city.sites, [f"S{i:03d}" for i in range(len(city.sites))], "site_id")
        io.write_points(out / "arrests.csv", city.historical, [f"A{c + 1:03d}" for c in range(len(city.historical))],
                        "arrest_id")
        io.write_regions(out / "regions.csv", city.regions, [f"R{j + 1:02d}" for j in range(len(city.regions))])
        io.write_regions(out / "area.csv", [city.area], ["A"])
    elif cfg.what == "instance":
        inst = generate_instance(cfg.n_sites, cfg.n_regions, cfg.p, cfg.sigma, cfg.area_size, cfg.seed)
        io.write_points(out / "sites.csv", inst.sites, [f"S{i:03d}" for i in range(len(inst.sites))], "site_id")
        io.write_regions(out / "regions.csv", inst.regions, [f"R{j + 1:02d}" for j in range(len(inst.regions))])
        io.write_regions(out / "area.csv", [inst.area], ["A"])
        io.write_csv(out / "lambda.csv", ("region_id", "lambda"),
                     [(f"R{j + 1:02d}", l) for j, l in enumerate(inst.lam)])
    else:
        raise InputError("gen target must be city or instance")
    print(f"wrote {cfg.what} files to {out}")
    return 0


COMMANDS = {
    "discretize": cmd_discretize, "estimate": cmd_estimate, "solve": cmd_solve, "bound": cmd_bound,
    "validate": cmd_validate, "bench": cmd_bench, "gen": cmd_gen,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="robustsiting", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("what", nargs="?", help="for gen: city or instance")
    parser.add_argument("--config", help="flat key = value settings file")
    for f in fields(RunConfig):
        if f.name == "what":
            continue
        flag = "--" + f.name.replace("_", "-")
        extra = {"choices": METRICS} if f.name == "metric" else {}
        parser.add_argument(flag, dest=f.name, default=None, **extra)
    return parser


def parse_config(argv) -> tuple[str, RunConfig]:
    parser = build_parser()
    ns = parser.parse_args(argv)
    values = read_config(ns.config) if ns.config else {}
    for f in fields(RunConfig):
        raw = getattr(ns, f.name, None)
        if raw is not None:
            values[f.name] = _coerce(f.name, raw)
    cfg = RunConfig(**values)
    return ns.command, cfg.validate()


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        command, cfg = parse_config(argv)
        return COMMANDS[command](cfg)
    except SystemExit as exc:  # argparse usage errors
        return 2 if exc.code else 0
    except (InputError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (SolverError, RobustSitingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
