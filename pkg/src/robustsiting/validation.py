"""Out-of-sample validation with kernel-smoothed demand, plus synthetic instance generators."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .engines import EngineOptions, break_ties, solve_expost, solve_nominal, solve_rcg
from .geometry import Polygon, ScenarioGrid, build_lattice, compute_distances, nearest_assignment, pairwise
from .riskdist import UncertaintyModel, estimate_lambda, risk_report

COVERAGE_RADII = np.arange(0.0, 251.0, 1.0)
METRICS = ("mean", "var", "cvar", "max")
METHODS = ("nominal", "robust", "expost")


@dataclass
class KdeSampler:
    """Gaussian kernel density over planar points; ``h`` is the per-axis standard deviation in meters."""

    data: np.ndarray
    h: float
    seed: int | np.random.SeedSequence = 0

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float).reshape(-1, 2)
        if len(self.data) == 0:
            raise ValueError("kernel density needs at least one data point")
        if self.h < 0:
            raise ValueError("bandwidth must be non-negative")


def kde_sample(sampler: KdeSampler, n: int) -> np.ndarray:
    """Draw ``n`` points: a uniformly chosen data point plus an isotropic Gaussian offset (no clipping)."""
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(sampler.seed)
    centres = sampler.data[rng.integers(0, len(sampler.data), size=n)]
    if sampler.h == 0:
        return centres.copy()
    return centres + rng.normal(0.0, sampler.h, size=(n, 2))


@dataclass
class TrialMetrics:
    mean: float
    var: float
    cvar: float
    max: float
    coverage: np.ndarray

    def metric(self, name: str) -> float:
        return float(getattr(self, name))


def coverage_curve(dist, radii=COVERAGE_RADII) -> np.ndarray:
    """Fraction of distances <= r for each radius r."""
    dist = np.sort(np.asarray(dist, dtype=float).ravel())
    return np.searchsorted(dist, np.asarray(radii, dtype=float), side="right") / dist.size


def evaluate_distances(dist, beta: float = 0.9, radii=COVERAGE_RADII) -> TrialMetrics:
    rep = risk_report(dist, None, beta)
    return TrialMetrics(rep.mean, rep.var, rep.cvar, rep.max, coverage_curve(dist, radii))


def evaluate_deployment(y, sites, samples, beta: float = 0.9, metric: str = "euclidean",
                        radii=COVERAGE_RADII) -> TrialMetrics:
    """Distances from each sample to its nearest open site, summarised by risk measures and coverage."""
    samples = np.asarray(samples, dtype=float).reshape(-1, 2)
    if len(samples) == 0:
        raise ValueError("need at least one sample")
    d = pairwise(sites, samples, metric)
    _, dist = nearest_assignment(d, y)
    return evaluate_distances(dist, beta, radii)


def paired_permutation_test(a, b, n_perm: int = 10_000, seed: int = 0) -> float:
    """Two-sided sign-flip test of zero mean paired difference; returns the p-value."""
    diff = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    if diff.size == 0:
        raise ValueError("need at least one pair")
    observed = abs(diff.mean())
    rng = np.random.default_rng(seed)
    signs = rng.choice(np.array([-1.0, 1.0]), size=(n_perm, diff.size))
    stats = np.abs(signs @ diff) / diff.size
    hits = int(np.count_nonzero(stats >= observed - 1e-12 * max(1.0, observed)))
    return (1 + hits) / (1 + n_perm)


@dataclass
class ValidationSetup:
    """Everything needed to fit the nominal and robust deployments once."""

    sites: np.ndarray
    historical: np.ndarray
    grid: ScenarioGrid
    lam: np.ndarray
    beta: float = 0.9
    P: int = 1
    metric: str = "euclidean"

    @property
    def model(self) -> UncertaintyModel:
        return UncertaintyModel.from_grid(self.grid, self.lam)


@dataclass
class TrialRecord:
    bandwidth: float
    trial: int
    method: str
    metrics: TrialMetrics


@dataclass
class EvalReport:
    trials: list = field(default_factory=list)   # TrialRecord
    deployments: dict = field(default_factory=dict)  # method -> y for the fitted methods

    def values(self, bandwidth: float, method: str, metric: str) -> np.ndarray:
        rows = sorted((r for r in self.trials if r.bandwidth == bandwidth and r.method == method),
                      key=lambda r: r.trial)
        return np.array([r.metrics.metric(metric) for r in rows])

    @property
    def bandwidths(self) -> list:
        return sorted({r.bandwidth for r in self.trials})

    def aggregate(self, bandwidth: float, method: str, how: str = "mean") -> dict:
        """Per-metric mean or max over trials."""
        f = np.mean if how == "mean" else np.max
        return {m: float(f(self.values(bandwidth, method, m))) for m in METRICS}

    def coverage(self, bandwidth: float, method: str) -> np.ndarray:
        rows = [r.metrics.coverage for r in self.trials if r.bandwidth == bandwidth and r.method == method]
        return np.mean(rows, axis=0)

    def gaps(self, bandwidth: float, method: str, how: str = "mean") -> dict:
        """Relative gap (method - expost) / expost of the aggregated metrics."""
        a = self.aggregate(bandwidth, method, how)
        e = self.aggregate(bandwidth, "expost", how)
        return {m: (a[m] - e[m]) / e[m] if e[m] > 0 else 0.0 for m in METRICS}

    def p_value(self, bandwidth: float, metric: str = "cvar", n_perm: int = 10_000, seed: int = 0) -> float:
        return paired_permutation_test(self.values(bandwidth, "robust", metric),
                                       self.values(bandwidth, "nominal", metric), n_perm, seed)


def fit_deployments(setup: ValidationSetup, epsilon: float = 1e-6, options: EngineOptions | None = None,
                    tie_break: bool = True) -> dict:
    """Nominal deployment on the historical points and robust deployment on the scenario lattice.

    With ``tie_break`` the robust deployment is the one with the lowest
    historical CVaR among those whose worst-case value matches the robust
    optimum to a relative 1e-6.
    """
    d_hist = pairwise(setup.sites, setup.historical, setup.metric)
    nominal = solve_nominal(d_hist, setup.beta, setup.P, options=options)
    d_grid = compute_distances(setup.sites, setup.grid, setup.metric).values
    robust = solve_rcg(d_grid, setup.model, setup.beta, setup.P, epsilon=epsilon, options=options)
    if tie_break:
        robust = break_ties(d_grid, setup.model, setup.beta, setup.P, robust, d_hist, options=options)
    return {"nominal": nominal.y, "robust": robust.y}


def _run_trial(args):
    setup, deployments, h, trial, n, seed, options = args
    ss = np.random.SeedSequence([seed, trial])
    samples = kde_sample(KdeSampler(setup.historical, h, ss), n)
    d = pairwise(setup.sites, samples, setup.metric)
    hints = [deployments["nominal"], deployments["robust"]]
    expost = solve_expost(d, setup.beta, setup.P, hints=hints, options=options)
    out = []
    for method, y in (("nominal", deployments["nominal"]), ("robust", deployments["robust"]),
                      ("expost", expost.y)):
        _, dist = nearest_assignment(d, y)
        out.append(TrialRecord(h, trial, method, evaluate_distances(dist, setup.beta)))
    return out


def run_validation(setup: ValidationSetup, bandwidths=(10.0, 50.0, 100.0, 150.0), trials: int = 50,
                   per_trial_n: int = 100, seed: int = 0, jobs: int = 1, deployments: dict | None = None,
                   options: EngineOptions | None = None) -> EvalReport:
    """Fit nominal and robust once, then score them and the ex-post optimum on simulated validation sets.

    Trial t of every bandwidth draws from the stream SeedSequence([seed, t]),
    so bandwidths are compared on common random numbers.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    deployments = deployments or fit_deployments(setup, options=options)
    tasks = [(setup, deployments, float(h), t, per_trial_n, seed, options)
             for h in bandwidths for t in range(trials)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_trial, tasks))
    else:
        results = [_run_trial(t) for t in tasks]
    report = EvalReport(deployments=dict(deployments))
    for rows in results:
        report.trials.extend(rows)
    return report


# ---------------------------------------------------------------- generators

@dataclass
class InstanceBundle:
    sites: np.ndarray
    regions: list
    grid: ScenarioGrid
    lam: np.ndarray
    P: int
    d: np.ndarray
    area: Polygon

    @property
    def model(self) -> UncertaintyModel:
        return UncertaintyModel.from_grid(self.grid, self.lam)


def guillotine_partition(width: float, height: float, n: int, rng) -> list[Polygon]:
    """Split the rectangle [0, width] x [0, height] into ``n`` rectangles by repeated cuts of the largest piece."""
    boxes = [(0.0, 0.0, float(width), float(height))]
    while len(boxes) < n:
        areas = [(b[2] - b[0]) * (b[3] - b[1]) for b in boxes]
        x0, y0, x1, y1 = boxes.pop(int(np.argmax(areas)))
        frac = rng.uniform(0.35, 0.65)
        if x1 - x0 >= y1 - y0:
            cut = x0 + frac * (x1 - x0)
            boxes += [(x0, y0, cut, y1), (cut, y0, x1, y1)]
        else:
            cut = y0 + frac * (y1 - y0)
            boxes += [(x0, y0, x1, cut), (x0, cut, x1, y1)]
    boxes.sort(key=lambda b: (b[1], b[0]))
    return [Polygon.rectangle(*b) for b in boxes]


def generate_instance(n_sites: int, n_regions: int, P: int, spacing: float, area_size=106.8,
                      seed: int = 0, metric: str = "euclidean") -> InstanceBundle:
    """Random benchmark instance: uniform sites in a rectangle, rectangular regions, normalised uniform lambda.

    The regions and lambda depend only on the seed, not on the spacing, so a
    seed with several spacings yields a size ladder of the same instance.
    """
    if min(n_sites, n_regions, P) < 1 or spacing <= 0 or P > n_sites:
        raise ValueError("need positive sizes, positive spacing and P <= n_sites")
    w, h = (area_size, area_size) if np.isscalar(area_size) else area_size
    rng = np.random.default_rng(seed)
    sites = np.column_stack([rng.uniform(0, w, n_sites), rng.uniform(0, h, n_sites)])
    regions = guillotine_partition(w, h, n_regions, rng)
    raw = rng.uniform(size=n_regions)
    lam = raw / raw.sum()
    area = Polygon.rectangle(0.0, 0.0, w, h)
    grid = build_lattice(area, regions, spacing)
    d = compute_distances(sites, grid, metric).values
    return InstanceBundle(sites, regions, grid, lam, P, d, area)


@dataclass
class SyntheticCity:
    area: Polygon
    regions: list
    sites: np.ndarray
    historical: np.ndarray
    centres: np.ndarray      # cluster centres of the demand mixture
    weights: np.ndarray
    spread: float

    def sample(self, n: int, rng) -> np.ndarray:
        """Draws from the clustered demand law, rejected to the study area."""
        out = np.zeros((0, 2))
        while len(out) < n:
            comp = rng.choice(len(self.weights), size=2 * n, p=self.weights)
            pts = self.centres[comp] + rng.normal(0.0, self.spread, size=(2 * n, 2))
            pts = pts[self.area.contains(pts)]
            out = np.vstack([out, pts])
        return out[:n]


def make_city(width: float = 1000.0, height: float = 1040.0, region_grid=(5, 3), n_sites: int = 120,
              n_historical: int = 43, n_clusters: int = 8, spread: float = 45.0, seed: int = 7) -> SyntheticCity:
    """A downtown-sized study area with clustered demand, equal-area block regions and random candidate sites."""
    rng = np.random.default_rng(seed)
    area = Polygon.rectangle(0.0, 0.0, width, height)
    nx, ny = region_grid
    xs = np.linspace(0.0, width, nx + 1)
    ys = np.linspace(0.0, height, ny + 1)
    regions = [Polygon.rectangle(xs[i], ys[j], xs[i + 1], ys[j + 1]) for j in range(ny) for i in range(nx)]
    margin = 2.0 * spread
    centres = np.column_stack([rng.uniform(margin, width - margin, n_clusters),
                               rng.uniform(margin, height - margin, n_clusters)])
    weights = rng.dirichlet(np.full(n_clusters, 2.0))
    sites = np.column_stack([rng.uniform(0, width, n_sites), rng.uniform(0, height, n_sites)])
    city = SyntheticCity(area, regions, sites, np.zeros((0, 2)), centres, weights, spread)
    city.historical = city.sample(n_historical, rng)
    return city


def city_setup(city: SyntheticCity, spacing: float = 20.0, beta: float = 0.9, P: int = 30,
               metric: str = "euclidean") -> ValidationSetup:
    grid = build_lattice(city.area, city.regions, spacing)
    lam, _ = estimate_lambda(city.historical, city.regions)
    return ValidationSetup(city.sites, city.historical, grid, lam, beta, P, metric)


def lattice_count(width: float, height: float, spacing: float) -> int:
    return (int(math.floor(width / spacing + 1e-9)) + 1) * (int(math.floor(height / spacing + 1e-9)) + 1)
