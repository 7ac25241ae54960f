"""Solution methods: row-and-column generation, row generation, the monolithic MIP, nominal and ex-post.

Every robust method reports the certified worst-case CVaR of the deployment it
returns (the subproblem value at that deployment), so results from different
methods are directly comparable.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .branchbound import MipSolution, solve_mip
from .errors import InfeasibleUncertaintySet, IterLimit, StalledCuts
from .formulations import (MasterState, build_capped_nominal, build_master, build_nominal,
                           build_robust_monolithic, top_p_heuristic)
from .geometry import nearest_assignment
from .riskdist import UncertaintyModel, WorstCaseCertificate, feasibility_check, risk_report, solve_subproblem

ZERO_TOL = 1e-12


@dataclass
class EngineOptions:
    mip_gap: float = 1e-7
    backend: str = "bb"           # "bb" (own branch and bound) or "highs"
    lp_method: str = "auto"
    node_limit: int = 1_000_000
    time_limit: float | None = None  # seconds, per MIP solve


@dataclass
class IterationRecord:
    iteration: int
    z_mp: float
    z_sp: float
    gap: float
    k_plus_size: int
    wall_ms: float
    added: int = 0


@dataclass
class SolveReport:
    method: str
    y: np.ndarray
    objective: float
    lower_bound: float
    history: list = field(default_factory=list)
    certificate: WorstCaseCertificate | None = None
    seconds: float = 0.0
    nodes: int = 0
    state: MasterState | None = None  # generated cuts, for the decomposition methods

    @property
    def iterations(self) -> int:
        return len(self.history)

    @property
    def open_sites(self) -> np.ndarray:
        return np.flatnonzero(self.y)

    @property
    def gap(self) -> float:
        return relative_gap(self.objective, self.lower_bound)


def relative_gap(upper: float, lower: float) -> float:
    if upper <= ZERO_TOL:
        return 0.0
    return max(0.0, (upper - lower) / upper)


def _mip(problem, opts: EngineOptions, gap_tol, n_sites, P, hint=None) -> MipSolution:
    return solve_mip(problem, gap_tol=gap_tol, node_limit=opts.node_limit, hint=hint,
                     heuristic=top_p_heuristic(n_sites, P), lp_method=opts.lp_method,
                     time_limit=opts.time_limit, backend=opts.backend)


def _check_inputs(d, model: UncertaintyModel | None, beta, P):
    d = np.asarray(d, dtype=float)
    if d.ndim != 2 or d.size == 0:
        raise ValueError("distance matrix must be non-empty (sites x scenarios)")
    if not 0.0 <= beta < 1.0:
        raise ValueError("beta must lie in [0, 1)")
    if not 1 <= P <= d.shape[0]:
        raise ValueError(f"facility budget P={P} must lie in [1, {d.shape[0]}]")
    if model is not None:
        if model.n_scenarios != d.shape[1]:
            raise ValueError("distance matrix and uncertainty model disagree on the scenario count")
        if not feasibility_check(model)[0]:
            raise InfeasibleUncertaintySet("no distribution matches the region probabilities")
    return d


def worst_case(d, y, model: UncertaintyModel, beta: float) -> WorstCaseCertificate:
    """Worst-case CVaR certificate of a deployment with nearest-site assignment over all scenarios."""
    _, c = nearest_assignment(d, y)
    return solve_subproblem(c, model, beta)


def _generate(d, model, beta, P, epsilon, iter_limit, opts, all_columns, method) -> SolveReport:
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    d = _check_inputs(d, model, beta, P)
    opts = opts or EngineOptions()
    n_sites, K = d.shape
    master_gap = min(opts.mip_gap, epsilon / 10.0)
    state = MasterState.seeded()
    t0 = time.perf_counter()
    z_mp = -np.inf
    best_y, best_cert, best_val = None, None, np.inf
    hint = None
    history = []
    nodes = 0
    for it in range(1, iter_limit + 1):
        t_it = time.perf_counter()
        bp = build_master(d, state, P, all_columns=all_columns)
        sol = _mip(bp.mip, opts, master_gap, n_sites, P, hint=hint)
        nodes += sol.nodes
        y = bp.deployment(sol.x)
        z_mp = max(z_mp, sol.bound)
        cert = worst_case(d, y, model, beta)
        if cert.value < best_val:
            best_y, best_cert, best_val = y, cert, cert.value
        gap = relative_gap(best_val, z_mp)
        added = 0
        if gap > epsilon:
            if state.has_cut(cert.p) and not set(np.flatnonzero(cert.p > 0)) - set(state.k_plus):
                raise StalledCuts(f"iteration {it} regenerated an existing cut at gap {gap:.3g}")
            added = len(state.add(cert.p))
        k_plus = K if all_columns else len(state.k_plus)
        history.append(IterationRecord(it, float(z_mp), float(cert.value), float(gap), k_plus,
                                       1e3 * (time.perf_counter() - t_it), added))
        if gap <= epsilon:
            return SolveReport(method, best_y, best_val, float(min(z_mp, best_val)), history, best_cert,
                               time.perf_counter() - t0, nodes, state)
        hint = y
    report = SolveReport(method, best_y, best_val, float(min(z_mp, best_val)), history, best_cert,
                         time.perf_counter() - t0, nodes, state)
    raise IterLimit(f"no convergence in {iter_limit} iterations (gap {report.gap:.3g})", report)


def solve_rcg(d, model: UncertaintyModel, beta: float, P: int, epsilon: float = 1e-6,
              iter_limit: int = 500, options: EngineOptions | None = None) -> SolveReport:
    """Row-and-column generation: the master only carries assignment columns for generated scenarios."""
    return _generate(d, model, beta, P, epsilon, iter_limit, options, False, "rcg")


def solve_rowgen(d, model: UncertaintyModel, beta: float, P: int, epsilon: float = 1e-6,
                 iter_limit: int = 500, options: EngineOptions | None = None) -> SolveReport:
    """Cutting-plane variant whose master keeps assignment columns for every scenario."""
    return _generate(d, model, beta, P, epsilon, iter_limit, options, True, "rowgen")


def solve_direct(d, model: UncertaintyModel, beta: float, P: int,
                 options: EngineOptions | None = None) -> SolveReport:
    d = _check_inputs(d, model, beta, P)
    opts = options or EngineOptions()
    t0 = time.perf_counter()
    bp = build_robust_monolithic(d, model, beta, P, check=False)
    sol = _mip(bp.mip, opts, opts.mip_gap, d.shape[0], P)
    y = bp.deployment(sol.x)
    cert = worst_case(d, y, model, beta)
    lower = float(min(sol.bound, cert.value))
    wall = time.perf_counter() - t0
    rec = IterationRecord(1, lower, cert.value, relative_gap(cert.value, lower), d.shape[1], 1e3 * wall)
    return SolveReport("direct", y, cert.value, lower, [rec], cert, wall, sol.nodes)


def break_ties(d, model: UncertaintyModel, beta: float, P: int, report: SolveReport, d_sample,
               weights=None, rel_tol: float = 1e-6, iter_limit: int = 100,
               options: EngineOptions | None = None) -> SolveReport:
    """Pick, among deployments whose worst-case CVaR is within ``rel_tol`` of ``report.objective``,
    one with the lowest sample CVaR on ``d_sample``.

    At high beta the worst-case value usually depends on a handful of sites
    only, so the robust optimum is far from unique. The cap is enforced by
    the generated cuts; each candidate is re-certified by the worst-case LP
    and its cut appended when it breaks the cap. The input deployment meets
    every cut, so the result is never worse on the sample, and its certified
    value never exceeds the cap.
    """
    d = _check_inputs(d, model, beta, P)
    d_sample = np.asarray(d_sample, dtype=float)
    opts = options or EngineOptions()
    n_sites = d.shape[0]
    cap = report.objective * (1.0 + rel_tol) if report.objective > ZERO_TOL else rel_tol
    state = MasterState.seeded()
    if report.state is not None:
        state = MasterState([dict(c) for c in report.state.cuts], list(report.state.k_plus),
                            report.state.iteration)
    if report.certificate is not None and not state.has_cut(report.certificate.p):
        state.add(report.certificate.p)
    t0 = time.perf_counter()
    best_y, best_cert = np.asarray(report.y, dtype=int), report.certificate
    nodes = report.nodes
    for _ in range(iter_limit):
        bp = build_capped_nominal(d_sample, d, state, cap, beta, P, weights)
        sol = _mip(bp.mip, opts, opts.mip_gap, n_sites, P, hint=best_y)
        nodes += sol.nodes
        y = bp.deployment(sol.x)
        cert = worst_case(d, y, model, beta)
        if cert.value <= cap:
            if _sample_cvar(d_sample, y, beta, weights) <= _sample_cvar(d_sample, best_y, beta, weights):
                best_y, best_cert = y, cert
            break
        if state.has_cut(cert.p):
            break
        state.add(cert.p)
    return SolveReport(report.method, best_y, best_cert.value, min(report.lower_bound, best_cert.value),
                       report.history, best_cert, report.seconds + time.perf_counter() - t0, nodes, state)


def _sample_cvar(d, y, beta, weights=None) -> float:
    _, c = nearest_assignment(d, y)
    return risk_report(c, weights, beta).cvar


def solve_nominal(d, beta: float, P: int, weights=None, hints=(), options: EngineOptions | None = None,
                  method: str = "nominal") -> SolveReport:
    """CVaR-optimal deployment for a fixed sample of demand points (uniform weights by default).

    ``hints`` are candidate deployments; the best of them seeds the search and
    the result is never worse than any hint on this sample.
    """
    d = _check_inputs(d, None, beta, P)
    opts = options or EngineOptions()
    t0 = time.perf_counter()
    bp = build_nominal(d, beta, P, weights)
    hint_vals = [(_sample_cvar(d, h, beta, weights), i) for i, h in enumerate(hints)]
    start = np.asarray(hints[min(hint_vals)[1]], dtype=float) if hint_vals else None
    sol = _mip(bp.mip, opts, opts.mip_gap, d.shape[0], P, hint=start)
    y = bp.deployment(sol.x)
    value = _sample_cvar(d, y, beta, weights)
    if hint_vals and min(hint_vals)[0] <= value:
        value, pos = min(hint_vals)
        y = np.asarray(hints[pos], dtype=int)
    lower = float(min(sol.bound, value))
    wall = time.perf_counter() - t0
    rec = IterationRecord(1, lower, value, relative_gap(value, lower), d.shape[1], 1e3 * wall)
    return SolveReport(method, y, value, lower, [rec], None, wall, sol.nodes)


def solve_expost(d_sim, beta: float, P: int, hints=(), options: EngineOptions | None = None) -> SolveReport:
    """Perfect-foresight deployment for a simulated sample, evaluated on that same sample."""
    return solve_nominal(d_sim, beta, P, None, hints, options, method="expost")
