"""Region-probability ambiguity set, its calibration, and risk measures on discrete distance distributions."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleUncertaintySet, OrphanPoint
from .geometry import membership_matrix, partition_subregions
from .simplex import EQ, LE, LpBuilder, LinearProgram, solve_lp

PROB_TOL = 1e-9


@dataclass
class UncertaintyModel:
    """Distributions u over K scenarios with sum(u) = 1 and u(K_j) = lam_j for every region j."""

    lam: np.ndarray
    membership: np.ndarray  # (K, J) bool

    def __post_init__(self):
        self.lam = np.asarray(self.lam, dtype=float).ravel()
        self.membership = np.asarray(self.membership, dtype=bool)
        if self.membership.ndim != 2 or self.membership.shape[1] != self.lam.size:
            raise ValueError("membership must be (scenarios, regions) with one column per lambda")
        if np.any(self.lam < -PROB_TOL) or np.any(self.lam > 1 + PROB_TOL):
            raise ValueError("region probabilities must lie in [0, 1]")
        empty = np.flatnonzero(~self.membership.any(axis=0))
        if empty.size:
            raise ValueError(f"region {int(empty[0])} has no scenario")
        self.lam = np.clip(self.lam, 0.0, 1.0)

    @classmethod
    def from_grid(cls, grid, lam) -> "UncertaintyModel":
        return cls(lam, grid.membership)

    @classmethod
    def from_index(cls, region_index, n_scenarios: int, lam) -> "UncertaintyModel":
        M = np.zeros((n_scenarios, len(region_index)), dtype=bool)
        for j, ks in enumerate(region_index):
            M[np.asarray(ks, dtype=int), j] = True
        return cls(lam, M)

    @property
    def n_scenarios(self) -> int:
        return self.membership.shape[0]

    @property
    def n_regions(self) -> int:
        return self.membership.shape[1]

    @property
    def region_index(self) -> list[np.ndarray]:
        return [np.flatnonzero(self.membership[:, j]) for j in range(self.n_regions)]

    @property
    def subregion_of(self) -> np.ndarray:
        return partition_subregions(self.membership)

    @property
    def is_partition(self) -> bool:
        return bool(np.all(self.membership.sum(axis=1) == 1))

    def restrict(self, scenarios) -> "UncertaintyModel":
        return UncertaintyModel(self.lam, self.membership[np.asarray(scenarios)])


@dataclass
class DiscreteDistribution:
    u: np.ndarray

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float).ravel()
        if np.any(self.u < -PROB_TOL) or abs(self.u.sum() - 1.0) > PROB_TOL:
            raise ValueError("u must be non-negative and sum to one")

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.u > 0)


@dataclass(frozen=True)
class RiskReport:
    mean: float
    var: float
    cvar: float
    max: float
    beta: float


@dataclass
class WorstCaseCertificate:
    u: np.ndarray
    p: np.ndarray
    value: float
    beta: float

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.u > PROB_TOL)

    @property
    def tail(self) -> np.ndarray:
        return np.flatnonzero(self.p > PROB_TOL)


def estimate_lambda(points, regions) -> tuple[np.ndarray, np.ndarray]:
    """Fraction of observed events inside each (closed) region, and the raw counts."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        raise ValueError("need at least one observed point")
    M = membership_matrix(regions, pts)
    orphans = np.flatnonzero(~M.any(axis=1))
    if orphans.size:
        raise OrphanPoint(int(orphans[0]))
    counts = M.sum(axis=0).astype(np.int64)
    return counts / len(pts), counts


def wilson_interval(count: int, n: int, z: float = 1.96) -> tuple[float, float]:
    if n < 1 or not 0 <= count <= n or z <= 0:
        raise ValueError("need 0 <= count <= n, n >= 1 and z > 0")
    phat = count / n
    z2 = z * z
    denom = 1.0 + z2 / n
    centre = (phat + z2 / (2 * n)) / denom
    half = z * math.sqrt(phat * (1 - phat) / n + z2 / (4 * n * n)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


def cvar_objective(alpha: float, dist, u, beta: float) -> float:
    dist = np.asarray(dist, dtype=float)
    return alpha + float(np.dot(u, np.maximum(dist - alpha, 0.0))) / (1.0 - beta)


def risk_report(dist, u=None, beta: float = 0.9) -> RiskReport:
    """Mean, VaR (smallest minimising alpha), CVaR and max of a discrete distance distribution."""
    if not 0.0 <= beta < 1.0:
        raise ValueError("beta must lie in [0, 1)")
    dist = np.asarray(dist, dtype=float).ravel()
    u = np.full(dist.size, 1.0 / dist.size) if u is None else (
        u.u if isinstance(u, DiscreteDistribution) else np.asarray(u, dtype=float).ravel())
    if dist.size != u.size or dist.size == 0:
        raise ValueError("distances and weights must be non-empty and of equal length")
    sup = u > 0
    d, w = dist[sup], u[sup]
    vals, inv = np.unique(d, return_inverse=True)
    wv = np.bincount(inv.ravel(), weights=w, minlength=vals.size)
    # mass and first moment strictly above each unique value
    tail_w = np.concatenate([np.cumsum(wv[::-1])[::-1][1:], [0.0]])
    tail_wd = np.concatenate([np.cumsum((wv * vals)[::-1])[::-1][1:], [0.0]])
    alphas = vals
    f = alphas + (tail_wd - alphas * tail_w) / (1.0 - beta)
    if vals[0] > 0:
        alphas = np.concatenate([[0.0], vals])
        f0 = float(np.dot(wv, vals)) / (1.0 - beta)
        f = np.concatenate([[f0], f])
    best = float(f.min())
    scale = max(1.0, abs(best))
    var = float(alphas[np.flatnonzero(f <= best + 1e-12 * scale)[0]])
    return RiskReport(mean=float(np.dot(w, d)), var=var, cvar=best, max=float(d.max()), beta=beta)


def subproblem_program(c, model: UncertaintyModel, beta: float, form: str = "reduced") -> LinearProgram:
    """The worst-case CVaR LP for fixed per-scenario costs ``c`` (maximisation).

    ``form="joint"`` keeps (u, p) with p_k <= u_k / (1 - beta) as rows.
    ``form="reduced"`` substitutes u = (1 - beta) p + s with s >= 0, leaving
    only |J| + 2 rows; the two are the same polytope under that change of variables.
    """
    c = np.asarray(c, dtype=float)
    K, J = model.membership.shape
    lb = LpBuilder()
    rk, rj = np.nonzero(model.membership)
    if form == "joint":
        u = lb.add_vars("u", K)
        p = lb.add_vars("p", K, cost=c)
        lb.add_rows(np.zeros(K), u, 1.0, 1.0, EQ)
        lb.add_rows(rj, u[rk], 1.0, model.lam, EQ)
        lb.add_rows(np.zeros(K), p, 1.0, 1.0, LE)
        rows = np.arange(K)
        lb.add_rows(np.concatenate([rows, rows]), np.concatenate([p, u]),
                    np.concatenate([np.ones(K), np.full(K, -1.0 / (1.0 - beta))]), np.zeros(K), LE)
        return lb.build(maximize=True)
    if form != "reduced":
        raise ValueError(f"unknown subproblem form {form!r}")
    keep = 1.0 - beta
    p = lb.add_vars("p", K, cost=c)
    s = lb.add_vars("s", K)
    lb.add_rows(np.zeros(2 * K), np.concatenate([p, s]), np.concatenate([np.full(K, keep), np.ones(K)]), 1.0, EQ)
    lb.add_rows(np.concatenate([rj, rj]), np.concatenate([p[rk], s[rk]]),
                np.concatenate([np.full(rk.size, keep), np.ones(rk.size)]), model.lam, EQ)
    lb.add_rows(np.zeros(K), p, 1.0, 1.0, LE)
    return lb.build(maximize=True)


def solve_subproblem(c, model: UncertaintyModel, beta: float, method: str = "revised") -> WorstCaseCertificate:
    """Worst-case distribution and CVaR tail weights for per-scenario distances ``c``.

    Among the optimal (u, p), the one maximising the expected distance under u
    is returned, which makes u put each region's mass on its farthest scenarios.
    """
    if not 0.0 <= beta < 1.0:
        raise ValueError("beta must lie in [0, 1)")
    c = np.asarray(c, dtype=float).ravel()
    K = model.n_scenarios
    if c.size != K:
        raise ValueError(f"expected {K} scenario costs, got {c.size}")
    if np.any(c < 0) or not np.all(np.isfinite(c)):
        raise ValueError("scenario costs must be finite and non-negative")
    lp = subproblem_program(c, model, beta)
    secondary = np.concatenate([(1.0 - beta) * c, c])
    sol = solve_lp(lp, method=method, secondary=secondary)
    if sol.status == "infeasible":
        raise InfeasibleUncertaintySet("no distribution matches the region probabilities")
    if not sol.optimal:
        raise InfeasibleUncertaintySet(f"worst-case LP ended with status {sol.status}")
    p = np.clip(sol.x[:K], 0.0, None)
    s = np.clip(sol.x[K:], 0.0, None)
    u = (1.0 - beta) * p + s
    p[p <= 1e-12] = 0.0
    u[u <= 1e-12] = 0.0
    return WorstCaseCertificate(u=u, p=p, value=float(c @ p), beta=beta)


def worst_case_partitioned(c, model: UncertaintyModel, beta: float) -> WorstCaseCertificate:
    """Closed-form worst case when the regions partition the scenarios.

    Each region's mass goes to its farthest scenario (lowest id on ties), then
    the CVaR tail is filled greedily from the largest distance down.
    """
    if not model.is_partition:
        raise ValueError("closed form needs regions that partition the scenarios")
    c = np.asarray(c, dtype=float).ravel()
    u = np.zeros(c.size)
    for j, ks in enumerate(model.region_index):
        u[ks[np.argmax(c[ks])]] += model.lam[j]
    p = np.zeros(c.size)
    room = 1.0
    for k in np.argsort(-c, kind="stable"):
        if u[k] <= 0:
            continue
        take = min(u[k] / (1.0 - beta), room)
        p[k] = take
        room -= take
        if room <= 0:
            break
    return WorstCaseCertificate(u=u, p=p, value=float(c @ p), beta=beta)


def feasibility_check(model: UncertaintyModel) -> tuple[bool, np.ndarray | None]:
    """Whether the ambiguity set is non-empty, with a witness distribution.

    Works on subregion masses (scenarios with identical membership are
    interchangeable) and spreads each mass uniformly inside its subregion.
    """
    sub = model.subregion_of
    R = int(sub.max()) + 1
    sig = np.zeros((R, model.n_regions), dtype=bool)
    sig[sub] = model.membership
    lb = LpBuilder()
    v = lb.add_vars("v", R)
    lb.add_rows(np.zeros(R), v, 1.0, 1.0, EQ)
    rr, jj = np.nonzero(sig)
    lb.add_rows(jj, v[rr], 1.0, model.lam, EQ)
    sol = solve_lp(lb.build(), method="revised")
    if not sol.optimal:
        return False, None
    mass = np.clip(sol.x, 0.0, None)
    sizes = np.bincount(sub, minlength=R)
    u = mass[sub] / sizes[sub]
    ok = abs(u.sum() - 1.0) <= PROB_TOL and np.all(
        np.abs(model.membership.T.astype(float) @ u - model.lam) <= PROB_TOL)
    return (True, u) if ok else (False, None)
