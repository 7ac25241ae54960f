"""Mixed binary programs for nominal, robust, decomposition-master and p-median/p-center siting.

All builders share one column layout convention: the ``y`` block (site open
flags) comes first, so ``x[:n_sites]`` is always the deployment. Assignment
variables ``z`` are continuous; with ``y`` binary the best ``z`` is the
nearest-open-site assignment anyway.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .branchbound import MixedProgram
from .errors import InfeasibleUncertaintySet
from .riskdist import UncertaintyModel, feasibility_check
from .simplex import EQ, GE, LE, LpBuilder


@dataclass
class BuiltProgram:
    mip: MixedProgram
    blocks: dict
    n_sites: int
    scenarios: np.ndarray | None = None  # scenario ids owning z columns, in order

    def deployment(self, x) -> np.ndarray:
        return np.round(np.asarray(x)[self.blocks["y"]]).astype(int)

    def value(self, x, block) -> np.ndarray:
        return np.asarray(x)[self.blocks[block]]


@dataclass
class Deployment:
    y: np.ndarray
    P: int
    assigned_site: np.ndarray
    distance: np.ndarray

    @classmethod
    def from_open(cls, d, y) -> "Deployment":
        from .geometry import nearest_assignment

        y = np.asarray(y, dtype=int)
        site, dist = nearest_assignment(d, y)
        return cls(y=y, P=int(y.sum()), assigned_site=site, distance=dist)

    @property
    def open_sites(self) -> np.ndarray:
        return np.flatnonzero(self.y)


@dataclass
class MasterState:
    """Generated tail-weight cuts and the scenarios that own master columns."""

    cuts: list = field(default_factory=list)  # each: dict scenario -> p_k
    k_plus: list = field(default_factory=list)
    iteration: int = 0

    @classmethod
    def seeded(cls) -> "MasterState":
        return cls(cuts=[{}], k_plus=[], iteration=0)

    def add(self, p, tol: float = 1e-12) -> list[int]:
        """Append the cut for tail weights ``p``; return the newly activated scenarios."""
        p = np.asarray(p, dtype=float)
        support = np.flatnonzero(p > tol)
        known = set(self.k_plus)
        new = [int(k) for k in support if int(k) not in known]
        self.k_plus.extend(new)
        self.cuts.append({int(k): float(p[k]) for k in support})
        self.iteration += 1
        return new

    def has_cut(self, p, tol: float = 1e-9) -> bool:
        p = np.asarray(p, dtype=float)
        support = {int(k) for k in np.flatnonzero(p > 1e-12)}
        for cut in self.cuts:
            if set(cut) == support and all(abs(cut[k] - p[k]) <= tol for k in support):
                return True
        return False


def _assignment_block(lb: LpBuilder, d, scenarios, y, name="z"):
    """z_ik for the given scenarios with sum_i z_ik = 1 and z_ik <= y_i."""
    n_sites = d.shape[0]
    nk = len(scenarios)
    z = lb.add_vars(name, n_sites * nk, 0.0, 1.0).reshape(n_sites, nk)
    if nk == 0:
        return z
    rows = np.tile(np.arange(nk), n_sites)
    lb.add_rows(rows, z.ravel(), 1.0, np.ones(nk), EQ)
    cnt = n_sites * nk
    r = np.arange(cnt)
    lb.add_rows(np.concatenate([r, r]), np.concatenate([z.ravel(), np.repeat(y, nk)]),
                np.concatenate([np.ones(cnt), -np.ones(cnt)]), np.zeros(cnt), LE)
    return z


def _cardinality(lb: LpBuilder, y, P):
    lb.add_rows(np.zeros(y.size), y, 1.0, float(P), EQ)


def _check_budget(n_sites, P):
    if not 1 <= P <= n_sites:
        raise ValueError(f"facility budget P={P} must lie in [1, {n_sites}]")


def _sample_cvar_block(lb: LpBuilder, d, y, beta, weights):
    """alpha + sum_k u_k excess_k / (1 - beta) as the objective, excess_k >= d_k(z) - alpha."""
    n_sites, K = d.shape
    u = np.full(K, 1.0 / K) if weights is None else np.asarray(weights, dtype=float)
    z = _assignment_block(lb, d, np.arange(K), y)
    alpha = lb.add_vars("alpha", 1, 0.0, np.inf, 1.0)
    excess = lb.add_vars("excess", K, 0.0, np.inf, u / (1.0 - beta))
    r = np.arange(K)
    rows = np.concatenate([r, r, np.tile(r, n_sites)])
    cols = np.concatenate([excess, np.repeat(alpha, K), z.ravel()])
    vals = np.concatenate([np.ones(K), np.ones(K), -d.ravel()])
    lb.add_rows(rows, cols, vals, np.zeros(K), GE)


def build_nominal(d, beta: float, P: int, weights=None) -> BuiltProgram:
    """Sample CVaR minimisation over fixed demand points (uniform weights unless given)."""
    d = np.asarray(d, dtype=float)
    n_sites, K = d.shape
    _check_budget(n_sites, P)
    lb = LpBuilder()
    y = lb.add_vars("y", n_sites, 0.0, 1.0)
    _sample_cvar_block(lb, d, y, beta, weights)
    _cardinality(lb, y, P)
    return BuiltProgram(MixedProgram(lb.build(), y), lb.blocks, n_sites, np.arange(K))


def build_capped_nominal(d_sample, d, state: MasterState, cap: float, beta: float, P: int,
                         weights=None) -> BuiltProgram:
    """Sample CVaR minimisation subject to sum_k p^s_k d_k(z) <= cap for every generated cut.

    Used to choose among deployments that share the optimal worst-case value:
    the cuts keep the worst-case CVaR at most ``cap`` for the generated tails.
    """
    d_sample = np.asarray(d_sample, dtype=float)
    d = np.asarray(d, dtype=float)
    n_sites = d.shape[0]
    _check_budget(n_sites, P)
    if d_sample.shape[0] != n_sites:
        raise ValueError("sample and scenario distances must share the site axis")
    scen = np.asarray(state.k_plus, dtype=np.int64)
    col_of = {int(k): pos for pos, k in enumerate(scen)}
    lb = LpBuilder()
    y = lb.add_vars("y", n_sites, 0.0, 1.0)
    _sample_cvar_block(lb, d_sample, y, beta, weights)
    zc = _assignment_block(lb, d, scen, y, name="z_cut")
    for cut in state.cuts:
        if not cut:
            continue
        ks = np.array(list(cut.keys()), dtype=np.int64)
        pk = np.array([cut[int(k)] for k in ks])
        pos = np.array([col_of[int(k)] for k in ks])
        cols = zc[:, pos].ravel()
        lb.add_rows(np.zeros(cols.size, dtype=np.int64), cols, (d[:, ks] * pk[None, :]).ravel(), cap, LE)
    _cardinality(lb, y, P)
    return BuiltProgram(MixedProgram(lb.build(), y), lb.blocks, n_sites, scen)


def build_robust_monolithic(d, model: UncertaintyModel, beta: float, P: int, check: bool = True) -> BuiltProgram:
    """Single MIP obtained by dualising the inner worst-case CVaR problem.

    Constraints, per scenario k:
        alpha + gamma_k >= sum_i d_ik z_ik
        eta - gamma_k / (1 - beta) + sum_{j : k in K_j} w_j >= 0
    with eta and w free.
    """
    d = np.asarray(d, dtype=float)
    n_sites, K = d.shape
    _check_budget(n_sites, P)
    if check and not feasibility_check(model)[0]:
        raise InfeasibleUncertaintySet("no distribution matches the region probabilities")
    J = model.n_regions
    lb = LpBuilder()
    y = lb.add_vars("y", n_sites, 0.0, 1.0)
    z = _assignment_block(lb, d, np.arange(K), y)
    w = lb.add_vars("w", J, -np.inf, np.inf, model.lam)
    eta = lb.add_vars("eta", 1, -np.inf, np.inf, 1.0)
    alpha = lb.add_vars("alpha", 1, 0.0, np.inf, 1.0)
    gamma = lb.add_vars("gamma", K, 0.0, np.inf)
    r = np.arange(K)
    lb.add_rows(np.concatenate([r, r, np.tile(r, n_sites)]),
                np.concatenate([np.repeat(alpha, K), gamma, z.ravel()]),
                np.concatenate([np.ones(K), np.ones(K), -d.ravel()]), np.zeros(K), GE)
    rk, rj = np.nonzero(model.membership)
    lb.add_rows(np.concatenate([r, r, rk]), np.concatenate([np.repeat(eta, K), gamma, w[rj]]),
                np.concatenate([np.ones(K), np.full(K, -1.0 / (1.0 - beta)), np.ones(rk.size)]),
                np.zeros(K), GE)
    _cardinality(lb, y, P)
    return BuiltProgram(MixedProgram(lb.build(), y), lb.blocks, n_sites, np.arange(K))


def build_master(d, state: MasterState, P: int, all_columns: bool = False) -> BuiltProgram:
    """Relaxed master: min t s.t. t >= sum_{k in K+} sum_i d_ik z_ik p^s_k for every cut s.

    With ``all_columns`` every scenario carries assignment columns (plain row generation).
    """
    d = np.asarray(d, dtype=float)
    n_sites, K = d.shape
    _check_budget(n_sites, P)
    if not state.cuts:
        raise ValueError("master needs at least one cut; start from MasterState.seeded()")
    scen = np.arange(K) if all_columns else np.asarray(state.k_plus, dtype=np.int64)
    col_of = {int(k): pos for pos, k in enumerate(scen)}
    lb = LpBuilder()
    y = lb.add_vars("y", n_sites, 0.0, 1.0)
    z = _assignment_block(lb, d, scen, y)
    t = lb.add_vars("t", 1, 0.0, np.inf, 1.0)
    for cut in state.cuts:
        ks = np.array(list(cut.keys()), dtype=np.int64)
        if ks.size == 0:
            lb.add_rows([0], t, 1.0, 0.0, GE)
            continue
        pk = np.array([cut[int(k)] for k in ks])
        pos = np.array([col_of[int(k)] for k in ks])
        coeffs = -(d[:, ks] * pk[None, :])  # (n_sites, len(ks))
        cols = z[:, pos].ravel()
        lb.add_rows(np.zeros(cols.size + 1, dtype=np.int64), np.concatenate([t, cols]),
                    np.concatenate([[1.0], coeffs.ravel()]), 0.0, GE)
    _cardinality(lb, y, P)
    return BuiltProgram(MixedProgram(lb.build(), y), lb.blocks, n_sites, scen)


def build_pmedian_pcenter(d, region_index, mode: str, P: int, weights=None) -> BuiltProgram:
    """Robust p-median (worst-case weighted sum) or p-center (worst-case max) over demand regions.

    Each demand point j may sit anywhere in its scenario set K_j; the adversary
    picks the farthest one, so max over the simplex X_j becomes an epigraph
    variable v_j >= sum_i d_ik z_ik for k in K_j.
    """
    d = np.asarray(d, dtype=float)
    n_sites, K = d.shape
    _check_budget(n_sites, P)
    n = len(region_index)
    lam = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, dtype=float)
    lb = LpBuilder()
    y = lb.add_vars("y", n_sites, 0.0, 1.0)
    z = _assignment_block(lb, d, np.arange(K), y)
    if mode == "median":
        v = lb.add_vars("v", n, 0.0, np.inf, lam)
        owner = [np.full(len(ks), j) for j, ks in enumerate(region_index)]
    elif mode == "center":
        v = lb.add_vars("v", 1, 0.0, np.inf, 1.0)
        owner = [np.zeros(len(ks), dtype=np.int64) for ks in region_index]
    else:
        raise ValueError("mode must be 'median' or 'center'")
    ks = np.concatenate([np.asarray(k, dtype=np.int64) for k in region_index])
    own = np.concatenate(owner)
    m = ks.size
    r = np.arange(m)
    lb.add_rows(np.concatenate([r, np.repeat(r, n_sites)]),
                np.concatenate([v[own], z[:, ks].T.ravel()]),
                np.concatenate([np.ones(m), -d[:, ks].T.ravel()]), np.zeros(m), GE)
    _cardinality(lb, y, P)
    return BuiltProgram(MixedProgram(lb.build(), y), lb.blocks, n_sites, np.arange(K))


def top_p_heuristic(n_sites: int, P: int):
    """Round an LP point by opening the P sites with the largest y (lowest index on ties)."""

    def guess(x):
        yv = np.asarray(x[:n_sites])
        order = np.lexsort((np.arange(n_sites), -yv))
        out = np.zeros(n_sites)
        out[order[:P]] = 1.0
        return out

    return guess
