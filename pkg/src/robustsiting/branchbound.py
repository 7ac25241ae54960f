"""LP-based branch and bound for programs with binary variables.

Branching is on the most fractional binary (lowest index on ties). The search
dives depth first, up-branch first, until an incumbent exists and then
switches to best bound. Everything is deterministic.
"""

from __future__ import annotations

import heapq
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp

from .errors import NodeLimitExceeded, SolverError
from .simplex import AUTO_MAX_ROWS, GE, LE, LinearProgram, LpSession, solve_lp

INT_TOL = 1e-6


@dataclass
class MixedProgram:
    lp: LinearProgram
    binaries: np.ndarray

    def __post_init__(self):
        self.binaries = np.asarray(self.binaries, dtype=np.int64).ravel()
        n = self.lp.c.size
        if self.binaries.size and (self.binaries.min() < 0 or self.binaries.max() >= n):
            raise ValueError("binary index out of range")
        lo, hi = self.lp.lo[self.binaries], self.lp.hi[self.binaries]
        if np.any(lo < 0) or np.any(hi > 1):
            raise ValueError("binary variables must have bounds within [0, 1]")


@dataclass
class MipSolution:
    status: str  # optimal | infeasible
    x: np.ndarray | None = None
    objective: float = np.inf
    bound: float = -np.inf
    nodes: int = 0
    lp_solves: int = 0
    seconds: float = 0.0

    @property
    def gap(self) -> float:
        return relative_gap(self.objective, self.bound)


def relative_gap(incumbent: float, bound: float) -> float:
    if not np.isfinite(incumbent):
        return np.inf
    return max(0.0, incumbent - bound) / max(abs(incumbent), 1e-9)


@dataclass(order=True)
class _Node:
    key: tuple
    fixed: dict = field(compare=False)
    bound: float = field(compare=False, default=-np.inf)
    warm: tuple | None = field(compare=False, default=None)


class _Search:
    def __init__(self, problem, gap_tol, node_limit, lp_method, heuristic, time_limit):
        self.p = problem
        self.sgn = -1.0 if problem.lp.maximize else 1.0  # internal minimisation
        self.gap_tol = gap_tol
        self.node_limit = node_limit
        self.lp_method = lp_method
        self.heuristic = heuristic
        self.deadline = None if time_limit is None else time.perf_counter() + time_limit
        self.time_limit = time_limit
        self.inc_x = None
        self.inc_val = np.inf
        self.nodes = 0
        self.lp_solves = 0
        self.seq = 0
        self.pruned_min = np.inf
        native = lp_method == "revised" or (lp_method == "auto" and problem.lp.A.shape[0] <= AUTO_MAX_ROWS)
        self.session = LpSession(problem.lp) if native else None

    def _remaining(self):
        if self.deadline is None:
            return None
        return max(1e-3, self.deadline - time.perf_counter())

    def _solve(self, fixed, warm=None):
        lo = self.p.lp.lo.copy()
        hi = self.p.lp.hi.copy()
        if fixed:
            idx = np.fromiter(fixed.keys(), dtype=np.int64)
            val = np.fromiter(fixed.values(), dtype=float)
            lo[idx] = val
            hi[idx] = val
        self.lp_solves += 1
        if self.session is not None:
            return self.session.solve(lo, hi, warm)
        try:
            sol = solve_lp(self.p.lp.with_bounds(lo, hi), method=self.lp_method, time_limit=self._remaining())
        except SolverError:
            if self.deadline is not None and time.perf_counter() >= self.deadline:
                self._out_of_budget("time limit reached")
            raise
        return sol

    def _offer(self, x, value):
        """Accept a feasible point if it improves the incumbent by more than noise."""
        v = self.sgn * value
        if v < self.inc_val - 1e-9 * max(1.0, abs(self.inc_val)) or self.inc_x is None:
            self.inc_x = x.copy()
            self.inc_x[self.p.binaries] = np.round(x[self.p.binaries])
            self.inc_val = v
            return True
        return False

    def try_assignment(self, binary_values, warm=None):
        vals = np.asarray(binary_values, dtype=float)
        if vals.size != self.p.binaries.size or np.any((vals != 0) & (vals != 1)):
            return False
        sol = self._solve(dict(zip(self.p.binaries.tolist(), vals.tolist())), warm)
        if sol.optimal:
            return self._offer(sol.x, sol.objective)
        return False

    def _out_of_budget(self, why, bound=-np.inf):
        x = self.inc_x
        obj = self.sgn * self.inc_val if x is not None else None
        raise NodeLimitExceeded(f"branch and bound stopped: {why}", incumbent=x, objective=obj,
                                bound=self.sgn * bound, nodes=self.nodes)

    def _prunable(self, bound):
        if self.inc_x is None:
            return False
        if self.inc_val - bound <= self.gap_tol * max(abs(self.inc_val), 1e-9):
            self.pruned_min = min(self.pruned_min, bound)
            return True
        return False

    def run(self) -> MipSolution:
        t0 = time.perf_counter()
        bins = self.p.binaries
        dive: list[_Node] = [_Node((0,), {}, -np.inf)]
        heap: list[_Node] = []
        root_bound = None
        while dive or heap:
            if self.nodes >= self.node_limit:
                self._out_of_budget("node limit reached", self._open_bound(dive, heap))
            if self.deadline is not None and time.perf_counter() >= self.deadline:
                self._out_of_budget("time limit reached", self._open_bound(dive, heap))
            if dive and self.inc_x is None:
                node = dive.pop()
            else:
                heap.extend(dive)
                dive = []
                heapq.heapify(heap)
                node = heapq.heappop(heap)
            if self._prunable(node.bound):
                continue
            sol = self._solve(node.fixed, node.warm)
            self.nodes += 1
            if sol.status == "unbounded":
                raise SolverError("LP relaxation is unbounded")
            if not sol.optimal:
                continue
            bound = self.sgn * sol.objective
            if root_bound is None:
                root_bound = bound
            if self._prunable(bound):
                continue
            frac = np.abs(sol.x[bins] - np.round(sol.x[bins]))
            if frac.max(initial=0.0) <= INT_TOL:
                self._offer(sol.x, sol.objective)
                continue
            if self.heuristic is not None:
                guess = self.heuristic(sol.x)
                if guess is not None:
                    self.try_assignment(guess, sol.warm)
                    if self._prunable(bound):
                        continue
            score = np.abs(sol.x[bins] - 0.5)
            pos = int(np.argmin(score))  # first index on ties
            var = int(bins[pos])
            children = []
            for val in (0.0, 1.0):  # pushed so that the up branch is popped first
                fixed = dict(node.fixed)
                fixed[var] = val
                self.seq += 1
                children.append(_Node((bound, self.seq), fixed, bound, sol.warm))
            if self.inc_x is None:
                dive.extend(children)
            else:
                for ch in children:
                    heapq.heappush(heap, ch)
        if self.inc_x is None:
            return MipSolution("infeasible", nodes=self.nodes, lp_solves=self.lp_solves,
                               seconds=time.perf_counter() - t0)
        final_bound = min(self.inc_val, self.pruned_min)
        return MipSolution("optimal", x=self.inc_x, objective=self.sgn * self.inc_val,
                           bound=self.sgn * final_bound, nodes=self.nodes, lp_solves=self.lp_solves,
                           seconds=time.perf_counter() - t0)

    def _open_bound(self, dive, heap):
        pending = [n.bound for n in dive + heap]
        vals = pending + ([self.inc_val] if self.inc_x is not None else [])
        return min(vals) if vals else -np.inf


def solve_mip(problem: MixedProgram, gap_tol: float = 1e-6, node_limit: int = 1_000_000,
              hint=None, heuristic=None, lp_method: str = "auto", time_limit: float | None = None,
              backend: str = "bb") -> MipSolution:
    """Solve a mixed binary program to relative gap ``gap_tol``.

    ``hint`` holds values for the binaries (in ``problem.binaries`` order) and
    is silently dropped when infeasible. ``heuristic(x_lp)`` may propose binary
    values at fractional nodes. ``backend="highs"`` hands the whole program to
    the HiGHS MIP solver instead of this search.
    """
    if gap_tol < 0:
        raise ValueError("gap_tol must be non-negative")
    if backend == "highs":
        return _solve_highs_mip(problem, gap_tol, time_limit, node_limit)
    if backend != "bb":
        raise ValueError(f"unknown MIP backend {backend!r}")
    search = _Search(problem, gap_tol, node_limit, lp_method, heuristic, time_limit)
    if hint is not None:
        search.try_assignment(hint)
    return search.run()


def warm_start(problem: MixedProgram, hint, **kwargs) -> MipSolution:
    return solve_mip(problem, hint=hint, **kwargs)


def _solve_highs_mip(problem: MixedProgram, gap_tol, time_limit, node_limit) -> MipSolution:
    lp = problem.lp
    t0 = time.perf_counter()
    sgn = -1.0 if lp.maximize else 1.0
    lo_r = np.where(lp.senses == LE, -np.inf, lp.b)
    hi_r = np.where(lp.senses == GE, np.inf, lp.b)
    integrality = np.zeros(lp.c.size)
    integrality[problem.binaries] = 1
    options = {"mip_rel_gap": gap_tol, "node_limit": int(node_limit)}
    if time_limit is not None:
        options["time_limit"] = float(time_limit)
    cons = [LinearConstraint(lp.A, lo_r, hi_r)] if lp.A.shape[0] else []
    res = milp(sgn * lp.c, constraints=cons, integrality=integrality, bounds=Bounds(lp.lo, lp.hi),
               options=options)
    secs = time.perf_counter() - t0
    if res.status == 2:
        return MipSolution("infeasible", seconds=secs)
    if res.status == 0:
        x = res.x.copy()
        x[problem.binaries] = np.round(x[problem.binaries])
        bound = sgn * getattr(res, "mip_dual_bound", sgn * res.fun)
        return MipSolution("optimal", x=x, objective=float(lp.c @ x), bound=float(bound), seconds=secs)
    if res.status == 1:
        x = res.x
        raise NodeLimitExceeded("HiGHS stopped on its time or node limit", incumbent=x,
                                objective=None if x is None else float(lp.c @ x),
                                bound=getattr(res, "mip_dual_bound", None))
    raise SolverError(f"HiGHS MIP failed: {res.message}")
