"""Bounded-variable revised simplex.

The native solver keeps an explicit dense basis inverse (product-form updates,
periodic refactorization) over a sparse constraint matrix, so it is cheap when
the number of rows is small, whatever the number of columns. That is exactly
the shape of the worst-case-distribution LP. Large LP relaxations can be sent
to HiGHS through ``method="highs"``; ``method="auto"`` picks by row count.
"""

from __future__ import annotations

import itertools
import math
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.linalg.blas import dger
from scipy.optimize import linprog

from .errors import NumericalBreakdown, SolverError, TooLarge

FEAS_TOL = 1e-7
OPT_TOL = 1e-7
PIVOT_TOL = 1e-11
DRIFT_TOL = 1e-7  # allowed mismatch between the pivot element seen from its row and its column

LE, EQ, GE = "<=", "==", ">="

# rows above this go to HiGHS under method="auto"
AUTO_MAX_ROWS = 400
DENSE_MAX_ENTRIES = 20_000_000


@dataclass
class LinearProgram:
    """min (or max) c.x  s.t.  A x (<=|==|>=) b,  lo <= x <= hi."""

    c: np.ndarray
    A: sp.csr_matrix
    b: np.ndarray
    senses: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    maximize: bool = False

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        A = self.A
        if not sp.issparse(A):
            A = np.atleast_2d(np.asarray(A, dtype=float))
            if A.size == 0:
                A = np.zeros((0, n))
        self.A = sp.csr_matrix(A, dtype=float)
        if self.A.shape[0] == 0:
            self.A = sp.csr_matrix((0, n))
        self.b = np.asarray(self.b, dtype=float).ravel()
        m = self.A.shape[0]
        if isinstance(self.senses, str):
            self.senses = [self.senses] * m
        self.senses = np.asarray(self.senses, dtype=object).ravel()
        self.lo = np.broadcast_to(np.asarray(self.lo, dtype=float), (n,)).copy()
        self.hi = np.broadcast_to(np.asarray(self.hi, dtype=float), (n,)).copy()
        if self.A.shape[1] != n:
            raise ValueError(f"A has {self.A.shape[1]} columns, c has {n}")
        if self.b.size != m or self.senses.size != m:
            raise ValueError("b and senses must have one entry per row of A")
        bad = set(self.senses.tolist()) - {LE, EQ, GE}
        if bad:
            raise ValueError(f"unknown constraint relation(s) {bad}")
        if not (np.all(np.isfinite(self.c)) and np.all(np.isfinite(self.b))
                and np.all(np.isfinite(self.A.data))):
            raise ValueError("objective, matrix and right-hand side must be finite")
        if np.any(self.lo > self.hi) or np.any(self.lo == np.inf) or np.any(self.hi == -np.inf):
            raise ValueError("inconsistent variable bounds")

    @property
    def shape(self):
        return self.A.shape

    def with_bounds(self, lo=None, hi=None) -> "LinearProgram":
        return LinearProgram(self.c, self.A, self.b, self.senses,
                             self.lo if lo is None else lo,
                             self.hi if hi is None else hi, self.maximize)

    def dump(self) -> str:
        """Plain fixed-format text (MPS-like) for bug reports."""
        m, n = self.A.shape
        out = [f"NAME          LP{m}x{n}", f"OBJSENSE      {'MAX' if self.maximize else 'MIN'}", "ROWS",
               " N  OBJ"]
        tag = {LE: "L", EQ: "E", GE: "G"}
        out += [f" {tag[s]}  R{i:07d}" for i, s in enumerate(self.senses)]
        out.append("COLUMNS")
        csc = self.A.tocsc()
        for j in range(n):
            if self.c[j] != 0.0:
                out.append(f"    C{j:07d}  OBJ       {self.c[j]: .17g}")
            for p in range(csc.indptr[j], csc.indptr[j + 1]):
                out.append(f"    C{j:07d}  R{csc.indices[p]:07d}  {csc.data[p]: .17g}")
        out.append("RHS")
        out += [f"    RHS       R{i:07d}  {v: .17g}" for i, v in enumerate(self.b) if v != 0.0]
        out.append("BOUNDS")
        for j in range(n):
            lo, hi = self.lo[j], self.hi[j]
            if lo == hi:
                out.append(f" FX BND       C{j:07d}  {lo: .17g}")
                continue
            if lo == -np.inf:
                out.append(f" MI BND       C{j:07d}")
            elif lo != 0.0:
                out.append(f" LO BND       C{j:07d}  {lo: .17g}")
            if hi != np.inf:
                out.append(f" UP BND       C{j:07d}  {hi: .17g}")
        out.append("ENDATA")
        return "\n".join(out) + "\n"


@dataclass
class LpSolution:
    status: str  # optimal | infeasible | unbounded
    x: np.ndarray | None = None
    duals: np.ndarray | None = None
    objective: float = math.nan
    basis: tuple | None = None
    reduced_costs: np.ndarray | None = None
    iterations: int = 0
    method: str = "revised"
    warm: tuple | None = None  # (basis, nonbasic-at-upper mask) for LpSession re-solves

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


def solve_lp(problem: LinearProgram, method: str = "auto", secondary=None,
             time_limit: float | None = None) -> LpSolution:
    """Solve ``problem``.

    ``secondary`` is an optional second objective (same sense as the first)
    optimised over the optimal face of the first one.
    """
    if method == "auto":
        method = "revised" if problem.A.shape[0] <= AUTO_MAX_ROWS else "highs"
    if method == "revised":
        return _RevisedSimplex(problem).run(secondary)
    if method == "highs":
        return _solve_highs(problem, secondary, time_limit)
    raise ValueError(f"unknown LP method {method!r}")


class _RevisedSimplex:
    REFACTOR_EVERY = 64
    CACHE_BYTES = 64 * 2**20  # memory budget for basis inverses kept for warm starts

    def __init__(self, lp: LinearProgram):
        self.lp = lp
        A = lp.A
        m, n = A.shape
        keep = np.flatnonzero(np.diff(A.indptr) > 0)  # drop empty rows
        self.empty_rows = np.setdiff1d(np.arange(m), keep)
        self.rows = keep
        A = A[keep]
        b = lp.b[keep]
        senses = lp.senses[keep]
        m = A.shape[0]
        self.m, self.n = m, n

        is_le = senses == LE
        is_ge = senses == GE
        ineq = np.flatnonzero(is_le | is_ge)
        # slack s with a_i x + sign * s = b_i, s >= 0
        sign = np.where(is_le[ineq], 1.0, -1.0)
        S = sp.csc_matrix((sign, (ineq, np.arange(ineq.size))), shape=(m, ineq.size))
        self.n_slack = ineq.size

        lo = np.concatenate([lp.lo, np.zeros(ineq.size)])
        hi = np.concatenate([lp.hi, np.full(ineq.size, np.inf)])
        x = np.where(np.isfinite(lo), lo, np.where(np.isfinite(hi), hi, 0.0))
        r = b - A @ x[:n]

        basis = np.full(m, -1, dtype=np.int64)
        slack_row_col = {int(row): n + t for t, row in enumerate(ineq)}
        for row, col in slack_row_col.items():
            s = sign[col - n]
            if r[row] * s >= 0.0:  # slack absorbs the residual
                basis[row] = col
                x[col] = r[row] * s
        art_rows = np.flatnonzero(basis < 0)
        art_sign = np.where(r[art_rows] >= 0.0, 1.0, -1.0)
        Art = sp.csc_matrix((art_sign, (art_rows, np.arange(art_rows.size))), shape=(m, art_rows.size))
        self.n_art = art_rows.size
        self.basis_art_rows = art_rows
        self.art_sign = art_sign
        self.art_start = n + ineq.size
        for t, row in enumerate(art_rows):
            basis[row] = self.art_start + t
        x = np.concatenate([x, np.abs(r[art_rows])])
        lo = np.concatenate([lo, np.zeros(art_rows.size)])
        hi = np.concatenate([hi, np.full(art_rows.size, np.inf)])

        self.Afull = sp.hstack([A.tocsc(), S, Art], format="csc")
        self.N = self.Afull.shape[1]
        # dense copy when affordable: column access and pricing dominate the run time
        self.dense = self.Afull.toarray() if m * self.N <= DENSE_MAX_ENTRIES else None
        self.AfullT = self.Afull.T.tocsr() if self.dense is None else self.dense.T
        self.b = b
        self.lo, self.hi, self.x = lo, hi, x
        self.basis = basis
        # the starting basis is a signed identity made of slacks and artificials
        diag = np.ones(m)
        diag[ineq] = np.where(basis[ineq] >= self.art_start, diag[ineq], sign)
        diag[art_rows] = art_sign
        self.Binv = np.diag(1.0 / diag) if m else np.zeros((0, 0))
        self.is_basic = np.zeros(self.N, dtype=bool)
        self.is_basic[basis] = True
        self.iterations = 0
        self.since_refactor = 0
        self.inverse_cache: OrderedDict[bytes, np.ndarray] = OrderedDict()
        self.max_iter = 50 * (m + self.N) + 1000

    def _column(self, j):
        if self.dense is not None:
            return self.dense[:, j]
        a = np.zeros(self.m)
        s, e = self.Afull.indptr[j], self.Afull.indptr[j + 1]
        a[self.Afull.indices[s:e]] = self.Afull.data[s:e]
        return a

    def _refactor(self, use_cache: bool = False):
        key = self.basis.tobytes()
        cached = self.inverse_cache.get(key) if use_cache else None
        if cached is not None:
            self.inverse_cache.move_to_end(key)
            self.Binv = cached.copy()
        else:
            B = self.dense[:, self.basis] if self.dense is not None else self.Afull[:, self.basis].toarray()
            try:
                self.Binv = np.linalg.inv(B)
            except np.linalg.LinAlgError as exc:
                raise NumericalBreakdown("basis matrix became singular") from exc
            if not np.all(np.isfinite(self.Binv)):
                raise NumericalBreakdown("basis inverse is not finite")
        self.since_refactor = 0
        self._basic_values()

    def _pivot_inverse(self, alpha, r):
        """Rank-1 update of B^-1 when the column with B^-1 a_j = alpha replaces basic row r."""
        pivot_row = self.Binv[r] / alpha[r]
        # in-place BLAS update on the Fortran-ordered transpose: Binv -= outer(alpha, pivot_row)
        self.Binv = dger(-1.0, pivot_row, alpha, a=self.Binv.T, overwrite_a=1).T
        self.Binv[r] = pivot_row

    def _remember(self):
        self.inverse_cache[self.basis.tobytes()] = self.Binv.copy()
        self.inverse_cache.move_to_end(self.basis.tobytes())
        while len(self.inverse_cache) * self.Binv.nbytes > self.CACHE_BYTES:
            self.inverse_cache.popitem(last=False)

    def _residual(self) -> float:
        r = self.Afull @ self.x - self.b
        return float(np.abs(r).max(initial=0.0)) / max(1.0, float(np.abs(self.b).max(initial=0.0)))

    def _basic_values(self):
        nonbasic = ~self.is_basic
        xn = np.where(nonbasic, self.x, 0.0)
        rhs = self.b - self.Afull @ xn
        self.x[self.basis] = self.Binv @ rhs

    def _optimize(self, cost):
        """Primal simplex from the current feasible basis. Returns 'optimal' or 'unbounded'."""
        m = self.m
        degenerate_run = 0
        bland = False
        bland_after = 3 * (m + self.N)
        while True:
            if self.iterations > self.max_iter:
                raise NumericalBreakdown("simplex iteration limit exceeded")
            y = cost[self.basis] @ self.Binv if m else np.zeros(0)
            d = cost - self.AfullT @ y if m else cost.copy()
            d[self.is_basic] = 0.0
            x, lo, hi = self.x, self.lo, self.hi
            up = (x < hi - FEAS_TOL) & (d < -OPT_TOL)
            down = (x > lo + FEAS_TOL) & (d > OPT_TOL)
            eligible = (up | down) & ~self.is_basic
            cand = np.flatnonzero(eligible)
            if cand.size == 0:
                self.d, self.y = d, y
                return "optimal"
            if bland:
                j = int(cand[0])
            else:
                j = int(cand[np.argmax(np.abs(d[cand]))])
            direction = 1.0 if d[j] < 0.0 else -1.0
            alpha = self.Binv @ self._column(j) if m else np.zeros(0)
            step = direction * alpha  # x_B decreases by theta * step
            xb = x[self.basis]
            lob, hib = lo[self.basis], hi[self.basis]
            ratios = np.full(m, np.inf)
            pos = step > PIVOT_TOL
            neg = step < -PIVOT_TOL
            with np.errstate(invalid="ignore", divide="ignore"):
                ratios[pos] = (xb[pos] - lob[pos]) / step[pos]
                ratios[neg] = (hib[neg] - xb[neg]) / (-step[neg])
            ratios = np.maximum(ratios, 0.0)
            theta_flip = hi[j] - lo[j]
            theta_rows = ratios.min() if m else np.inf
            theta = min(theta_rows, theta_flip)
            if not np.isfinite(theta):
                return "unbounded"
            self.iterations += 1
            if theta <= 1e-12:
                degenerate_run += 1
                if degenerate_run > bland_after:
                    bland = True
            else:
                degenerate_run = 0
                bland = False
            if theta_flip <= theta_rows:
                # bound flip, basis unchanged
                x[j] = hi[j] if direction > 0 else lo[j]
                x[self.basis] = xb - theta * step
                continue
            ties = np.flatnonzero(ratios <= theta_rows + 1e-12)
            if bland:
                r = int(ties[np.argmin(self.basis[ties])])
            else:
                r = int(ties[np.argmax(np.abs(alpha[ties]))])
            if abs(alpha[r]) < PIVOT_TOL:
                raise NumericalBreakdown("pivot element below threshold")
            leaving = self.basis[r]
            x[self.basis] = xb - theta * step
            x[j] = x[j] + direction * theta
            x[leaving] = lo[leaving] if step[r] > 0 else hi[leaving]
            if not np.isfinite(x[leaving]):
                x[leaving] = 0.0
            self._pivot_inverse(alpha, r)
            self.basis[r] = j
            self.is_basic[leaving] = False
            self.is_basic[j] = True
            self.since_refactor += 1
            if self.since_refactor >= self.REFACTOR_EVERY:
                self._refactor()

    def run(self, secondary=None) -> LpSolution:
        lp = self.lp
        n = self.n
        sgn = -1.0 if lp.maximize else 1.0
        for i in self.empty_rows:
            rel, rhs = lp.senses[i], lp.b[i]
            if (rel == LE and rhs < -FEAS_TOL) or (rel == GE and rhs > FEAS_TOL) or (rel == EQ and abs(rhs) > FEAS_TOL):
                return LpSolution("infeasible")
        if self.n_art:
            cost1 = np.zeros(self.N)
            cost1[self.art_start:] = 1.0
            self._optimize(cost1)
            infeas = self.x[self.art_start:].sum()
            scale = max(1.0, float(np.abs(self.b).max(initial=0.0)))
            if infeas > FEAS_TOL * scale:
                return LpSolution("infeasible", iterations=self.iterations)
            self.x[self.art_start:] = np.where(self.is_basic[self.art_start:], self.x[self.art_start:], 0.0)
            self.hi[self.art_start:] = 0.0
        cost = np.zeros(self.N)
        cost[:n] = sgn * lp.c
        if self._optimize(cost) == "unbounded":
            return LpSolution("unbounded", iterations=self.iterations)
        if secondary is not None:
            # freeze every column that would move the primary objective
            fix = ~self.is_basic & (np.abs(self.d) > OPT_TOL)
            self.lo[fix] = self.x[fix]
            self.hi[fix] = self.x[fix]
            cost2 = np.zeros(self.N)
            cost2[:n] = sgn * np.asarray(secondary, dtype=float)
            self._optimize(cost2)
        return self._finish(cost)

    def _finish(self, cost) -> LpSolution:
        lp = self.lp
        n = self.n
        sgn = -1.0 if lp.maximize else 1.0
        self._basic_values()
        if self.since_refactor and self._residual() > FEAS_TOL:
            self._refactor()
        xb = self.x[self.basis]
        slack = np.maximum(self.lo[self.basis] - xb, xb - self.hi[self.basis])
        if np.any(slack > 1e3 * FEAS_TOL * np.maximum(1.0, np.abs(xb))):
            raise NumericalBreakdown("final basic solution violates its bounds")
        self._remember()
        y = cost[self.basis] @ self.Binv if self.m else np.zeros(0)
        d = cost - self.AfullT @ y
        d[self.is_basic] = 0.0
        x = self.x[:n].copy()
        duals = np.zeros(lp.A.shape[0])
        duals[self.rows] = sgn * y
        warm = (self.basis.copy(), ~self.is_basic & np.isfinite(self.hi) & (self.x == self.hi) & (self.lo < self.hi))
        return LpSolution(
            "optimal", x=x, duals=duals, objective=float(lp.c @ x),
            basis=tuple(int(v) for v in self.basis), reduced_costs=sgn * d[:n],
            iterations=self.iterations, method="revised", warm=warm)

    def _dual_optimize(self, cost):
        """Bounded dual simplex from a dual-feasible basis. Returns 'optimal' or 'infeasible'.

        The leaving row maximises infeasibility^2 / ||row of B^-1||^2; after a
        long run of dual-degenerate pivots the rule switches to Bland's
        (lowest column index) until the dual objective moves again.
        """
        m = self.m
        degenerate_run = 0
        bland = False
        bland_after = 3 * (m + self.N)
        d = None  # reduced costs, updated per pivot and recomputed after refactoring
        for _ in range(self.max_iter):
            xb = self.x[self.basis]
            below = self.lo[self.basis] - xb
            above = xb - self.hi[self.basis]
            viol = np.maximum(below, above)
            infeasible = viol > FEAS_TOL * np.maximum(1.0, np.abs(xb))
            if not m or not infeasible.any():
                return "optimal"
            if bland:
                rows = np.flatnonzero(infeasible)
                r = int(rows[np.argmin(self.basis[rows])])
            else:
                score = np.where(infeasible, viol * viol / np.einsum("ij,ij->i", self.Binv, self.Binv), -1.0)
                r = int(np.argmax(score))
            to_lower = below[r] > above[r]
            if d is None:
                d = cost - self.AfullT @ (cost[self.basis] @ self.Binv)
                d[self.is_basic] = 0.0
            row = self.AfullT @ self.Binv[r]
            x, lo, hi = self.x, self.lo, self.hi
            movable = ~self.is_basic & (lo < hi)
            at_lo = movable & (x == lo)
            at_hi = movable & (x == hi) & ~at_lo
            free = movable & ~at_lo & ~at_hi
            # x_Br changes by -row_j per unit increase of x_j
            want = -1.0 if to_lower else 1.0
            cand = ((at_lo & (want * row > PIVOT_TOL)) | (at_hi & (want * row < -PIVOT_TOL))
                    | (free & (np.abs(row) > PIVOT_TOL)))
            idx = np.flatnonzero(cand)
            if idx.size == 0:
                if self.since_refactor:  # confirm on a fresh factorization
                    self._refactor()
                    d = None
                    continue
                return "infeasible"
            ratios = np.abs(d[idx]) / np.abs(row[idx])
            best = ratios.min()
            ties = idx[ratios <= best + 1e-12]
            j = int(ties[0]) if bland else int(ties[np.argmax(np.abs(row[ties]))])
            if best <= 1e-12:
                degenerate_run += 1
                if degenerate_run > bland_after:
                    bland = True
            else:
                degenerate_run = 0
                bland = False
            alpha = self.Binv @ self._column(j)
            if abs(alpha[r] - row[j]) > DRIFT_TOL * max(1.0, abs(alpha[r])):
                if not self.since_refactor:
                    raise NumericalBreakdown("pivot row and column disagree on a fresh factorization")
                self._refactor()
                d = None
                continue
            if abs(alpha[r]) < PIVOT_TOL:
                raise NumericalBreakdown("dual pivot element below threshold")
            leaving = self.basis[r]
            target = lo[leaving] if to_lower else hi[leaving]
            delta = (xb[r] - target) / alpha[r]
            x[self.basis] = xb - delta * alpha
            x[j] += delta
            x[leaving] = target
            d -= (d[j] / row[j]) * row
            self._pivot_inverse(alpha, r)
            self.basis[r] = j
            self.is_basic[leaving] = False
            self.is_basic[j] = True
            d[self.basis] = 0.0
            self.iterations += 1
            self.since_refactor += 1
            if self.since_refactor >= self.REFACTOR_EVERY:
                self._refactor()
                d = None
        raise NumericalBreakdown("dual simplex iteration limit exceeded")

    def resume(self, lo, hi, warm) -> LpSolution | None:
        """Re-solve with new structural bounds from a basis of an earlier solve on this instance.

        Returns None when the stored basis is unusable; the caller should then
        solve from scratch.
        """
        n = self.n
        basis, at_upper = warm
        self.lo[:n] = lo
        self.hi[:n] = hi
        self.basis = np.array(basis, dtype=np.int64)
        self.is_basic[:] = False
        self.is_basic[self.basis] = True
        nb = ~self.is_basic
        x = np.where(np.isfinite(self.lo), self.lo, np.where(np.isfinite(self.hi), self.hi, 0.0))
        up = nb & at_upper & np.isfinite(self.hi)
        x[up] = self.hi[up]
        self.x = x
        self.iterations = 0
        sgn = -1.0 if self.lp.maximize else 1.0
        cost = np.zeros(self.N)
        cost[:n] = sgn * self.lp.c
        try:
            self._refactor(use_cache=True)
            y = cost[self.basis] @ self.Binv if self.m else np.zeros(0)
            d = cost - self.AfullT @ y
            movable = nb & (self.lo < self.hi)
            bad = movable & (((x == self.lo) & (d < -OPT_TOL)) | ((x == self.hi) & (x != self.lo) & (d > OPT_TOL))
                             | ((x != self.lo) & (x != self.hi) & (np.abs(d) > OPT_TOL)))
            if bad.any():
                return None
            if self._dual_optimize(cost) == "infeasible":
                return LpSolution("infeasible", iterations=self.iterations)
            if self._optimize(cost) == "unbounded":
                return LpSolution("unbounded", iterations=self.iterations)
            return self._finish(cost)
        except NumericalBreakdown:
            return None


class LpSession:
    """Solves one LP repeatedly under changing variable bounds, reusing bases between solves."""

    def __init__(self, problem: LinearProgram):
        self.problem = problem
        self.solver: _RevisedSimplex | None = None

    def solve(self, lo, hi, warm=None) -> LpSolution:
        if warm is not None and self.solver is not None:
            sol = self.solver.resume(lo, hi, warm)
            if sol is not None:
                return sol
        solver = _RevisedSimplex(self.problem.with_bounds(lo, hi))
        sol = solver.run()
        if self.solver is None and sol.optimal:
            self.solver = solver
        elif sol.optimal and not _same_columns(self.solver, solver):
            sol.warm = None  # basis indices would not match the stored instance
        return sol


def _same_columns(a: _RevisedSimplex, b: _RevisedSimplex) -> bool:
    return (a.N == b.N and a.n_art == b.n_art and np.array_equal(a.basis_art_rows, b.basis_art_rows)
            and np.array_equal(a.art_sign, b.art_sign))


def _solve_highs(lp: LinearProgram, secondary, time_limit) -> LpSolution:
    A = lp.A
    le = lp.senses == LE
    ge = lp.senses == GE
    eq = lp.senses == EQ
    ub_rows = np.flatnonzero(le | ge)
    flip = np.where(ge[ub_rows], -1.0, 1.0)
    A_ub = sp.diags(flip) @ A[ub_rows] if ub_rows.size else None
    b_ub = flip * lp.b[ub_rows] if ub_rows.size else None
    eq_rows = np.flatnonzero(eq)
    A_eq = A[eq_rows] if eq_rows.size else None
    b_eq = lp.b[eq_rows] if eq_rows.size else None
    sgn = -1.0 if lp.maximize else 1.0
    bounds = np.column_stack([lp.lo, lp.hi])
    bounds = [(None if not np.isfinite(a) else a, None if not np.isfinite(b) else b) for a, b in bounds]
    options = {"presolve": True}
    if time_limit is not None:
        options["time_limit"] = float(time_limit)
    res = linprog(sgn * lp.c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds,
                  method="highs", options=options)
    if res.status == 2:
        # HiGHS presolve can report unbounded models as infeasible
        res = linprog(sgn * lp.c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds,
                      method="highs", options={**options, "presolve": False})
    if res.status == 2:
        return LpSolution("infeasible", method="highs")
    if res.status == 3:
        return LpSolution("unbounded", method="highs")
    if res.status == 1:
        raise SolverError("HiGHS hit its time or iteration limit")
    if res.status != 0:
        raise NumericalBreakdown(f"HiGHS failed: {res.message}")
    x = res.x
    if secondary is not None:
        obj1 = float(sgn * lp.c @ x)
        extra_row = sp.csr_matrix((sgn * lp.c).reshape(1, -1))
        slack = 1e-9 * max(1.0, abs(obj1))  # keep the primary optimum to near machine precision
        A_ub2 = extra_row if A_ub is None else sp.vstack([A_ub, extra_row])
        b_ub2 = np.append(b_ub if b_ub is not None else [], obj1 + slack)
        res2 = linprog(sgn * np.asarray(secondary, float), A_ub=A_ub2, b_ub=b_ub2, A_eq=A_eq, b_eq=b_eq,
                       bounds=bounds, method="highs", options=options)
        if res2.status == 0:
            res, x = res2, res2.x
    duals = np.zeros(A.shape[0])
    if ub_rows.size and res.ineqlin is not None:
        duals[ub_rows] = flip * res.ineqlin.marginals[:ub_rows.size]
    if eq_rows.size and res.eqlin is not None:
        duals[eq_rows] = res.eqlin.marginals
    return LpSolution("optimal", x=x, duals=sgn * duals, objective=float(lp.c @ x), method="highs")


def enumerate_vertices(problem: LinearProgram, max_dims: int = 12, tol: float = 1e-9) -> list[np.ndarray]:
    """All basic feasible solutions, by brute force over active constraint sets."""
    n = problem.c.size
    if n > max_dims:
        raise TooLarge(f"{n} variables exceeds the enumeration guard of {max_dims}")
    A = problem.A.toarray()
    rows, rhs, is_eq = [], [], []
    for i in range(A.shape[0]):
        rows.append(A[i])
        rhs.append(problem.b[i])
        is_eq.append(problem.senses[i] == EQ)
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        if np.isfinite(problem.lo[j]):
            rows.append(e); rhs.append(problem.lo[j]); is_eq.append(problem.lo[j] == problem.hi[j])
        if np.isfinite(problem.hi[j]) and problem.hi[j] != problem.lo[j]:
            rows.append(e); rhs.append(problem.hi[j]); is_eq.append(False)
    M = np.array(rows).reshape(-1, n)
    r = np.array(rhs, dtype=float)
    eq_idx = [i for i, e in enumerate(is_eq) if e]
    ineq_idx = [i for i, e in enumerate(is_eq) if not e]
    rank_eq = np.linalg.matrix_rank(M[eq_idx]) if eq_idx else 0
    need = n - rank_eq

    def feasible(x):
        ax = A @ x
        for i, s in enumerate(problem.senses):
            scale = max(1.0, abs(problem.b[i]))
            if s == LE and ax[i] > problem.b[i] + tol * scale:
                return False
            if s == GE and ax[i] < problem.b[i] - tol * scale:
                return False
            if s == EQ and abs(ax[i] - problem.b[i]) > tol * scale:
                return False
        return bool(np.all(x >= problem.lo - tol) and np.all(x <= problem.hi + tol))

    found: list[np.ndarray] = []
    for combo in itertools.combinations(ineq_idx, need):
        act = eq_idx + list(combo)
        Ms = M[act]
        if np.linalg.matrix_rank(Ms) < n:
            continue
        x, *_ = np.linalg.lstsq(Ms, r[act], rcond=None)
        if np.max(np.abs(Ms @ x - r[act]), initial=0.0) > tol * max(1.0, np.abs(r[act]).max(initial=0.0)):
            continue
        if not feasible(x):
            continue
        if any(np.max(np.abs(x - v)) <= tol for v in found):
            continue
        found.append(x)
    return found


@dataclass
class LpBuilder:
    """Accumulates named variable blocks and sparse rows, then emits a LinearProgram."""

    n: int = 0
    blocks: dict = field(default_factory=dict)
    lo: list = field(default_factory=list)
    hi: list = field(default_factory=list)
    c: list = field(default_factory=list)
    _ri: list = field(default_factory=list)
    _ci: list = field(default_factory=list)
    _v: list = field(default_factory=list)
    b: list = field(default_factory=list)
    senses: list = field(default_factory=list)

    def add_vars(self, name, count, lo=0.0, hi=np.inf, cost=0.0) -> np.ndarray:
        idx = np.arange(self.n, self.n + count)
        self.blocks[name] = idx
        self.n += count
        self.lo.append(np.broadcast_to(np.asarray(lo, float), (count,)))
        self.hi.append(np.broadcast_to(np.asarray(hi, float), (count,)))
        self.c.append(np.broadcast_to(np.asarray(cost, float), (count,)))
        return idx

    def add_rows(self, row_ids, col_ids, values, rhs, sense):
        """``row_ids`` are local (0..k-1) within this batch of k rows."""
        rhs = np.atleast_1d(np.asarray(rhs, dtype=float))
        base = len(self.b)
        self._ri.append(np.asarray(row_ids, dtype=np.int64) + base)
        self._ci.append(np.asarray(col_ids, dtype=np.int64))
        self._v.append(np.broadcast_to(np.asarray(values, dtype=float), np.shape(row_ids)))
        self.b.extend(rhs.tolist())
        self.senses.extend([sense] * rhs.size)
        return np.arange(base, base + rhs.size)

    def build(self, maximize=False) -> LinearProgram:
        m = len(self.b)
        if self._ri:
            ri = np.concatenate(self._ri)
            ci = np.concatenate(self._ci)
            v = np.concatenate([np.ravel(a) for a in self._v])
        else:
            ri = ci = np.zeros(0, dtype=np.int64)
            v = np.zeros(0)
        A = sp.csr_matrix((v, (ri, ci)), shape=(m, self.n))
        cat = lambda parts: np.concatenate(parts) if parts else np.zeros(0)
        return LinearProgram(cat(self.c), A, np.array(self.b, dtype=float), np.array(self.senses, dtype=object),
                             cat(self.lo), cat(self.hi), maximize)
