import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog

from robustsiting.errors import TooLarge
from robustsiting.simplex import EQ, GE, LE, LinearProgram, LpSession, enumerate_vertices, solve_lp


def lp(c, A, b, senses, lo=0.0, hi=np.inf, maximize=False):
    return LinearProgram(np.asarray(c, float), np.asarray(A, float), np.asarray(b, float), senses, lo, hi, maximize)


def highs_value(p: LinearProgram):
    A = p.A.toarray()
    le, ge, eq = (p.senses == LE), (p.senses == GE), (p.senses == EQ)
    A_ub = np.vstack([A[le], -A[ge]])
    b_ub = np.concatenate([p.b[le], -p.b[ge]])
    sgn = -1 if p.maximize else 1
    res = linprog(sgn * p.c, A_ub=A_ub if len(b_ub) else None, b_ub=b_ub if len(b_ub) else None,
                  A_eq=A[eq] if eq.any() else None, b_eq=p.b[eq] if eq.any() else None,
                  bounds=list(zip(np.where(np.isfinite(p.lo), p.lo, None), np.where(np.isfinite(p.hi), p.hi, None))),
                  method="highs")
    return {0: "optimal", 2: "infeasible", 3: "unbounded"}[res.status], (sgn * res.fun if res.status == 0 else None)


def random_lp(seed, m, n, maximize=False):
    """Feasible by construction (b built from a non-negative point) and bounded via a box."""
    rng = np.random.default_rng(seed)
    A = rng.integers(-5, 6, (m, n)).astype(float)
    x0 = rng.uniform(0, 3, n)
    senses = rng.choice([LE, GE, EQ], m, p=[0.5, 0.3, 0.2])
    slack = rng.uniform(0, 2, m)
    b = A @ x0 + np.where(senses == LE, slack, np.where(senses == GE, -slack, 0.0))
    hi = np.where(rng.uniform(size=n) < 0.5, 10.0, np.inf)
    c = rng.integers(-4, 5, n).astype(float)
    if not maximize:
        c = np.abs(c) * np.where(np.isinf(hi), 1, rng.choice([-1, 1], n))
    else:
        c = -np.abs(c) * np.where(np.isinf(hi), 1, rng.choice([-1, 1], n))
    return lp(c, A, b, senses, 0.0, hi, maximize)


def test_single_variable_box():
    sol = solve_lp(lp([1.0], [[1.0]], [1.0], [LE], maximize=True), method="revised")
    assert sol.optimal and sol.x.tolist() == [1.0] and sol.objective == 1.0


def test_vertex_selection():
    sol = solve_lp(lp([10.0, 40.0], [[1.0, 1.0]], [1.0], [EQ], maximize=True), method="revised")
    assert np.allclose(sol.x, [0, 1]) and sol.objective == pytest.approx(40.0)


def test_three_by_three_matches_vertex_enumeration():
    p = lp([3.0, 2.0, 4.0], [[1, 1, 2], [2, 0, 3], [2, 1, 3]], [4, 5, 7], [LE, LE, LE], maximize=True)
    verts = enumerate_vertices(p)
    best = max(p.c @ v for v in verts)
    sol = solve_lp(p, method="revised")
    assert sol.objective == pytest.approx(best, abs=1e-9)


def test_enumerate_standard_simplex():
    verts = enumerate_vertices(lp([0, 0, 0], [[1, 1, 1]], [1], [EQ]))
    assert sorted(tuple(np.round(v, 9)) for v in verts) == [(0, 0, 1), (0, 1, 0), (1, 0, 0)]


def test_enumerate_empty_and_guard():
    assert enumerate_vertices(lp([0, 0], [[1, 1]], [-1], [EQ])) == []
    with pytest.raises(TooLarge):
        enumerate_vertices(lp(np.zeros(13), np.ones((1, 13)), [1], [EQ]))


def test_infeasible_and_unbounded():
    assert solve_lp(lp([1, 1], [[1, 1]], [-1], [EQ]), method="revised").status == "infeasible"
    assert solve_lp(lp([1, 0], [[1, -1]], [0], [LE], maximize=True), method="revised").status == "unbounded"
    assert solve_lp(lp([1, 1], [[1, 1]], [-1], [EQ]), method="highs").status == "infeasible"


def test_free_and_negative_bounds():
    p = lp([1.0, 1.0], [[1, -1]], [2.0], [EQ], lo=[-np.inf, -3.0], hi=[np.inf, 5.0])
    sol = solve_lp(p, method="revised")
    assert sol.objective == pytest.approx(-4.0) and np.allclose(sol.x, [-1.0, -3.0])


def test_dump_is_fixed_format_text():
    text = lp([1.0, -2.0], [[1, 1]], [3.0], [LE], hi=[np.inf, 4.0]).dump()
    assert text.startswith("NAME") and text.rstrip().endswith("ENDATA")
    assert "UP BND" in text and "R0000000" in text


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 4), st.integers(1, 5), st.booleans())
def test_small_lps_match_vertex_enumeration(seed, m, n, maximize):
    p = random_lp(seed, m, n, maximize)
    p = p.with_bounds(hi=np.minimum(p.hi, 10.0))
    sol = solve_lp(p, method="revised")
    verts = enumerate_vertices(p)
    assert sol.optimal and verts
    vals = [p.c @ v for v in verts]
    best = max(vals) if maximize else min(vals)
    assert sol.objective == pytest.approx(best, rel=1e-7, abs=1e-7)
    # basic: at most m structural values strictly between their bounds
    between = (sol.x > p.lo + 1e-9) & (sol.x < p.hi - 1e-9)
    assert between.sum() <= m


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 12), st.integers(1, 15), st.booleans())
def test_agrees_with_highs_and_strong_duality(seed, m, n, maximize):
    p = random_lp(seed, m, n, maximize)
    sol = solve_lp(p, method="revised")
    status, ref = highs_value(p)
    assert sol.status == status
    if status != "optimal":
        return
    assert sol.objective == pytest.approx(ref, rel=1e-7, abs=1e-6)
    # primal feasibility
    ax = p.A @ sol.x
    assert np.all(ax[p.senses == LE] <= p.b[p.senses == LE] + 1e-7)
    assert np.all(ax[p.senses == GE] >= p.b[p.senses == GE] - 1e-7)
    assert np.allclose(ax[p.senses == EQ], p.b[p.senses == EQ], atol=1e-7)
    y, rc = sol.duals, sol.reduced_costs
    assert np.allclose(rc, p.c - p.A.T @ y, atol=1e-7)
    # complementary slackness on rows and on variable bounds
    assert np.all(np.abs(y * (ax - p.b)) <= 1e-6)
    s = -1.0 if maximize else 1.0
    at_lo, at_hi = np.isclose(sol.x, p.lo, atol=1e-9), np.isclose(sol.x, p.hi, atol=1e-9)
    assert np.all(at_lo[s * rc > 1e-7]) and np.all(at_hi[s * rc < -1e-7])
    # dual sign feasibility
    assert np.all(s * y[p.senses == LE] <= 1e-7) and np.all(s * y[p.senses == GE] >= -1e-7)
    # dual objective: b.y plus the bound terms priced by the reduced costs
    assert p.b @ y + rc @ sol.x == pytest.approx(sol.objective, rel=1e-7, abs=1e-6)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31))
def test_perturb_then_restore_gives_identical_basis(seed):
    p = random_lp(seed, 6, 9)
    first = solve_lp(p, method="revised")
    bumped = LinearProgram(p.c + 0.37, p.A, p.b, p.senses, p.lo, p.hi)
    solve_lp(bumped, method="revised")
    again = solve_lp(p, method="revised")
    assert first.basis == again.basis and np.array_equal(first.x, again.x)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31), st.integers(0, 2**31))
def test_warm_restarts_agree_with_cold_solves(seed, seed2):
    p = random_lp(seed, 8, 12)
    p = p.with_bounds(hi=np.minimum(p.hi, 10.0))
    rng = np.random.default_rng(seed2)
    session = LpSession(p)
    root = session.solve(p.lo, p.hi)
    if not root.optimal:
        return
    warm = root.warm
    for _ in range(4):
        lo, hi = p.lo.copy(), p.hi.copy()
        j = rng.integers(p.c.size)
        cut = float(np.floor(root.x[j]))
        if rng.uniform() < 0.5:
            hi[j] = cut
        else:
            lo[j] = min(cut + 1.0, hi[j])
        warm_sol = session.solve(lo, hi, warm)
        cold = solve_lp(p.with_bounds(lo, hi), method="revised")
        assert warm_sol.status == cold.status
        if cold.optimal:
            assert warm_sol.objective == pytest.approx(cold.objective, rel=1e-7, abs=1e-7)
            warm = warm_sol.warm or warm
