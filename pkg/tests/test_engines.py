import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from robustsiting.branchbound import solve_mip
from robustsiting.engines import (EngineOptions, solve_direct, solve_expost, solve_nominal, solve_rcg,
                                  solve_rowgen, worst_case)
from robustsiting.errors import InfeasibleUncertaintySet, IterLimit
from robustsiting.formulations import build_robust_monolithic
from robustsiting.riskdist import UncertaintyModel, risk_report, solve_subproblem
from robustsiting.validation import generate_instance


def random_instance(seed, n_sites=6, K=20, J=3, overlap=False):
    rng = np.random.default_rng(seed)
    d = rng.uniform(0, 100, (n_sites, K))
    if overlap:
        M = rng.uniform(size=(K, J)) < 0.4
        M[np.arange(J), np.arange(J)] = True
        M[~M.any(axis=1), 0] = True
        model = UncertaintyModel(M.T.astype(float) @ rng.dirichlet(np.ones(K)), M)
    else:
        labels = np.concatenate([np.arange(J), rng.integers(0, J, K - J)])
        model = UncertaintyModel.from_index([np.flatnonzero(labels == j) for j in range(J)], K,
                                            rng.dirichlet(np.ones(J)))
    return d, model


def brute(d, model, beta, P):
    best = np.inf
    for S in itertools.combinations(range(d.shape[0]), P):
        best = min(best, solve_subproblem(d[list(S)].min(axis=0), model, beta).value)
    return best


def test_singleton_u_converges_fast_to_nominal():
    rng = np.random.default_rng(0)
    d = rng.uniform(0, 50, (5, 4))
    lam = np.array([0.1, 0.2, 0.3, 0.4])
    model = UncertaintyModel.from_index([[0], [1], [2], [3]], 4, lam)
    for solver in (solve_rcg, solve_rowgen):
        # with beta = 0 the single cut p = u is exact, so the second master closes the gap
        rep = solver(d, model, 0.0, 2)
        assert rep.iterations <= 2
        assert rep.objective == pytest.approx(solve_nominal(d, 0.0, 2, weights=lam).objective, rel=1e-7)
        # with beta > 0 the tail weights still move with y, but the value is the nominal one
        rep = solver(d, model, 0.5, 2)
        assert rep.objective == pytest.approx(solve_nominal(d, 0.5, 2, weights=lam).objective, rel=1e-7)


def test_two_region_eight_scenario_toy():
    rng = np.random.default_rng(1)
    d = rng.uniform(0, 100, (3, 8))
    model = UncertaintyModel.from_index([[0, 1, 2, 3], [4, 5, 6, 7]], 8, [0.35, 0.65])
    mono = solve_mip(build_robust_monolithic(d, model, 0.5, 1).mip, gap_tol=0.0).objective
    assert solve_rcg(d, model, 0.5, 1).objective == pytest.approx(mono, rel=1e-6)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from([0.0, 0.5, 0.9]), st.integers(1, 3), st.booleans())
def test_three_methods_agree_with_brute_force(seed, beta, P, overlap):
    d, model = random_instance(seed, overlap=overlap)
    ref = brute(d, model, beta, P)
    for solver in (solve_rcg, solve_rowgen, solve_direct):
        rep = solver(d, model, beta, P)
        assert rep.objective == pytest.approx(ref, rel=1e-6, abs=1e-6), solver.__name__
        assert rep.y.sum() == P
        assert worst_case(d, rep.y, model, beta).value == pytest.approx(rep.objective, rel=1e-9)


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from([0.0, 0.5, 0.9]))
def test_telemetry_invariants_and_k_plus_growth(seed, beta):
    rng = np.random.default_rng(seed)
    d, model = random_instance(seed, n_sites=8, K=40, J=4)
    d = d + rng.uniform(0, 1e-3, d.shape)  # distinct distances
    rep = solve_rcg(d, model, beta, 2)
    J = model.n_regions
    zmp = [h.z_mp for h in rep.history]
    assert all(a <= b + 1e-12 for a, b in zip(zmp, zmp[1:]))
    for s, h in enumerate(rep.history, start=1):
        assert h.z_sp >= h.z_mp - 1e-9
        assert h.k_plus_size <= (J + 1) * s
        assert h.added <= J + 1
    assert rep.history[-1].gap <= 1e-6


def test_rowgen_master_always_carries_every_column():
    d, model = random_instance(3, K=15)
    rep = solve_rowgen(d, model, 0.5, 2)
    assert all(h.k_plus_size == 15 for h in rep.history)


def test_direct_agrees_with_rcg_on_generated_instance():
    inst = generate_instance(25, 5, 2, 10.0, seed=3)
    opts = EngineOptions(backend="highs")
    a = solve_rcg(inst.d, inst.model, 0.9, 2, options=opts)
    b = solve_direct(inst.d, inst.model, 0.9, 2, options=opts)
    assert a.objective == pytest.approx(b.objective, rel=1e-4)


def test_all_sites_open():
    d, model = random_instance(4, n_sites=4)
    rep = solve_direct(d, model, 0.5, 4)
    assert rep.objective == pytest.approx(solve_subproblem(d.min(axis=0), model, 0.5).value, rel=1e-9)


def test_partitioned_beta_zero_is_robust_pmedian():
    d, model = random_instance(5, J=3)
    ref = min(sum(model.lam[j] * d[list(S)].min(axis=0)[ks].max() for j, ks in enumerate(model.region_index))
              for S in itertools.combinations(range(6), 2))
    assert solve_direct(d, model, 0.0, 2).objective == pytest.approx(ref, rel=1e-7)


def test_expost_on_historical_equals_nominal():
    rng = np.random.default_rng(6)
    d = rng.uniform(0, 100, (6, 15))
    assert solve_expost(d, 0.9, 2).objective == pytest.approx(solve_nominal(d, 0.9, 2).objective, rel=1e-12)


def test_expost_single_point():
    d = np.array([[7.0], [3.0], [5.0]])
    rep = solve_expost(d, 0.9, 2)
    assert rep.objective == 3.0 and rep.y[1] == 1


@settings(max_examples=5, deadline=None)
@given(st.integers(0, 2**31))
def test_expost_never_worse_than_hints(seed):
    rng = np.random.default_rng(seed)
    d = rng.uniform(0, 100, (8, 30))
    hints = []
    for _ in range(2):
        y = np.zeros(8, dtype=int)
        y[rng.choice(8, 3, replace=False)] = 1
        hints.append(y)
    rep = solve_expost(d, 0.9, 3, hints=hints)
    for y in hints:
        assert rep.objective <= risk_report(d[y.astype(bool)].min(axis=0), None, 0.9).cvar


def test_reports_are_reproducible():
    d, model = random_instance(7, n_sites=7, K=30)
    a, b = solve_rcg(d, model, 0.9, 2), solve_rcg(d, model, 0.9, 2)
    strip = lambda r: [(h.iteration, h.z_mp, h.z_sp, h.gap, h.k_plus_size, h.added) for h in r.history]
    assert strip(a) == strip(b) and np.array_equal(a.y, b.y) and a.objective == b.objective


def test_iteration_limit_carries_report():
    d, model = random_instance(8, n_sites=8, K=40, J=4)
    with pytest.raises(IterLimit) as exc:
        solve_rcg(d, model, 0.9, 2, iter_limit=1)
    assert exc.value.report is not None and exc.value.report.iterations == 1


def test_infeasible_set_and_bad_inputs():
    model = UncertaintyModel.from_index([[0], [1]], 2, [1.0, 1.0])
    with pytest.raises(InfeasibleUncertaintySet):
        solve_rcg(np.ones((2, 2)), model, 0.5, 1)
    ok = UncertaintyModel.from_index([[0], [1]], 2, [0.5, 0.5])
    with pytest.raises(ValueError):
        solve_rcg(np.ones((2, 2)), ok, 0.5, 3)
    with pytest.raises(ValueError):
        solve_rcg(np.ones((2, 2)), ok, 0.5, 1, epsilon=0.0)


def test_highs_backend_same_value():
    d, model = random_instance(9, n_sites=7, K=30)
    a = solve_rcg(d, model, 0.5, 2)
    b = solve_rcg(d, model, 0.5, 2, options=EngineOptions(backend="highs"))
    assert a.objective == pytest.approx(b.objective, rel=1e-6)
