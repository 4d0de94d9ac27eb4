import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats as sps

from perturbwalk import engine, lattice, stats
from perturbwalk.errors import DegenerateCovariance, InsufficientData

# -- estimator state --------------------------------------------------------------


@given(split=st.integers(0, 400))
def test_merge_of_halves_equals_one_batch(split):
    lazy = lattice.lazy_srw(2)
    sticky = lattice.make_table_law({(0, 0): 0.5, (1, 0): 0.125, (-1, 0): 0.125, (0, 1): 0.125, (0, -1): 0.125})
    spec = engine.WalkSpec(d=2, base_law=lazy, impurities=engine.ImpuritySet({(0, 0): sticky}), horizon=60, seed=3)
    arrays = engine.run_batch_arrays(spec, 400)
    whole = stats.EstimatorState(2).add_arrays(arrays)
    head = stats.EstimatorState(2).add_arrays({k: v[:split] for k, v in arrays.items()})
    tail = stats.EstimatorState(2).add_arrays({k: v[split:] for k, v in arrays.items()})
    assert head.merge(tail) == whole
    assert tail.merge(head) == whole
    assert head.merge(tail).count == 400


def test_merge_associative_and_stats_match_numpy(impure_spec):
    spec = impure_spec.replace(horizon=100)
    arrays = engine.run_batch_arrays(spec, 300)
    parts = [stats.EstimatorState(2).add_arrays({k: v[a:b] for k, v in arrays.items()}) for a, b in ((0, 70), (70, 200), (200, 300))]
    left = parts[0].merge(parts[1]).merge(parts[2])
    right = parts[0].merge(parts[1].merge(parts[2]))
    assert left == right
    rho = arrays["rho"].astype(float)
    assert left.mean("rho") == pytest.approx(rho.mean(), rel=1e-14)
    assert left.variance("rho") == pytest.approx(rho.var(ddof=1), rel=1e-12)
    assert left.variance("rho") >= 0
    assert left.quantile("rho", 0.5) == np.sort(arrays["rho"])[149]
    assert np.allclose(left.covariance(), np.cov(arrays["endpoint"].astype(float), rowvar=False), rtol=1e-12)


def test_collect_splits_agree_with_worker_count(impure_spec):
    spec = impure_spec.replace(horizon=200)
    assert stats.collect(spec, 5000, workers=1) == stats.collect(spec, 5000, workers=4)


# -- KS ---------------------------------------------------------------------------


def test_ks_point_mass_at_median():
    assert stats.ks_statistic(np.zeros(100), sps.norm.cdf) == pytest.approx(0.5, abs=1e-15)


def test_ks_two_point_by_hand():
    # empirical CDF is 0, 1/2, 1 around -1 and 1; the largest gap is Phi(1) - 1/2
    got = stats.ks_statistic([-1.0, 1.0], sps.norm.cdf)
    assert got == pytest.approx(sps.norm.cdf(1.0) - 0.5, abs=1e-15)
    assert got == pytest.approx(0.3413447, abs=1e-7)


def test_ks_target_samples_inside_band():
    m = 10**4
    x = np.random.default_rng(12345).standard_normal(m)
    d = stats.ks_statistic(x, sps.norm.cdf)
    assert d < 1.63 / math.sqrt(m)
    assert d == pytest.approx(sps.kstest(x, "norm").statistic, abs=1e-15)


@given(st.lists(st.floats(-5, 5), min_size=1, max_size=50))
def test_ks_matches_scipy(xs):
    assert stats.ks_statistic(xs, sps.norm.cdf) == pytest.approx(sps.kstest(xs, "norm").statistic, abs=1e-12)


def test_robust_scale_ignores_outliers():
    x = np.random.default_rng(7).standard_normal(10**4)
    assert stats.robust_scale(x) == pytest.approx(1.0, abs=0.03)
    x[0] = 1e4
    assert stats.robust_scale(x) == pytest.approx(1.0, abs=0.03)
    assert np.std(x) > 50
    assert stats.robust_scale(np.array([0.0, 0.0, 0.0, 0.0, 1.0])) == pytest.approx(np.std([0, 0, 0, 0, 1.0], ddof=1))


def test_chi_square_pools_remainder():
    stat, p = stats.chi_square_gof(np.array([50, 30]), np.array([0.5, 0.3]), total=100)
    assert stat == pytest.approx(0.0) and p == pytest.approx(1.0)


# -- blocks ----------------------------------------------------------------------------


def test_blocks_never_inside():
    path = np.tile([5, 5], (11, 1))
    b = stats.block_decomposition(path, 1)
    assert b.xis == () and b.etas == (11,)


def test_blocks_always_inside():
    path = np.zeros((21, 2), dtype=np.int64)
    b = stats.block_decomposition(path, 0)
    assert b.xis == (21,) and b.etas == (0,)


@given(seed=st.integers(0, 2**64 - 1))
def test_blocks_recount_random_path(seed):
    lazy = lattice.lazy_srw(2)
    spec = engine.WalkSpec(d=2, base_law=lazy, impurities=engine.ImpuritySet({(1, 0): lazy}), horizon=20, seed=seed)
    path = engine.simulate_path(spec)
    b = stats.block_decomposition(path, 1)
    inside = [bool(max(abs(v) for v in x) <= 1) for x in path.tolist()]
    assert b.rho == sum(inside)
    entrances = int(inside[0]) + sum(1 for a, c in zip(inside, inside[1:]) if c and not a)
    assert b.entrances == entrances
    assert sum(b.etas) + sum(b.xis) == 21
    s = engine.simulate(spec)
    assert (b.rho, b.entrances) == (s.rho, s.nu)


# -- growth fits ------------------------------------------------------------------------


def test_grid_too_narrow(impure_spec):
    with pytest.raises(InsufficientData):
        stats.occupation_growth(impure_spec, [10, 20], 100)


def test_transient_walk_has_bounded_occupation():
    spec = engine.WalkSpec(d=3, base_law=lattice.make_product_lazy_law(3), start=(3, 0, 0), seed=11)
    rep = stats.occupation_growth(spec, [10**3, 10**4, 10**5], 2000)
    slope, se = rep.fit.coefficients[1], rep.fit.stderr[1]
    assert abs(slope) < 2 * se


def test_fit_log_exact_line_and_propagated_error():
    n = [10, 100, 1000]
    fit = stats.fit_log(n, [1 + 2 * math.log(v) for v in n], [0.1, 0.1, 0.1])
    assert fit.coefficients == pytest.approx((1.0, 2.0))
    assert fit.r_squared == pytest.approx(1.0)
    # slope variance of OLS with equal errors: s^2 / sum (x - xbar)^2
    x = np.log(n)
    assert fit.stderr[1] == pytest.approx(0.1 / math.sqrt(np.sum((x - x.mean()) ** 2)))
    assert stats.fit_power(n, [3 * v**0.5 for v in n]).coefficients == pytest.approx((3.0, 0.5))


def test_entrances_ordering_and_log_growth(lazy, mild_row):
    spec = engine.WalkSpec(d=2, base_law=lazy, impurities=engine.ImpuritySet({(0, 0): mild_row}), seed=21)
    rep = stats.entrance_counts(spec, [10**2, 10**3, 10**4], 2000)
    assert all(o["ok"] for o in rep.details["ordering"])
    assert rep.fit.r_squared > 0.95 and rep.passed


def test_nu_zero_for_start_inside(lazy):
    s = engine.simulate(engine.WalkSpec(d=2, base_law=lazy))
    assert s.nu == 1 and s.nu_bar == 1


def test_pathwise_nu_bounded_by_nu_bar(lazy, mild_row):
    spec = engine.WalkSpec(d=2, base_law=lazy, impurities=engine.ImpuritySet({(0, 0): mild_row}), horizon=200, seed=31)
    for t in range(1000):
        path = engine.simulate_path(spec, horizon=200 + 5000, index=t)
        ind = engine.indicator(path, spec.n_box)
        nu = int(ind[0]) + int(np.sum(ind[1:201] & ~ind[:200]))
        assert nu <= engine.nu_bar_from_indicator(ind, 200)


# -- coupling -------------------------------------------------------------------------


def test_coupling_empty_impurities_all_zero(lazy):
    spec = engine.WalkSpec(d=2, base_law=lazy, seed=2)
    rep = stats.coupling_distance(spec, [100, 1000], 50)
    assert rep.verdict == "identical paths" and rep.passed
    assert all(g.q50 == 0 and g.q90 == 0 and g.mean == 0 for g in rep.grid)


def test_coupling_heavy_impurity_still_vanishes(lazy):
    heavy = lattice.make_axis_power_tail_law(2, 1.5, allow_heavy=True)
    spec = engine.WalkSpec(d=2, base_law=lazy, impurities=engine.ImpuritySet({(0, 0): heavy}), seed=6)
    rep = stats.coupling_distance(spec, [10**3, 10**4, 10**5], 1000)
    assert rep.verdict == "vanishing"


# -- fclt ---------------------------------------------------------------------------------


def test_fclt_unperturbed_covariance(lazy):
    spec = engine.WalkSpec(d=2, base_law=lazy, seed=41)
    rep = stats.fclt_check(spec, lattice.compute_scaling(lazy), 10**4, 10**4, (0.5, 1.0), expected_cov=np.diag([0.4, 0.4]))
    assert rep.cov_error < 0.05 and rep.passed
    # the estimate per unit time does not depend on the probe
    m = 10**4
    rel = np.linalg.norm(rep.sigma_hat[0] - rep.sigma_hat[1]) / np.linalg.norm(rep.sigma_hat[1])
    assert rel < 3 * math.sqrt(2 / m) * math.sqrt(2)


def test_fclt_ks_shrinks_for_perturbed_walk(lazy, mild_row):
    spec = engine.WalkSpec(d=2, base_law=lazy, impurities=engine.ImpuritySet({(0, 0): mild_row}), seed=5)
    scaling = lattice.compute_scaling(lazy)
    small = stats.fclt_check(spec, scaling, 10**3, 10**4, (1.0,))
    large = stats.fclt_check(spec, scaling, 10**5, 10**4, (1.0,))
    assert max(large.ks[0]) < max(small.ks[0])


def test_fclt_rejects_small_batches(lazy):
    with pytest.raises(InsufficientData):
        stats.fclt_check(engine.WalkSpec(d=2, base_law=lazy), lattice.compute_scaling(lazy), 100, 10)


def test_fclt_degenerate_covariance():
    law = lattice.make_table_law({(1, 0): 0.5, (-1, 0): 0.5})
    spec = engine.WalkSpec(d=2, base_law=law, seed=1)
    with pytest.raises(DegenerateCovariance):
        stats.fclt_check(spec, lattice.ScalingSequence.diffusive(), 100, 1000, (1.0,))


def test_thresholds_overrides():
    t = stats.DEFAULT_THRESHOLDS.with_overrides({"ks_max": 0.05})
    assert t.ks_max == 0.05 and t.log_r2 == 0.95
    with pytest.raises(KeyError):
        stats.DEFAULT_THRESHOLDS.with_overrides({"ks": 0.05})
