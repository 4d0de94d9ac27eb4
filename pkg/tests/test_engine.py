import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats as sps

from perturbwalk import engine, lattice, oracle, rng, stats
from perturbwalk.errors import DimensionMismatch


def test_zero_step_walk(lazy):
    s = engine.simulate(engine.WalkSpec(d=2, base_law=lazy))
    assert s.endpoint == (0, 0) and s.rho == 1 and s.nu == 1
    assert s.first_return_origin is None and s.tau is None


def test_spec_validation(lazy):
    with pytest.raises(DimensionMismatch):
        engine.WalkSpec(d=3, base_law=lazy)
    with pytest.raises(ValueError):
        engine.WalkSpec(d=2, base_law=lazy, horizon=-1)
    with pytest.raises(ValueError):
        engine.WalkSpec(d=2, base_law=lazy, horizon=10**7 + 1, record_mode="full_path")
    assert engine.ImpuritySet().n_box == 0
    imp = engine.ImpuritySet({(2, -3): lazy, (0, 1): lazy})
    assert imp.n_box == 3


def test_spec_json_round_trip(impure_spec):
    spec = impure_spec.replace(start=(1, -1), horizon=17)
    back = engine.WalkSpec.from_dict(spec.to_dict())
    assert back.to_dict() == spec.to_dict()
    a = engine.run_batch_arrays(spec, 50)
    b = engine.run_batch_arrays(back, 50)
    assert all(np.array_equal(a[k], b[k]) for k in a)


def test_sticky_impurity_doubles_occupation(impure_spec):
    spec = impure_spec.replace(horizon=10_000)
    with_imp = engine.run_batch_arrays(spec, 10_000, nubar=False)["rho"].mean()
    without = engine.run_batch_arrays(spec.unperturbed(), 10_000, nubar=False)["rho"].mean()
    assert with_imp > 2 * without


def test_sticky_occupation_matches_exact_dp(impure_spec):
    spec = impure_spec.replace(horizon=20)
    exact = oracle.expected_occupation(spec, 20, 22)[-1]
    rho = engine.run_batch_arrays(spec, 200_000, nubar=False)["rho"]
    assert abs(rho.mean() - exact) < 4 * rho.std() / np.sqrt(len(rho))
    base = oracle.expected_occupation(spec.unperturbed(), 20, 22)[-1]
    assert exact > 2 * base


def test_endpoint_law_from_offset_start(lazy):
    spec = engine.WalkSpec(d=2, base_law=lazy, start=(5, 5), horizon=8, seed=77)
    ends = engine.run_batch_arrays(spec, 1_000_000, nubar=False)["endpoint"]
    exact = oracle.n_step_pmf(lazy, 8, 13, start=(5, 5))
    assert exact.leaked == 0.0
    assert exact.tv_distance(ends) < 0.01


def test_batch_of_one_is_simulate(impure_spec):
    spec = impure_spec.replace(horizon=500)
    assert next(engine.batch_run(spec, 1)) == engine.simulate(spec)
    coupled = next(engine.batch_run(spec, 1, "coupled"))
    assert coupled == engine.simulate_coupled(spec)


def test_worker_count_does_not_change_output(impure_spec):
    spec = impure_spec.replace(horizon=300)
    one = list(engine.batch_run(spec, 9000, workers=1))
    eight = list(engine.batch_run(spec, 9000, workers=8))
    assert one == eight


def test_full_path_mode_attaches_path(impure_spec):
    spec = impure_spec.replace(horizon=50, record_mode="full_path")
    s = engine.simulate(spec)
    assert s.path.shape == (51, 2) and tuple(s.path[-1]) == s.endpoint


def test_empty_impurities_couple_exactly(lazy):
    spec = engine.WalkSpec(d=2, base_law=lazy, horizon=2000, seed=1)
    for c in engine.batch_run(spec, 50, "coupled"):
        assert c.sup_distance == 0 and c.x_endpoint == c.z_endpoint


@given(seed=st.integers(0, 2**64 - 1))
def test_coupled_triangle_bound(seed):
    lazy = lattice.lazy_srw(2)
    heavy = lattice.make_axis_power_tail_law(2, 1.5, allow_heavy=True)
    spec = engine.WalkSpec(d=2, base_law=lazy, impurities=engine.ImpuritySet({(0, 0): heavy}), horizon=400, seed=seed)
    for c in engine.batch_run(spec, 20, "coupled"):
        assert c.sup_distance <= c.triangle_bound
        assert len(c.impurity_jump_norms) <= c.rho
        assert sum(c.impurity_jump_norms) <= c.triangle_bound


def test_coupled_x_is_the_plain_walk(impure_spec):
    spec = impure_spec.replace(horizon=200)
    plain = engine.run_batch_arrays(spec, 100)
    coupled = engine.run_batch_arrays(spec, 100, coupled=True)
    assert np.array_equal(plain["endpoint"], coupled["x_endpoint"])
    assert np.array_equal(plain["rho"], coupled["rho"])


def test_z_marginal_is_unperturbed(impure_spec):
    spec = impure_spec.replace(horizon=8)
    z = engine.run_batch_arrays(spec, 1_000_000, coupled=True)["z_endpoint"]
    exact = oracle.n_step_pmf(spec.base_law, 8, 8)
    assert exact.tv_distance(z) < 0.01
    sites, counts = np.unique(z, axis=0, return_counts=True)
    probs = np.array([exact.prob(s) for s in sites])
    keep = probs * len(z) >= 20
    _, p = stats.chi_square_gof(counts[keep], probs[keep], total=len(z))
    assert p > 0.001


def test_coupling_distance_shrinks_relative_to_sqrt_n(lazy, mild_row):
    spec = engine.WalkSpec(d=2, base_law=lazy, impurities=engine.ImpuritySet({(0, 0): mild_row}), seed=8)
    med = []
    for n in (1000, 100_000):
        arr = engine.run_batch_arrays(spec.replace(horizon=n, seed=rng.derive_seed(8, n)), 1000, coupled=True)
        med.append(np.median(arr["sup_distance"]) / np.sqrt(n))
    assert med[1] < med[0]


# -- assumptions -------------------------------------------------------------


def test_assumptions_pass_case(impure_spec):
    rep = engine.check_assumptions(impure_spec)
    assert rep.one_lattice and rep.aperiodic and rep.scc is True and rep.epsilon_moment
    assert rep.passed


def test_assumptions_two_site_trap(lazy):
    a_to_b = lattice.make_table_law({(1, 0): 1.0}, require_centered=False)
    b_to_a = lattice.make_table_law({(-1, 0): 1.0}, require_centered=False)
    imp = engine.ImpuritySet({(1, 0): a_to_b, (2, 0): b_to_a})
    trapped = engine.WalkSpec(d=2, base_law=lazy, impurities=imp, start=(1, 0))
    rep = engine.check_assumptions(trapped)
    assert rep.scc is False and not rep.passed
    # independent oracle: sites reachable from the start in the explicit graph
    reach, frontier = {(1, 0)}, [(1, 0)]
    while frontier:
        u = frontier.pop()
        law = imp.law_at(u, lazy)
        for j in law.as_dict():
            v = (u[0] + j[0], u[1] + j[1])
            if v not in reach:
                reach.add(v)
                frontier.append(v)
    assert reach == {(1, 0), (2, 0)}
    free = engine.WalkSpec(d=2, base_law=lazy, impurities=imp, start=(0, 3))
    assert engine.check_assumptions(free).scc is True


def test_assumptions_periodic_walk():
    rep = engine.check_assumptions(engine.WalkSpec(d=2, base_law=lattice.simple_srw(2)))
    assert not rep.aperiodic and rep.period == 2
    assert rep.scc is None and not rep.passed


def test_epsilon_moment_detail(lazy):
    heavy = lattice.make_axis_power_tail_law(2, 1.5, allow_heavy=True)
    rep = engine.check_assumptions(engine.WalkSpec(d=2, base_law=lazy, impurities=engine.ImpuritySet({(0, 0): heavy})))
    assert rep.epsilon_moment and "0.5" in rep.epsilon_detail["[0, 0]"]
    assert rep.scc is True


# -- Markov consistency --------------------------------------------------------


def _restart(spec, k):
    """X_k from one batch, then n - k more steps from each X_k with fresh derived seeds."""
    first = engine.run_batch_arrays(spec.replace(horizon=k), 100_000, nubar=False)
    mids, inverse = np.unique(first["endpoint"], axis=0, return_inverse=True)
    inverse = inverse.ravel()
    ends = np.empty_like(first["endpoint"])
    rho = np.empty_like(first["rho"])
    for g, mid in enumerate(mids):
        rows = np.flatnonzero(inverse == g)
        cont = spec.replace(start=tuple(mid), horizon=spec.horizon - k, seed=rng.derive_seed(spec.seed, 1, g))
        arr = engine.run_batch_arrays(cont, len(rows), nubar=False)
        ends[rows] = arr["endpoint"]
        # both pieces count index k
        rho[rows] = first["rho"][rows] + arr["rho"] - int(spec.in_box(mid))
    return ends, rho


def _two_sample_chi2(a, b):
    keys, inv = np.unique(np.concatenate([a, b]), axis=0, return_inverse=True)
    inv = inv.ravel()
    table = np.array([np.bincount(inv[: len(a)], minlength=len(keys)), np.bincount(inv[len(a):], minlength=len(keys))])
    pooled = table.sum(axis=0)
    big = pooled >= 20
    rest = table[:, ~big].sum(axis=1)
    if rest.sum():
        table = np.column_stack([table[:, big], rest])
    else:
        table = table[:, big]
    return sps.chi2_contingency(table)[1]


def test_markov_consistency_and_occupation_additivity(impure_spec):
    spec = impure_spec.replace(horizon=8, seed=4242)
    direct = engine.run_batch_arrays(spec, 100_000, nubar=False)
    ends, rho = _restart(spec, 4)
    assert _two_sample_chi2(direct["endpoint"], ends) > 0.001
    assert _two_sample_chi2(direct["rho"][:, None], rho[:, None]) > 0.001


@given(seed=st.integers(0, 2**64 - 1))
def test_nu_bar_streaming_equals_path_reconstruction(seed):
    lazy = lattice.lazy_srw(2)
    sticky = lattice.make_table_law({(0, 0): 0.5, (1, 0): 0.125, (-1, 0): 0.125, (0, 1): 0.125, (0, -1): 0.125})
    spec = engine.WalkSpec(d=2, base_law=lazy, impurities=engine.ImpuritySet({(1, 1): sticky}), horizon=40, seed=seed)
    s = engine.simulate(spec)
    path = engine.simulate_path(spec, horizon=40 + 5000)
    assert s.nu_bar == engine.nu_bar_from_indicator(engine.indicator(path, 1), 40)
    assert s.nu <= s.nu_bar
    assert 0 <= s.rho <= spec.horizon + 1 and s.nu <= s.rho


def test_nu_bar_from_indicator_small_cases():
    ind = np.array([1, 1, 0, 1, 0, 0, 1, 1, 0], dtype=bool)
    assert engine.nu_bar_from_indicator(ind, 0) == 1
    assert engine.nu_bar_from_indicator(ind, 1) == 2
    assert engine.nu_bar_from_indicator(ind, 3) == 3
    assert engine.nu_bar_from_indicator(ind, 4) is None
