import math

import numpy as np
import pytest

from ipnsw import synth_gaussian
from ipnsw.analysis import (
    adaptive_simpson,
    cardinality_bias_curve,
    computation_distribution,
    norm_bias_report,
    product_survival,
    recall_at_budgets,
    result_norm_occupancy,
    theorem1_probability,
    theorem2_conditional,
    theorem2_simulate,
)
from ipnsw.dataset import partition_by_norm
from ipnsw.mips_index import ipnsw_build, ipnsw_query
from ipnsw.simgraph import SearchStats


def _arctan_form(alpha):
    # in whitened coordinates the event is a wedge of the first quadrant
    return 2.0 / math.pi * math.atan(math.sqrt(alpha))


def test_adaptive_simpson_polynomials_and_exp():
    assert adaptive_simpson(lambda x: x ** 3, 0, 2) == pytest.approx(4.0, abs=1e-12)
    assert adaptive_simpson(math.exp, 0, 1) == pytest.approx(math.e - 1, abs=1e-10)


@pytest.mark.parametrize("alpha", [1.0, 1.35, 1.5, 2.0, 4.0, 16.0, 100.0])
def test_theorem1_matches_closed_form(alpha):
    assert theorem1_probability(alpha) == pytest.approx(_arctan_form(alpha), abs=1e-8)


def test_theorem1_matches_scipy():
    from scipy import integrate, special

    alpha = 2.5
    f = lambda a: math.exp(-a * a / (2 * alpha)) * math.sqrt(math.pi / 2) * special.erf(a / math.sqrt(2))
    val, _ = integrate.quad(f, 0, np.inf)
    assert theorem1_probability(alpha) == pytest.approx(2 / (math.pi * math.sqrt(alpha)) * val, abs=1e-9)


def test_theorem1_monte_carlo_small():
    rng = np.random.default_rng(0)
    n = 400_000
    a = np.abs(rng.standard_normal(n)) * 2.0
    b = np.abs(rng.standard_normal(n))
    p = np.mean(a >= b)
    se = math.sqrt(p * (1 - p) / n)
    assert abs(theorem1_probability(4.0) - p) < 4 * se


def test_theorem1_domain():
    assert theorem1_probability(1.0) == pytest.approx(0.5, abs=1e-9)
    with pytest.raises(ValueError):
        theorem1_probability(0.99)
    grid = [theorem1_probability(a) for a in (1, 1.5, 2, 4, 16)]
    assert all(x < y for x, y in zip(grid, grid[1:]))
    assert all(0.5 <= x < 1 for x in grid)


def test_theorem2_examples():
    assert theorem2_conditional(2, 1, 0.8, 3) == pytest.approx((4.8, 1.44))
    assert theorem2_conditional(2, 1, 1.0, 3) == pytest.approx((6.0, 0.0))
    assert theorem2_conditional(2, 1, 0.0, 3) == pytest.approx((0.0, 4.0))
    with pytest.raises(ValueError):
        theorem2_conditional(2, 1, 1.1, 0)
    with pytest.raises(ValueError):
        theorem2_conditional(0, 1, 0.5, 0)


def test_theorem2_simulation_small():
    slope, var = theorem2_simulate(3.0, 1.5, -0.3, d=16, n_samples=50_000, seed=3)
    mean, ref_var = theorem2_conditional(3.0, 1.5, -0.3, 1.0)
    assert slope == pytest.approx(mean, rel=0.03)
    assert var == pytest.approx(ref_var, rel=0.03)


def test_product_survival():
    assert product_survival([]) == 1.0
    assert product_survival([0.5] * 10) == 2.0 ** -10
    ps = [0.9, 0.8, 0.7]
    assert product_survival(ps + [0.99]) < product_survival(ps)
    with pytest.raises(ValueError):
        product_survival([1.2])


def test_occupancy_k_equals_n_is_group_sizes():
    ds = synth_gaussian(100, 4, ("lognormal", 0.5), seed=0)
    part = partition_by_norm(ds, 10)
    occ = result_norm_occupancy(ds, np.ones((1, 4)), ds.n, part)
    np.testing.assert_allclose(occ, part.sizes() / ds.n, atol=1e-15)


def test_occupancy_sums_to_one_and_skew():
    ds = synth_gaussian(2000, 16, ("scaled-top", 0.05, 3.0), seed=1)
    Q = synth_gaussian(100, 16, "iid", seed=2).items
    occ = result_norm_occupancy(ds, Q, 10, partition_by_norm(ds, 5))
    assert abs(occ.sum() - 1) < 1e-9
    assert occ[0] > 0.5


def test_computation_distribution():
    ds = synth_gaussian(40, 3, "iid", seed=0)
    part = partition_by_norm(ds, 25)
    full = SearchStats(np.arange(40, dtype=np.int32))
    np.testing.assert_allclose(computation_distribution([full], part), [0.25] * 4)
    idx = ipnsw_build(ds, M=5, l_build=10)
    stats = [ipnsw_query(idx, ds, q, l=10, k=5)[1] for q in np.eye(3)]
    assert abs(computation_distribution(stats, part).sum() - 1) < 1e-9
    with pytest.raises(ValueError):
        computation_distribution([], part)


def test_cardinality_curve_deterministic_and_bounded():
    ds = synth_gaussian(2000, 8, ("lognormal", 0.5), seed=1)
    Q = synth_gaussian(50, 8, "iid", seed=2).items
    a = cardinality_bias_curve(ds, [0.3, 1.0], Q, k=10, seed=5)
    b = cardinality_bias_curve(ds, [0.3, 1.0], Q, k=10, seed=5)
    assert a == b
    assert all(0 <= v <= 1 for v in a.values())
    with pytest.raises(ValueError):
        cardinality_bias_curve(ds, [0.001], Q, k=10)


def test_recall_at_budgets():
    out = recall_at_budgets([300, 100, 200], [0.9, 0.5, 0.7], [100, 150, 300, 50, 400])
    np.testing.assert_allclose(out[:3], [0.5, 0.6, 0.9])
    assert np.isnan(out[3]) and np.isnan(out[4])


def test_norm_bias_report_fractions():
    ds = synth_gaussian(500, 8, ("scaled-top", 0.05, 3.0), seed=1)
    Q = synth_gaussian(20, 8, "iid", seed=2).items
    idx = ipnsw_build(ds, M=8, l_build=20)
    stats = [ipnsw_query(idx, ds, q, l=20, k=10)[1] for q in Q]
    rep = norm_bias_report(ds, Q, 10, idx.graph, stats)
    assert abs(rep.occupancy.sum() - 1) < 1e-9
    assert abs(rep.computation_share.sum() - 1) < 1e-9
    assert rep.in_degree_ratio.shape == (20,)
