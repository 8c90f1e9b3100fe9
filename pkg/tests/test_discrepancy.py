import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from zerocurrents import discrepancy as disc
from zerocurrents.bergman import build_frame
from zerocurrents.ensembles import EnsembleSpec, Family
from zerocurrents.geometry import CP1, CP1xCP1, build_grid, fs_form
from zerocurrents.metrics import BundleFamily, BundleSequence, MetricWeight
from zerocurrents.spherefunc import perturbation
from zerocurrents.testfunctions import constant_function, dictionary
from zerocurrents.zeros import roots_cp1

NONE1 = perturbation("none", CP1)
NONE2 = perturbation("none", CP1xCP1)
HEIGHT = perturbation("height", CP1)
PHIS = dictionary(CP1)


def fs_seq():
    return BundleSequence(CP1, (BundleFamily((1.0,), (), NONE1),))


def product_seq():
    return BundleSequence(CP1xCP1, (BundleFamily((2.0, 1.0), (), NONE2),
                                    BundleFamily((1.0, 2.0), (), NONE2)))


def batch_from(pairings, p=1):
    pairings = np.asarray(pairings, dtype=float)
    N = pairings.shape[0]
    return disc.SampleBatch(p, tuple(f"f{j}" for j in range(pairings.shape[1])), np.arange(N),
                            pairings, np.ones(N, int), np.zeros(N))


def test_atomic_pairing_examples():
    north = np.array([[[0.0, 0.0, 1.0]]])
    one = constant_function(CP1)
    assert disc.pair_atomic((north, np.array([0.25])), one) == 0.25
    assert disc.pair_atomic((np.zeros((0, 1, 3)), np.zeros(0)), one) == 0.0
    height = next(f for f in PHIS if f.name == "height")
    assert disc.pair_atomic((north, np.array([2.0])), height) == pytest.approx(2 * height(north)[0])


def test_constant_function_counts_zeros():
    zs = roots_cp1(np.array([1, 0, 0, 0, -1], complex))
    assert disc.pairing_vector(zs, [constant_function(CP1)])[0] == pytest.approx(4.0)
    g = build_grid(CP1, 32)
    assert disc.sample_discrepancy(zs, (4.0,), fs_form(g), constant_function(CP1)) < 1e-12


@given(st.floats(-50, 50))
def test_smooth_pairing_is_homogeneous(a):
    g = build_grid(CP1, 16)
    T = fs_form(g)
    f = PHIS[4]
    assert disc.pair_smooth(T.scale(a), f) == pytest.approx(a * disc.pair_smooth(T, f), abs=1e-12)
    assert disc.pair_smooth(T, f.scaled(a)) == pytest.approx(a * disc.pair_smooth(T, f), abs=1e-12)


def test_smooth_pairing_guards(grid2):
    with pytest.raises(ValueError):
        disc.pair_smooth(fs_form(grid2), dictionary(CP1xCP1)[0])
    with pytest.raises(ValueError):
        disc.pair_smooth(fs_form(build_grid(CP1, 16)), PHIS[0], grid=build_grid(CP1, 32))


def test_discrepancy_doubles_with_test_function():
    zs = roots_cp1(np.array([0.3, 1, -0.2j, 0.5], complex))
    lim = fs_form(build_grid(CP1, 32))
    f = PHIS[5]
    a = disc.sample_discrepancy(zs, (3.0,), lim, f)
    assert disc.sample_discrepancy(zs, (3.0,), lim, f.scaled(2.0)) == pytest.approx(2 * a)


def test_rate_fit_synthetic():
    b = np.array([0.3, 0.2, 0.1, 0.05, 0.02])
    f = disc.rate_fit(2 * b, b)
    assert f.C == pytest.approx(2.0) and f.slope == pytest.approx(1.0)
    assert f.slope_low <= 1.0 <= f.slope_high and f.C_ratio == pytest.approx(1.0)
    f = disc.rate_fit(b ** 2, b)
    assert f.slope == pytest.approx(2.0)
    assert f.C_ratio == pytest.approx(0.3 / 0.02)
    f = disc.rate_fit(np.zeros(5), b)
    assert f.trivial and f.C == 0.0
    with pytest.raises(ValueError, match="four"):
        disc.rate_fit(b[:3], b[:3])
    with pytest.raises(ValueError, match="mixed"):
        disc.rate_fit([0, 1, 1, 1], [1, 1, 1, 1])
    with pytest.raises(ValueError):
        disc.rate_fit([1, 1, 1, 1], [1, 0, 1, 1])


@given(st.integers(0, 2**32 - 1))
def test_triangle_decomposition_holds(seed):
    rng = np.random.default_rng(seed)
    batch = batch_from(rng.normal(size=(30, 4)) * 3 + 10)
    lim = rng.normal(size=4) + 2
    tt = disc.triangle_terms(batch, (5.0,), rng.normal(size=4) + 10, lim)
    assert tt.holds
    assert np.allclose(tt.total, disc.discrepancies(batch, (5.0,), lim))


def test_bound_terms():
    bt = disc.bound_terms([10.0, 20.0], [1.0, 2.0])
    assert bt["sum_logA_over_A"] == pytest.approx(math.log(10) / 10 + math.log(20) / 20)
    assert bt["log_sumA_over_sumA"] == pytest.approx(math.log(30) / 30)
    assert bt["sum_A_pow_neg_a"] == pytest.approx(0.1 + 1 / 400)


def test_intermediate_degrees(grid64, grid2):
    for p in (3, 8):
        dp = disc.degrees(fs_seq(), p, grid64)
        assert dp.delta1 == pytest.approx(p) and dp.delta2 == pytest.approx(1.0)
    for p in (1, 2, 3):
        dp = disc.degrees(product_seq(), p, grid2)
        assert dp.delta1 == pytest.approx(5 * p * p) and dp.delta2 == pytest.approx(3 * p)
    w = disc.comparability_windows(product_seq(), [1, 2, 3], grid2)
    assert w["delta1_window"] == pytest.approx((5.0, 5.0))
    assert w["delta2_window"] == pytest.approx((6.0, 6.0))
    with pytest.raises(ValueError):
        disc.DegreePair(0.0, 1.0)


def test_epsilon_rule_and_exception_rows():
    assert disc.epsilon_rule([10.0, 10.0], 0.5) == pytest.approx(0.5 * math.log(20) / 20)
    batch = batch_from([[1.0, 0.0], [0.0, 0.0], [0.0, 3.0], [0.2, 0.1]])
    stat = disc.exceedance_statistic(batch, [0.0, 0.0], 2.0)
    assert np.allclose(stat, [0.5, 0.0, 1.5, 0.1])
    row = disc.exception_row(batch, (math.e,), [0.0, 0.0], 2.0, C4=1.0)
    assert row.epsilon == pytest.approx(1 / math.e)
    assert row.exceed == 2 and row.frequency == 0.5 and row.upper_bound == 0.5
    empty = disc.ExceedanceRow(1, 2.0, 0.1, 1.0, 100, 0)
    assert empty.upper_bound == pytest.approx(0.03)


def test_exception_fit_recovers_power_law():
    S = np.array([10.0, 20.0, 40.0, 80.0])
    rows = [disc.ExceedanceRow(i, s, 0.1, 1.0, 10**6, int(round(10**6 * 3 * s ** -1.5)))
            for i, s in enumerate(S)]
    fit = disc.exception_fit(rows)
    assert fit.nonincreasing and fit.alpha == pytest.approx(1.5, abs=0.01)
    assert fit.C1 == pytest.approx(3.0, rel=0.05)
    rows = [disc.ExceedanceRow(i, s, 0.1, 1.0, 100, e) for i, (s, e) in enumerate(zip(S, [3, 0, 0, 0]))]
    fit = disc.exception_fit(rows)
    assert fit.alpha is None and fit.nonincreasing
    rows[2].exceed = 5
    assert not disc.exception_fit(rows).nonincreasing


def test_fs_current_discrepancy_fs_is_trivial(grid64):
    res = disc.fs_current_discrepancy(fs_seq(), [5, 10, 20, 40], grid64, PHIS)
    assert max(r.value for r in res.rows) < 1e-12
    assert res.trivial and res.passed and res.C_ratio == 1.0


def test_fs_current_discrepancy_perturbed(grid64):
    seq = BundleSequence(CP1, (BundleFamily((1.0,), (), HEIGHT, tau_const=1.0),))
    res = disc.fs_current_discrepancy(seq, [25, 50, 100, 200], grid64, PHIS)
    assert not res.trivial
    assert res.passed and res.C_ratio <= 2.0
    vals = [r.value for r in res.rows]
    assert all(b < a for a, b in zip(vals, vals[1:]))


def test_expectation_identity_fs_cp1(grid64):
    frames = [build_frame(MetricWeight(CP1, (6,), NONE1))]
    rows = disc.expected_zero_current_check(frames, grid64, PHIS, N=400, seed=3)
    assert len(rows) == 12 and all(r.passed for r in rows)


def test_expectation_identity_autopull():
    g = build_grid(CP1, 64)
    frames = [build_frame(MetricWeight(CP1, (4,), HEIGHT, 1.0))]
    spec = EnsembleSpec(Family.AUTOPULL, "diag", strength=3.0)
    rows = disc.expected_zero_current_check(frames, g, PHIS, N=1500, seed=4, spec=spec)
    assert all(r.passed for r in rows)
    # the transform matters: FS currents miss the pulled back mean on some function
    plain = disc.smooth_pairings(disc.expected_current(frames, g), PHIS)
    moved = disc.smooth_pairings(disc.expected_current(frames, g, spec), PHIS)
    assert np.abs(plain - moved).max() > 0.05
    with pytest.raises(ValueError):
        disc.expected_zero_current_check(frames, g, PHIS, 10, 0, EnsembleSpec(Family.DENSITY))


def test_merge_batches_orders_by_index():
    frames = [build_frame(MetricWeight(CP1, (3,), NONE1))]
    spec = EnsembleSpec()
    a = disc.run_samples(frames, spec, 1, 2, [4, 5], PHIS[:2])
    b = disc.run_samples(frames, spec, 1, 2, [0, 1, 2, 3], PHIS[:2])
    whole = disc.run_samples(frames, spec, 1, 2, range(6), PHIS[:2])
    m = disc.merge_batches([a, b])
    assert np.array_equal(m.indices, np.arange(6))
    assert np.array_equal(m.pairings, whole.pairings)
    with pytest.raises(ValueError):
        disc.merge_batches([])
    with pytest.raises(ValueError):
        disc.merge_batches([a, disc.run_samples(frames, spec, 1, 3, [0], PHIS[:2])])


def test_expectation_rows_need_samples():
    with pytest.raises(ValueError):
        disc.expectation_rows(batch_from([[1.0]]), [1.0])
