import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, stats

from zerocurrents import rng as rngmod
from zerocurrents.ensembles import (BumpWeight, EnsembleSpec, Family, fs_probe_moment,
                                    holder_modulus_estimate, holder_pairs, moderate_diagnostic,
                                    phase_normalize, sample_autopull, sample_density, sample_fs,
                                    sample_tuple, smooth_step, unit_det)
from zerocurrents.errors import NumericalError

M = 4000


def draws(fn, N, seed=0, count=M):
    r = np.random.default_rng(seed)
    return np.array([fn(N, r) for _ in range(count)])


@pytest.mark.parametrize("N", [2, 5])
def test_fs_coordinate_law(N):
    S = draws(sample_fs, N)
    assert np.allclose(np.linalg.norm(S, axis=1), 1.0)
    u = np.abs(S[:, 0]) ** 2
    assert stats.kstest(u, stats.beta(1, N - 1).cdf).pvalue > 1e-3
    assert abs(u.mean() - 1 / N) < 4 * math.sqrt(u.var() / M)


def test_fs_draw_is_phase_normalised():
    S = draws(sample_fs, 3, count=50)
    assert np.allclose(S[:, 0].imag, 0) and np.all(S[:, 0].real > 0)


def test_autopull_law_matches_quadrature_oracle():
    # g = diag(2, 1): |x_0|^2 = (u/4) / (u/4 + 1 - u) with u uniform
    g = unit_det(np.diag([2.0, 1.0]))
    S = draws(lambda N, r: sample_autopull(g, r), 2)
    x = np.abs(S[:, 0]) ** 2
    h = lambda u: (u / 4) / (u / 4 + 1 - u)  # noqa: E731
    mean, _ = integrate.quad(h, 0, 1)
    assert abs(x.mean() - mean) < 4 * x.std() / math.sqrt(M)
    cdf = lambda y: np.clip(4 * y / (1 + 3 * y), 0, 1)  # noqa: E731
    assert stats.kstest(x, cdf).pvalue > 1e-3


def test_bump_density_matches_quadrature_oracle():
    w = BumpWeight(1.5)
    S = draws(lambda N, r: sample_density(w, N, r), 2)
    freq = np.mean(np.abs(S[:, 0]) ** 2 >= 0.6)
    dens = lambda u: math.exp(-1.5 * float(smooth_step(u)))  # noqa: E731
    Z, _ = integrate.quad(dens, 0, 1, points=[0.4, 0.6])
    cap, _ = integrate.quad(dens, 0.6, 1)
    ref = cap / Z
    assert abs(freq - ref) < 4 * math.sqrt(ref * (1 - ref) / M)


def test_density_sampler_failure_modes():
    r = np.random.default_rng(1)
    with pytest.raises(NumericalError, match="acceptance"):
        sample_density(BumpWeight(20.0), 2, r)

    class Liar:
        w_max = 0.1

        def __call__(self, c):
            return 5.0

    with pytest.raises(ValueError, match="exceeds"):
        sample_density(Liar(), 2, r)


def test_unit_det_and_singular_matrix():
    g = unit_det(np.diag([4.0, 1.0, 2.0]))
    assert abs(abs(np.linalg.det(g)) - 1) < 1e-12
    with pytest.raises(NumericalError):
        unit_det(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        phase_normalize(np.zeros(3))
    with pytest.raises(ValueError):
        sample_fs(0, np.random.default_rng(0))


def test_spec_matrices():
    spec = EnsembleSpec(Family.AUTOPULL, "hermitian", strength=0.5, matrix_seed=3)
    g = spec.matrix(0, 4)
    assert g is spec.matrix(0, 4)
    assert abs(abs(np.linalg.det(g)) - 1) < 1e-10
    assert np.allclose(g, g.conj().T)
    assert np.array_equal(g, EnsembleSpec(Family.AUTOPULL, "hermitian", 0.5, 3).matrix(0, 4))
    with pytest.raises(ValueError, match="condition"):
        EnsembleSpec(Family.AUTOPULL, "diag", strength=5000.0).matrix(0, 3)
    with pytest.raises(ValueError):
        EnsembleSpec(autopull_kind="random")
    with pytest.raises(ValueError):
        EnsembleSpec(rho=1.0)
    assert np.array_equal(EnsembleSpec().matrix(1, 3), np.eye(3))


def test_tuple_determinism_and_independence():
    spec = EnsembleSpec(Family.FS)
    a = sample_tuple(spec, (4, 4), seed=11, p=2, index=5)
    b = sample_tuple(spec, (4, 4), seed=11, p=2, index=5)
    assert all(np.array_equal(x, y) for x, y in zip(a.coefficients, b.coefficients))
    c = sample_tuple(spec, (4, 4), seed=11, p=2, index=6)
    assert not np.array_equal(a.coefficients[0], c.coefficients[0])
    assert not np.array_equal(a.coefficients[0], a.coefficients[1])
    u = np.array([[abs(x[0]) ** 2 for x in sample_tuple(spec, (3, 3), 7, 1, i).coefficients]
                  for i in range(2000)])
    assert abs(np.corrcoef(u.T)[0, 1]) < 4 / math.sqrt(2000)


@given(st.integers(0, 2**64 - 1), st.integers(0, 3), st.integers(1, 50), st.integers(0, 10**6))
def test_sample_streams_are_reproducible(seed, k, p, i):
    x = rngmod.sample_stream(seed, k, p, i).random(3)
    y = rngmod.sample_stream(seed, k, p, i).random(3)
    assert np.array_equal(x, y)


def test_fs_probe_moment_closed_form():
    assert fs_probe_moment(2, 1.0) == pytest.approx(2.0)
    assert fs_probe_moment(7, 0.0) == pytest.approx(1.0)
    assert math.isinf(fs_probe_moment(3, 2.0))
    # |<s, e>|^2 ~ Beta(1, N-1)
    ref, _ = integrate.quad(lambda x: x ** -0.35 * 4 * (1 - x) ** 3, 0, 1)
    assert fs_probe_moment(5, 0.7) == pytest.approx(ref, rel=1e-8)


def test_moderate_diagnostic_against_closed_form():
    e = np.zeros(4, complex)
    e[1] = 1
    rows = moderate_diagnostic(EnsembleSpec(), 4, [e], [0.0, 1.0], samples=4000, seed=2)
    by = {(r.alpha, r.truncation): r for r in rows}
    assert by[(0.0, 10.0)].estimate == pytest.approx(1.0)
    r = by[(1.0, 20.0)]
    assert r.finite and abs(r.estimate - fs_probe_moment(4, 1.0)) < 5 * r.stderr


def test_holder_modulus():
    S, T = holder_pairs(3, 50, seed=4)
    assert len(S) == 150
    assert holder_modulus_estimate(lambda X: np.zeros(len(X)), S, T, 0.5) == 0.0
    e = np.array([1, 0, 0], complex)
    dist = lambda X: np.arccos(np.clip(np.abs(X @ e.conj()), 0, 1)) ** 0.5  # noqa: E731
    est = holder_modulus_estimate(dist, S, T, 0.5)
    assert 0.3 < est <= 1.0 + 1e-12
    # a smooth potential has a small modulus when g is close to unitary
    for eps, bound in ((1e-2, 0.05), (1e-4, 5e-4)):
        spec = EnsembleSpec(Family.AUTOPULL, "hermitian", strength=eps, matrix_seed=1)
        assert holder_modulus_estimate(spec.potential(0, 3), S, T, 0.5) < bound
    with pytest.raises(ValueError):
        holder_modulus_estimate(dist, S, T, 1.5)


def test_smallness_condition():
    spec = EnsembleSpec(c_const=2.0)
    assert spec.smallness_ok(0.0, 10, 1)
    assert spec.smallness_ok(2.0 ** -11, 10, 1)
    assert not spec.smallness_ok(0.5, 10, 1)
    assert not spec.smallness_ok(2.0 ** -11, 10, 2)
