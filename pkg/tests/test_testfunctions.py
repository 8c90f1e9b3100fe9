import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import z_to_sphere
from zerocurrents.geometry import CP1, CP1xCP1, build_grid
from zerocurrents.spherefunc import X1, X2, X3, SpherePolynomial
from zerocurrents.testfunctions import (constant_function, dictionary, make_test_function,
                                        radial_t, select)


@pytest.mark.parametrize("space", [CP1, CP1xCP1])
def test_dictionary_is_normalised(space):
    phis = dictionary(space)
    assert len(phis) == 12
    assert len({f.name for f in phis}) == 12
    for f in phis:
        assert f.c2_norm == pytest.approx(1.0, rel=1e-12)


@pytest.mark.parametrize("space,res", [(CP1, 96), (CP1xCP1, 12)])
def test_stored_bounds_dominate_sampled_seminorms(space, res):
    g = build_grid(space, res, "midpoint")
    for f in dictionary(space):
        v, gr, h = f.pointwise_seminorms(g.sphere)
        assert np.all(np.abs(f.on_grid(g)) <= f.c0)
        assert v.max() <= f.c0 and gr.max() <= f.c1 and h.max() <= f.c2


def test_constant_and_radial():
    one = constant_function(CP1)
    g = build_grid(CP1, 32)
    assert np.all(one.on_grid(g) == 1.0)
    t = radial_t(CP1)
    assert np.allclose(t.on_grid(g), g.t[:, 0])


def test_scaling_is_linear():
    f = dictionary(CP1)[3]
    g = build_grid(CP1, 16)
    assert np.allclose(f.scaled(-2.0).on_grid(g), -2.0 * f.on_grid(g))
    assert f.scaled(-2.0).c2_norm == pytest.approx(2.0)


def test_select_by_name():
    assert [f.name for f in select(CP1, ["height", "x1"])] == ["height", "x1"]
    assert len(select(CP1, ["all"])) == 12
    with pytest.raises(ValueError, match="unknown test functions"):
        select(CP1, ["nope"])


def _fd_e_derivative(f, z, h=1e-6):
    """(1 + |z|^2) dF/dz by central differences of the sphere pullback."""
    F = lambda w: f.value(z_to_sphere(w))  # noqa: E731
    dx = (F(z + h) - F(z - h)) / (2 * h)
    dy = (F(z + 1j * h) - F(z - 1j * h)) / (2 * h)
    return (1 + abs(z) ** 2) * 0.5 * (dx - 1j * dy)


@given(st.complex_numbers(max_magnitude=3.0, allow_nan=False, allow_infinity=False))
def test_chart_derivative_matches_finite_differences(z):
    f = X1 * X3 + X2 * 0.5 + X3 ** 3
    s = np.abs(z) ** 2
    t, th = np.array([s / (1 + s)]), np.array([np.angle(z)])
    got = f.e_derivative(t, th)[0]
    assert abs(got - _fd_e_derivative(f, z)) < 1e-6


@given(st.complex_numbers(max_magnitude=3.0, allow_nan=False, allow_infinity=False))
def test_ddc_matches_chart_laplacian(z):
    # dd^c F relative to omega_FS equals (1+|z|^2)^2 * Laplacian(F) / 2
    f = X1 * X3 + X3 ** 3
    F = lambda w: f.value(z_to_sphere(w))  # noqa: E731
    h = 1e-4
    lap = (F(z + h) + F(z - h) + F(z + 1j * h) + F(z - 1j * h) - 4 * F(z)) / h ** 2
    s = np.abs(z) ** 2
    got = f.ddc_rel(np.array([s / (1 + s)]), np.array([np.angle(z)]))[0]
    assert abs(got - (1 + s) ** 2 * lap / 2) < 1e-4 * (1 + abs(got))


@given(st.lists(st.floats(-1, 1), min_size=3, max_size=3))
def test_gradient_matches_finite_differences(c):
    f = SpherePolynomial.from_dict({(1, 1, 0): c[0], (0, 0, 2): c[1], (2, 0, 1): c[2]})
    x = np.array([0.3, -0.4, 0.5])
    h = 1e-6
    fd = np.array([(f.value(x + h * e) - f.value(x - h * e)) / (2 * h) for e in np.eye(3)])
    assert np.allclose(f.grad(x), fd, atol=1e-7)
    hs = np.array([(f.grad(x + h * e) - f.grad(x - h * e)) / (2 * h) for e in np.eye(3)])
    assert np.allclose(f.hess(x), hs, atol=1e-6)


def test_product_bound_rule():
    f = make_test_function("p", (X3, X1), normalize=False)
    assert f.c0 == pytest.approx(1.02 * 1.02, rel=1e-3)
    g = make_test_function("p", (X3, X1))
    assert g.c2_norm == pytest.approx(1.0)
