import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import fs_radial_integral
from zerocurrents.geometry import (CP1, CP1xCP1, ChartPoint, Density, ModelSpace, build_grid,
                                   chart_to_params, ddc, ddc_weight, fs_density, fs_form,
                                   params_to_sphere, params_to_z, sphere_to_params, volume)
from zerocurrents.spherefunc import X1, X3


def test_model_space_dimensions():
    assert CP1.n == 1 and CP1xCP1.n == 2
    assert ModelSpace.parse("cp1xcp1") == CP1xCP1
    assert ModelSpace.parse("CP1×CP1") == CP1xCP1
    with pytest.raises(ValueError):
        ModelSpace.parse("CP2")


def test_grid_size_and_mass():
    g = build_grid(CP1, 64)
    assert g.size == 64 ** 2
    assert abs(g.weights.sum() - 1.0) < 1e-12
    assert g.integrate(np.ones(g.size)) == pytest.approx(1.0, abs=1e-14)


@given(res=st.integers(8, 90), rule=st.sampled_from(["gauss", "midpoint"]))
def test_grid_mass_any_resolution(res, rule):
    g = build_grid(CP1, res, rule)
    assert abs(g.weights.sum() - 1.0) < 1e-12
    assert np.all(g.weights >= 0)


def test_product_grid_mass():
    g = build_grid(CP1xCP1, 12, "midpoint")
    assert g.size == 12 ** 4
    assert abs(g.weights.sum() - 1.0) < 1e-12


def test_mean_of_t_matches_quadrature_oracle():
    g = build_grid(CP1, 128)
    ref = fs_radial_integral(lambda r: r * r / (1 + r * r))
    assert ref == pytest.approx(0.5, abs=1e-10)
    assert abs(g.integrate(g.t[:, 0]) - ref) < 1e-10


def test_low_resolution_rejected():
    with pytest.raises(ValueError, match="minimum"):
        build_grid(CP1, 7)
    with pytest.raises(ValueError, match="angular"):
        build_grid(CP1, 16, n_theta=4)


def test_midpoint_rule_is_second_order():
    exact = math.sinh(1.0)  # integral of exp(2t - 1) over [0, 1]
    errs = []
    for res in (16, 32, 64, 128):
        g = build_grid(CP1, res, "midpoint")
        errs.append(abs(g.integrate(np.exp(2 * g.t[:, 0] - 1)) - exact))
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all((ratios >= 3) & (ratios <= 5))


def test_fs_density_values():
    assert fs_density(CP1, ChartPoint((0,), (0j,))) == pytest.approx(1 / math.pi)
    assert fs_density(CP1xCP1, ChartPoint((0, 0), (0j, 0j))) == pytest.approx(1 / math.pi ** 2)
    assert fs_density(CP1, np.array([1e8])) < 1e-30
    total = fs_radial_integral(lambda r: 1.0)
    assert total == pytest.approx(1.0, abs=1e-12)
    # polar integration of the density itself
    dens = lambda r: float(fs_density(CP1, complex(r)))  # noqa: E731
    from scipy import integrate
    val, _ = integrate.quad(lambda r: 2 * math.pi * r * dens(r), 0, np.inf)
    assert val == pytest.approx(1.0, abs=1e-10)


def test_chart_transitions():
    p = ChartPoint((0,), (2 + 1j,))
    q = p.to_chart((1,))
    assert q.coords[0] == pytest.approx(1 / (2 + 1j))
    t1, h1 = p.params()
    t2, h2 = q.params()
    assert np.allclose(t1, t2) and np.allclose(h1, h2)
    with pytest.raises(ZeroDivisionError):
        ChartPoint((0,), (0j,)).to_chart((1,))
    with pytest.raises(ValueError):
        ChartPoint((0,), (complex("inf"),))
    with pytest.raises(ValueError):
        ChartPoint((2,), (0j,))


@given(st.floats(0.001, 0.999), st.floats(0, 6.28))
def test_param_sphere_roundtrip(t, th):
    x = params_to_sphere(np.array([t]), np.array([th]))
    t2, th2 = sphere_to_params(x)
    assert np.allclose(t2, t) and np.allclose(np.cos(th2), np.cos(th))
    z = params_to_z(np.array([t]), np.array([th]))
    t3, _ = chart_to_params(np.array([0]), z)
    assert np.allclose(t3, t)


def test_ddc_of_constant_is_zero(mid_grid):
    d = ddc(np.full(mid_grid.size, 3.7), mid_grid)
    assert np.abs(d.values).max() < 1e-12


def test_ddc_of_fs_potential():
    g = build_grid(CP1, 256, "midpoint")
    u = -np.log1p(-g.t[:, 0])  # log(1 + |z|^2), singular at infinity
    d = ddc(u, g)
    chart = g.t[:, 0] <= 0.5  # closed unit disc of the standard chart
    assert np.abs(d.values[chart] / 2.0 - 1.0).max() < 1e-3
    # globally the logarithmic part goes through the closed-form split
    split = ddc_weight(np.zeros(g.size), 1.0, g)
    assert np.abs(split.values / 2.0 - 1.0).max() < 1e-12


def test_ddc_of_pluriharmonic_real_part_on_patch():
    g = build_grid(CP1, 256, "midpoint")
    z = g.z[:, 0]
    u = np.where(np.abs(z) < 3, z.real, 0.0)
    d = ddc(u, g)
    patch = (np.abs(z) < 0.8)
    assert np.abs(d.values[patch]).max() < 1e-3


def test_ddc_matches_closed_form_height(mid_grid):
    t = mid_grid.t[:, 0]
    d = ddc(2 * t - 1, mid_grid)
    assert np.abs(d.values - 4 * (1 - 2 * t)).max() < 1e-8


@given(st.lists(st.floats(-2, 2), min_size=4, max_size=4))
def test_ddc_stokes_and_linearity(c):
    g = build_grid(CP1, 48, "midpoint")
    x = g.sphere[:, 0]
    u = c[0] * x[:, 2] + c[1] * x[:, 0] * x[:, 2] + c[2] * np.exp(x[:, 1])
    v = np.sin(2 * x[:, 0]) + c[3] * x[:, 2] ** 3
    du, dv = ddc(u, g), ddc(v, g)
    assert abs(g.integrate(du.values)) < 1e-6
    lin = ddc(2.5 * u - 1.5 * v, g).values
    assert np.allclose(lin, 2.5 * du.values - 1.5 * dv.values, rtol=0, atol=1e-9)


def test_ddc_fd_agrees_with_exact_derivative():
    g = build_grid(CP1, 256, "midpoint")
    f = X1 * X3 + X3 * X3 * X3
    d = ddc(f.value(g.sphere[:, 0]), g)
    exact = f.ddc_rel(g.t[:, 0], g.theta[:, 0])
    assert np.abs(d.values - exact).max() < 2e-3 * np.abs(exact).max()


def test_ddc_input_checks(mid_grid):
    with pytest.raises(ValueError, match="non-finite"):
        ddc(np.full(mid_grid.size, np.nan), mid_grid)
    with pytest.raises(ValueError, match="midpoint"):
        ddc(np.zeros(64 * 64), build_grid(CP1, 64))
    with pytest.raises(ValueError):
        ddc(np.zeros(3), mid_grid)


def test_ddc_on_product_space_is_diagonal():
    g = build_grid(CP1xCP1, 16, "midpoint")
    u = 2 * g.t[:, 0] - 1
    d = ddc(u, g)
    assert not d.mixed
    assert np.allclose(d.values[:, 0, 0], 4 * (1 - 2 * g.t[:, 0]), atol=1e-8)
    assert np.abs(d.values[:, 1, 1]).max() < 1e-10


def test_ddc_weight_adds_closed_form_part(mid_grid):
    d = ddc_weight(np.zeros(mid_grid.size), 0.5, mid_grid)
    assert np.allclose(d.values, 1.0)
    assert d.mass() == pytest.approx(1.0)


def test_density_forms_and_masses(grid2):
    assert fs_form(grid2, 0).mass() == pytest.approx(1.0)
    assert fs_form(grid2).mass() == pytest.approx(2.0)
    assert volume(grid2).mass() == pytest.approx(1.0)
    with pytest.raises(ValueError):
        Density(grid2, np.ones(3))


def test_density_lebesgue_conversion(grid64):
    lb = fs_form(grid64).lebesgue()
    assert np.allclose(lb, fs_density(CP1, grid64.z[:, 0]))


def test_grid_csv_rows(grid64):
    rows = list(build_grid(CP1, 8).to_csv_rows(np.arange(64.0)))
    assert len(rows) == 64 and len(rows[0]) == 5
    assert sum(r[3] for r in rows) == pytest.approx(1.0)
