"""C^2 test functions and the fixed 12-element dictionary.

The C^2 norm used throughout is ``sup|phi| + sup|grad phi| + sup||Hess phi||``
measured on the round unit sphere of each factor (product metric on
CP1 x CP1).  Stored bounds come from dense sampling with a 2% safety margin.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .geometry import ModelSpace, QuadratureGrid, params_to_sphere
from .spherefunc import X1, X2, X3, SpherePolynomial, _sample_sphere

_MARGIN = 1.02


@dataclass(frozen=True)
class TestFunction:
    """``scale * F_1(x^(1)) * ... * F_n(x^(n))`` with certified seminorm bounds.

    A ``None`` factor is the constant 1.  ``c0, c1, c2`` bound the sup of the
    value, gradient and Hessian norms; ``c2_norm`` is their sum.
    """

    __test__ = False  # not a pytest class

    name: str
    factors: tuple[SpherePolynomial | None, ...]
    scale: float
    c0: float
    c1: float
    c2: float

    @property
    def n(self) -> int:
        return len(self.factors)

    @property
    def c2_norm(self) -> float:
        return self.c0 + self.c1 + self.c2

    def __call__(self, x) -> np.ndarray:
        """Evaluate at sphere points of shape (..., n, 3)."""
        x = np.asarray(x, dtype=float)
        out = np.full(x.shape[:-2], self.scale, dtype=float)
        for a, f in enumerate(self.factors):
            if f is not None:
                out = out * f.value(x[..., a, :])
        return out

    def on_grid(self, grid: QuadratureGrid) -> np.ndarray:
        return self(grid.sphere)

    def at_params(self, t, theta) -> np.ndarray:
        return self(params_to_sphere(t, theta))

    def scaled(self, a: float) -> "TestFunction":
        b = abs(a)
        return TestFunction(f"{a:g}*{self.name}", self.factors, self.scale * a,
                            self.c0 * b, self.c1 * b, self.c2 * b)

    def normalized(self) -> "TestFunction":
        """Rescale so that the stored C^2 norm equals one."""
        s = self.c2_norm
        if s == 0:
            return self
        out = self.scaled(1.0 / s)
        return TestFunction(self.name, out.factors, out.scale, out.c0, out.c1, out.c2)

    def pointwise_seminorms(self, x) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Exact |phi|, |grad phi|, ||Hess phi|| at sphere points (..., n, 3)."""
        x = np.asarray(x, dtype=float)
        vals, grads, hesses = [], [], []
        for a, f in enumerate(self.factors):
            xa = x[..., a, :]
            if f is None:
                vals.append(np.ones(x.shape[:-2]))
                grads.append(np.zeros(x.shape[:-2] + (3,)))
                hesses.append(np.zeros(x.shape[:-2] + (3, 3)))
                continue
            g = f.grad(xa)
            radial = np.einsum("...i,...i->...", g, xa)
            proj = np.eye(3) - xa[..., :, None] * xa[..., None, :]
            vals.append(f.value(xa))
            grads.append(g - radial[..., None] * xa)
            hesses.append(proj @ f.hess(xa) @ proj - radial[..., None, None] * proj)
        s = abs(self.scale)
        if self.n == 1:
            hn = np.abs(np.linalg.eigvalsh(hesses[0])).max(axis=-1)
            return s * np.abs(vals[0]), s * np.linalg.norm(grads[0], axis=-1), s * hn
        v0, v1 = vals
        grad = np.concatenate([grads[0] * v1[..., None], grads[1] * v0[..., None]], axis=-1)
        top = np.concatenate([hesses[0] * v1[..., None, None],
                              grads[0][..., :, None] * grads[1][..., None, :]], axis=-1)
        bot = np.concatenate([grads[1][..., :, None] * grads[0][..., None, :],
                              hesses[1] * v0[..., None, None]], axis=-1)
        h = np.concatenate([top, bot], axis=-2)
        hn = np.abs(np.linalg.eigvalsh(h)).max(axis=-1)
        return s * np.abs(v0 * v1), s * np.linalg.norm(grad, axis=-1), s * hn


@lru_cache(maxsize=None)
def _factor_bounds(f: SpherePolynomial | None) -> tuple[float, float, float]:
    if f is None:
        return 1.0, 0.0, 0.0
    a, b, c = f.seminorms(_sample_sphere(200))
    return float(a.max()) * _MARGIN, float(b.max()) * _MARGIN, float(c.max()) * _MARGIN


def make_test_function(name: str, factors, scale: float = 1.0,
                       normalize: bool = True) -> TestFunction:
    """Build a product test function, certify its bounds, optionally normalise.

    Product-rule bounds: ``|FG| <= |F||G|``, ``|grad| <= |F'||G| + |F||G'|``,
    ``||Hess|| <= |F''||G| + |F||G''| + |F'||G'|``.
    """
    factors = tuple(factors)
    bounds = [_factor_bounds(f) for f in factors]
    if len(bounds) == 1:
        c0, c1, c2 = bounds[0]
    else:
        (a0, a1, a2), (b0, b1, b2) = bounds
        c0, c1, c2 = a0 * b0, a1 * b0 + a0 * b1, a2 * b0 + a0 * b2 + a1 * b1
    s = abs(scale)
    tf = TestFunction(name, factors, float(scale), c0 * s, c1 * s, c2 * s)
    return tf.normalized() if normalize else tf


def constant_function(space: ModelSpace, value: float = 1.0) -> TestFunction:
    return TestFunction("one", (None,) * space.n, float(value), abs(value), 0.0, 0.0)


def radial_t(space: ModelSpace) -> TestFunction:
    """``t = |z|^2 / (1+|z|^2) = (1 + x3) / 2`` on the first factor (unnormalised)."""
    f = SpherePolynomial.from_dict({(0, 0, 0): 0.5, (0, 0, 1): 0.5})
    return make_test_function("t", (f,) + (None,) * (space.n - 1), normalize=False)


def _bump(e, k: int) -> SpherePolynomial:
    e = np.asarray(e, dtype=float)
    e = e / np.linalg.norm(e)
    lin = SpherePolynomial.from_dict({(0, 0, 0): 0.5, (1, 0, 0): 0.5 * e[0],
                                      (0, 1, 0): 0.5 * e[1], (0, 0, 1): 0.5 * e[2]})
    return lin ** k


_CAP4 = _bump((0.0, 0.0, 1.0), 4)
_P2 = X3 * X3 + SpherePolynomial.constant(-1.0 / 3.0)


def _cp1_entries():
    return [
        ("height", (X3,)),
        ("zonal2", (_P2,)),
        ("cap4", (_CAP4,)),
        ("zonal3", (X3 ** 3,)),
        ("x1", (X1,)),
        ("x2", (X2,)),
        ("saddle", (X1 * X1 + X2 * X2 * -1.0,)),
        ("x1x2", (X1 * X2,)),
        ("x1x3", (X1 * X3,)),
        ("bump_a", (_bump((0.6, 0.0, 0.8), 6),)),
        ("bump_b", (_bump((-0.48, 0.64, -0.6), 6),)),
        ("bump_c", (_bump((0.0, -1.0, 0.0), 8),)),
    ]


def _cp1xcp1_entries():
    return [
        ("height_1", (X3, None)),
        ("height_2", (None, X3)),
        ("height_12", (X3, X3)),
        ("x1_1", (X1, None)),
        ("x2_2", (None, X2)),
        ("x1x1", (X1, X1)),
        ("zonal2_1", (_P2, None)),
        ("x1x3_2", (None, X1 * X3)),
        ("cap4_1", (_CAP4, None)),
        ("bump_ab", (_bump((0.6, 0.0, 0.8), 4), _bump((-0.48, 0.64, -0.6), 4))),
        ("x2_x3", (X2, X3)),
        ("saddle_1", (X1 * X1 + X2 * X2 * -1.0, None)),
    ]


@lru_cache(maxsize=None)
def dictionary(space: ModelSpace) -> tuple[TestFunction, ...]:
    """The fixed 12-element dictionary of C^2-normalised test functions."""
    entries = _cp1_entries() if space.n == 1 else _cp1xcp1_entries()
    return tuple(make_test_function(name, fs) for name, fs in entries)


def select(space: ModelSpace, names=None) -> tuple[TestFunction, ...]:
    """Dictionary entries by name (all when ``names`` is empty or ``all``)."""
    full = dictionary(space)
    if not names or list(names) == ["all"]:
        return full
    by_name = {f.name: f for f in full}
    missing = [n for n in names if n not in by_name]
    if missing:
        raise ValueError(f"unknown test functions {missing}; available: {sorted(by_name)}")
    return tuple(by_name[n] for n in names)
