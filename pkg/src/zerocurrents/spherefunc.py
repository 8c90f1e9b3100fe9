"""Closed-form smooth functions on CP1 and CP1 x CP1.

A CP1 factor is identified with the unit sphere through
``(x1 + i x2, x3) = (2z, |z|^2 - 1) / (1 + |z|^2)``; restrictions of polynomials
in (x1, x2, x3) are the smooth global functions used as metric perturbations and
as test functions.  Derivatives are exact.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping

import numpy as np

from .geometry import ModelSpace, params_to_sphere

Monomial = tuple[int, int, int]


def _e_coords(t: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """``(1+|z|^2) d/dz`` applied to (x1, x2, x3); shape (..., 3) complex."""
    e2 = np.exp(-2j * theta)
    ex1 = (1.0 - t) - t * e2
    ex2 = -1j * ((1.0 - t) + t * e2)
    ex3 = 2.0 * np.sqrt(np.clip(t * (1.0 - t), 0.0, None)) * np.exp(-1j * theta)
    return np.stack([ex1, ex2, ex3], axis=-1)


@dataclass(frozen=True)
class SpherePolynomial:
    """Polynomial in the ambient coordinates restricted to the unit sphere."""

    coeffs: tuple[tuple[Monomial, float], ...]

    @classmethod
    def from_dict(cls, d: Mapping[Monomial, float]) -> "SpherePolynomial":
        return cls(tuple(sorted((tuple(k), float(v)) for k, v in d.items() if v != 0.0)))

    @classmethod
    def coordinate(cls, i: int) -> "SpherePolynomial":
        e = [0, 0, 0]
        e[i] = 1
        return cls.from_dict({tuple(e): 1.0})

    @classmethod
    def constant(cls, c: float = 1.0) -> "SpherePolynomial":
        return cls.from_dict({(0, 0, 0): c})

    def __mul__(self, other: "SpherePolynomial | float") -> "SpherePolynomial":
        if not isinstance(other, SpherePolynomial):
            return SpherePolynomial.from_dict({k: float(other) * v for k, v in self.coeffs})
        out: dict[Monomial, float] = {}
        for k1, v1 in self.coeffs:
            for k2, v2 in other.coeffs:
                k = (k1[0] + k2[0], k1[1] + k2[1], k1[2] + k2[2])
                out[k] = out.get(k, 0.0) + v1 * v2
        return SpherePolynomial.from_dict(out)

    __rmul__ = __mul__

    def __add__(self, other: "SpherePolynomial") -> "SpherePolynomial":
        out = dict(self.coeffs)
        for k, v in other.coeffs:
            out[k] = out.get(k, 0.0) + v
        return SpherePolynomial.from_dict(out)

    def __pow__(self, k: int) -> "SpherePolynomial":
        out = SpherePolynomial.constant()
        for _ in range(k):
            out = out * self
        return out

    @property
    def degree(self) -> int:
        return max((sum(k) for k, _ in self.coeffs), default=0)

    def value(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1])
        for (a, b, c), v in self.coeffs:
            out = out + v * x[..., 0] ** a * x[..., 1] ** b * x[..., 2] ** c
        return out

    def grad(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        g = np.zeros(x.shape)
        for (a, b, c), v in self.coeffs:
            p = [x[..., 0], x[..., 1], x[..., 2]]
            e = (a, b, c)
            for i in range(3):
                if e[i] == 0:
                    continue
                term = v * e[i] * np.ones(x.shape[:-1])
                for j in range(3):
                    term = term * p[j] ** (e[j] - (1 if j == i else 0))
                g[..., i] += term
        return g

    def hess(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        h = np.zeros(x.shape + (3,))
        p = [x[..., 0], x[..., 1], x[..., 2]]
        for (a, b, c), v in self.coeffs:
            e = (a, b, c)
            for i in range(3):
                for k in range(3):
                    d = [0, 0, 0]
                    d[i] += 1
                    d[k] += 1
                    if any(e[j] < d[j] for j in range(3)):
                        continue
                    fac = v
                    for j in range(3):
                        for r in range(d[j]):
                            fac *= e[j] - r
                    term = fac * np.ones(x.shape[:-1])
                    for j in range(3):
                        term = term * p[j] ** (e[j] - d[j])
                    h[..., i, k] += term
        return h

    # -- holomorphic-chart derivatives -------------------------------------
    def e_derivative(self, t, theta) -> np.ndarray:
        """``(1+|z|^2) dF/dz`` in the standard chart."""
        x = params_to_sphere(t, theta)
        return np.einsum("...i,...i->...", self.grad(x), _e_coords(np.asarray(t), np.asarray(theta)))

    def ddc_rel(self, t, theta) -> np.ndarray:
        """dd^c F relative to omega_FS (real scalar field)."""
        t = np.asarray(t, dtype=float)
        theta = np.asarray(theta, dtype=float)
        x = params_to_sphere(t, theta)
        ex = _e_coords(t, theta)
        quad = np.einsum("...ik,...i,...k->...", self.hess(x), ex, np.conj(ex)).real
        lin = np.einsum("...i,...i->...", self.grad(x), x)
        return 2.0 * (quad - 2.0 * lin)

    # -- round-sphere seminorms --------------------------------------------
    def seminorms(self, x) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Pointwise |F|, |grad_S F|, ||Hess_S F|| on the unit round sphere."""
        x = np.asarray(x, dtype=float)
        g = self.grad(x)
        radial = np.einsum("...i,...i->...", g, x)
        tang = g - radial[..., None] * x
        proj = np.eye(3) - x[..., :, None] * x[..., None, :]
        hs = proj @ self.hess(x) @ proj - radial[..., None, None] * proj
        hnorm = np.abs(np.linalg.eigvalsh(hs)).max(axis=-1)
        return np.abs(self.value(x)), np.linalg.norm(tang, axis=-1), hnorm


def _sample_sphere(n: int = 160) -> np.ndarray:
    t = (np.arange(n) + 0.5) / n
    t = np.concatenate([[0.0, 1.0], t])
    th = 2 * np.pi * np.arange(2 * n) / (2 * n)
    tt, hh = np.meshgrid(t, th, indexing="ij")
    return params_to_sphere(tt.ravel(), hh.ravel())


@dataclass(frozen=True)
class Perturbation:
    """Smooth global potential on CP1 or CP1 x CP1, optionally with a
    per-factor multiple of the FS weight ``1/2 log(1+|z_a|^2)``.

    ``terms`` is a sum of products ``coef * F_1(x^(1)) * ... * F_n(x^(n))``
    (a ``None`` factor stands for the constant 1).  The FS-weight part is not a
    function on the compact space; it shifts the degree of the bundle.
    """

    n: int
    terms: tuple[tuple[float, tuple[SpherePolynomial | None, ...]], ...] = ()
    log_fs: tuple[float, ...] = field(default=())
    name: str = "custom"

    def __post_init__(self):
        if not self.log_fs:
            object.__setattr__(self, "log_fs", (0.0,) * self.n)
        if len(self.log_fs) != self.n:
            raise ValueError("log_fs needs one entry per factor")
        for _, fs in self.terms:
            if len(fs) != self.n:
                raise ValueError("each term needs one polynomial slot per factor")

    @property
    def is_zero(self) -> bool:
        return not self.terms and not any(self.log_fs)

    @property
    def smooth_is_zero(self) -> bool:
        return not self.terms

    @property
    def separable(self) -> bool:
        return all(sum(f is not None for f in fs) <= 1 for _, fs in self.terms)

    def value(self, t, theta) -> np.ndarray:
        """Smooth part only; t, theta have shape (P, n)."""
        t = np.asarray(t, dtype=float)
        theta = np.asarray(theta, dtype=float)
        out = np.zeros(t.shape[0])
        if not self.terms:
            return out
        x = params_to_sphere(t, theta)
        for c, fs in self.terms:
            term = np.full(t.shape[0], c)
            for a, f in enumerate(fs):
                if f is not None:
                    term = term * f.value(x[:, a])
            out = out + term
        return out

    def ddc_rel(self, t, theta) -> np.ndarray:
        """dd^c of the smooth part relative to the FS frame: (P,) on CP1,
        (P, 2, 2) Hermitian on CP1 x CP1."""
        t = np.asarray(t, dtype=float)
        theta = np.asarray(theta, dtype=float)
        P = t.shape[0]
        if self.n == 1:
            out = np.zeros(P)
            for c, (f,) in self.terms:
                if f is not None:
                    out = out + c * f.ddc_rel(t[:, 0], theta[:, 0])
            return out
        out = np.zeros((P, 2, 2), dtype=complex)
        x = params_to_sphere(t, theta)
        for c, fs in self.terms:
            vals, dd, ee = [], [], []
            for a in range(2):
                f = fs[a]
                if f is None:
                    vals.append(np.ones(P))
                    dd.append(np.zeros(P))
                    ee.append(np.zeros(P, dtype=complex))
                else:
                    vals.append(f.value(x[:, a]))
                    dd.append(f.ddc_rel(t[:, a], theta[:, a]))
                    ee.append(f.e_derivative(t[:, a], theta[:, a]))
            out[:, 0, 0] += c * dd[0] * vals[1]
            out[:, 1, 1] += c * vals[0] * dd[1]
            mix = 2.0 * c * ee[0] * np.conj(ee[1])
            out[:, 0, 1] += mix
            out[:, 1, 0] += np.conj(mix)
        return out

    @cached_property
    def _reference(self) -> tuple[float, float]:
        pts = _sample_sphere(64 if self.n == 2 else 160)
        t1, th1 = _params(pts)
        if self.n == 1:
            t, th = t1[:, None], th1[:, None]
        else:
            m = t1.size
            idx = np.arange(0, m, 7)
            t = np.stack([np.repeat(t1[idx], idx.size), np.tile(t1[idx], idx.size)], axis=1)
            th = np.stack([np.repeat(th1[idx], idx.size), np.tile(th1[idx], idx.size)], axis=1)
        sup = float(np.abs(self.value(t, th)).max()) if self.terms else 0.0
        if not self.terms:
            return sup, 0.0
        r = self.ddc_rel(t, th)
        if self.n == 1:
            dsup = float(np.abs(r).max())
        else:
            dsup = float(np.abs(np.linalg.eigvalsh(r)).max())
        return sup, dsup

    @property
    def sup_norm(self) -> float:
        """Sampled sup |smooth part| (dense sphere sampling)."""
        return self._reference[0]

    @property
    def ddc_sup(self) -> float:
        """Sampled sup of the largest |eigenvalue| of dd^c(smooth part)."""
        return self._reference[1]


def _params(x):
    from .geometry import sphere_to_params
    return sphere_to_params(x)


X1 = SpherePolynomial.coordinate(0)
X2 = SpherePolynomial.coordinate(1)
X3 = SpherePolynomial.coordinate(2)

_CP1_CATALOG = {
    "none": (),
    "height": ((1.0, (X3,)),),
    "tilt": ((1.0, (X1,)),),
    "swirl": ((0.6, (X1 * X3,)), (0.4, (X2,)), (0.3, (X3,))),
}

_CP1xCP1_CATALOG = {
    "none": (),
    "height": ((1.0, (X3, None)), (1.0, (None, X3))),
    "coupled": ((1.0, (X1, X1)), (0.5, (X3, X3))),
}


def catalog_names(space: ModelSpace) -> list[str]:
    base = _CP1_CATALOG if space.n == 1 else _CP1xCP1_CATALOG
    return sorted(base) + ["fs_log"]


def perturbation(name: str, space: ModelSpace) -> Perturbation:
    """Named perturbation potential from the shipped catalogue."""
    key = name.strip().lower()
    if key == "fs_log":
        return Perturbation(space.n, (), (1.0,) * space.n, name="fs_log")
    base = _CP1_CATALOG if space.n == 1 else _CP1xCP1_CATALOG
    if key not in base:
        raise ValueError(f"unknown perturbation {name!r} for {space}; "
                         f"choose from {catalog_names(space)}")
    return Perturbation(space.n, base[key], name=key)
