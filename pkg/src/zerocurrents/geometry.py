"""Model spaces CP1 and CP1 x CP1: charts, quadrature grids, densities and dd^c.

Every CP1 factor is parametrised by ``t = |z|^2 / (1 + |z|^2)`` in [0, 1] and the
angle ``theta = arg z``.  Under this substitution the normalised Fubini-Study
volume becomes ``dt dtheta / (2 pi)``, so uniform weights in (t, theta) carry the
FS mass exactly.

Convention: ``dd^c = (i / pi) d dbar``.  With it ``omega_FS = 1/2 dd^c log(1+|z|^2)``
has mass one and ``1/2 dd^c log|f|^2`` is the unit divisor of ``f``.

Smooth fields and currents are stored *relative to the Fubini-Study frame*:
top-degree densities as Radon-Nikodym derivatives against the normalised FS
volume, (1,1)-forms on CP1 x CP1 as Hermitian 2x2 coefficient matrices in the
orthonormal coframe of ``omega_FS,1 + omega_FS,2``.  :meth:`Density.lebesgue`
converts to densities against chart Lebesgue measure.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

MIN_RESOLUTION = 8


class SpaceKind(str, enum.Enum):
    CP1 = "CP1"
    CP1xCP1 = "CP1xCP1"


@dataclass(frozen=True)
class ModelSpace:
    kind: SpaceKind

    @property
    def n(self) -> int:
        """Complex dimension (equals the number of CP1 factors)."""
        return 1 if self.kind is SpaceKind.CP1 else 2

    @classmethod
    def parse(cls, name: str) -> "ModelSpace":
        key = name.strip().upper().replace("×", "X")
        for kind in SpaceKind:
            if kind.value.upper() == key:
                return cls(kind)
        raise ValueError(f"unknown model space {name!r} (expected CP1 or CP1xCP1)")

    def __str__(self) -> str:
        return self.kind.value


CP1 = ModelSpace(SpaceKind.CP1)
CP1xCP1 = ModelSpace(SpaceKind.CP1xCP1)


@dataclass(frozen=True)
class ChartPoint:
    """A point given in one of the standard affine charts of each CP1 factor.

    ``chart[a] == 0`` means the coordinate is ``z_a``; ``chart[a] == 1`` means it
    is ``w_a = 1 / z_a``.
    """

    chart: tuple[int, ...]
    coords: tuple[complex, ...]

    def __post_init__(self):
        if len(self.chart) != len(self.coords):
            raise ValueError("chart and coords must have the same length")
        if any(c not in (0, 1) for c in self.chart):
            raise ValueError("chart indices must be 0 or 1")
        if not all(np.isfinite(complex(c)) for c in self.coords):
            raise ValueError("chart coordinates must be finite")

    def params(self) -> tuple[np.ndarray, np.ndarray]:
        """Return (t, theta) arrays of shape (n,)."""
        return chart_to_params(np.array(self.chart), np.array(self.coords, dtype=complex))

    def to_chart(self, chart: tuple[int, ...]) -> "ChartPoint":
        coords = []
        for a, (c, u) in enumerate(zip(self.chart, self.coords)):
            if c == chart[a]:
                coords.append(complex(u))
            elif u == 0:
                raise ZeroDivisionError("point is the pole of the requested chart")
            else:
                coords.append(1.0 / complex(u))
        return ChartPoint(tuple(chart), tuple(coords))


def chart_to_params(chart: np.ndarray, coords: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Map chart coordinates (any shape, matching) to (t, theta)."""
    chart = np.asarray(chart)
    coords = np.asarray(coords, dtype=complex)
    s = np.abs(coords) ** 2
    t_direct = s / (1.0 + s)
    t_inv = 1.0 / (1.0 + s)
    t = np.where(chart == 0, t_direct, t_inv)
    theta = np.where(chart == 0, np.angle(coords), -np.angle(coords))
    return t, np.mod(theta, 2 * np.pi)


def params_to_z(t, theta) -> np.ndarray:
    """Affine coordinate z in the standard chart; +inf where t == 1."""
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.sqrt(t / (1.0 - t))
    z = r * np.exp(1j * np.asarray(theta))
    return np.where(t >= 1.0, np.inf + 0j, z)


def params_to_sphere(t, theta) -> np.ndarray:
    """Unit-sphere point (x1, x2, x3) for (t, theta); last axis has length 3.

    ``x3 = 2t - 1`` so z = 0 is the south pole and z = infinity the north pole.
    """
    t = np.asarray(t, dtype=float)
    theta = np.asarray(theta, dtype=float)
    rho = 2.0 * np.sqrt(np.clip(t * (1.0 - t), 0.0, None))
    return np.stack([rho * np.cos(theta), rho * np.sin(theta), 2.0 * t - 1.0], axis=-1)


def sphere_to_params(x) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float)
    t = np.clip((x[..., 2] + 1.0) / 2.0, 0.0, 1.0)
    theta = np.mod(np.arctan2(x[..., 1], x[..., 0]), 2 * np.pi)
    return t, theta


def chordal_distance(x, y) -> np.ndarray:
    """Euclidean distance of unit-sphere points (..., n, 3), max over factors."""
    return np.linalg.norm(np.asarray(x) - np.asarray(y), axis=-1).max(axis=-1)


def fs_density(space: ModelSpace, point) -> float | np.ndarray:
    """Density of the normalised FS volume against chart Lebesgue measure.

    ``point`` is a :class:`ChartPoint` or an array of complex chart coordinates
    whose last axis has length ``space.n`` (for CP1 a plain array is accepted).
    The formula is chart independent because inversion is an FS isometry.
    """
    if isinstance(point, ChartPoint):
        coords = np.array(point.coords, dtype=complex)
        if len(coords) != space.n:
            raise ValueError("point dimension does not match the space")
        return float(np.prod(1.0 / (np.pi * (1.0 + np.abs(coords) ** 2) ** 2)))
    coords = np.asarray(point, dtype=complex)
    with np.errstate(over="ignore"):
        per = 1.0 / (np.pi * (1.0 + np.abs(coords) ** 2) ** 2)
    if space.n == 1 and (coords.ndim == 0 or coords.shape[-1] != 1):
        return per
    return np.prod(per, axis=-1)


@dataclass(frozen=True, eq=False)
class QuadratureGrid:
    """Tensor-product quadrature for the normalised FS volume.

    ``rule='midpoint'`` gives equal weights (uniform t, uniform theta);
    ``rule='gauss'`` uses Gauss-Legendre nodes in t with uniform theta and is
    exact for polynomials in t of degree < 2 n_t.
    """

    space: ModelSpace
    rule: str
    n_t: int
    n_theta: int
    t: np.ndarray  # (nodes, n)
    theta: np.ndarray  # (nodes, n)
    weights: np.ndarray  # (nodes,)
    t_axis: np.ndarray  # (n_t,) one factor
    t_weights: np.ndarray  # (n_t,) one factor, sums to 1

    @property
    def n(self) -> int:
        return self.space.n

    @property
    def size(self) -> int:
        return self.weights.shape[0]

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n_t, self.n_theta) * self.n

    @cached_property
    def sphere(self) -> np.ndarray:
        """(nodes, n, 3) unit-sphere points."""
        return params_to_sphere(self.t, self.theta)

    @cached_property
    def z(self) -> np.ndarray:
        return params_to_z(self.t, self.theta)

    def key(self) -> tuple:
        return (str(self.space), self.rule, self.n_t, self.n_theta)

    def same_as(self, other: "QuadratureGrid") -> bool:
        return self is other or self.key() == other.key()

    def integrate(self, values) -> float | np.ndarray:
        """Integrate node values (leading axis = nodes) against FS volume."""
        return np.tensordot(self.weights, np.asarray(values), axes=(0, 0))

    def to_csv_rows(self, values=None):
        """Rows (chart, coords..., weight[, value]) for external plotting."""
        z = self.z
        for i in range(self.size):
            row = [0]
            for a in range(self.n):
                row += [float(z[i, a].real), float(z[i, a].imag)]
            row.append(float(self.weights[i]))
            if values is not None:
                row.append(float(np.asarray(values)[i]))
            yield row


def _factor_rule(rule: str, n_t: int) -> tuple[np.ndarray, np.ndarray]:
    if rule == "midpoint":
        t = (np.arange(n_t) + 0.5) / n_t
        w = np.full(n_t, 1.0 / n_t)
    elif rule == "gauss":
        x, w = np.polynomial.legendre.leggauss(n_t)
        t = 0.5 * (x + 1.0)
        w = 0.5 * w
    else:
        raise ValueError(f"unknown quadrature rule {rule!r}")
    return t, w


def build_grid(space: ModelSpace, resolution: int, rule: str = "gauss",
               n_theta: int | None = None) -> QuadratureGrid:
    """Quadrature grid with ``resolution`` t-nodes and angles per CP1 factor.

    The weights sum to one; the constant function is integrated exactly.
    """
    if int(resolution) != resolution or resolution < MIN_RESOLUTION:
        raise ValueError(
            f"resolution {resolution} is below the minimum {MIN_RESOLUTION}; "
            "quadrature would be unusably coarse")
    n_t = int(resolution)
    n_th = int(n_theta) if n_theta is not None else n_t
    if n_th < MIN_RESOLUTION:
        raise ValueError(f"angular resolution {n_th} is below the minimum {MIN_RESOLUTION}")
    t1, w1 = _factor_rule(rule, n_t)
    w1 = w1 / math.fsum(w1)
    th1 = 2 * np.pi * np.arange(n_th) / n_th
    tt, hh = np.meshgrid(t1, th1, indexing="ij")
    ww = np.repeat(w1, n_th) / n_th
    t_f, th_f = tt.ravel(), hh.ravel()
    if space.n == 1:
        t, theta, weights = t_f[:, None], th_f[:, None], ww
    else:
        m = t_f.size
        t = np.stack([np.repeat(t_f, m), np.tile(t_f, m)], axis=1)
        theta = np.stack([np.repeat(th_f, m), np.tile(th_f, m)], axis=1)
        weights = np.outer(ww, ww).ravel()
    weights = weights / weights.sum()
    return QuadratureGrid(space, rule, n_t, n_th, t, theta, weights, t1, w1)


@dataclass(frozen=True, eq=False)
class Density:
    """A smooth current sampled on a grid, stored relative to the FS frame.

    ``kind='top'``: values (nodes,) = density against the normalised FS volume.
    ``kind='11'``: on CP1 the same as top; on CP1 x CP1 values (nodes, 2, 2)
    Hermitian coefficient matrices.  ``mixed=False`` marks fields whose
    off-diagonal (mixed) entries are unknown, e.g. finite-difference dd^c.
    """

    grid: QuadratureGrid
    values: np.ndarray
    kind: str = "top"
    mixed: bool = True

    def __post_init__(self):
        if self.kind not in ("top", "11"):
            raise ValueError("kind must be 'top' or '11'")
        n = self.grid.n
        expect = (self.grid.size,) if (self.kind == "top" or n == 1) else (self.grid.size, 2, 2)
        if self.values.shape != expect:
            raise ValueError(f"density shape {self.values.shape} does not match {expect}")

    @property
    def is_matrix(self) -> bool:
        return self.values.ndim == 3

    def _check(self, other: "Density"):
        if not self.grid.same_as(other.grid):
            raise ValueError("densities live on different grids")
        if self.values.shape != other.values.shape:
            raise ValueError("densities have different shapes")

    def __add__(self, other: "Density") -> "Density":
        self._check(other)
        return Density(self.grid, self.values + other.values, self.kind,
                       self.mixed and other.mixed)

    def __sub__(self, other: "Density") -> "Density":
        self._check(other)
        return Density(self.grid, self.values - other.values, self.kind,
                       self.mixed and other.mixed)

    def scale(self, a: float) -> "Density":
        return Density(self.grid, a * self.values, self.kind, self.mixed)

    def trace(self) -> np.ndarray:
        """Pointwise T wedge omega^(n-1) / (omega^n / n!) (real)."""
        if self.is_matrix:
            return np.real(self.values[:, 0, 0] + self.values[:, 1, 1])
        return np.real(self.values)

    def trace_norm(self) -> np.ndarray:
        """Pointwise sum of |eigenvalues| of the coefficient matrix."""
        if self.is_matrix:
            if not self.mixed:
                return np.abs(self.values[:, 0, 0].real) + np.abs(self.values[:, 1, 1].real)
            return np.abs(np.linalg.eigvalsh(self.values)).sum(axis=1)
        return np.abs(np.real(self.values))

    def mass(self) -> float:
        """Total mass: integral of T against omega^(n-1) (top: plain integral)."""
        return float(self.grid.integrate(self.trace()))

    def lebesgue(self) -> np.ndarray:
        """Values as densities against chart Lebesgue measure (standard chart)."""
        with np.errstate(over="ignore"):
            per = 1.0 / (np.pi * (1.0 + np.abs(self.grid.z) ** 2) ** 2)  # (nodes, n)
        if self.is_matrix:
            scale = np.sqrt(per[:, :, None] * per[:, None, :])
            return self.values * scale
        return np.real(self.values) * np.prod(per, axis=1)


def fs_form(grid: QuadratureGrid, factor: int | None = None) -> Density:
    """The normalised Kähler form: omega_FS on CP1; on CP1 x CP1 the pullback
    of omega_FS from ``factor`` (0 or 1), or their sum when ``factor`` is None."""
    if grid.n == 1:
        return Density(grid, np.ones(grid.size), "11")
    m = np.zeros((grid.size, 2, 2), dtype=complex)
    for a in range(2):
        if factor is None or factor == a:
            m[:, a, a] = 1.0
    return Density(grid, m, "11")


def volume(grid: QuadratureGrid) -> Density:
    return Density(grid, np.ones(grid.size), "top")


# ---------------------------------------------------------------------------
# finite-difference dd^c
# ---------------------------------------------------------------------------

_REGULAR_MODES = 8


def _ghost_pad(v: np.ndarray) -> np.ndarray:
    """Pad axis -2 with quadratically extrapolated ghost cells."""
    lo = 3 * v[..., :1, :] - 3 * v[..., 1:2, :] + v[..., 2:3, :]
    hi = 3 * v[..., -1:, :] - 3 * v[..., -2:-1, :] + v[..., -3:-2, :]
    return np.concatenate([lo, v, hi], axis=-2)


def _ddc_factor(u: np.ndarray, n_t: int, n_th: int, h: float) -> np.ndarray:
    """Relative dd^c on one CP1 factor; axes -2, -1 of ``u`` are (t, theta).

    Angular derivatives are spectral.  The axisymmetric mode uses the flux
    form with zero flux through the poles (exact discrete Stokes).  Low angular
    modes ``m`` are written as ``(t(1-t))^(|m|/2) v`` with ``v`` regular at the
    poles and differentiated by central differences; higher modes, which are
    negligible near the poles for smooth data, use the plain flux form.
    """
    t = (np.arange(n_t) + 0.5) * h
    q = t * (1.0 - t)
    faces = np.arange(1, n_t) * h
    coef = faces * (1.0 - faces)
    U = np.fft.fft(u, axis=-1)
    m = np.fft.fftfreq(n_th, d=1.0 / n_th)
    am = np.abs(m)

    flux = coef[:, None] * np.diff(U, axis=-2) / h
    pad = np.zeros(U.shape[:-2] + (1, n_th), dtype=complex)
    flux = np.concatenate([pad, flux, pad], axis=-2)
    out = 2.0 * np.diff(flux, axis=-2) / h - (m ** 2)[None, :] * U / (2.0 * q[:, None])

    reg = (am >= 1) & (am <= _REGULAR_MODES)
    if reg.any() and n_t >= 4:
        k = am[reg] / 2.0
        qk = q[:, None] ** k[None, :]
        v = U[..., reg] / qk
        vp = _ghost_pad(v)
        d1 = (vp[..., 2:, :] - vp[..., :-2, :]) / (2 * h)
        d2 = (vp[..., 2:, :] - 2 * vp[..., 1:-1, :] + vp[..., :-2, :]) / h ** 2
        lv = (2 * q[:, None] * d2 + 2 * (2 * k + 1)[None, :] * (1 - 2 * t)[:, None] * d1
              - (8 * k ** 2 + 4 * k)[None, :] * v)
        out[..., reg] = qk * lv
    return np.fft.ifft(out, axis=-1).real


def ddc(u, grid: QuadratureGrid) -> Density:
    """Finite-difference dd^c of a smooth global function sampled on ``grid``.

    In (t, theta) coordinates dd^c u relative to omega_FS is
    ``2 d/dt(t(1-t) du/dt) + d^2u/dtheta^2 / (2 t (1-t))``; the discretisation
    (second order in t, spectral in theta) keeps the discrete integral exactly
    zero.  Requires a midpoint grid.  On CP1 x CP1 only the per-factor
    diagonal entries are produced and the result is flagged ``mixed=False``.

    Potentials with a logarithmic pole at infinity (metric weights) must be
    split upstream into a multiple of log(1+|z|^2) plus a smooth part; see
    :func:`ddc_weight`.
    """
    if grid.rule != "midpoint":
        raise ValueError("finite-difference dd^c needs a midpoint (uniform) grid")
    u = np.asarray(u, dtype=float)
    if u.shape != (grid.size,):
        raise ValueError("field must have one value per grid node")
    if not np.all(np.isfinite(u)):
        raise ValueError("dd^c input contains non-finite values; regularise upstream")
    h = 1.0 / grid.n_t
    if grid.n == 1:
        vals = _ddc_factor(u.reshape(grid.n_t, grid.n_theta), grid.n_t, grid.n_theta, h)
        return Density(grid, vals.ravel(), "11")
    shp = (grid.n_t, grid.n_theta, grid.n_t, grid.n_theta)
    uu = u.reshape(shp)
    d1 = _ddc_factor(np.moveaxis(uu, (0, 1), (-2, -1)), grid.n_t, grid.n_theta, h)
    d1 = np.moveaxis(d1, (-2, -1), (0, 1))
    d2 = _ddc_factor(uu, grid.n_t, grid.n_theta, h)
    m = np.zeros((grid.size, 2, 2), dtype=complex)
    m[:, 0, 0] = d1.ravel()
    m[:, 1, 1] = d2.ravel()
    return Density(grid, m, "11", mixed=False)


def ddc_weight(smooth_part, log_coeffs, grid: QuadratureGrid) -> Density:
    """dd^c of ``sum_a log_coeffs[a] * log(1+|z_a|^2) + smooth_part``.

    The logarithmic part is differentiated in closed form (it contributes
    ``2 * log_coeffs[a] * omega_FS,a``); the smooth part by finite differences.
    """
    out = ddc(smooth_part, grid)
    coeffs = np.atleast_1d(np.asarray(log_coeffs, dtype=float))
    if grid.n == 1:
        return Density(grid, out.values + 2.0 * coeffs[0], "11")
    vals = out.values.copy()
    for a in range(2):
        vals[:, a, a] += 2.0 * coeffs[a]
    return Density(grid, vals, "11", mixed=out.mixed)
