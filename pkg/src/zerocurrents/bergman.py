"""Section bases, Gram matrices, orthonormal frames, Bergman functions and
Fubini-Study currents.

Sections of O(D) are polynomials of degree <= D in the affine coordinate.  The
basis is the pre-scaled monomials ``alpha_j z^j`` with
``alpha_j = sqrt(C(D, j) (D + 1))``, orthonormal for the FS metric.  Pointwise
we work with *unitary values*: the section times ``(1+|z|^2)^(-D/2) e^{-tau psi0}``,
so ``|value| = |s|_h``; these are evaluated through logarithms and never
overflow.

Frames are ``S = L^{-1} m`` where ``G = L L^*`` is the Gram matrix of the
pre-scaled monomials ``m``.
"""
from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import cholesky, solve_triangular
from scipy.special import gammaln, xlogy

from .errors import NumericalError
from .geometry import (CP1, MIN_RESOLUTION, ChartPoint, Density, ModelSpace, QuadratureGrid,
                       build_grid)
from .metrics import MetricWeight
from .spherefunc import Perturbation

CHUNK = 4096
COND_WARN = 1e6
COND_ABORT = 1e10


# ---------------------------------------------------------------------------
# bases and pointwise values
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SectionBasis:
    space: ModelSpace
    degrees: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "degrees", tuple(int(d) for d in self.degrees))
        if len(self.degrees) != self.space.n:
            raise ValueError(f"{self.space} needs {self.space.n} degree(s)")
        if any(d < 0 for d in self.degrees):
            raise ValueError("degrees must be nonnegative")

    @property
    def dim(self) -> int:
        return int(np.prod([d + 1 for d in self.degrees]))

    @property
    def exponents(self) -> np.ndarray:
        """(N, n) exponent table; CP1 x CP1 ordering is (j1, j2) row-major."""
        grids = np.meshgrid(*[np.arange(d + 1) for d in self.degrees], indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)


def log_alpha(D: int) -> np.ndarray:
    """``log sqrt(C(D, j) (D+1))`` for j = 0..D."""
    j = np.arange(D + 1)
    return 0.5 * (gammaln(D + 1) - gammaln(j + 1) - gammaln(D - j + 1) + math.log(D + 1))


def factor_values(D: int, t, theta) -> np.ndarray:
    """FS-unitary values of the pre-scaled monomials of O(D); shape (P, D+1)."""
    t = np.asarray(t, dtype=float)[:, None]
    theta = np.asarray(theta, dtype=float)[:, None]
    j = np.arange(D + 1)[None, :]
    la = log_alpha(D)[None, :] + xlogy(j / 2.0, t) + xlogy((D - j) / 2.0, 1.0 - t)
    return np.exp(la + 1j * j * theta)


def factor_derivatives(D: int, t, theta) -> np.ndarray:
    """Covariant derivative values of the pre-scaled monomials.

    ``alpha_j (j - D t) t^((j-1)/2) (1-t)^((D-j-1)/2) e^{i(j-1)theta}``: the
    chart derivative ``(1+|z|^2) d/dz`` corrected by a multiple of the value
    vector (the Chern connection of the FS metric).  The correction is removed
    by the projections below, and it keeps the entries bounded at both poles.
    """
    t = np.asarray(t, dtype=float)
    theta = np.asarray(theta, dtype=float)
    P = t.shape[0]
    out = np.zeros((P, D + 1), dtype=complex)
    if D == 0:
        return out
    la = log_alpha(D)
    ph = np.exp(1j * (np.arange(D + 1)[None, :] - 1) * theta[:, None])
    tc = t[:, None]
    if D >= 2:
        j = np.arange(1, D)[None, :]
        mag = np.exp(la[1:D][None, :] + xlogy((j - 1) / 2.0, tc) + xlogy((D - j - 1) / 2.0, 1 - tc))
        out[:, 1:D] = (j - D * tc) * mag
    out[:, 0] = -D * np.exp(la[0] + xlogy(0.5, t) + xlogy((D - 1) / 2.0, 1 - t))
    out[:, D] = D * np.exp(la[D] + xlogy((D - 1) / 2.0, t) + xlogy(0.5, 1 - t))
    return out * ph


def _kron_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return (a[:, :, None] * b[:, None, :]).reshape(a.shape[0], -1)


def unitary_values(basis: SectionBasis, weight: MetricWeight, t, theta,
                   derivatives: bool = False):
    """Values (P, N) of the pre-scaled monomials in the unitary trivialisation.

    With ``derivatives=True`` also returns the list of per-factor covariant
    derivative arrays (each (P, N)).
    """
    t = np.asarray(t, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if t.ndim == 1:
        t, theta = t[:, None], theta[:, None]
    damp = np.exp(-weight.smooth_potential(t, theta))[:, None]
    vals = [factor_values(D, t[:, a], theta[:, a]) for a, D in enumerate(basis.degrees)]
    if basis.space.n == 1:
        v = vals[0] * damp
        if not derivatives:
            return v
        return v, [factor_derivatives(basis.degrees[0], t[:, 0], theta[:, 0]) * damp]
    v = _kron_rows(vals[0], vals[1]) * damp
    if not derivatives:
        return v
    ders = [factor_derivatives(D, t[:, a], theta[:, a]) for a, D in enumerate(basis.degrees)]
    return v, [_kron_rows(ders[0], vals[1]) * damp, _kron_rows(vals[0], ders[1]) * damp]


# ---------------------------------------------------------------------------
# Gram matrices
# ---------------------------------------------------------------------------

def frame_quadrature(weight: MetricWeight) -> tuple[int, int]:
    """(n_t, n_theta) per factor making the Gram quadrature exact (FS) or
    spectrally accurate (smooth perturbations)."""
    D = max(weight.section_degrees)
    n_t = D // 2 + 8
    n_th = D + 1
    if not weight.is_fs:
        amp = abs(weight.tau) * max(weight.perturbation.sup_norm, 1e-3)
        n_t += 16 + int(math.ceil(4 * amp))
        n_th += 32 + int(math.ceil(8 * amp))
    return max(n_t, MIN_RESOLUTION), max(n_th, MIN_RESOLUTION)


def _fft_gram_cp1(D: int, w_t: np.ndarray, amp: np.ndarray, W: np.ndarray) -> np.ndarray:
    """Gram from per-ring amplitudes ``amp`` (n_t, N) and weights W (n_t, n_th)."""
    n_th = W.shape[1]
    What = np.fft.fft(W, axis=1) / n_th
    N = D + 1
    G = np.zeros((N, N), dtype=complex)
    wa = w_t[:, None] * amp
    for m in range(-D, D + 1):
        lo, hi = max(0, -m), min(N, N - m)
        if lo >= hi:
            continue
        j = np.arange(lo, hi)
        G[j, j + m] = np.einsum("tj,tj,t->j", wa[:, j], amp[:, j + m], What[:, m % n_th])
    return G


def _cp1_gram(D: int, perturbation: Perturbation | None, tau: float,
              n_t: int, n_th: int) -> np.ndarray:
    grid = build_grid(CP1, n_t, "gauss", n_theta=n_th)
    t, th = grid.t_axis, 2 * np.pi * np.arange(n_th) / n_th
    amp = np.abs(factor_values(D, t, np.zeros_like(t)))
    if perturbation is None or perturbation.smooth_is_zero or tau == 0.0:
        W = np.ones((n_t, n_th))
    else:
        W = np.exp(-2.0 * tau * perturbation.value(grid.t, grid.theta)).reshape(n_t, n_th)
    return _fft_gram_cp1(D, grid.t_weights, amp, W)


def _split_separable(pert: Perturbation) -> tuple[Perturbation, Perturbation]:
    parts: list[list] = [[], []]
    for c, fs in pert.terms:
        slots = [a for a, f in enumerate(fs) if f is not None]
        if not slots:
            from .spherefunc import SpherePolynomial
            parts[0].append((c, (SpherePolynomial.constant(),)))
        else:
            parts[slots[0]].append((c, (fs[slots[0]],)))
    return (Perturbation(1, tuple(parts[0]), name=pert.name + "[1]"),
            Perturbation(1, tuple(parts[1]), name=pert.name + "[2]"))


def _gram_2d(basis: SectionBasis, weight: MetricWeight, n_t: int, n_th: int) -> np.ndarray:
    D1, D2 = basis.degrees
    if basis.dim > 1500:
        raise NumericalError(
            f"non-separable Gram on CP1xCP1 with N={basis.dim} is too large; "
            "use a separable perturbation or smaller bidegrees")
    grid = build_grid(basis.space, n_t, "gauss", n_theta=n_th)
    w1 = grid.t_weights
    a1 = np.abs(factor_values(D1, grid.t_axis, np.zeros(n_t)))
    a2 = np.abs(factor_values(D2, grid.t_axis, np.zeros(n_t)))
    W = np.exp(-2.0 * weight.smooth_potential(grid.t, grid.theta))
    W = W.reshape(n_t, n_th, n_t, n_th)
    What = np.fft.fft2(W, axes=(1, 3)) / (n_th * n_th)
    N1, N2 = D1 + 1, D2 + 1
    G = np.zeros((N1, N2, N1, N2), dtype=complex)
    for m1 in range(-D1, D1 + 1):
        j1 = np.arange(max(0, -m1), min(N1, N1 - m1))
        if j1.size == 0:
            continue
        p1 = w1[:, None] * a1[:, j1] * a1[:, j1 + m1]
        for m2 in range(-D2, D2 + 1):
            j2 = np.arange(max(0, -m2), min(N2, N2 - m2))
            if j2.size == 0:
                continue
            p2 = w1[:, None] * a2[:, j2] * a2[:, j2 + m2]
            blk = np.einsum("si,uj,su->ij", p1, p2, What[:, m1 % n_th, :, m2 % n_th])
            G[j1[:, None], j2[None, :], (j1 + m1)[:, None], (j2 + m2)[None, :]] = blk
    N = N1 * N2
    return G.reshape(N, N)


def gram_matrix(basis: SectionBasis, weight: MetricWeight, grid: QuadratureGrid | None = None,
                prescaled: bool = True) -> np.ndarray:
    """L^2 Gram matrix ``G_ij = int <m_i, m_j>_h omega^n / n!``.

    Without ``grid`` an adequate Gauss quadrature is chosen automatically and
    the angular sums are done by FFT.  With ``grid`` the node sum is taken
    literally.  ``prescaled=False`` returns the Gram of the raw monomials z^j.
    """
    if tuple(weight.section_degrees) != basis.degrees:
        raise ValueError(f"weight degree {weight.section_degrees} does not match basis "
                         f"bidegree {basis.degrees}")
    if grid is not None:
        G = np.zeros((basis.dim, basis.dim), dtype=complex)
        for s in range(0, grid.size, CHUNK):
            v = unitary_values(basis, weight, grid.t[s:s + CHUNK], grid.theta[s:s + CHUNK])
            G += (v.T * grid.weights[s:s + CHUNK]) @ v.conj()
    else:
        n_t, n_th = frame_quadrature(weight)
        if basis.space.n == 1:
            G = _cp1_gram(basis.degrees[0], weight.perturbation, weight.tau, n_t, n_th)
        elif weight.is_fs or weight.perturbation.separable:
            p1, p2 = (_split_separable(weight.perturbation) if not weight.is_fs else (None, None))
            G = np.kron(_cp1_gram(basis.degrees[0], p1, weight.tau, n_t, n_th),
                        _cp1_gram(basis.degrees[1], p2, weight.tau, n_t, n_th))
        else:
            G = _gram_2d(basis, weight, n_t, n_th)
    G = 0.5 * (G + G.conj().T)
    if not prescaled:
        la = np.zeros(basis.dim)
        for a, D in enumerate(basis.degrees):
            la = la + log_alpha(D)[basis.exponents[:, a]]
        s = np.exp(-la)
        G = G * s[:, None] * s[None, :]
    return G


# ---------------------------------------------------------------------------
# frames
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class OrthonormalFrame:
    """Orthonormal frame ``S = L^{-1} m``.

    ``chol is None`` means L = I.  On CP1 x CP1 with a separable metric the
    frame may be stored as a Kronecker product of two CP1 frames (``factors``).
    """

    basis: SectionBasis
    weight: MetricWeight | None
    chol: np.ndarray | None = None
    factors: tuple["OrthonormalFrame", ...] | None = None
    condition: float = 1.0

    @property
    def dim(self) -> int:
        return self.basis.dim

    @property
    def d(self) -> int:
        return self.dim - 1

    def lower_factor(self) -> np.ndarray:
        if self.factors is not None:
            return np.kron(self.factors[0].lower_factor(), self.factors[1].lower_factor())
        if self.chol is None:
            return np.eye(self.dim, dtype=complex)
        return self.chol

    def _whiten(self, v: np.ndarray) -> np.ndarray:
        """Rows ``L^{-1} v`` for each row v of (P, N)."""
        if self.factors is not None:
            N1, N2 = self.factors[0].dim, self.factors[1].dim
            L1, L2 = self.factors[0].lower_factor(), self.factors[1].lower_factor()
            x = v.reshape(-1, N1, N2)
            x = np.einsum("ij,pjk->pik", np.linalg.inv(L1), x)
            x = np.einsum("kl,pil->pik", np.linalg.inv(L2), x)
            return x.reshape(v.shape)
        if self.chol is None:
            return v
        return solve_triangular(self.chol, v.T, lower=True).T

    def values(self, t, theta, derivatives: bool = False):
        """Unitary values of the frame at points (P, n) -> (P, N)."""
        if self.weight is None:
            raise ValueError("frame has no metric attached")
        out = unitary_values(self.basis, self.weight, t, theta, derivatives)
        if not derivatives:
            return self._whiten(out)
        v, ders = out
        return self._whiten(v), [self._whiten(e) for e in ders]

    def section_coefficients(self, c) -> np.ndarray:
        """Coefficients of ``sum_j c_j S_j`` in the pre-scaled monomial basis."""
        c = np.asarray(c, dtype=complex)
        if self.factors is not None:
            N1, N2 = self.factors[0].dim, self.factors[1].dim
            L1, L2 = self.factors[0].lower_factor(), self.factors[1].lower_factor()
            x = c.reshape(N1, N2)
            x = solve_triangular(L1, x, lower=True, trans="T")
            x = solve_triangular(L2, x.T, lower=True, trans="T").T
            return x.ravel()
        if self.chol is None:
            return c.copy()
        return solve_triangular(self.chol, c, lower=True, trans="T")

    def polynomial_coefficients(self, c) -> np.ndarray:
        """Raw monomial coefficients: shape (D+1,) on CP1, (D1+1, D2+1) on CP1 x CP1."""
        b = self.section_coefficients(c)
        la = np.zeros(self.dim)
        for a, D in enumerate(self.basis.degrees):
            la = la + log_alpha(D)[self.basis.exponents[:, a]]
        return (b * np.exp(la)).reshape([D + 1 for D in self.basis.degrees])


def orthonormal_frame(G: np.ndarray, basis: SectionBasis | None = None,
                      weight: MetricWeight | None = None) -> OrthonormalFrame:
    """Cholesky-based frame; fails loudly on indefinite or ill-conditioned G."""
    G = np.asarray(G, dtype=complex)
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise ValueError("Gram matrix must be square")
    herm = np.abs(G - G.conj().T).max()
    if herm > 1e-12 * max(1.0, np.abs(G).max()):
        raise NumericalError(f"Gram matrix is not Hermitian (defect {herm:.3g})")
    G = 0.5 * (G + G.conj().T)
    eig = np.linalg.eigvalsh(G)
    if eig[0] <= 0:
        raise NumericalError(
            f"Gram matrix is not positive definite: smallest eigenvalue {eig[0]:.3g}; "
            "the quadrature is too coarse")
    cond = float(eig[-1] / eig[0])
    if cond > COND_ABORT:
        raise NumericalError(f"Gram condition number {cond:.3g} exceeds {COND_ABORT:.0e}")
    try:
        L = cholesky(G, lower=True)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"Cholesky breakdown: {exc}") from exc
    if basis is None:
        basis = SectionBasis(CP1, (G.shape[0] - 1,))
    return OrthonormalFrame(basis, weight, L, None, cond)


def build_frame(weight: MetricWeight, cache: "FrameCache | None" = None) -> OrthonormalFrame:
    """Orthonormal frame of H^0 for the given metric (identity for FS)."""
    basis = SectionBasis(weight.space, weight.section_degrees)
    if weight.is_fs and weight.space.n == 1:
        return OrthonormalFrame(basis, weight)
    if weight.space.n == 2 and (weight.is_fs or weight.perturbation.separable):
        p1, p2 = _split_separable(weight.perturbation)
        f1 = build_frame(MetricWeight(CP1, (weight.section_degrees[0],), p1, weight.tau), cache)
        f2 = build_frame(MetricWeight(CP1, (weight.section_degrees[1],), p2, weight.tau), cache)
        return OrthonormalFrame(basis, weight, None, (f1, f2), f1.condition * f2.condition)
    if cache is not None:
        hit = cache.load(weight)
        if hit is not None:
            return OrthonormalFrame(basis, weight, hit, None, _cond_from_chol(hit))
    frame = orthonormal_frame(gram_matrix(basis, weight), basis, weight)
    if cache is not None:
        cache.store(weight, frame.chol)
    return frame


def _cond_from_chol(L: np.ndarray) -> float:
    s = np.linalg.svd(L, compute_uv=False)
    return float((s[0] / s[-1]) ** 2)


# ---------------------------------------------------------------------------
# Bergman function, Kodaira map, FS currents
# ---------------------------------------------------------------------------

def _points(grid_or_points):
    if isinstance(grid_or_points, QuadratureGrid):
        return grid_or_points.t, grid_or_points.theta
    if isinstance(grid_or_points, ChartPoint):
        t, th = grid_or_points.params()
        return t[None, :], th[None, :]
    t, th = grid_or_points
    t, th = np.asarray(t, dtype=float), np.asarray(th, dtype=float)
    if t.ndim == 1:
        t, th = t[:, None], th[:, None]
    return t, th


def bergman_function(frame: OrthonormalFrame, where) -> np.ndarray:
    """``B(x) = sum_j |S_j(x)|_h^2`` at a ChartPoint, a grid, or (t, theta) arrays."""
    t, th = _points(where)
    if frame.factors is not None:
        b1 = bergman_function(frame.factors[0], (t[:, 0], th[:, 0]))
        b2 = bergman_function(frame.factors[1], (t[:, 1], th[:, 1]))
        return b1 * b2
    out = np.empty(t.shape[0])
    for s in range(0, t.shape[0], CHUNK):
        F = frame.values(t[s:s + CHUNK], th[s:s + CHUNK])
        out[s:s + CHUNK] = np.einsum("pj,pj->p", F, F.conj()).real
    return out


def dimension_from_bergman(frame: OrthonormalFrame, grid: QuadratureGrid) -> float:
    """``int B omega^n / n! - 1``."""
    return float(grid.integrate(bergman_function(frame, grid))) - 1.0


def kodaira_map(frame: OrthonormalFrame, point: ChartPoint) -> np.ndarray:
    """Unit representative of ``[S_0(x) : ... : S_d(x)]``."""
    if frame.dim <= 1:
        raise ValueError("degree-0 bundles do not define a Kodaira map")
    t, th = _points(point)
    F = frame.values(t, th)[0]
    nrm = np.linalg.norm(F)
    if nrm == 0:
        raise NumericalError("Kodaira map hit the zero vector")
    return F / nrm


def _gamma_block(F: np.ndarray, ders: list[np.ndarray]) -> np.ndarray:
    nf = np.einsum("pj,pj->p", F, F.conj()).real
    proj = []
    for E in ders:
        c = np.einsum("pj,pj->p", E, F.conj()) / nf
        proj.append(E - c[:, None] * F)
    if len(proj) == 1:
        return np.einsum("pj,pj->p", proj[0], proj[0].conj()).real / nf
    R = np.empty((F.shape[0], 2, 2), dtype=complex)
    for a in range(2):
        for b in range(2):
            R[:, a, b] = np.einsum("pj,pj->p", proj[a], proj[b].conj()) / nf
    return R


def gamma_values(frame: OrthonormalFrame, t, theta, transform: np.ndarray | None = None):
    """FS current of the Kodaira map relative to the FS frame.

    ``transform`` replaces the frame vector F(x) by ``transform @ F(x)``; this
    gives ``1/2 dd^c log |transform F|^2``, the expected zero current of the
    automorphism-pullback ensemble.
    """
    t, theta = _points((t, theta))
    P = t.shape[0]
    out = np.empty((P,) if frame.basis.space.n == 1 else (P, 2, 2),
                   dtype=float if frame.basis.space.n == 1 else complex)
    for s in range(0, P, CHUNK):
        F, ders = frame.values(t[s:s + CHUNK], theta[s:s + CHUNK], derivatives=True)
        if transform is not None:
            F = F @ transform.T
            ders = [E @ transform.T for E in ders]
        out[s:s + CHUNK] = _gamma_block(F, ders)
    return out


def fs_current_density(frame: OrthonormalFrame, grid: QuadratureGrid,
                       transform: np.ndarray | None = None) -> Density:
    """``gamma = Phi^* omega_FS = 1/2 dd^c log sum_j |S_j|^2`` on the grid."""
    if frame.dim <= 1:
        vals = np.zeros(grid.size) if grid.n == 1 else np.zeros((grid.size, 2, 2), complex)
        return Density(grid, vals, "11")
    if frame.factors is not None and transform is None:
        g1 = gamma_values(frame.factors[0], grid.t[:, 0], grid.theta[:, 0])
        g2 = gamma_values(frame.factors[1], grid.t[:, 1], grid.theta[:, 1])
        vals = np.zeros((grid.size, 2, 2), dtype=complex)
        vals[:, 0, 0], vals[:, 1, 1] = g1, g2
        return Density(grid, vals, "11")
    return Density(grid, gamma_values(frame, grid.t, grid.theta, transform), "11")


def wedge_density(T: Density, S: Density) -> Density:
    """``T ^ S`` of two (1,1) densities on CP1 x CP1 as a top density."""
    if not T.grid.same_as(S.grid):
        raise ValueError("densities live on different grids")
    if not (T.is_matrix and S.is_matrix):
        raise ValueError("wedge needs (1,1) coefficient matrices on CP1 x CP1")
    if not (T.mixed and S.mixed):
        raise ValueError("wedge needs the mixed (off-diagonal) coefficients")
    a, b = T.values, S.values
    w = (a[:, 0, 0] * b[:, 1, 1] + a[:, 1, 1] * b[:, 0, 0]
         - a[:, 0, 1] * b[:, 1, 0] - a[:, 1, 0] * b[:, 0, 1])
    return Density(T.grid, np.real(w), "top")


# ---------------------------------------------------------------------------
# Assumption 1
# ---------------------------------------------------------------------------

@dataclass
class Assumption1Row:
    k: int
    p: int
    A: float
    min_ratio: float
    max_ratio: float

    @property
    def M(self) -> float:
        return max(self.max_ratio, 1.0 / self.min_ratio)


@dataclass
class Assumption1Result:
    rows: list[Assumption1Row]
    M0: float
    growth_slope: float
    M1_prime: float
    passed: bool


def check_assumption1(seq, p_list, grid: QuadratureGrid, frames=None,
                      slope_tol: float = 0.1) -> Assumption1Result:
    """Two-sided Bergman bounds ``B / A^n`` in ``[1/M0, M0]``.

    Passes iff M0 is finite and the per-p values show no growth trend
    (log-log slope of M_p against p at most ``slope_tol``).
    """
    n = seq.space.n
    rows = []
    ratios = []
    for p in p_list:
        A = seq.A_values(p)
        ratios.append(A.max() / A.min())
        for k in range(seq.m):
            fr = frames[(k, p)] if frames is not None else build_frame(seq.weight(k, p))
            B = bergman_function(fr, grid)
            an = A[k] ** n
            rows.append(Assumption1Row(k, int(p), float(A[k]), float(B.min() / an),
                                       float(B.max() / an)))
    Ms = np.array([r.M for r in rows])
    M0 = float(Ms.max()) if rows else float("nan")
    per_p = [max(r.M for r in rows if r.p == p) for p in p_list]
    if len(p_list) >= 2:
        slope = float(np.polyfit(np.log(np.asarray(p_list, float)), np.log(per_p), 1)[0])
    else:
        slope = 0.0
    passed = bool(np.isfinite(M0)) and slope <= slope_tol
    return Assumption1Result(rows, M0, slope, float(max(ratios)), passed)


# ---------------------------------------------------------------------------
# disk cache of Gram factors
# ---------------------------------------------------------------------------

_MAGIC = b"ZCFRAME1"


class FrameCache:
    """Cholesky factors on disk keyed by (space, bidegree, weight hash, quadrature).

    Layout: 8-byte magic, little-endian uint32 header length, UTF-8 JSON
    header, then the N x N factor row-major as interleaved (re, im) float64.
    """

    def __init__(self, directory):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)

    @staticmethod
    def key(weight: MetricWeight) -> dict:
        n_t, n_th = frame_quadrature(weight)
        return {"space": str(weight.space), "bidegree": list(weight.section_degrees),
                "weight": weight.digest(), "quadrature": [n_t, n_th]}

    def _path(self, key: dict) -> Path:
        h = hashlib.sha256(json.dumps(key, sort_keys=True).encode()).hexdigest()[:24]
        return self.dir / f"frame_{h}.bin"

    def store(self, weight: MetricWeight, L: np.ndarray) -> Path:
        key = self.key(weight)
        header = json.dumps({"key": key, "n": int(L.shape[0]), "dtype": "complex128"},
                            sort_keys=True).encode()
        path = self._path(key)
        tmp = path.with_suffix(".tmp")
        with open(tmp, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<I", len(header)))
            fh.write(header)
            fh.write(np.ascontiguousarray(L, dtype="<c16").tobytes())
        tmp.replace(path)
        return path

    def load(self, weight: MetricWeight) -> np.ndarray | None:
        key = self.key(weight)
        path = self._path(key)
        if not path.exists():
            return None
        with open(path, "rb") as fh:
            if fh.read(8) != _MAGIC:
                return None
            (hlen,) = struct.unpack("<I", fh.read(4))
            header = json.loads(fh.read(hlen))
            if header.get("key") != key:
                return None
            n = int(header["n"])
            data = np.frombuffer(fh.read(), dtype="<c16")
        if data.size != n * n:
            return None
        return data.reshape(n, n).copy()

