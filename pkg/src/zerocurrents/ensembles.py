"""Probability measures on products of projective spaces of sections.

Three families:

* ``FS``: the Fubini-Study volume, drawn as a normalised complex Gaussian.
* ``AUTOPULL``: the pullback ``g^*(FS volume)`` by a linear automorphism g; a
  draw is ``[g^{-1} v]`` with v FS-distributed.  Its potentials
  ``u(s) = 1/2 log(|g s|^2 / |s|^2)`` are smooth, so this is a moderate product
  measure of the (c, rho) type.
* ``DENSITY``: ``e^{-w} / Z`` times FS volume by rejection sampling.  This is a
  robustness extension, not a measure of the Monge-Ampere product form.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import beta as beta_fn

from . import rng as rngmod
from .errors import NumericalError

MAX_CONDITION = 1e3
MIN_ACCEPTANCE = 1e-3


class Family(str, enum.Enum):
    FS = "FS"
    AUTOPULL = "AUTOPULL"
    DENSITY = "DENSITY"


def phase_normalize(c: np.ndarray) -> np.ndarray:
    """Make the first nonzero coordinate real positive."""
    c = np.asarray(c, dtype=complex)
    nz = np.flatnonzero(np.abs(c) > 0)
    if nz.size == 0:
        raise ValueError("zero vector has no projective class")
    z = c[nz[0]]
    return c * (abs(z) / z)


def sample_fs(N: int, rng: np.random.Generator) -> np.ndarray:
    if N < 1:
        raise ValueError("dimension must be at least 1")
    v = rng.standard_normal(N) + 1j * rng.standard_normal(N)
    return phase_normalize(v / np.linalg.norm(v))


def unit_det(g: np.ndarray) -> np.ndarray:
    """Rescale an invertible matrix to |det| = 1."""
    g = np.asarray(g, dtype=complex)
    sign, logdet = np.linalg.slogdet(g)
    if sign == 0 or not np.isfinite(logdet):
        raise NumericalError("automorphism matrix is singular")
    return g * math.exp(-logdet / g.shape[0])


def sample_autopull(g: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    g = np.asarray(g, dtype=complex)
    v = sample_fs(g.shape[0], rng)
    try:
        x = np.linalg.solve(g, v)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("automorphism matrix is singular") from exc
    return phase_normalize(x / np.linalg.norm(x))


def smooth_step(u, lo: float = 0.4, hi: float = 0.6) -> np.ndarray:
    """C^1 step: 0 below ``lo``, 1 above ``hi``."""
    x = np.clip((np.asarray(u, dtype=float) - lo) / (hi - lo), 0.0, 1.0)
    return x * x * (3.0 - 2.0 * x)


@dataclass(frozen=True)
class BumpWeight:
    """``w(s) = height * step(|s_0|^2)``: a smoothed indicator of the cap
    ``|s_0|^2 >= 0.6`` (|s| = 1)."""

    height: float = 1.0
    lo: float = 0.4
    hi: float = 0.6

    @property
    def w_max(self) -> float:
        return abs(self.height)

    def __call__(self, c: np.ndarray) -> np.ndarray:
        c = np.asarray(c)
        return self.height * smooth_step(np.abs(c[..., 0]) ** 2, self.lo, self.hi)


def sample_density(w, N: int, rng: np.random.Generator, max_trials: int = 100000) -> np.ndarray:
    """Rejection sampling of ``e^{-w} / Z`` against FS volume."""
    floor = min(0.0, -w.w_max)
    for trial in range(1, max_trials + 1):
        c = sample_fs(N, rng)
        val = float(w(c))
        if abs(val) > w.w_max * (1 + 1e-12):
            raise ValueError(f"weight value {val} exceeds the declared bound {w.w_max}")
        if rng.random() < math.exp(-(val - floor)):
            return c
        if trial >= 1000 and 1.0 / trial < MIN_ACCEPTANCE:
            break
    raise NumericalError(f"rejection sampling acceptance fell below {MIN_ACCEPTANCE:g}")


# ---------------------------------------------------------------------------
# ensemble specification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EnsembleSpec:
    """Per-k families on ``X_p = prod_k CP^{d_kp}``.

    AUTOPULL matrices are generated per (k, N): ``kind='diag'`` gives
    ``diag(strength, 1, ..., 1)``; ``kind='hermitian'`` gives ``exp(strength H)``
    with H a fixed random Hermitian matrix of unit spectral norm.  Matrices are
    rescaled to unit |det|.
    """

    family: Family = Family.FS
    autopull_kind: str = "diag"
    strength: float = 1.0
    matrix_seed: int = 0
    bump_height: float = 1.0
    c_const: float = 2.0
    rho: float = 0.5
    _matrices: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if self.autopull_kind not in ("diag", "hermitian"):
            raise ValueError("autopull kind must be 'diag' or 'hermitian'")
        if not 0 < self.rho < 1:
            raise ValueError("Hoelder exponent rho must lie in (0, 1)")

    def matrix(self, k: int, N: int) -> np.ndarray:
        key = (k, N)
        if key in self._matrices:
            return self._matrices[key]
        if self.family is not Family.AUTOPULL:
            g = np.eye(N, dtype=complex)
        elif self.autopull_kind == "diag":
            d = np.ones(N)
            d[0] = self.strength
            g = np.diag(d).astype(complex)
        else:
            r = rngmod.stream(self.matrix_seed, rngmod.MATRIX, k, N)
            X = r.standard_normal((N, N)) + 1j * r.standard_normal((N, N))
            H = 0.5 * (X + X.conj().T)
            H /= np.abs(np.linalg.eigvalsh(H)).max()
            ev, U = np.linalg.eigh(H)
            g = (U * np.exp(self.strength * ev)) @ U.conj().T
        g = unit_det(g)
        cond = np.linalg.cond(g)
        if cond > MAX_CONDITION:
            raise ValueError(f"automorphism condition number {cond:.3g} exceeds {MAX_CONDITION:g}")
        self._matrices[key] = g
        return g

    def weight(self) -> BumpWeight:
        return BumpWeight(self.bump_height)

    def draw(self, k: int, N: int, rng: np.random.Generator) -> np.ndarray:
        if self.family is Family.FS:
            return sample_fs(N, rng)
        if self.family is Family.AUTOPULL:
            return sample_autopull(self.matrix(k, N), rng)
        return sample_density(self.weight(), N, rng)

    def potential(self, k: int, N: int):
        """``u(s) = 1/2 log(|g s|^2 / |s|^2)`` for AUTOPULL (zero otherwise)."""
        g = self.matrix(k, N)

        def u(S):
            S = np.atleast_2d(S)
            num = np.linalg.norm(S @ g.T, axis=1)
            return np.log(num / np.linalg.norm(S, axis=1))

        return u

    def smallness_ok(self, c_p: float, A_sum: float, n: int) -> bool:
        """Whether ``c_p <= c^{-(sum A)^n}`` holds for the configured c."""
        log_bound = -(A_sum ** n) * math.log(self.c_const)
        return c_p == 0.0 or math.log(c_p) <= log_bound


@dataclass(frozen=True)
class SectionTuple:
    coefficients: tuple[np.ndarray, ...]
    family: str
    seed: int
    p: int
    index: int

    def __post_init__(self):
        for c in self.coefficients:
            if abs(np.linalg.norm(c) - 1.0) > 1e-12:
                raise ValueError("coefficient vectors must have unit norm")


def sample_tuple(spec: EnsembleSpec, dims, seed: int, p: int, index: int) -> SectionTuple:
    """Independent per-k draws; stream = f(seed, k, p, index)."""
    coeffs = tuple(spec.draw(k, int(N), rngmod.sample_stream(seed, k, p, index))
                   for k, N in enumerate(dims))
    return SectionTuple(coeffs, spec.family.value, int(seed), int(p), int(index))


# ---------------------------------------------------------------------------
# moderate-measure diagnostics
# ---------------------------------------------------------------------------

@dataclass
class ModerateRow:
    probe: int
    alpha: float
    truncation: float
    estimate: float
    stderr: float
    finite: bool


def probe_potential(S: np.ndarray, e: np.ndarray, T: float) -> np.ndarray:
    """``max(log|<s, e>|, -T)`` for unit s, e; its sup over CP^{N-1} is 0."""
    ip = np.abs(S @ np.conj(e))
    with np.errstate(divide="ignore"):
        return np.maximum(np.log(ip), -T)


def moderate_diagnostic(spec: EnsembleSpec, N: int, probes, alphas, samples: int,
                        truncations=(10.0, 20.0), seed: int = 0, k: int = 0) -> list[ModerateRow]:
    """Monte Carlo estimates of ``int exp(-alpha phi) d mu`` for probe potentials."""
    S = np.array([spec.draw(k, N, rngmod.stream(seed, rngmod.DIAGNOSTIC, k, N, i))
                  for i in range(samples)])
    rows = []
    for j, e in enumerate(probes):
        e = np.asarray(e, dtype=complex)
        e = e / np.linalg.norm(e)
        for T in truncations:
            phi = probe_potential(S, e, T)
            for a in alphas:
                vals = np.exp(-a * phi)
                est = float(vals.mean())
                err = float(vals.std(ddof=1) / math.sqrt(samples)) if samples > 1 else float("nan")
                rows.append(ModerateRow(j, float(a), float(T), est, err, bool(np.isfinite(est))))
    return rows


def fs_probe_moment(N: int, alpha: float) -> float:
    """Exact ``E[|<s, e>|^{-alpha}]`` under FS on CP^{N-1} (untruncated).

    ``|<s, e>|^2`` is Beta(1, N-1) distributed, so the moment is
    ``(N-1) B(1 - alpha/2, N-1)``; infinite for alpha >= 2.
    """
    if alpha >= 2:
        return float("inf")
    if N == 1:
        return 1.0
    return float((N - 1) * beta_fn(1.0 - alpha / 2.0, N - 1))


def fs_distance(S: np.ndarray, T: np.ndarray) -> np.ndarray:
    """FS geodesic distance ``arccos |<s, t>|`` between unit vectors (rows)."""
    ip = np.abs(np.einsum("ij,ij->i", S, np.conj(T)))
    return np.arccos(np.clip(ip, 0.0, 1.0))


def holder_modulus_estimate(u, S: np.ndarray, T: np.ndarray, rho: float) -> float:
    """``max |u(s) - u(t)| / dist(s, t)^rho`` over the given pairs."""
    if not 0 < rho < 1:
        raise ValueError("rho must lie in (0, 1)")
    d = fs_distance(S, T)
    ok = d > 1e-12
    if not ok.any():
        return 0.0
    diff = np.abs(u(S[ok]) - u(T[ok]))
    return float((diff / d[ok] ** rho).max())


def holder_pairs(N: int, count: int, seed: int, scales=(1.0, 0.1, 0.01)) -> tuple[np.ndarray, np.ndarray]:
    """Random FS pairs at several separation scales (for modulus estimates)."""
    r = rngmod.stream(seed, rngmod.DIAGNOSTIC, N, 7)
    S, T = [], []
    for sc in scales:
        for _ in range(count):
            s = sample_fs(N, r)
            if sc >= 1.0:
                t = sample_fs(N, r)
            else:
                step = sc * (r.standard_normal(N) + 1j * r.standard_normal(N))
                t = s + step
                t = t / np.linalg.norm(t)
            S.append(s)
            T.append(t)
    return np.array(S), np.array(T)
