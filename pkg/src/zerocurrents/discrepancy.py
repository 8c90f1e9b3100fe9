"""Pairings of zero currents with test functions, rates and exceptional sets.

Sample pairings are stored unnormalised (``sum_x mult(x) phi(x)``) so the same
batch serves the normalised discrepancy, the expectation identity and the
exceedance test, which use different normalisations.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import ensembles as ens
from .bergman import OrthonormalFrame, build_frame, fs_current_density, wedge_density
from .errors import CheckFailure
from .geometry import Density, QuadratureGrid, fs_form
from .metrics import BundleSequence, curvature_density, limit_wedge
from .testfunctions import TestFunction
from .zeros import RejectedSample, ZeroSet, intersection_number, solve_sections, zero_measure

TRIANGLE_SLACK = 1e-10


# ---------------------------------------------------------------------------
# pairings
# ---------------------------------------------------------------------------

def pair_atomic(measure, phi: TestFunction) -> float:
    """``sum_i m_i phi(x_i)`` for an atomic measure (sphere points, masses)."""
    points, masses = measure
    masses = np.asarray(masses, dtype=float)
    if masses.size == 0:
        return 0.0
    return float(np.dot(masses, phi(points)))


def pair_smooth(density: Density, phi: TestFunction, grid: QuadratureGrid | None = None) -> float:
    """``int phi T`` for a top-degree density (any density on CP1)."""
    if grid is not None and not grid.same_as(density.grid):
        raise ValueError("density and test function grids differ")
    if density.is_matrix:
        raise ValueError("pairing with a function needs a top-degree density")
    return float(density.grid.integrate(np.real(density.values) * phi.on_grid(density.grid)))


def pairing_vector(zs: ZeroSet, phis) -> np.ndarray:
    """Unnormalised pairings of ``[s = 0]`` with each test function."""
    x = zs.sphere
    m = zs.multiplicity.astype(float)
    return np.array([float(np.dot(m, f(x))) for f in phis])


def smooth_pairings(density: Density, phis) -> np.ndarray:
    return np.array([pair_smooth(density, f) for f in phis])


def sample_discrepancy(zs: ZeroSet, A_values, limit: Density, phi: TestFunction) -> float:
    """``|<[s = 0] / prod A - omega_1 ^ ... ^ omega_m, phi>|``."""
    meas = zero_measure(zs, float(np.prod(A_values)))
    return abs(pair_atomic(meas, phi) - pair_smooth(limit, phi))


# ---------------------------------------------------------------------------
# frames, expected currents and Monte Carlo batches
# ---------------------------------------------------------------------------

def frames_for(seq: BundleSequence, p: int, cache=None) -> tuple[OrthonormalFrame, ...]:
    return tuple(build_frame(seq.weight(k, p), cache) for k in range(seq.m))


def _transform(spec: ens.EnsembleSpec | None, k: int, N: int) -> np.ndarray | None:
    """``g^{-T}`` for the automorphism pullback (draws are ``g^{-1} v``)."""
    if spec is None or spec.family is not ens.Family.AUTOPULL:
        return None
    return np.linalg.inv(spec.matrix(k, N)).T


def expected_current(frames, grid: QuadratureGrid, spec: ens.EnsembleSpec | None = None) -> Density:
    """``gamma_1 ^ ... ^ gamma_m`` (top degree), the expected zero current for
    the FS ensemble and, with the automorphism transforms, for AUTOPULL.

    For the DENSITY family no closed form exists and the FS currents are used.
    """
    dens = [fs_current_density(fr, grid, _transform(spec, k, fr.dim)) for k, fr in enumerate(frames)]
    if len(dens) == 1:
        return Density(grid, np.real(dens[0].values), "top")
    if len(dens) == 2:
        return wedge_density(dens[0], dens[1])
    raise ValueError("only m = 1 and m = 2 are supported")


@dataclass
class SampleBatch:
    """Per-sample unnormalised pairings for one p (rows ordered by index)."""

    p: int
    names: tuple[str, ...]
    indices: np.ndarray
    pairings: np.ndarray  # (N, F)
    counts: np.ndarray
    residuals: np.ndarray
    rejected: list = field(default_factory=list)  # (index, message)

    @property
    def accepted(self) -> int:
        return int(self.indices.size)

    @property
    def rejection_rate(self) -> float:
        tot = self.accepted + len(self.rejected)
        return len(self.rejected) / tot if tot else 0.0


def solve_batch(frames, coefficients, p: int, indices, phis, keep_zeros: bool = False):
    """Solve and pair pre-drawn samples; ``coefficients[k][j]`` belongs to ``indices[j]``.

    Returns the batch and, when ``keep_zeros`` is set, the list of (index, ZeroSet).
    """
    K = intersection_number([fr.basis.degrees for fr in frames])
    idx, rows, counts, res, rejected, kept = [], [], [], [], [], []
    for j, i in enumerate(indices):
        try:
            zs = solve_sections(frames, [c[j] for c in coefficients])
        except RejectedSample as exc:
            rejected.append((int(i), str(exc)))
            continue
        if zs.count != K:
            raise CheckFailure(f"sample {i} at p={p}: {zs.count} zeros, intersection number {K}")
        idx.append(int(i))
        rows.append(pairing_vector(zs, phis))
        counts.append(zs.count)
        res.append(zs.max_residual)
        if keep_zeros:
            kept.append((int(i), zs))
    F = len(phis)
    batch = SampleBatch(int(p), tuple(f.name for f in phis), np.array(idx, dtype=int),
                        np.array(rows, dtype=float).reshape(-1, F), np.array(counts, dtype=int),
                        np.array(res, dtype=float), rejected)
    return (batch, kept) if keep_zeros else batch


def draw_coefficients(frames, spec: ens.EnsembleSpec, seed: int, p: int, indices) -> list[np.ndarray]:
    """Per-k arrays (len(indices), N_k) of frame coefficients."""
    dims = [fr.dim for fr in frames]
    tups = [ens.sample_tuple(spec, dims, seed, p, int(i)) for i in indices]
    return [np.array([t.coefficients[k] for t in tups]).reshape(len(tups), N)
            for k, N in enumerate(dims)]


def run_samples(frames, spec: ens.EnsembleSpec, seed: int, p: int, indices, phis) -> SampleBatch:
    """Draw, solve and pair the samples with the given indices."""
    indices = list(indices)
    return solve_batch(frames, draw_coefficients(frames, spec, seed, p, indices), p, indices, phis)


def merge_batches(batches) -> SampleBatch:
    """Concatenate batches of one p in index order (deterministic reduction)."""
    batches = list(batches)
    if not batches:
        raise ValueError("nothing to merge")
    p, names = batches[0].p, batches[0].names
    if any(b.p != p or b.names != names for b in batches):
        raise ValueError("batches differ in p or test functions")
    idx = np.concatenate([b.indices for b in batches])
    order = np.argsort(idx, kind="stable")
    return SampleBatch(p, names, idx[order],
                       np.concatenate([b.pairings for b in batches])[order],
                       np.concatenate([b.counts for b in batches])[order],
                       np.concatenate([b.residuals for b in batches])[order],
                       sorted(sum((b.rejected for b in batches), [])))


# ---------------------------------------------------------------------------
# expectation identity (FS ensemble)
# ---------------------------------------------------------------------------

@dataclass
class ExpectationRow:
    name: str
    mc_mean: float
    mc_std: float
    gamma_pairing: float
    difference: float
    band: float

    @property
    def passed(self) -> bool:
        return self.difference <= self.band


def expectation_rows(batch: SampleBatch, gamma_pairings, normalization: float = 1.0,
                     sigmas: float = 3.0) -> list[ExpectationRow]:
    """Monte Carlo mean of ``<[s=0], phi>`` against ``<gamma ^ ..., phi>``."""
    N = batch.accepted
    if N < 2:
        raise ValueError("need at least two accepted samples")
    vals = batch.pairings / normalization
    mean = vals.mean(axis=0)
    std = vals.std(axis=0, ddof=1)
    g = np.asarray(gamma_pairings, dtype=float) / normalization
    rows = []
    for j, name in enumerate(batch.names):
        diff = abs(mean[j] - g[j])
        # constant functions have zero variance; allow rounding only
        band = max(sigmas * std[j] / math.sqrt(N), 1e-12 * max(1.0, abs(g[j])))
        rows.append(ExpectationRow(name, float(mean[j]), float(std[j]), float(g[j]),
                                   float(diff), float(band)))
    return rows


def expected_zero_current_check(frames, grid: QuadratureGrid, phis, N: int, seed: int,
                                spec: ens.EnsembleSpec | None = None, p: int = 0,
                                normalization: float = 1.0) -> list[ExpectationRow]:
    """Check ``E[[s = 0]] = gamma_1 ^ ... ^ gamma_m`` on each test function."""
    spec = spec or ens.EnsembleSpec()
    if spec.family is ens.Family.DENSITY:
        raise ValueError("the expectation identity holds for FS and automorphism pullbacks only")
    batch = run_samples(frames, spec, seed, p, range(N), phis)
    g = smooth_pairings(expected_current(frames, grid, spec), phis)
    return expectation_rows(batch, g, normalization)


# ---------------------------------------------------------------------------
# discrepancies, triangle decomposition, rate fits
# ---------------------------------------------------------------------------

def discrepancies(batch: SampleBatch, A_values, limit_pairings) -> np.ndarray:
    """(N, F) values ``|<[s=0] / prod A - limit, phi>|``."""
    return np.abs(batch.pairings / float(np.prod(A_values)) - np.asarray(limit_pairings)[None, :])


@dataclass
class TriangleTerms:
    total: np.ndarray  # (N, F)
    term1: np.ndarray  # atomic vs Monte Carlo mean
    term2: np.ndarray  # Monte Carlo mean vs gamma
    term3: np.ndarray  # gamma vs limit

    @property
    def holds(self) -> bool:
        return bool(np.all(self.total <= self.term1 + self.term2 + self.term3 + TRIANGLE_SLACK))


def triangle_terms(batch: SampleBatch, A_values, gamma_pairings, limit_pairings) -> TriangleTerms:
    """The three-term split of the discrepancy, each term computed on its own."""
    norm = float(np.prod(A_values))
    x = batch.pairings / norm
    mc = x.mean(axis=0)
    g = np.asarray(gamma_pairings) / norm
    lim = np.asarray(limit_pairings)
    total = np.abs(x - lim[None, :])
    t1 = np.abs(x - mc[None, :])
    t2 = np.broadcast_to(np.abs(mc - g), x.shape).copy()
    t3 = np.broadcast_to(np.abs(g - lim), x.shape).copy()
    return TriangleTerms(total, t1, t2, t3)


def bound_terms(A_values, a_values=None) -> dict[str, float]:
    """Rate terms: ``sum log A / A``, ``log(sum A) / sum A`` and ``sum A^{-a}``."""
    A = np.asarray(A_values, dtype=float)
    a = np.ones_like(A) if a_values is None else np.asarray(a_values, dtype=float)
    S = float(A.sum())
    return {
        "sum_logA_over_A": float(np.sum(np.log(A) / A)),
        "log_sumA_over_sumA": math.log(S) / S,
        "sum_A_pow_neg_a": float(np.sum(A ** -a)),
    }


@dataclass
class RateFit:
    C: float  # geometric mean of mean/bound
    slope: float
    slope_low: float
    slope_high: float
    C_values: np.ndarray
    trivial: bool = False

    @property
    def C_ratio(self) -> float:
        c = self.C_values[self.C_values > 0]
        return float(c.max() / c.min()) if c.size else 1.0


def rate_fit(means, bounds, level: float = 0.95) -> RateFit:
    """Least squares of log(mean) on log(bound): slope, confidence band, constant."""
    m = np.asarray(means, dtype=float)
    b = np.asarray(bounds, dtype=float)
    if m.size != b.size or m.size < 4:
        raise ValueError("rate fits need at least four (mean, bound) pairs")
    if np.any(b <= 0):
        raise ValueError("bound values must be positive")
    Cv = m / b
    if np.all(m == 0):
        return RateFit(0.0, float("nan"), float("nan"), float("nan"), Cv, trivial=True)
    if np.any(m <= 0):
        raise ValueError("mixed zero and positive means cannot be fitted on a log scale")
    fit = stats.linregress(np.log(b), np.log(m))
    q = stats.t.ppf(0.5 + level / 2, m.size - 2) * fit.stderr
    C = float(np.exp(np.mean(np.log(Cv))))
    return RateFit(C, float(fit.slope), float(fit.slope - q), float(fit.slope + q), Cv)


# ---------------------------------------------------------------------------
# FS currents of the Kodaira maps versus the limit
# ---------------------------------------------------------------------------

ROUNDOFF = 1e-12


@dataclass
class FSCurrentRow:
    p: int
    A: tuple[float, ...]
    values: np.ndarray  # per test function
    bound: float

    @property
    def value(self) -> float:
        return float(self.values.max())

    @property
    def C(self) -> float:
        # discrepancies at roundoff level (exact FS sequences) count as zero
        return 0.0 if self.value <= ROUNDOFF else self.value / self.bound


@dataclass
class FSCurrentResult:
    rows: list[FSCurrentRow]
    names: tuple[str, ...]

    @property
    def C_values(self) -> np.ndarray:
        return np.array([r.C for r in self.rows])

    @property
    def C_fit(self) -> float:
        return float(self.C_values.max())

    @property
    def C_ratio(self) -> float:
        c = self.C_values
        if np.all(c == 0):
            return 1.0
        return float(c.max() / c.min()) if c.min() > 0 else float("inf")

    @property
    def trivial(self) -> bool:
        return bool(np.all(self.C_values == 0))

    @property
    def passed(self) -> bool:
        if self.trivial:
            return True
        return self.C_ratio <= 2.0 and all(r.value <= self.C_fit * r.bound for r in self.rows)


def fs_current_discrepancy(seq: BundleSequence, p_list, grid: QuadratureGrid, phis,
                           frames=None) -> FSCurrentResult:
    """``|<gamma_1 ^ ... ^ gamma_m / prod A - omega_1 ^ ... ^ omega_m, phi>|`` per p,
    with the bound ``sum_k (log A / A + A^{-a_k})``."""
    lim = smooth_pairings(limit_wedge(seq, grid), phis)
    rows = []
    for p in p_list:
        fr = frames[p] if frames is not None else frames_for(seq, p)
        A = seq.A_values(p)
        g = smooth_pairings(expected_current(fr, grid), phis) / float(np.prod(A))
        a = np.array([f.a for f in seq.families])
        bound = float(np.sum(np.log(A) / A + A ** -a))
        rows.append(FSCurrentRow(int(p), tuple(float(x) for x in A), np.abs(g - lim), bound))
    return FSCurrentResult(rows, tuple(f.name for f in phis))


# ---------------------------------------------------------------------------
# intermediate degrees
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DegreePair:
    delta1: float
    delta2: float

    def __post_init__(self):
        if not (self.delta1 > 0 and self.delta2 > 0):
            raise ValueError(f"intermediate degrees must be positive, got {self.delta1}, {self.delta2}")

    @property
    def ratio(self) -> float:
        return self.delta2 / self.delta1


def degrees(seq: BundleSequence, p: int, grid: QuadratureGrid, c_p: float = 1.0) -> DegreePair:
    """delta^1 and delta^2 from curvature integrals (``c_p`` is taken as 1).

    delta^1 is the integral of the curvature wedge; delta^2 replaces the k-th
    curvature by the Kaehler form and weights the terms by ``d_kp / (c_p d_p)``.
    """
    curv = [curvature_density(seq.weight(k, p), grid) for k in range(seq.m)]
    dims = [seq.weight(k, p).section_degrees for k in range(seq.m)]
    d_k = np.array([np.prod([D + 1 for D in degs]) - 1 for degs in dims], dtype=float)
    d_p = d_k.sum()
    if seq.m == 1:
        d1 = curv[0].mass()
        d2 = (d_k[0] / (c_p * d_p)) * 1.0  # int omega = 1
    else:
        omega = fs_form(grid)
        d1 = float(grid.integrate(wedge_density(curv[0], curv[1]).values))
        d2 = 0.0
        for k in range(2):
            other = curv[1 - k]
            d2 += d_k[k] / (c_p * d_p) * float(grid.integrate(wedge_density(omega, other).values))
    return DegreePair(float(d1), float(d2))


def comparability_windows(seq: BundleSequence, p_list, grid: QuadratureGrid) -> dict:
    """Windows of ``delta1 / prod A`` and ``delta2 sum A / prod A`` over the run."""
    r1, r2, rows = [], [], []
    for p in p_list:
        dp = degrees(seq, p, grid)
        A = seq.A_values(p)
        a = dp.delta1 / float(np.prod(A))
        b = dp.delta2 * float(A.sum()) / float(np.prod(A))
        r1.append(a)
        r2.append(b)
        rows.append((int(p), dp, a, b))
    return {"rows": rows, "delta1_window": (min(r1), max(r1)), "delta2_window": (min(r2), max(r2))}


# ---------------------------------------------------------------------------
# exceptional sets
# ---------------------------------------------------------------------------

@dataclass
class ExceedanceRow:
    p: int
    sum_A: float
    epsilon: float
    delta1: float
    samples: int
    exceed: int

    @property
    def frequency(self) -> float:
        return self.exceed / self.samples if self.samples else float("nan")

    @property
    def upper_bound(self) -> float:
        """Rule of three when no exceedance was seen."""
        return 3.0 / self.samples if self.exceed == 0 else self.frequency


def epsilon_rule(A_values, C4: float) -> float:
    S = float(np.sum(A_values))
    return C4 * math.log(S) / S


def exceedance_statistic(batch: SampleBatch, expected_pairings, delta1: float) -> np.ndarray:
    """``max_phi |<[s=0] - E[s=0], phi>| / delta1`` per sample."""
    dev = np.abs(batch.pairings - np.asarray(expected_pairings)[None, :])
    return dev.max(axis=1) / delta1


def exception_row(batch: SampleBatch, A_values, expected_pairings, delta1: float,
                  C4: float) -> ExceedanceRow:
    eps = epsilon_rule(A_values, C4)
    stat = exceedance_statistic(batch, expected_pairings, delta1)
    return ExceedanceRow(batch.p, float(np.sum(A_values)), eps, float(delta1), batch.accepted,
                         int(np.count_nonzero(stat >= eps)))


@dataclass
class ExceptionFit:
    alpha: float | None
    C1: float | None
    nonincreasing: bool


def exception_fit(rows: list[ExceedanceRow]) -> ExceptionFit:
    """Fit ``frequency ~ C1 (sum A)^{-alpha}`` on the nonzero rows."""
    freqs = [r.frequency for r in rows]
    mono = all(b <= a for a, b in zip(freqs, freqs[1:]))
    nz = [r for r in rows if r.exceed > 0]
    if len(nz) < 2:
        return ExceptionFit(None, None, mono)
    x = np.log([r.sum_A for r in nz])
    y = np.log([r.frequency for r in nz])
    slope, icpt = np.polyfit(x, y, 1)
    return ExceptionFit(float(-slope), float(math.exp(icpt)), mono)
