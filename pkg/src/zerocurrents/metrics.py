"""Hermitian metrics on O(d) / O(a, b), bundle sequences and curvature currents.

A metric weight is ``psi = sum_a (d_a / 2) log(1 + |z_a|^2) + tau * psi0`` with
``h = exp(-2 psi)``.  ``psi0`` may carry its own multiple ``kappa_a`` of the FS
weight; the bundle then has degree ``D_a = d_a + tau * kappa_a``, which must be
an integer.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Density, ModelSpace, QuadratureGrid, ddc_weight, fs_form

_POSITIVITY_SLACK = 1e-9


@dataclass(frozen=True)
class MetricWeight:
    space: ModelSpace
    degrees: tuple[int, ...]
    perturbation: "Perturbation"  # noqa: F821 (spherefunc.Perturbation)
    tau: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "degrees", tuple(int(d) for d in self.degrees))
        if len(self.degrees) != self.space.n:
            raise ValueError(f"{self.space} needs {self.space.n} degree(s), got {self.degrees}")
        if any(d < 0 for d in self.degrees):
            raise ValueError(f"degrees must be nonnegative, got {self.degrees}")
        if self.perturbation.n != self.space.n:
            raise ValueError("perturbation lives on a different space")
        if not math.isfinite(self.tau):
            raise ValueError("tau must be finite")
        for D in self._raw_section_degrees():
            if abs(D - round(D)) > 1e-9 or D < -1e-9:
                raise ValueError(
                    f"degree plus tau * log-FS coefficient must be a nonnegative integer, got {D}")
        if not self.perturbation.smooth_is_zero and self.tau != 0.0:
            bound = abs(self.tau) * self.perturbation.ddc_sup
            if bound > min(self.section_degrees) * (1 + 1e-12):
                raise ValueError(
                    f"curvature may be negative: tau * sup|dd^c psi0| = {bound:.4g} exceeds "
                    f"the smallest degree {min(self.section_degrees)}")

    def _raw_section_degrees(self):
        return [d + self.tau * k for d, k in zip(self.degrees, self.perturbation.log_fs)]

    @property
    def section_degrees(self) -> tuple[int, ...]:
        """Bidegree of the line bundle (degree of its holomorphic sections)."""
        return tuple(int(round(D)) for D in self._raw_section_degrees())

    @property
    def total_degree(self) -> int:
        return sum(self.section_degrees)

    @property
    def is_fs(self) -> bool:
        """True when the metric is the (product) Fubini-Study metric."""
        return self.perturbation.smooth_is_zero or self.tau == 0.0

    def smooth_potential(self, t, theta) -> np.ndarray:
        """``tau * psi0`` without its FS-weight part; t, theta of shape (P, n)."""
        if self.is_fs:
            return np.zeros(np.asarray(t).shape[0])
        return self.tau * self.perturbation.value(t, theta)

    def psi(self, t, theta) -> np.ndarray:
        """The full local weight in the standard chart (diverges at infinity)."""
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore"):
            logs = -np.log1p(-t)  # log(1 + |z|^2)
        out = 0.5 * (logs * np.asarray(self.section_degrees, dtype=float)).sum(axis=1)
        return out + self.smooth_potential(t, theta)

    def digest(self) -> str:
        payload = repr((str(self.space), self.degrees, self.tau, self.perturbation.name,
                        self.perturbation.log_fs,
                        [(c, [f.coeffs if f is not None else None for f in fs])
                         for c, fs in self.perturbation.terms]))
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


def curvature_density(weight: MetricWeight, grid: QuadratureGrid,
                      method: str = "analytic") -> Density:
    """``c_1(L, h) = dd^c psi`` relative to the FS frame.

    ``method='analytic'`` differentiates the closed-form potential exactly;
    ``method='fd'`` uses the finite-difference dd^c (midpoint grids only).
    """
    degs = np.asarray(weight.section_degrees, dtype=float)
    if method == "fd":
        smooth = weight.smooth_potential(grid.t, grid.theta)
        if not np.all(np.isfinite(smooth)):
            raise ValueError("perturbation potential is not finite on the grid")
        return ddc_weight(smooth, degs / 2.0, grid)
    if method != "analytic":
        raise ValueError(f"unknown method {method!r}")
    if grid.n == 1:
        vals = np.full(grid.size, degs[0])
        if not weight.is_fs:
            vals = vals + weight.tau * weight.perturbation.ddc_rel(grid.t, grid.theta)
        out = vals
    else:
        out = np.zeros((grid.size, 2, 2), dtype=complex)
        out[:, 0, 0] = degs[0]
        out[:, 1, 1] = degs[1]
        if not weight.is_fs:
            out = out + weight.tau * weight.perturbation.ddc_rel(grid.t, grid.theta)
    if not np.all(np.isfinite(out)):
        raise ValueError("perturbation potential is not finite on the grid")
    return Density(grid, out, "11")


def current_norm_distance(T: Density, S: Density) -> float:
    """Mass norm of ``T - S``: integral of the pointwise trace norm against omega^(n-1)."""
    if not T.grid.same_as(S.grid):
        raise ValueError("densities live on different grids")
    return float(T.grid.integrate((T - S).trace_norm()))


# ---------------------------------------------------------------------------
# bundle sequences
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BundleFamily:
    """One sequence ``{(L_kp, h_kp)}_p``.

    Degrees are ``round(slope_a * p + offset_a)`` per factor (or taken from
    ``degree_schedule``) and the
    perturbation coefficient is ``tau_const + tau_linear * p``.  ``A`` defaults
    to the curvature-mass ratio; ``A_schedule`` (p -> A) overrides it.
    """

    slopes: tuple[float, ...]
    offsets: tuple[int, ...] = ()
    perturbation: "Perturbation" = None  # noqa: F821
    tau_const: float = 0.0
    tau_linear: float = 0.0
    a: float = 1.0
    A_schedule: tuple[tuple[int, float], ...] = ()
    degree_schedule: tuple[tuple[int, tuple[int, ...]], ...] = ()

    def degrees(self, p: int) -> tuple[int, ...]:
        if self.degree_schedule:
            table = dict(self.degree_schedule)
            if p not in table:
                raise ValueError(f"degree schedule has no entry for p={p}")
            return tuple(int(d) for d in table[p])
        offs = self.offsets or (0,) * len(self.slopes)
        raw = [s * p + o for s, o in zip(self.slopes, offs)]
        out = tuple(int(round(r)) for r in raw)
        if any(abs(r - o) > 1e-9 for r, o in zip(raw, out)):
            raise ValueError(f"degree schedule {raw} is not integral at p={p}")
        return out

    def tau(self, p: int) -> float:
        return self.tau_const + self.tau_linear * p


@dataclass(frozen=True)
class BundleSequence:
    space: ModelSpace
    families: tuple[BundleFamily, ...]
    C0: float = 1.0
    name: str = "sequence"
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if self.m != self.space.n:
            raise ValueError(
                f"only m = n is supported (zero currents of bidimension (0,0)); "
                f"got m={self.m} on {self.space}")
        for fam in self.families:
            if len(fam.slopes) != self.space.n:
                raise ValueError("degree slopes need one entry per factor")
            if fam.perturbation is None or fam.perturbation.n != self.space.n:
                raise ValueError("each family needs a perturbation on the same space")
            if fam.a <= 0:
                raise ValueError("Assumption-2 exponents a_k must be positive")
        if self.C0 <= 0:
            raise ValueError("C0 must be positive")

    @property
    def m(self) -> int:
        return len(self.families)

    def weight(self, k: int, p: int) -> MetricWeight:
        key = ("w", k, p)
        if key not in self._cache:
            fam = self.families[k]
            self._cache[key] = MetricWeight(self.space, fam.degrees(p), fam.perturbation, fam.tau(p))
        return self._cache[key]

    def limit_coefficients(self, k: int) -> tuple[np.ndarray, float]:
        """``omega_k = sum_a lam_a omega_FS,a + mu dd^c psi0`` as (lam, mu)."""
        fam = self.families[k]
        lam = np.asarray(fam.slopes, dtype=float) + fam.tau_linear * np.asarray(
            fam.perturbation.log_fs, dtype=float)
        mu = fam.tau_linear if not fam.perturbation.smooth_is_zero else 0.0
        return lam, mu

    def limit_mass(self, k: int) -> float:
        return float(self.limit_coefficients(k)[0].sum())

    def limit_density(self, k: int, grid: QuadratureGrid) -> Density:
        lam, mu = self.limit_coefficients(k)
        if grid.n == 1:
            vals = np.full(grid.size, lam[0])
        else:
            vals = np.zeros((grid.size, 2, 2), dtype=complex)
            vals[:, 0, 0], vals[:, 1, 1] = lam
        if mu:
            vals = vals + mu * self.families[k].perturbation.ddc_rel(grid.t, grid.theta)
        return Density(grid, vals, "11")

    def A(self, k: int, p: int) -> float:
        fam = self.families[k]
        if fam.A_schedule:
            table = dict(fam.A_schedule)
            if p not in table:
                raise ValueError(f"A_schedule has no entry for p={p}")
            return float(table[p])
        return self.weight(k, p).total_degree / self.limit_mass(k)

    def A_values(self, p: int) -> np.ndarray:
        return np.array([self.A(k, p) for k in range(self.m)])


def limit_wedge(seq: BundleSequence, grid: QuadratureGrid) -> Density:
    """``omega_1 ^ ... ^ omega_m`` as a top-degree density (m = n)."""
    from .bergman import wedge_density
    if seq.m == 1:
        return Density(grid, np.real(seq.limit_density(0, grid).values), "top")
    return wedge_density(seq.limit_density(0, grid), seq.limit_density(1, grid))


@dataclass
class Assumption2Row:
    k: int
    p: int
    A: float
    distance: float
    bound: float
    passed: bool


@dataclass
class Assumption2Result:
    rows: list[Assumption2Row]
    limits_positive: bool
    mixed_masses: list[float]
    first_failure: tuple[int, int] | None

    @property
    def passed(self) -> bool:
        return self.first_failure is None and self.limits_positive


def check_limits(seq: BundleSequence, grid: QuadratureGrid) -> tuple[bool, list[float]]:
    """Positivity of each omega_k and positive mass of all mixed products."""
    ok = True
    masses = []
    for k in range(seq.m):
        dens = seq.limit_density(k, grid)
        if dens.is_matrix:
            low = float(np.linalg.eigvalsh(dens.values).min())
        else:
            low = float(np.real(dens.values).min())
        if low < -_POSITIVITY_SLACK:
            ok = False
        mass = dens.mass()
        masses.append(mass)
        ok = ok and mass > 0
    if seq.m == 2:
        from .bergman import wedge_density
        for j in range(2):
            for k in range(2):
                w = wedge_density(seq.limit_density(j, grid), seq.limit_density(k, grid))
                mass = float(grid.integrate(w.values))
                masses.append(mass)
                ok = ok and mass > 0
    return ok, masses


def check_assumption2(seq: BundleSequence, p_list, grid: QuadratureGrid) -> Assumption2Result:
    rows = []
    first = None
    for p in p_list:
        for k in range(seq.m):
            A = seq.A(k, p)
            c1 = curvature_density(seq.weight(k, p), grid).scale(1.0 / A)
            dist = current_norm_distance(c1, seq.limit_density(k, grid))
            bound = seq.C0 * A ** (-seq.families[k].a)
            ok = dist <= bound
            rows.append(Assumption2Row(k, int(p), A, dist, bound, ok))
            if not ok and first is None:
                first = (k, int(p))
    pos, masses = check_limits(seq, grid)
    return Assumption2Result(rows, pos, masses, first)
