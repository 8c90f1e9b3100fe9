"""Common zeros of sections on CP1 and CP1 x CP1.

Inputs are coefficient arrays in the pre-scaled monomial basis (``b_j`` such
that ``s = sum_j b_j alpha_j z^j``).  Residuals are reported chart free as
``|s(x)|_FS / (|b| sqrt(N))`` with the FS-unitary values of the basis, which
never exceeds one.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bergman import factor_values, log_alpha
from .errors import NumericalError
from .geometry import ChartPoint, params_to_sphere

CLUSTER_RADIUS = 1e-6
RESIDUAL_TOL = 1e-8
ABERTH_DEGREE = 400


class RejectedSample(ValueError):
    """A non-generic input (zero section, common component, solver failure)."""


@dataclass(frozen=True)
class ZeroSet:
    """Zero points as (t, theta) per factor, with multiplicities and residuals."""

    t: np.ndarray  # (K, n)
    theta: np.ndarray  # (K, n)
    multiplicity: np.ndarray  # (K,)
    residual: np.ndarray  # (K,)

    @property
    def count(self) -> int:
        return int(self.multiplicity.sum())

    @property
    def max_residual(self) -> float:
        return float(self.residual.max()) if self.residual.size else 0.0

    @property
    def sphere(self) -> np.ndarray:
        return params_to_sphere(self.t, self.theta)

    def chart_points(self) -> list[ChartPoint]:
        out = []
        for tt, hh in zip(self.t, self.theta):
            chart, coords = [], []
            for t, h in zip(tt, hh):
                if t <= 0.5:
                    chart.append(0)
                    coords.append(complex(np.sqrt(t / (1 - t)) * np.exp(1j * h)))
                else:
                    chart.append(1)
                    coords.append(complex(np.sqrt((1 - t) / t) * np.exp(-1j * h)))
            out.append(ChartPoint(tuple(chart), tuple(coords)))
        return out

    def csv_rows(self):
        for cp, m, r in zip(self.chart_points(), self.multiplicity, self.residual):
            row = ["".join(str(c) for c in cp.chart)]
            for u in cp.coords:
                row += [repr(float(u.real)), repr(float(u.imag))]
            yield row + [int(m), repr(float(r))]


def _params_from_z(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(t, theta) from affine values, accepting inf."""
    z = np.asarray(z, dtype=complex)
    out_t = np.empty(z.shape)
    out_h = np.empty(z.shape)
    big = ~np.isfinite(z) | (np.abs(z) > 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(big & np.isfinite(z), 1.0 / np.where(big, z, 1.0), 0.0)
    s = np.abs(z[~big]) ** 2
    out_t[~big] = s / (1 + s)
    out_h[~big] = np.angle(z[~big])
    sw = np.abs(w[big]) ** 2
    out_t[big] = 1.0 / (1.0 + sw)
    out_h[big] = -np.angle(w[big])
    return out_t, np.mod(out_h, 2 * np.pi)


def _chordal(t1, h1, t2, h2) -> np.ndarray:
    return np.linalg.norm(params_to_sphere(t1, h1) - params_to_sphere(t2, h2), axis=-1)


# ---------------------------------------------------------------------------
# univariate
# ---------------------------------------------------------------------------

def residual_cp1(b: np.ndarray, t, theta) -> np.ndarray:
    b = np.asarray(b, dtype=complex)
    D = b.size - 1
    v = factor_values(D, np.atleast_1d(t), np.atleast_1d(theta))
    return np.abs(v @ b) / (np.linalg.norm(b) * np.sqrt(D + 1))


def _horner(a_high: np.ndarray, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Value and derivative of a polynomial (highest degree first) at x."""
    p = np.zeros_like(x, dtype=complex)
    dp = np.zeros_like(x, dtype=complex)
    for c in a_high:
        dp = dp * x + p
        p = p * x + c
    return p, dp


def _newton_polish(a_low: np.ndarray, z: np.ndarray, steps: int = 3) -> np.ndarray:
    """Polish roots; |z| <= 1 in the z chart, otherwise in w = 1/z."""
    z = z.astype(complex).copy()
    inner = np.abs(z) <= 1
    for chart, mask in ((a_low[::-1], inner), (a_low, ~inner)):
        if not mask.any():
            continue
        x = z[mask] if chart is not a_low else 1.0 / z[mask]
        for _ in range(steps):
            p, dp = _horner(chart, x)
            ok = np.abs(dp) > 0
            step = np.where(ok, p / np.where(ok, dp, 1.0), 0.0)
            x_new = x - step
            p_new, _ = _horner(chart, x_new)
            better = np.abs(p_new) < np.abs(p)
            x = np.where(better, x_new, x)
        z[mask] = x if chart is not a_low else 1.0 / x
    return z


def _newton_ratio(a_low: np.ndarray, z: np.ndarray) -> np.ndarray:
    """``p(z) / p'(z)`` without overflow (reversed polynomial for |z| > 1)."""
    D = a_low.size - 1
    out = np.empty_like(z)
    inner = np.abs(z) <= 1
    p, dp = _horner(a_low[::-1], z[inner])
    out[inner] = p / dp
    w = 1.0 / z[~inner]
    q, dq = _horner(a_low, w)
    out[~inner] = z[~inner] / (D - w * dq / q)
    return out


def _aberth(a_low: np.ndarray, iters: int = 500) -> np.ndarray:
    """Aberth-Ehrlich simultaneous iteration (fallback for very high degree)."""
    D = a_low.size - 1
    k = np.arange(D)
    z = np.exp(2j * np.pi * (k + 0.25) / D) * (1.0 + 0.5 * (k % 2 - 0.5) / D)
    for _ in range(iters):
        with np.errstate(all="ignore"):
            ratio = _newton_ratio(a_low, z)
            diff = z[:, None] - z[None, :]
            np.fill_diagonal(diff, 1.0)
            inv = 1.0 / diff
            np.fill_diagonal(inv, 0.0)
            w = ratio / (1.0 - ratio * inv.sum(axis=1))
        w = np.where(np.isfinite(w), w, 0.0)
        z = z - w
        if np.all(np.abs(w) < 1e-14 * np.maximum(1.0, np.abs(z))):
            break
    return z


def _chart_poly(a_low: np.ndarray, c: complex) -> tuple[np.ndarray, complex]:
    """Highest-first coefficients and chart coordinate in the chart where |x| <= 1."""
    if abs(c) <= 1:
        return a_low[::-1], c
    return a_low.copy(), 1.0 / c


def _root_condition(a_low: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Absolute root condition ``sum |a_j| |x|^j / |p'(x)|`` in the bounded chart."""
    out = np.empty(z.size)
    inner = np.abs(z) <= 1
    for mask, poly, x in ((inner, a_low[::-1], z[inner]),
                          (~inner, a_low, 1.0 / z[~inner])):
        if not x.size:
            continue
        mag, _ = _horner(np.abs(poly).astype(complex), np.abs(x).astype(complex))
        _, dp = _horner(poly, x)
        with np.errstate(divide="ignore"):
            out[mask] = np.where(dp == 0, np.inf, mag.real / np.abs(dp))
    return out


def _deflation_ok(a_low: np.ndarray, c: complex, m: int, tol: float = 1e-9) -> bool:
    """Whether ``(z - c)^m`` divides the polynomial up to relative backward error ``tol``."""
    q, x = _chart_poly(a_low, c)
    q = q.astype(complex)
    for _ in range(m):
        if q.size < 2:
            return False
        out = np.empty(q.size - 1, dtype=complex)
        acc = 0j
        for i in range(q.size - 1):
            acc = acc * x + q[i]
            out[i] = acc
        rem = acc * x + q[-1]
        scale = float(_horner(np.abs(q), np.array([abs(x)]))[0][0].real)
        if abs(rem) > tol * scale:
            return False
        q = out
    return True


def _refine_multiple(a_low: np.ndarray, c: complex, m: int, iters: int = 50) -> complex:
    """Newton on the (m-1)-th derivative, where a root of multiplicity m is simple."""
    q, x = _chart_poly(a_low, c)
    flip = abs(c) > 1
    f = np.polyder(q, m - 1) if m > 1 else q
    df = np.polyder(f)
    for _ in range(iters):
        d = np.polyval(df, x)
        if d == 0:
            break
        step = np.polyval(f, x) / d
        x = x - step
        if abs(step) < 1e-16 * max(1.0, abs(x)):
            break
    return 1.0 / x if flip else x


SUSPICIOUS_CONDITION = 1e6
LINK_RADIUS = 0.5


def _single_linkage(x: np.ndarray, radius: float) -> list[np.ndarray]:
    n = x.shape[0]
    label = -np.ones(n, int)
    cur = 0
    for i in range(n):
        if label[i] >= 0:
            continue
        stack = [i]
        label[i] = cur
        while stack:
            j = stack.pop()
            near = np.flatnonzero((label < 0) & (np.linalg.norm(x - x[j], axis=1) < radius))
            label[near] = cur
            stack.extend(near.tolist())
        cur += 1
    return [np.flatnonzero(label == c) for c in range(cur)]


def roots_cp1(b) -> ZeroSet:
    """All zeros in CP1 of ``sum_j b_j alpha_j z^j`` (degree D = len(b) - 1).

    Exact vanishing of the lowest / highest coefficients gives roots at 0 / at
    infinity.  Ill-conditioned roots are grouped and accepted as one multiple
    root when the corresponding power of a linear factor divides the polynomial.
    """
    b = np.asarray(b, dtype=complex)
    D = b.size - 1
    if D < 0 or not np.any(b != 0):
        raise RejectedSample("zero section has no divisor")
    if D == 0:
        return ZeroSet(np.zeros((0, 1)), np.zeros((0, 1)), np.zeros(0, int), np.zeros(0))
    a = b * np.exp(log_alpha(D))
    nz = np.flatnonzero(a)
    low, high = nz[0], nz[-1]
    core = a[low:high + 1]
    pts_t, pts_h, mult = [], [], []
    if low:
        pts_t.append(0.0), pts_h.append(0.0), mult.append(int(low))
    if D - high:
        pts_t.append(1.0), pts_h.append(0.0), mult.append(int(D - high))
    if core.size > 1:
        r = _aberth(core) if core.size - 1 > ABERTH_DEGREE else np.roots(core[::-1])
        r = _newton_polish(core, r)
        t, h = _params_from_z(r)
        cond = _root_condition(core, r)
        bad = np.flatnonzero(cond > SUSPICIOUS_CONDITION)
        simple = np.ones(r.size, bool)
        if bad.size > 1:
            for grp in _single_linkage(params_to_sphere(t[bad], h[bad]), LINK_RADIUS):
                idx = bad[grp]
                if idx.size < 2:
                    continue
                xs = params_to_sphere(t[idx], h[idx]).mean(axis=0)
                xs /= np.linalg.norm(xs)
                tc, hc = (xs[2] + 1) / 2, np.mod(np.arctan2(xs[1], xs[0]), 2 * np.pi)
                zc = _params_to_z1(tc, hc)
                if not np.isfinite(zc) or zc == 0:
                    continue
                zc = _refine_multiple(core, zc, idx.size)
                tc, hc = _params_from_z(np.array([zc]))
                tc, hc = float(tc[0]), float(hc[0])
                if np.isfinite(zc) and _deflation_ok(core, zc, idx.size):
                    simple[idx] = False
                    pts_t.append(tc), pts_h.append(hc), mult.append(int(idx.size))
        pts_t += list(t[simple])
        pts_h += list(h[simple])
        mult += [1] * int(simple.sum())
    t, h, m = _dedupe2(np.array(pts_t)[:, None].repeat(2, 1), np.array(pts_h)[:, None].repeat(2, 1),
                       np.array(mult, int))
    t, h = t[:, :1], h[:, :1]
    res = residual_cp1(b, t[:, 0], h[:, 0])
    return ZeroSet(t, h, m, res)


def _params_to_z1(t, h) -> complex:
    if t >= 1:
        return complex(np.inf)
    return complex(np.sqrt(t / (1 - t)) * np.exp(1j * h))


# ---------------------------------------------------------------------------
# bivariate
# ---------------------------------------------------------------------------

def residual_p1xp1(B: np.ndarray, t, theta) -> np.ndarray:
    """Normalised residual of a bidegree section at points (K, 2)."""
    B = np.asarray(B, dtype=complex)
    D1, D2 = B.shape[0] - 1, B.shape[1] - 1
    v1 = factor_values(D1, t[:, 0], theta[:, 0])
    v2 = factor_values(D2, t[:, 1], theta[:, 1])
    val = np.einsum("ki,ij,kj->k", v1, B, v2)
    return np.abs(val) / (np.linalg.norm(B) * np.sqrt(B.size))


def _raw(B: np.ndarray) -> np.ndarray:
    D1, D2 = B.shape[0] - 1, B.shape[1] - 1
    return B * np.exp(log_alpha(D1))[:, None] * np.exp(log_alpha(D2))[None, :]


def _sylvester(f: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Sylvester matrix of polynomials given lowest-degree-first coefficients."""
    m, n = f.size - 1, g.size - 1
    S = np.zeros((m + n, m + n), dtype=complex)
    for i in range(n):
        S[i, i:i + m + 1] = f[::-1]
    for i in range(m):
        S[n + i, i:i + n + 1] = g[::-1]
    return S


def _resultant_coeffs(P: np.ndarray, Q: np.ndarray, K: int) -> np.ndarray:
    """Coefficients (low first, length K+1) of Res_{z2}(P, Q) as a polynomial in z1."""
    M = K + 1
    nodes = np.exp(2j * np.pi * np.arange(M) / M)
    vals = np.empty(M, dtype=complex)
    for k, x in enumerate(nodes):
        f = np.polynomial.polynomial.polyval(x, P)  # coefficients in z2
        g = np.polynomial.polynomial.polyval(x, Q)
        vals[k] = np.linalg.det(_sylvester(f, g))
    return np.fft.fft(vals) / M


def _eval2(C: np.ndarray, u1, u2, charts) -> tuple[complex, complex, complex]:
    """Value and partials of sum C_ij z1^i z2^j in the given per-factor charts."""
    A = C
    if charts[0]:
        A = A[::-1, :]
    if charts[1]:
        A = A[:, ::-1]
    i = np.arange(A.shape[0])
    j = np.arange(A.shape[1])
    p1 = u1 ** i
    p2 = u2 ** j
    d1 = np.where(i > 0, i * u1 ** np.maximum(i - 1, 0), 0)
    d2 = np.where(j > 0, j * u2 ** np.maximum(j - 1, 0), 0)
    return p1 @ A @ p2, d1 @ A @ p2, p1 @ A @ d2


def _newton2(C1, C2, t, h, steps: int = 40):
    """Damped two-variable Newton in the chart where both coordinates are bounded."""
    charts = (int(t[0] > 0.5), int(t[1] > 0.5))
    u = []
    for a in range(2):
        r = np.sqrt(min(t[a], 1 - t[a]) / max(max(t[a], 1 - t[a]), 1e-300))
        u.append(r * np.exp(1j * h[a]) if not charts[a] else r * np.exp(-1j * h[a]))
    u = np.array(u, dtype=complex)

    def merit(v):
        return abs(_eval2(C1, v[0], v[1], charts)[0]) + abs(_eval2(C2, v[0], v[1], charts)[0])

    for _ in range(steps):
        f, f1, f2 = _eval2(C1, u[0], u[1], charts)
        g, g1, g2 = _eval2(C2, u[0], u[1], charts)
        try:
            step = np.linalg.solve(np.array([[f1, f2], [g1, g2]]), np.array([f, g]))
        except np.linalg.LinAlgError:
            break
        if not np.all(np.isfinite(step)):
            break
        m0 = abs(f) + abs(g)
        lam = 1.0
        while lam > 1e-3:
            un = u - lam * step
            if np.all(np.abs(un) <= 2.0) and merit(un) < m0:
                break
            lam *= 0.5
        else:
            break
        u = un
        if np.abs(lam * step).max() < 1e-15:
            break
    tt, hh = np.empty(2), np.empty(2)
    for a in range(2):
        s = abs(u[a]) ** 2
        if charts[a]:
            tt[a], hh[a] = 1 / (1 + s), -np.angle(u[a])
        else:
            tt[a], hh[a] = s / (1 + s), np.angle(u[a])
    return tt, np.mod(hh, 2 * np.pi)


def _solve_once(B1, B2, swap: bool, flip: bool) -> ZeroSet | None:
    """One elimination attempt; hidden variable z1 (after optional swap/flip)."""
    P, Q = _raw(B1), _raw(B2)
    if swap:
        P, Q = P.T, Q.T
    if flip:
        P, Q = P[::-1, :], Q[::-1, :]
    (a1, b1), (a2, b2) = (P.shape[0] - 1, P.shape[1] - 1), (Q.shape[0] - 1, Q.shape[1] - 1)
    K = a1 * b2 + a2 * b1
    if K == 0:
        return ZeroSet(np.zeros((0, 2)), np.zeros((0, 2)), np.zeros(0, int), np.zeros(0))
    sP, sQ = np.abs(P).max(), np.abs(Q).max()
    P, Q = P / sP, Q / sQ
    r = _resultant_coeffs(P, Q, K)
    if np.abs(r).max() < 1e-13:
        raise RejectedSample("resultant vanishes identically: the sections share a component")
    r[np.abs(r) < 1e-14 * np.abs(r).max()] = 0
    z1 = roots_cp1(r / np.exp(log_alpha(K)))
    pts_t, pts_h, mult = [], [], []
    for t1, h1, m1 in zip(z1.t[:, 0], z1.theta[:, 0], z1.multiplicity):
        # candidate z2 from the roots of both sections restricted to this z1
        cand_t, cand_h = [], []
        for C in (P, Q):
            if C.shape[1] == 1:
                continue
            x1 = _params_to_z1(t1, h1)
            if np.isfinite(x1) and abs(x1) <= 1:
                coeffs = np.polynomial.polynomial.polyval(x1, C)
            else:
                w1 = 0.0 if not np.isfinite(x1) else 1.0 / x1
                coeffs = np.polynomial.polynomial.polyval(w1, C[::-1, :])
            if not np.any(np.abs(coeffs) > 1e-300):
                continue
            D2 = C.shape[1] - 1
            zs = roots_cp1(coeffs / np.exp(log_alpha(D2)))
            cand_t += list(zs.t[:, 0])
            cand_h += list(zs.theta[:, 0])
        if not cand_t:
            return None
        ct = np.stack([np.full(len(cand_t), t1), np.array(cand_t)], axis=1)
        ch = np.stack([np.full(len(cand_t), h1), np.array(cand_h)], axis=1)
        score = np.maximum(_res_pair(P, ct, ch), _res_pair(Q, ct, ch))
        order = np.argsort(score)
        taken = 0
        for idx in order:
            if taken >= m1:
                break
            tt, hh = _newton2(P, Q, ct[idx], ch[idx])
            pts_t.append(tt)
            pts_h.append(hh)
            mult.append(1)
            taken += 1
    t = np.array(pts_t)
    h = np.array(pts_h)
    if flip:
        t[:, 0] = 1 - t[:, 0]
        h[:, 0] = np.mod(-h[:, 0], 2 * np.pi)
    if swap:
        t, h = t[:, ::-1].copy(), h[:, ::-1].copy()
    t, h, mult = _dedupe2(t, h, np.array(mult))
    res = np.maximum(residual_p1xp1(B1, t, h), residual_p1xp1(B2, t, h))
    return ZeroSet(t, h, mult, res)


def _res_pair(C, t, h):
    D1, D2 = C.shape[0] - 1, C.shape[1] - 1
    B = C / (np.exp(log_alpha(D1))[:, None] * np.exp(log_alpha(D2))[None, :])
    return residual_p1xp1(B, t, h)


def _dedupe2(t, h, mult):
    keep_t, keep_h, keep_m = [], [], []
    x = params_to_sphere(t, h)
    used = np.zeros(len(t), bool)
    for i in range(len(t)):
        if used[i]:
            continue
        d = np.linalg.norm(x - x[i], axis=-1).max(axis=-1)
        grp = np.flatnonzero(~used & (d < CLUSTER_RADIUS))
        used[grp] = True
        keep_t.append(t[i])
        keep_h.append(h[i])
        keep_m.append(int(mult[grp].sum()))
    return np.array(keep_t).reshape(-1, 2), np.array(keep_h).reshape(-1, 2), np.array(keep_m, int)


def common_zeros_p1xp1(B1, B2) -> ZeroSet:
    """Common zeros of two bidegree sections by hidden-variable resultants.

    Tries the four (hidden variable, chart) combinations until one yields the
    full intersection number with residuals below tolerance.
    """
    B1 = np.atleast_2d(np.asarray(B1, dtype=complex))
    B2 = np.atleast_2d(np.asarray(B2, dtype=complex))
    if not np.any(B1) or not np.any(B2):
        raise RejectedSample("zero section has no divisor")
    (a1, b1), (a2, b2) = (B1.shape[0] - 1, B1.shape[1] - 1), (B2.shape[0] - 1, B2.shape[1] - 1)
    K = a1 * b2 + a2 * b1
    best = None
    for swap, flip in ((False, False), (True, False), (False, True), (True, True)):
        try:
            zs = _solve_once(B1, B2, swap, flip)
        except (np.linalg.LinAlgError, NumericalError):
            continue
        if zs is None:
            continue
        if zs.count == K and zs.max_residual <= RESIDUAL_TOL:
            return zs
        if best is None or abs(zs.count - K) < abs(best.count - K):
            best = zs
    found = "none" if best is None else f"{best.count} zeros, residual {best.max_residual:.2e}"
    raise RejectedSample(f"elimination failed after chart swaps (expected {K}; got {found})")


def zero_measure(zs: ZeroSet, normalization: float):
    """Atomic measure ``[s = 0] / prod A``: (sphere points, masses)."""
    if not normalization > 0:
        raise ValueError("normalisation must be positive")
    return zs.sphere, zs.multiplicity / float(normalization)


def intersection_number(degrees) -> int:
    """d on CP1; a1 b2 + a2 b1 for bidegrees ((a1, b1), (a2, b2))."""
    if len(degrees) == 1:
        return int(degrees[0][0])
    (a1, b1), (a2, b2) = degrees
    return int(a1 * b2 + a2 * b1)


def solve_sections(frames, coefficients) -> ZeroSet:
    """Common zeros of ``s_k = sum_j c_kj S_kj`` for frame coefficient vectors c_k.

    One section on CP1, two on CP1 x CP1 (m = n).
    """
    if len(frames) != len(coefficients):
        raise ValueError("one coefficient vector per frame is needed")
    pre = [fr.section_coefficients(c).reshape([D + 1 for D in fr.basis.degrees])
           for fr, c in zip(frames, coefficients)]
    if len(pre) == 1 and pre[0].ndim == 1:
        zs = roots_cp1(pre[0])
    elif len(pre) == 2 and pre[0].ndim == 2:
        zs = common_zeros_p1xp1(pre[0], pre[1])
    else:
        raise ValueError("only m = n = 1 and m = n = 2 are supported")
    if zs.max_residual > RESIDUAL_TOL:
        raise RejectedSample(f"polished residual {zs.max_residual:.2e} exceeds {RESIDUAL_TOL:g}")
    return zs
