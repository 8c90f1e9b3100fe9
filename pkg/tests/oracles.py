"""Independent reference computations used by the tests.

Nothing here imports the package's numerics: integrals go through
``scipy.integrate.quad`` and zeros are found by multi-start Newton iteration on
raw monomial coefficients in both affine charts of each factor.
"""
from __future__ import annotations

import math

import numpy as np
from scipy import integrate

# ---------------------------------------------------------------------------
# one-dimensional FS integrals
# ---------------------------------------------------------------------------


def fs_radial_integral(f) -> float:
    """Integral of a radial function f(|z|) against the normalised FS volume on CP1.

    The FS density is (1/pi)(1+r^2)^-2 in the chart, so the radial measure is
    2 r (1+r^2)^-2 dr on [0, inf).
    """
    val, _ = integrate.quad(lambda r: f(r) * 2.0 * r / (1.0 + r * r) ** 2, 0.0, np.inf,
                            epsabs=1e-13, epsrel=1e-12, limit=200)
    return val


def fs_t_integral(g) -> float:
    """Integral of g(t) over t in [0, 1] (the pushforward of FS volume to t)."""
    val, _ = integrate.quad(g, 0.0, 1.0, epsabs=1e-13, epsrel=1e-12, limit=200)
    return val


def monomial_norm_sq(d: int, j: int) -> float:
    """FS L^2 norm squared of the raw monomial z^j as a section of O(d)."""
    return fs_radial_integral(lambda r: r ** (2 * j) * (1.0 + r * r) ** (-d))


def prescale(d: int) -> np.ndarray:
    return np.sqrt([math.comb(d, j) * (d + 1) for j in range(d + 1)])


# ---------------------------------------------------------------------------
# sphere points
# ---------------------------------------------------------------------------


def z_to_sphere(z) -> np.ndarray:
    """Stereographic image (2 Re z, 2 Im z, |z|^2 - 1) / (1 + |z|^2); inf maps to the north pole."""
    z = np.asarray(z, dtype=complex)
    out = np.empty(z.shape + (3,))
    inf = ~np.isfinite(z)
    zf = np.where(inf, 0.0, z)
    s = np.abs(zf) ** 2
    out[..., 0] = 2 * zf.real / (1 + s)
    out[..., 1] = 2 * zf.imag / (1 + s)
    out[..., 2] = (s - 1) / (1 + s)
    out[inf] = (0.0, 0.0, 1.0)
    return out


def chart_to_sphere(chart: int, u) -> np.ndarray:
    """Sphere point of chart coordinate u (chart 1 means w = 1/z)."""
    u = np.asarray(u, dtype=complex)
    x = z_to_sphere(u)
    if chart == 1:
        x = x * np.array([1.0, -1.0, -1.0])
    return x


def hausdorff(X: np.ndarray, Y: np.ndarray) -> float:
    """Hausdorff distance of point sets (K, n, 3) using the max-over-factors chordal metric."""
    if len(X) == 0 and len(Y) == 0:
        return 0.0
    if len(X) == 0 or len(Y) == 0:
        return math.inf
    D = np.linalg.norm(X[:, None] - Y[None, :], axis=-1).max(axis=-1)
    return float(max(D.min(axis=1).max(), D.min(axis=0).max()))


def _dedupe(points: np.ndarray, tol: float) -> np.ndarray:
    keep = []
    for x in points:
        if all(np.linalg.norm(x - y, axis=-1).max() > tol for y in keep):
            keep.append(x)
    return np.array(keep).reshape(-1, *points.shape[1:])


# ---------------------------------------------------------------------------
# univariate brute force
# ---------------------------------------------------------------------------


def brute_roots_cp1(raw, starts_per_chart: int = 200, iters: int = 80) -> np.ndarray:
    """Zeros on CP1 of ``sum_j raw[j] z^j`` (homogeneous degree len(raw) - 1).

    Newton from a polar grid of starts inside the unit disc of each chart.
    Returns (K, 1, 3) sphere points, simple zeros only.
    """
    raw = np.asarray(raw, dtype=complex)
    d = raw.size - 1
    found = []
    r = np.sqrt(np.linspace(0.0, 1.0, int(math.sqrt(starts_per_chart)) + 1))
    th = np.linspace(0, 2 * np.pi, int(math.sqrt(starts_per_chart)), endpoint=False)
    u0 = (r[:, None] * np.exp(1j * (th[None, :] + 0.1))).ravel()
    for chart in (0, 1):
        c = raw if chart == 0 else raw[::-1]
        dc = c[1:] * np.arange(1, d + 1)
        u = u0.copy()
        for _ in range(iters):
            f = np.polynomial.polynomial.polyval(u, c)
            fp = np.polynomial.polynomial.polyval(u, dc)
            step = np.where(np.abs(fp) > 0, f / np.where(fp == 0, 1, fp), 0)
            big = np.abs(step) > 0.5
            step[big] = 0.5 * step[big] / np.abs(step[big])
            u = u - step
        ok = (np.abs(u) <= 1.2) & (np.abs(np.polynomial.polynomial.polyval(u, c))
                                   <= 1e-11 * np.abs(c).sum() * (1 + np.abs(u)) ** d)
        found.extend(chart_to_sphere(chart, u[ok]))
    pts = np.array(found).reshape(-1, 1, 3)
    return _dedupe(pts, 1e-7)


# ---------------------------------------------------------------------------
# bivariate brute force
# ---------------------------------------------------------------------------


def _chart_coeffs(P: np.ndarray, charts) -> np.ndarray:
    out = P
    if charts[0] == 1:
        out = out[::-1, :]
    if charts[1] == 1:
        out = out[:, ::-1]
    return out


def _eval2(P: np.ndarray, u: np.ndarray, v: np.ndarray):
    """Value and partials of sum P[i, j] u^i v^j at arrays u, v."""
    a, b = P.shape[0] - 1, P.shape[1] - 1
    ui = u[:, None] ** np.arange(a + 1)[None, :]
    vj = v[:, None] ** np.arange(b + 1)[None, :]
    dui = np.zeros_like(ui)
    dui[:, 1:] = ui[:, :-1] * np.arange(1, a + 1)[None, :]
    dvj = np.zeros_like(vj)
    dvj[:, 1:] = vj[:, :-1] * np.arange(1, b + 1)[None, :]
    f = np.einsum("pi,ij,pj->p", ui, P, vj)
    fu = np.einsum("pi,ij,pj->p", dui, P, vj)
    fv = np.einsum("pi,ij,pj->p", ui, P, dvj)
    return f, fu, fv


def brute_zeros_p1xp1(P1, P2, radial: int = 6, angular: int = 10, iters: int = 60,
                      tol: float = 1e-12) -> np.ndarray:
    """Common zeros on CP1 x CP1 of raw bidegree polynomials P1[i, j] z1^i z2^j, P2.

    For each of the four chart pairs, Newton's method runs from a polar grid of
    starting points in the closed unit bidisc; converged points inside the
    slightly enlarged bidisc are kept and merged.  Returns (K, 2, 3).
    """
    P1 = np.asarray(P1, dtype=complex)
    P2 = np.asarray(P2, dtype=complex)
    r = np.linspace(0.0, 1.0, radial)
    th = np.linspace(0, 2 * np.pi, angular, endpoint=False) + 0.3
    disc = np.unique(np.round((r[:, None] * np.exp(1j * th[None, :])).ravel(), 14))
    U, V = np.meshgrid(disc, disc + 0.0, indexing="ij")
    U, V = U.ravel(), V.ravel() * np.exp(0.17j)
    scale = np.abs(P1).sum() + np.abs(P2).sum()
    found = []
    for charts in ((0, 0), (0, 1), (1, 0), (1, 1)):
        C1, C2 = _chart_coeffs(P1, charts), _chart_coeffs(P2, charts)
        u, v = U.copy(), V.copy()
        for _ in range(iters):
            f, fu, fv = _eval2(C1, u, v)
            g, gu, gv = _eval2(C2, u, v)
            det = fu * gv - fv * gu
            safe = np.abs(det) > 1e-300
            det = np.where(safe, det, 1.0)
            du = np.where(safe, (f * gv - g * fv) / det, 0.0)
            dv = np.where(safe, (g * fu - f * gu) / det, 0.0)
            n = np.maximum(np.abs(du), np.abs(dv))
            damp = np.where(n > 0.5, 0.5 / np.where(n > 0, n, 1), 1.0)
            u, v = u - damp * du, v - damp * dv
            big = (np.abs(u) > 10) | (np.abs(v) > 10)
            u, v = np.where(big, 0, u), np.where(big, 0, v)
        f, _, _ = _eval2(C1, u, v)
        g, _, _ = _eval2(C2, u, v)
        w = (1 + np.abs(u)) ** (P1.shape[0] + P2.shape[0]) * (1 + np.abs(v)) ** (
            P1.shape[1] + P2.shape[1])
        ok = (np.abs(u) <= 1.2) & (np.abs(v) <= 1.2) & (np.abs(f) + np.abs(g) <= tol * scale * w)
        for uu, vv in zip(u[ok], v[ok]):
            found.append(np.stack([chart_to_sphere(charts[0], uu), chart_to_sphere(charts[1], vv)]))
    pts = np.array(found).reshape(-1, 2, 3)
    return _dedupe(pts, 1e-7)


def raw_from_prescaled(B: np.ndarray) -> np.ndarray:
    """Raw monomial coefficients from the pre-scaled bidegree basis."""
    B = np.asarray(B, dtype=complex)
    a, b = B.shape[0] - 1, B.shape[1] - 1
    return B * prescale(a)[:, None] * prescale(b)[None, :]
