"""Lower-orthant probabilities Pr(Z <= z) for Z ~ N(0, V), k <= 3.

Rank is detected from the eigenvalues of V (threshold 1e-10 * trace) and the
probability is computed on the reduced Gaussian, so singular covariances are
handled exactly rather than by regularization.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate, special

RANK_TOL = 1e-10
# A zero-variance coordinate is the point mass Z_i = 0.  A z_i a hair below 0
# usually comes from round-off in sqrt(n) * (R - J), so it counts as a tie.
ATOM_TOL = 1e-9
_GL_X, _GL_W = np.polynomial.legendre.leggauss(24)


def qinv(eps):
    """Inverse of the Gaussian tail function Q, i.e. Q^{-1}(eps)."""
    eps = np.asarray(eps, dtype=float)
    if np.any((eps <= 0) | (eps >= 1)):
        raise ValueError("Q^{-1} needs 0 < eps < 1")
    out = -special.ndtri(eps)
    return float(out) if out.ndim == 0 else out


def qfunc(x):
    return special.ndtr(-np.asarray(x, dtype=float))


def bvn_cdf(h, k, rho: float):
    """Standard bivariate normal CDF Pr(Z1 <= h, Z2 <= k), correlation rho.

    Uses the Owen's T representation; vectorized over h and k.
    """
    h, k = np.broadcast_arrays(np.asarray(h, dtype=float), np.asarray(k, dtype=float))
    if rho >= 1.0:
        return special.ndtr(np.minimum(h, k))
    if rho <= -1.0:
        return np.maximum(0.0, special.ndtr(h) + special.ndtr(k) - 1.0)
    r = math.sqrt((1.0 - rho) * (1.0 + rho))
    out = np.empty(h.shape)
    hz = h == 0
    kz = k == 0
    both = hz & kz
    out[both] = 0.25 + math.asin(rho) / (2 * math.pi)

    rest = ~both
    hh, kk = h[rest], k[rest]
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        a_h = (kk - rho * hh) / (hh * r)
        a_k = (hh - rho * kk) / (kk * r)
        t_h = np.where(hh == 0, 0.25 * np.sign(kk), special.owens_t(hh, np.where(hh == 0, 0.0, a_h)))
        t_k = np.where(kk == 0, 0.25 * np.sign(hh), special.owens_t(kk, np.where(kk == 0, 0.0, a_k)))
    prod = hh * kk
    beta = np.where((prod > 0) | ((prod == 0) & (hh + kk >= 0)), 0.0, 0.5)
    val = 0.5 * special.ndtr(hh) + 0.5 * special.ndtr(kk) - t_h - t_k - beta
    # infinite arguments reduce to marginals
    val = np.where(np.isposinf(hh), special.ndtr(kk), val)
    val = np.where(np.isposinf(kk), special.ndtr(hh), val)
    val = np.where(np.isneginf(hh) | np.isneginf(kk), 0.0, val)
    out[rest] = val
    return np.clip(out, 0.0, 1.0)


def _factor(v: np.ndarray):
    """Return A (k x r) with V = A A^T, keeping eigenvalues above RANK_TOL * trace."""
    tr = float(np.trace(v))
    if tr <= 0:
        return np.zeros((v.shape[0], 0))
    w, e = np.linalg.eigh(v)
    keep = w > RANK_TOL * tr
    return e[:, keep] * np.sqrt(w[keep])


def numerical_rank(v) -> int:
    v = np.asarray(v, dtype=float)
    return int(_factor(0.5 * (v + v.T)).shape[1])


def _rank1(a: np.ndarray, z: np.ndarray) -> float:
    scale = np.max(np.abs(a))
    lo, hi = -np.inf, np.inf
    for ai, zi in zip(a, z):
        if abs(ai) <= 1e-12 * scale:
            if zi < -ATOM_TOL:
                return 0.0
        elif ai > 0:
            hi = min(hi, zi / ai)
        else:
            lo = max(lo, zi / ai)
    if lo >= hi:
        return 0.0
    return float(max(0.0, special.ndtr(hi) - special.ndtr(lo)))


def _rank2_polygon(a: np.ndarray, z: np.ndarray) -> float:
    """Pr(A W <= z), W ~ N(0, I_2), by quadrature over the first coordinate."""
    scale = np.max(np.abs(a))
    w_lo, w_hi = -10.0, 10.0
    up, dn = [], []
    for (a1, a2), zi in zip(a, z):
        if abs(a2) <= 1e-12 * scale:
            if abs(a1) <= 1e-12 * scale:
                if zi < -ATOM_TOL:
                    return 0.0
            elif a1 > 0:
                w_hi = min(w_hi, zi / a1)
            else:
                w_lo = max(w_lo, zi / a1)
        elif a2 > 0:
            up.append((a1, a2, zi))
        else:
            dn.append((a1, a2, zi))
    if w_lo >= w_hi:
        return 0.0

    def bounds(w1):
        ub = min(((zi - a1 * w1) / a2 for a1, a2, zi in up), default=np.inf)
        lb = max(((zi - a1 * w1) / a2 for a1, a2, zi in dn), default=-np.inf)
        return lb, ub

    def f(w1):
        lb, ub = bounds(w1)
        if lb >= ub:
            return 0.0
        return math.exp(-0.5 * w1 * w1) / math.sqrt(2 * math.pi) * (special.ndtr(ub) - special.ndtr(lb))

    lines = up + dn
    pts = []
    for i in range(len(lines)):
        for j in range(i + 1, len(lines)):
            a1, a2, z1 = lines[i]
            b1, b2, z2 = lines[j]
            det = a1 / a2 - b1 / b2
            if abs(det) > 1e-14:
                w = (z1 / a2 - z2 / b2) / det
                if w_lo < w < w_hi:
                    pts.append(w)
    val, _ = integrate.quad(f, w_lo, w_hi, points=sorted(pts) or None,
                            epsabs=1e-12, epsrel=1e-10, limit=400)
    return float(min(max(val, 0.0), 1.0))


def _trivariate(v: np.ndarray, z: np.ndarray) -> float:
    s = np.sqrt(np.diag(v))
    h = z / s
    c = v / np.outer(s, s)
    if h[0] < -10:
        return 0.0
    r12, r13, r23 = c[0, 1], c[0, 2], c[1, 2]
    c2 = math.sqrt(max(1 - r12 * r12, 0.0))
    c3 = math.sqrt(max(1 - r13 * r13, 0.0))
    rc = (r23 - r12 * r13) / (c2 * c3)
    rc = min(max(rc, -1.0), 1.0)

    def integrand(w):
        w = np.asarray(w, dtype=float)
        dens = np.exp(-0.5 * w * w) / math.sqrt(2 * math.pi)
        return dens * bvn_cdf((h[1] - r12 * w) / c2, (h[2] - r13 * w) / c3, rc)

    top = min(float(h[0]), 10.0)

    def panels(width):
        edges = np.arange(-10.0, top, width)
        edges = np.append(edges, top)
        mid = 0.5 * (edges[1:] + edges[:-1])[:, None]
        half = 0.5 * (edges[1:] - edges[:-1])[:, None]
        x = mid + half * _GL_X[None, :]
        return float(np.sum(half * _GL_W[None, :] * integrand(x.ravel()).reshape(x.shape)))

    coarse = panels(0.5)
    fine = panels(0.25)
    if abs(coarse - fine) < 1e-11:
        return float(min(max(fine, 0.0), 1.0))
    val, _ = integrate.quad(lambda w: float(integrand(w)), -10.0, top,
                            epsabs=1e-12, epsrel=1e-10, limit=500)
    return float(min(max(val, 0.0), 1.0))


def mvn_lower_orthant(v_matrix, z) -> float:
    """Pr(Z <= z componentwise) for Z ~ N(0, V); entries of z may be infinite."""
    v = np.atleast_2d(np.asarray(v_matrix, dtype=float))
    z = np.atleast_1d(np.asarray(z, dtype=float))
    k = z.size
    if v.shape != (k, k):
        raise ValueError(f"covariance shape {v.shape} does not match z of length {k}")
    if k > 3:
        raise ValueError("orthant probabilities are supported for k <= 3 only")
    if np.any(np.isnan(z)):
        raise ValueError("z contains NaN")
    if not np.allclose(v, v.T, atol=1e-12 * max(1.0, float(np.abs(v).max()))):
        raise ValueError("covariance must be symmetric")
    v = 0.5 * (v + v.T)
    if np.linalg.eigvalsh(v).min() < -RANK_TOL * max(float(np.trace(v)), 1e-300):
        raise ValueError("covariance must be positive semidefinite")
    if np.any(np.isneginf(z)):
        return 0.0
    keep = ~np.isposinf(z)
    if not keep.any():
        return 1.0
    v = v[np.ix_(keep, keep)]
    z = z[keep]
    a = _factor(v)
    r = a.shape[1]
    if r == 0:
        return 1.0 if np.all(z >= -ATOM_TOL) else 0.0
    if r == 1:
        return _rank1(a[:, 0], z)
    if z.size == 2:
        s = np.sqrt(np.diag(v))
        rho = float(v[0, 1] / (s[0] * s[1]))
        return float(bvn_cdf(z[0] / s[0], z[1] / s[1], min(max(rho, -1.0), 1.0)))
    if r == 2:
        return _rank2_polygon(a, z)
    return _trivariate(v, z)
