"""The Gaussian set S(V, eps) = {z : Pr(Z <= z) >= 1 - eps}, Z ~ N(0, V)."""

from __future__ import annotations

import math

import numpy as np
from scipy import optimize

from .mvn import RANK_TOL, mvn_lower_orthant, qinv

MEMBERSHIP_TOL = 1e-10


def _check_eps(eps: float) -> None:
    if not (0.0 < eps < 1.0):
        raise ValueError(f"eps must lie in (0, 1), got {eps!r}")


def s_set_membership(v, eps: float, z) -> bool:
    _check_eps(eps)
    return mvn_lower_orthant(v, z) >= 1.0 - eps - MEMBERSHIP_TOL


def _scale(v) -> float:
    return math.sqrt(max(float(np.trace(np.atleast_2d(v))), 1e-300))


def z2_given_z1(v, eps: float, z1: float) -> float:
    """Smallest z2 with (z1, z2) in S(V, eps); +inf when no z2 works."""
    _check_eps(eps)
    v = np.asarray(v, dtype=float)
    target = 1.0 - eps
    if mvn_lower_orthant(v, [z1, math.inf]) < target - MEMBERSHIP_TOL:
        return math.inf
    if v[1, 1] <= RANK_TOL * float(np.trace(v)):
        # Z2 is the point mass at 0: the orthant jumps to its full value exactly there
        return 0.0
    f = lambda z2: mvn_lower_orthant(v, [z1, z2]) - target
    s = _scale(v)
    lo, hi = -10.0 * s, 10.0 * s
    if f(lo) >= 0:
        return lo
    while f(hi) < 0:
        hi *= 2.0
        if hi > 1e3 * s:
            return math.inf
    return float(optimize.brentq(f, lo, hi, xtol=1e-13 * max(1.0, s), rtol=1e-14, maxiter=300))


def s_set_boundary(v, eps: float, axis_grid=None, num: int = 200) -> np.ndarray:
    """Boundary of S(V, eps).

    k = 1: returns the scalar boundary sigma * Q^{-1}(eps) as a length-1 array.
    k = 2: returns an (m, 2) array of boundary points.  With ``axis_grid`` the
    first coordinates are taken from the grid (points with no finite z2 are
    dropped); otherwise z1 = sigma_1 Q^{-1}(a) for a geometric grid of a in (0, eps).
    """
    _check_eps(eps)
    v = np.atleast_2d(np.asarray(v, dtype=float))
    k = v.shape[0]
    if k == 1:
        return np.array([math.sqrt(max(v[0, 0], 0.0)) * qinv(eps)])
    if k != 2:
        raise ValueError("boundary tracing is implemented for k <= 2; use the z3 scan for k = 3")
    if axis_grid is None:
        s1 = math.sqrt(max(v[0, 0], 0.0))
        a = eps * np.concatenate([np.geomspace(1e-6, 0.5, num // 2, endpoint=False),
                                  1 - np.geomspace(0.5, 1e-6, num - num // 2)])
        z1s = s1 * qinv(a)
        if s1 == 0:
            z1s = np.array([0.0])
    else:
        z1s = np.asarray(axis_grid, dtype=float)
        if z1s.size == 0:
            raise ValueError("empty grid")
    pts = [(z1, z2_given_z1(v, eps, z1)) for z1 in z1s]
    pts = np.array([p for p in pts if math.isfinite(p[1])]).reshape(-1, 2)
    return pts[np.argsort(pts[:, 0], kind="stable")]


def min_coordinate_sum(v, eps: float) -> float:
    """min{z1 + z2 : (z1, z2) in S(V, eps)} for a 2 x 2 covariance."""
    _check_eps(eps)
    v = np.asarray(v, dtype=float)
    if float(np.trace(v)) <= 0:
        return 0.0
    s1 = math.sqrt(max(v[0, 0], 0.0))
    if s1 == 0.0:
        return z2_given_z1(v, eps, 0.0)

    # parametrize z1 = s1 Q^{-1}(eps * t); convexity of S makes the sum unimodal in t
    def total(t):
        z1 = s1 * qinv(eps * t)
        return z1 + z2_given_z1(v, eps, z1)

    res = optimize.minimize_scalar(total, bounds=(1e-9, 1 - 1e-9), method="bounded",
                                   options={"xatol": 1e-10})
    best = float(res.fun)
    # guard against a minimizer pinned at the edge of the bracket
    for t in (1e-9, 1 - 1e-9):
        best = min(best, total(t))
    return best


def min_coordinate_sum_by_sweep(v, eps: float, num: int = 4001) -> float:
    """Grid version of ``min_coordinate_sum`` (used as a cross-check)."""
    pts = s_set_boundary(v, eps, num=num)
    return float(np.min(pts.sum(axis=1)))


def _z1_floor(v3, eps, z3):
    """Smallest z1 with Pr(Z1 <= z1, Z3 <= z3) > 1 - eps (z2 unconstrained)."""
    sub = np.asarray(v3)[np.ix_([0, 2], [0, 2])]
    return z2_given_z1(sub[::-1, ::-1], eps, z3)


def min_pair_sum_given_third(v3, eps: float, z3: float, xatol: float = 1e-4) -> float:
    """min{z1 + z2 : (z1, z2, z3) in S(V, eps)}; +inf when z3 is too small."""
    _check_eps(eps)
    v3 = np.asarray(v3, dtype=float)
    if v3.shape != (3, 3):
        raise ValueError("need a 3 x 3 covariance")
    if math.isinf(z3) and z3 > 0:
        return min_coordinate_sum(v3[:2, :2], eps)
    target = 1.0 - eps
    if mvn_lower_orthant(v3[2:, 2:], [z3]) < target - MEMBERSHIP_TOL:
        return math.inf
    z1_lo = _z1_floor(v3, eps, z3)
    if not math.isfinite(z1_lo):
        return math.inf
    s = _scale(v3)

    def z2_of(z1):
        f = lambda z2: mvn_lower_orthant(v3, [z1, z2, z3]) - target
        if f(math.inf) < 0:
            return math.inf
        lo, hi = -10.0 * s, 10.0 * s
        if f(lo) >= 0:
            return lo
        while f(hi) < 0:
            hi *= 2.0
            if hi > 1e3 * s:
                return math.inf
        return float(optimize.brentq(f, lo, hi, xtol=xatol * 1e-2, rtol=1e-12))

    s1 = math.sqrt(max(v3[0, 0], 0.0))
    if s1 == 0.0:
        return z2_of(max(z1_lo, 0.0))
    hi = z1_lo + 12.0 * s1
    # z1 slightly above the floor; offsets on a log scale keep the search stable
    def total(u):
        z1 = z1_lo + math.exp(u)
        return z1 + z2_of(z1)

    lo_u = math.log(max(1e-8 * s1, 1e-300))
    hi_u = math.log(hi - z1_lo)
    res = optimize.minimize_scalar(total, bounds=(lo_u, hi_u), method="bounded",
                                   options={"xatol": xatol})
    return float(min(res.fun, total(hi_u)))
