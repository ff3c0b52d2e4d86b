"""Second-order inner regions for WAK, WZ and GP coding and the point-to-point rates.

Rates are in bits. The third-order term defaults to 2 log2(n)/n per coordinate
of the density vector; ``logterm=False`` removes it (the usual choice for plots).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from ..density import InfeasibleError
from ..prob import Pmf
from .mvn import qinv
from .sset import (
    min_coordinate_sum,
    min_pair_sum_given_third,
    s_set_boundary,
    s_set_membership,
    z2_given_z1,
)
from .stats import DispersionStats, dispersion_stats

Z3_SCAN_TAG = "z3-scan"


def log_term(n: int, enabled: bool = True) -> float:
    if n < 1:
        raise ValueError("blocklength must be positive")
    return 2.0 * math.log2(n) / n if enabled else 0.0


@dataclass(frozen=True)
class RegionCurve:
    points: np.ndarray
    coords: tuple[str, str]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        pts = np.array(self.points, dtype=float).reshape(-1, 2)
        if not np.all(np.isfinite(pts)):
            raise ValueError("region points must be finite")
        pts = pts[np.argsort(pts[:, 0], kind="stable")]
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]


def _stats(obj, kind: str) -> DispersionStats:
    if isinstance(obj, DispersionStats):
        return obj
    return dispersion_stats(obj, kind)


def _meta(obj, n, eps, construction, logterm, **extra) -> dict:
    meta = {"n": int(n), "eps": float(eps), "construction": construction, "logterm": bool(logterm)}
    fp = getattr(obj, "fingerprint", None)
    if callable(fp):
        meta["instance"] = fp()
    meta.update(extra)
    return meta


def _pareto(pts: np.ndarray) -> np.ndarray:
    """Drop points strictly dominated (smaller in both coordinates) by another point."""
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    pts = pts[order]
    keep = []
    best = math.inf
    for i, (_, b) in enumerate(pts):
        if b <= best:
            keep.append(i)
        best = min(best, b)
    out = pts[keep]
    # a point is strictly dominated only if some point is smaller in both coordinates
    mask = np.ones(len(out), dtype=bool)
    for i, (a, b) in enumerate(out):
        if np.any((out[:, 0] < a) & (out[:, 1] < b)):
            mask[i] = False
    return out[mask]


# ---------------------------------------------------------------- WAK


def wak_min_r2(obj, n: int, eps: float, r1: float, logterm: bool = True) -> float:
    """Smallest R2 with (R1, R2) in J + S(V, eps)/sqrt(n) + lt; +inf if R1 is too small."""
    st = _stats(obj, "wak")
    lt = log_term(n, logterm)
    rn = math.sqrt(n)
    z2 = z2_given_z1(st.v_matrix, eps, rn * (r1 - st.j_mean[0] - lt))
    return st.j_mean[1] + z2 / rn + lt


def wak_contains(obj, n: int, eps: float, point, logterm: bool = True) -> bool:
    st = _stats(obj, "wak")
    z = math.sqrt(n) * (np.asarray(point, dtype=float) - st.j_mean - log_term(n, logterm))
    return s_set_membership(st.v_matrix, eps, z)


def wak_union_min_r2(objs: Iterable, n: int, eps: float, r1_grid, logterm: bool = True) -> np.ndarray:
    """Lower envelope min_i R2_i(R1) of a union of WAK regions, on a grid of R1 values."""
    stats = [_stats(o, "wak") for o in objs]
    grid = np.asarray(r1_grid, dtype=float)
    out = np.full(grid.shape, math.inf)
    for st in stats:
        out = np.minimum(out, [wak_min_r2(st, n, eps, r, logterm) for r in grid])
    return out


def wak_region(obj, n: int, eps: float, variant: str = "cs", *, rho_grid: Sequence[float] | None = None,
               lam_grid: Sequence[float] | None = None, logterm: bool = True, num: int = 200) -> RegionCurve:
    """Boundary of the second-order WAK region.

    variant: "cs" (mean plus S-set), "modified" (union over rho >= 0 of the
    [rho, -rho] shifted sets), "verdu_split" (eps split as lam*eps and
    (1-lam)*eps between the coordinates) or "corner" (joint-entropy corner).
    """
    lt = log_term(n, logterm)
    rn = math.sqrt(n)
    if variant == "corner":
        st = _stats(obj, "corner")
        z = s_set_boundary(st.v_matrix, eps, num=num)
        r1 = st.j_mean[0] + z[:, 0] / rn + lt
        r_sum = st.j_mean[1] + z[:, 1] / rn + lt
        return RegionCurve(np.column_stack([r1, r_sum - r1]), ("R1", "R2"),
                           _meta(obj, n, eps, "corner", logterm))
    st = _stats(obj, "wak")
    if variant == "cs":
        z = s_set_boundary(st.v_matrix, eps, num=num)
        extra = {}
    elif variant == "modified":
        rhos = np.asarray([0.0] if rho_grid is None else rho_grid, dtype=float)
        if rhos.size == 0 or np.any(rhos < 0):
            raise ValueError("rho grid must be nonempty and nonnegative")
        base = s_set_boundary(st.v_matrix, eps, num=num)
        if np.all(rhos == 0):
            z = base
        else:
            z = _pareto(np.vstack([base + np.array([r, -r]) for r in rhos]))
        extra = {"rho_grid": rhos.tolist()}
    elif variant == "verdu_split":
        lams = np.linspace(0.0, 1.0, 101) if lam_grid is None else np.asarray(lam_grid, dtype=float)
        lams = lams[(lams > 0) & (lams < 1)]
        if lams.size == 0:
            raise ValueError("lambda grid needs points strictly inside (0, 1)")
        z = verdu_split_points(st.v_matrix, eps, lams)
        extra = {"lam_grid": lams.tolist()}
    else:
        raise ValueError(f"unknown WAK region variant {variant!r}")
    pts = st.j_mean[None, :] + z / rn + lt
    return RegionCurve(pts, ("R1", "R2"), _meta(obj, n, eps, variant, logterm, **extra))


def verdu_split_points(v, eps: float, lams) -> np.ndarray:
    """(sqrt(V11) Q^{-1}(lam eps), sqrt(V22) Q^{-1}((1-lam) eps)) for each lam in (0, 1)."""
    v = np.asarray(v, dtype=float)
    lams = np.asarray(lams, dtype=float)
    s1, s2 = math.sqrt(max(v[0, 0], 0.0)), math.sqrt(max(v[1, 1], 0.0))
    return np.column_stack([s1 * qinv(lams * eps), s2 * qinv((1 - lams) * eps)])


# ---------------------------------------------------------------- 3-D projections


def _z3_grid(v3, eps: float, num: int) -> np.ndarray:
    s3 = math.sqrt(max(v3[2, 2], 0.0))
    if s3 == 0.0:
        return np.array([0.0])
    return s3 * qinv(eps * np.geomspace(0.999, 1e-4, num))


def _pair_min(v3, eps, z3) -> float:
    return min_pair_sum_given_third(v3, eps, z3)


def wz_region(obj, n: int, eps: float, logterm: bool = True, num: int = 40) -> RegionCurve:
    """(R, D) boundary of M(J + S(V, eps)/sqrt(n) + lt 1_3) traced by scanning z3."""
    st = _stats(obj, "wz")
    lt = log_term(n, logterm)
    rn = math.sqrt(n)
    pts = []
    for z3 in _z3_grid(st.v_matrix, eps, num):
        m = _pair_min(st.v_matrix, eps, z3)
        if math.isfinite(m):
            pts.append((st.j_mean[0] + st.j_mean[1] + m / rn + 2 * lt, st.j_mean[2] + z3 / rn + lt))
    return RegionCurve(np.array(pts), ("R", "D"), _meta(obj, n, eps, Z3_SCAN_TAG, logterm))


def wz_rate(obj, n: int, eps: float, level_d: float | None = None, logterm: bool = True) -> float:
    """Smallest R with (R, D) in the projected WZ region."""
    st = _stats(obj, "wz")
    if level_d is None:
        level_d = getattr(obj, "level_d", None)
        if level_d is None:
            raise ValueError("distortion level is required")
    lt = log_term(n, logterm)
    rn = math.sqrt(n)
    z3 = rn * (level_d - st.j_mean[2] - lt)
    m = _pair_min(st.v_matrix, eps, z3)
    if not math.isfinite(m):
        raise InfeasibleError(f"distortion level {level_d} is not achievable at n={n}, eps={eps}")
    return float(st.j_mean[0] + st.j_mean[1] + m / rn + 2 * lt)


def gp_rate(obj, n: int, eps: float, budget: float | None = None, logterm: bool = True) -> float:
    """Largest R with (R, budget) in M(J - S(V, eps)/sqrt(n) - lt 1_3).

    With an infinite budget the cost coordinate drops out and the rate is
    C - min{z1 + z2 : (z1, z2) in S(V12, eps)}/sqrt(n) - 2 lt.
    """
    st = _stats(obj, "gp")
    if budget is None:
        budget = getattr(obj, "budget_gamma", math.inf)
    lt = log_term(n, logterm)
    rn = math.sqrt(n)
    first = st.j_mean[0] + st.j_mean[1]
    if math.isinf(budget):
        m = min_coordinate_sum(st.v_matrix[:2, :2], eps)
    else:
        m = _pair_min(st.v_matrix, eps, rn * (budget + st.j_mean[2] - lt))
        if not math.isfinite(m):
            raise InfeasibleError(f"cost budget {budget} is not achievable at n={n}, eps={eps}")
    return float(first - m / rn - 2 * lt)


def gp_region(obj, n: int, eps: float, logterm: bool = True, num: int = 40) -> RegionCurve:
    """(R, Gamma) boundary: R = J1 + J2 - m(z3)/sqrt(n) - 2 lt, Gamma = E g + z3/sqrt(n) + lt."""
    st = _stats(obj, "gp")
    lt = log_term(n, logterm)
    rn = math.sqrt(n)
    pts = []
    for z3 in _z3_grid(st.v_matrix, eps, num):
        m = _pair_min(st.v_matrix, eps, z3)
        if math.isfinite(m):
            pts.append((st.j_mean[0] + st.j_mean[1] - m / rn - 2 * lt, -st.j_mean[2] + z3 / rn + lt))
    return RegionCurve(np.array(pts), ("R", "Gamma"), _meta(obj, n, eps, Z3_SCAN_TAG, logterm))


# ---------------------------------------------------------------- point-to-point


def lossless_rate(p_x, n: int, eps: float, logterm: bool = True) -> float:
    """H(X) + sqrt(V/n) Q^{-1}(eps) + 2 log2(n)/n."""
    if not isinstance(p_x, (Pmf, DispersionStats)):
        p_x = Pmf(np.asarray(p_x, dtype=float))
    st = _stats(p_x, "lossless")
    return float(st.j_mean[0] + math.sqrt(st.v_matrix[0, 0] / n) * qinv(eps) + log_term(n, logterm))


def channel_rate(channel_instance, n: int, eps: float, logterm: bool = True) -> float:
    """I(X;Y) - sqrt(V/n) Q^{-1}(eps) - 4 log2(n)/n (the log term of two coordinates)."""
    st = _stats(channel_instance, "channel")
    return float(st.j_mean[0] - math.sqrt(st.v_matrix[0, 0] / n) * qinv(eps) - 2 * log_term(n, logterm))
