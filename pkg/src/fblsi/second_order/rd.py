"""Rate-distortion function by Blahut-Arimoto, D-tilted information and lossy dispersion."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from ..prob import Pmf
from .mvn import qinv

MAX_ITER = 100_000
RATE_TOL = 1e-10
PRUNE_TOL = 1e-14


class ConvergenceError(RuntimeError):
    """Blahut-Arimoto hit its iteration cap."""


@dataclass(frozen=True)
class RDResult:
    rate: float
    lambda_star: float
    q_xhat: np.ndarray
    distortion: float
    iterations: int


def _as_pmf(p_x) -> np.ndarray:
    return np.asarray(p_x.probs if isinstance(p_x, Pmf) else Pmf(np.asarray(p_x, float)).probs)


def _check_distortion(d: np.ndarray, nx: int) -> np.ndarray:
    d = np.asarray(d, dtype=float)
    if d.ndim != 2 or d.shape[0] != nx:
        raise ValueError("distortion must be a |X| x |Xhat| matrix")
    if np.any(d < 0) or not np.all(np.isfinite(d)):
        raise ValueError("distortion must be finite and nonnegative")
    if np.any(d.min(axis=1) > 0):
        raise ValueError("every source symbol needs a zero-distortion reproduction")
    return d


def _ba_fixed_slope(p, d, s, q0=None, max_iter=MAX_ITER):
    """Blahut-Arimoto at slope s (base 2). Returns (rate, distortion, q, iterations)."""
    nxh = d.shape[1]
    if q0 is None:
        q = np.full(nxh, 1.0 / nxh)
    else:
        # pruned symbols may be active at a different slope, so warm starts keep full support
        q = np.maximum(q0, 1e-6)
        q /= q.sum()
    kern = np.exp2(-s * d)
    rate_prev = math.inf
    for it in range(1, max_iter + 1):
        a = kern * q[None, :]
        z = a.sum(axis=1)
        cond = a / z[:, None]
        q_new = p @ cond
        # symbols whose mass has collapsed never recover; dropping them speeds convergence
        q_new[q_new < PRUNE_TOL] = 0.0
        q_new /= q_new.sum()
        dist = float(np.sum(p[:, None] * cond * d))
        rate = float(-s * dist - np.sum(p * np.log2(z)))
        if abs(rate - rate_prev) < RATE_TOL * 1e-3 and np.max(np.abs(q_new - q)) < 1e-13:
            return max(rate, 0.0), dist, q_new, it
        rate_prev = rate
        q = q_new
    raise ConvergenceError(f"Blahut-Arimoto did not converge in {max_iter} iterations (s={s})")


def rate_distortion(p_x, distortion, level_d: float, max_iter: int = MAX_ITER) -> RDResult:
    """R(P_X, D) with the optimal output law q* and the slope multiplier lambda* = -dR/dD."""
    p = _as_pmf(p_x)
    d = _check_distortion(distortion, p.size)
    if level_d < 0:
        raise ValueError("distortion level must be nonnegative")
    avg = p @ d
    if level_d >= avg.min():
        q = np.zeros(d.shape[1])
        q[int(np.argmin(avg))] = 1.0
        return RDResult(0.0, 0.0, q, float(avg.min()), 0)

    pos = d[d > 0]
    s_zero = 80.0 / pos.min() if pos.size else 0.0
    if level_d <= 0.0:
        rate, dist, q, it = _ba_fixed_slope(p, d, s_zero, max_iter=max_iter)
        return RDResult(rate, s_zero, q, dist, it)

    state = {"q": None, "it": 0}

    def excess(s):
        rate, dist, q, it = _ba_fixed_slope(p, d, s, state["q"], max_iter)
        state["q"] = q
        state["it"] += it
        return dist - level_d

    hi = 1.0
    while excess(hi) > 0:
        hi *= 2.0
        if hi > s_zero:
            raise ConvergenceError("could not bracket the slope for this distortion level")
    s_star = optimize.brentq(excess, 0.0, hi, xtol=1e-14, rtol=1e-15, maxiter=500)
    rate, dist, q, it = _ba_fixed_slope(p, d, s_star, state["q"], max_iter)
    return RDResult(rate, float(s_star), q, dist, state["it"] + it)


def d_tilted_information(x, level_d: float, lambda_star: float, q_xhat, distortion) -> np.ndarray:
    """j(x, D) = -log2 sum_xhat q*(xhat) 2^{lambda* D - lambda* d(x, xhat)}; vectorized over x."""
    d = np.asarray(distortion, dtype=float)
    q = np.asarray(q_xhat, dtype=float)
    rows = d[np.atleast_1d(np.asarray(x, dtype=int))]
    val = -np.log2(np.exp2(lambda_star * level_d - lambda_star * rows) @ q)
    return val if np.ndim(x) else val[0]


@dataclass(frozen=True)
class LossyDispersion:
    rate: float
    dispersion: float
    lambda_star: float
    second_order_rate: float


def lossy_second_order(p_x, distortion, level_d: float, n: int, eps: float) -> LossyDispersion:
    """R(P_X, D) + sqrt(Var j(X, D) / n) Q^{-1}(eps)."""
    p = _as_pmf(p_x)
    rd = rate_distortion(p, distortion, level_d)
    j = d_tilted_information(np.arange(p.size), level_d, rd.lambda_star, rd.q_xhat, distortion)
    mean = float(p @ j)
    var = float(max(p @ (j - mean) ** 2, 0.0))
    return LossyDispersion(rd.rate, var, rd.lambda_star, rd.rate + math.sqrt(var / n) * qinv(eps))
