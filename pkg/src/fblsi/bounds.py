"""Non-asymptotic achievability bounds for WAK, WZ and GP coding.

Each bound is "probability of a threshold event on the n-fold density sum"
plus residual terms.  The probability is handed to a ``TailEvaluator`` (exact,
Monte Carlo or Gaussian).  Residuals with an exact form (the binning/packing
sum and the resolvability functional Delta) are evaluated as exponentially
tilted tails by exact enumeration; otherwise the closed-form relaxation is used
and the report says so.

Time-sharing instances are evaluated with the flattened auxiliary U' = (T, U).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .density import (
    TIE_TOL,
    AtomDistribution,
    InfeasibleError,
    TailSpec,
    nfold_tail_exact,
    nfold_tail_gaussian,
    nfold_tail_mc,
    per_letter_atoms,
)
from .instances import GpInstance, WakInstance, WzInstance
from .prob import JointPmf

INF = math.inf


# ---------------------------------------------------------------- parameters


@dataclass(frozen=True)
class BoundParams:
    """Blocklength, code sizes (log2) and thresholds (bits)."""

    n: int
    log_m: float
    log_l: float | None = None
    log_big_l: float | None = None
    log_j: float | None = None
    gamma_b: float | None = None
    gamma_c: float | None = None
    gamma_p: float | None = None
    gamma_s: float | None = None
    delta: float | None = None

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError("n must be a positive integer")
        for name in ("log_m", "log_l", "log_big_l", "log_j"):
            v = getattr(self, name)
            if v is not None and not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and nonnegative")
        for name in ("gamma_b", "gamma_c", "gamma_p", "gamma_s"):
            v = getattr(self, name)
            if v is not None and (math.isnan(v) or v < 0):
                raise ValueError(f"{name} must be nonnegative")
        if self.delta is not None and not (0 < self.delta < 1):
            raise ValueError("delta must lie in (0, 1)")

    def need(self, *names):
        missing = [k for k in names if getattr(self, k) is None]
        if missing:
            raise ValueError(f"bound needs parameters: {', '.join(missing)}")
        return tuple(getattr(self, k) for k in names)

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__ if getattr(self, k) is not None}


def _clamp(g: float) -> float:
    return max(g, 0.0)


def wak_auto_params(n: int, log_m: float, log_l: float, rho: float = 0.0) -> BoundParams:
    """gamma_b = log|M| - rho sqrt(n) - log n, gamma_c = log|L| + rho sqrt(n) - log n, delta = 1/n.

    With rho > 0, log J = log|L| + rho sqrt(n) for the modified bound.
    Thresholds are clamped at 0 (the bounds need nonnegative thresholds).
    """
    ln = math.log2(n)
    shift = rho * math.sqrt(n)
    return BoundParams(n=n, log_m=log_m, log_l=log_l, log_j=log_l + shift,
                       gamma_b=_clamp(log_m - shift - ln), gamma_c=_clamp(log_l + shift - ln),
                       delta=1.0 / n if n > 1 else 0.5)


def corner_auto_params(n: int, log_m: float, log_l: float) -> BoundParams:
    ln = math.log2(n)
    return BoundParams(n=n, log_m=log_m, log_l=log_l, gamma_b=_clamp(log_m - ln),
                       gamma_s=_clamp(log_m + log_l - ln))


def wz_auto_params(n: int, log_m: float, log_big_l: float) -> BoundParams:
    """gamma_p = log(L/|M|) + log n, gamma_c = log L - log n, delta = 1/n."""
    ln = math.log2(n)
    return BoundParams(n=n, log_m=log_m, log_big_l=log_big_l,
                       gamma_p=_clamp(log_big_l - log_m + ln), gamma_c=_clamp(log_big_l - ln),
                       delta=1.0 / n if n > 1 else 0.5)


def gp_auto_params(n: int, log_m: float, log_big_l: float) -> BoundParams:
    """gamma_p = log(|M| L) + log n, gamma_c = log L - log n, delta = 1/n."""
    ln = math.log2(n)
    return BoundParams(n=n, log_m=log_m, log_big_l=log_big_l,
                       gamma_p=_clamp(log_m + log_big_l + ln), gamma_c=_clamp(log_big_l - ln),
                       delta=1.0 / n if n > 1 else 0.5)


# ---------------------------------------------------------------- reports


@dataclass(frozen=True)
class BoundReport:
    bound: str
    terms: dict
    evaluator: str
    params: dict = field(default_factory=dict)
    notes: tuple = ()

    def __post_init__(self):
        for k, v in self.terms.items():
            if not v >= 0:
                raise ValueError(f"term {k} is negative or NaN: {v}")

    @property
    def raw_total(self) -> float:
        return math.fsum(self.terms.values())

    @property
    def total(self) -> float:
        return min(1.0, self.raw_total)

    def to_dict(self) -> dict:
        return {"bound": self.bound, "total": self.total, "raw_total": self.raw_total,
                "terms": dict(self.terms), "evaluator": self.evaluator,
                "params": dict(self.params), "notes": list(self.notes)}


# ---------------------------------------------------------------- evaluator


@dataclass(frozen=True)
class TailEvaluator:
    """Dispatch n-fold tail computations to the exact, Monte Carlo or Gaussian engine."""

    method: str = "exact"
    samples: int = 100_000
    seed: int = 0

    def __post_init__(self):
        if self.method not in ("exact", "mc", "gauss"):
            raise ValueError("method must be 'exact', 'mc' or 'gauss'")

    def prob(self, atoms: AtomDistribution, n: int, spec: TailSpec) -> tuple[float, dict]:
        if self.method == "exact":
            return nfold_tail_exact(atoms, n, spec), {}
        if self.method == "mc":
            est, se = nfold_tail_mc(atoms, n, spec, self.samples, self.seed)
            return est, {"stderr": se}
        est, cert = nfold_tail_gaussian(atoms, n, spec)
        return est, {"berry_esseen_slack": cert.slack, "rank": cert.rank}

    def weighted(self, atoms: AtomDistribution, n: int, spec: TailSpec, tilt) -> float | None:
        """E[2^{sum of tilt} 1{event}], or None when only a relaxation is available.

        Only exact enumeration is used: sampling estimates of these exponentially
        weighted sums are dominated by rare sequences and come out far too small.
        """
        if self.method != "exact":
            return None
        try:
            return nfold_tail_exact(atoms, n, spec, tilt=tilt)
        except InfeasibleError:
            return None


EXACT = TailEvaluator("exact")


def _prob(ev, atoms, n, thresholds, directions, combine="union"):
    return ev.prob(atoms, n, TailSpec(tuple(thresholds), tuple(directions), combine))


def _single(ev, atoms, n, coord, threshold, direction):
    a = atoms.project([coord])
    return ev.prob(a, n, TailSpec((threshold,), (direction,)))[0]


def _weighted_1d(ev, atoms, n, coord, threshold, direction, sign):
    """E[2^{sign * S_coord} 1{S_coord <direction> threshold}] on the projected atoms."""
    a = atoms.project([coord])
    if math.isinf(threshold):
        # every outcome satisfies an infinite threshold in the permissive direction
        spec = TailSpec((-INF if direction in (">", ">=") else INF,), (direction,))
    else:
        spec = TailSpec((threshold,), (direction,))
    return ev.weighted(a, n, spec, sign * a.values[:, 0])


def _info_notes(info: dict) -> tuple:
    return tuple(f"{k}={v:.6g}" for k, v in info.items())


def _expm(x: float) -> float:
    return math.exp(-x) if x < 745 else 0.0


def _pow2(x: float) -> float:
    return 0.0 if x == -INF else (INF if x > 1023 else 2.0 ** x)


# ---------------------------------------------------------------- WAK


def _wak_atoms(inst: WakInstance) -> AtomDistribution:
    if not isinstance(inst, WakInstance):
        raise TypeError("a WAK instance is required")
    return per_letter_atoms(inst.flattened(), "wak")


def _binning_sum(ev, atoms, n, gamma_b):
    """sum over T_b of P_U(u), i.e. E_{P_UX}[2^{S_b} 1{S_b <= gamma_b}]."""
    return _weighted_1d(ev, atoms, n, 0, gamma_b, "<=", 1.0)


def _delta_nfold(ev, atoms, n, coord, gamma_c, sign=1.0):
    """Delta(gamma_c, P^n) = E[ratio 1{log ratio <= gamma_c}] with log ratio = sign * S_coord."""
    if sign > 0:
        return _weighted_1d(ev, atoms, n, coord, gamma_c, "<=", 1.0)
    return _weighted_1d(ev, atoms, n, coord, -gamma_c, ">=", -1.0)


def wak_cs_bound(inst: WakInstance, params: BoundParams, evaluator: TailEvaluator = EXACT) -> BoundReport:
    n = params.n
    log_m, log_l, gb, gc, delta = params.need("log_m", "log_l", "gamma_b", "gamma_c", "delta")
    atoms = _wak_atoms(inst)
    primary, info = _prob(evaluator, atoms, n, (gb, gc), (">", ">"))
    notes = list(_info_notes(info))
    s_b = _binning_sum(evaluator, atoms, n, gb)
    if s_b is None:
        binning = _pow2(gb - log_m)
        notes.append("binning_residual: relaxed to 2^gamma_b/|M|")
    else:
        binning = s_b * _pow2(-log_m)
    d = _delta_nfold(evaluator, atoms, n, 1, gc)
    if d is None:
        d = _pow2(gc)
        notes.append("covering_residual: Delta relaxed to 2^gamma_c")
    terms = {"primary_prob": primary, "binning_residual": binning,
             "covering_residual": math.sqrt(d * _pow2(-log_l)), "delta": delta}
    return BoundReport("wak-cs", terms, evaluator.method, params.as_dict(), tuple(notes))


def wak_cs_simplified(inst: WakInstance, params: BoundParams, evaluator: TailEvaluator = EXACT) -> BoundReport:
    n = params.n
    log_m, log_l, gb, gc, delta = params.need("log_m", "log_l", "gamma_b", "gamma_c", "delta")
    atoms = _wak_atoms(inst)
    primary, info = _prob(evaluator, atoms, n, (gb, gc), (">", ">"))
    terms = {"primary_prob": primary, "binning_residual": _pow2(gb - log_m),
             "covering_residual": math.sqrt(_pow2(gc - log_l)), "delta": delta}
    return BoundReport("wak-cs-simple", terms, evaluator.method, params.as_dict(), _info_notes(info))


def wak_modified_bound(inst: WakInstance, params: BoundParams, evaluator: TailEvaluator = EXACT) -> BoundReport:
    n = params.n
    log_m, log_l, log_j, gb, gc, delta = params.need("log_m", "log_l", "log_j", "gamma_b", "gamma_c", "delta")
    atoms = _wak_atoms(inst)
    primary, info = _prob(evaluator, atoms, n, (gb, gc), (">", ">"))
    notes = list(_info_notes(info))
    s_b = _binning_sum(evaluator, atoms, n, gb)
    if s_b is None:
        s_b = _pow2(gb)
        notes.append("binning sums relaxed to 2^gamma_b")
    d = _delta_nfold(evaluator, atoms, n, 1, gc)
    if d is None:
        d = _pow2(gc)
        notes.append("covering_residual: Delta relaxed to 2^gamma_c")
    terms = {"primary_prob": primary, "binning_residual": s_b * _pow2(-log_m),
             "helper_binning_residual": s_b * _pow2(log_j - log_m - log_l),
             "covering_residual": math.sqrt(d * _pow2(-log_j)), "delta": delta}
    return BoundReport("wak-modified", terms, evaluator.method, params.as_dict(), tuple(notes))


def wak_corner_bound(p_xy, params: BoundParams, evaluator: TailEvaluator = EXACT) -> BoundReport:
    """Slepian-Wolf style bound with thresholds on -log P_{X|Y} and -log P_{XY}."""
    if isinstance(p_xy, WakInstance):
        p_xy = p_xy.p_xy
    if not isinstance(p_xy, JointPmf):
        raise TypeError("a joint pmf of (X, Y) is required")
    n = params.n
    log_m, log_l, gb, gs = params.need("log_m", "log_l", "gamma_b", "gamma_s")
    atoms = per_letter_atoms(p_xy, "corner")
    primary, info = _prob(evaluator, atoms, n, (gb, gs), (">", ">"))
    terms = {"primary_prob": primary, "binning_residual": _pow2(gb - log_m),
             "joint_binning_residual": _pow2(gs - log_m - log_l)}
    return BoundReport("wak-corner", terms, evaluator.method, params.as_dict(), _info_notes(info))


def _wak_marginals(inst, params, evaluator):
    n = params.n
    log_m, log_l, gb, gc = params.need("log_m", "log_l", "gamma_b", "gamma_c")
    atoms = _wak_atoms(inst)
    p_b = _single(evaluator, atoms, n, 0, gb, ">")
    p_c = _single(evaluator, atoms, n, 1, gc, ">")
    return p_b, p_c, _pow2(gb - log_m), _expm(_pow2(log_l - gc))


def wak_kuzuoka_bound(inst: WakInstance, params: BoundParams, evaluator: TailEvaluator = EXACT) -> BoundReport:
    p_b, p_c, res_b, res_c = _wak_marginals(inst, params, evaluator)
    terms = {"binning_prob": 2.0 * math.sqrt(p_b), "covering_prob": p_c,
             "binning_residual": res_b, "covering_residual": res_c}
    return BoundReport("wak-kuzuoka", terms, evaluator.method, params.as_dict())


def wak_verdu_bound(inst: WakInstance, params: BoundParams, evaluator: TailEvaluator = EXACT) -> BoundReport:
    p_b, p_c, res_b, res_c = _wak_marginals(inst, params, evaluator)
    terms = {"binning_prob": p_b, "covering_prob": p_c,
             "binning_residual": res_b, "covering_residual": res_c}
    return BoundReport("wak-verdu", terms, evaluator.method, params.as_dict())


# ---------------------------------------------------------------- WZ


def _wz_atoms(inst: WzInstance) -> AtomDistribution:
    if not isinstance(inst, WzInstance):
        raise TypeError("a WZ instance is required")
    return per_letter_atoms(inst.flattened(), "wz")


def _wz_distortion_threshold(inst: WzInstance, n: int) -> float:
    return n * inst.level_d


def wz_cs_bound(inst: WzInstance, params: BoundParams, evaluator: TailEvaluator = EXACT) -> BoundReport:
    """Packing, covering and excess-distortion events under one probability."""
    n = params.n
    log_m, log_big_l, gp, gc, delta = params.need("log_m", "log_big_l", "gamma_p", "gamma_c", "delta")
    atoms = _wz_atoms(inst)
    primary, info = _prob(evaluator, atoms, n, (-gp, gc, _wz_distortion_threshold(inst, n)),
                          (">", ">", ">"))
    notes = list(_info_notes(info))
    s_p = _weighted_1d(evaluator, atoms, n, 0, -gp, "<=", 1.0)
    if s_p is None:
        s_p = _pow2(-gp)
        notes.append("packing_residual: relaxed to L/(2^gamma_p |M|)")
    d = _delta_nfold(evaluator, atoms, n, 1, gc)
    if d is None:
        d = _pow2(gc)
        notes.append("covering_residual: Delta relaxed to 2^gamma_c")
    terms = {"primary_prob": primary, "packing_residual": s_p * _pow2(log_big_l - log_m),
             "covering_residual": math.sqrt(d * _pow2(-log_big_l)), "delta": delta}
    return BoundReport("wz-cs", terms, evaluator.method, params.as_dict(), tuple(notes))


def wz_cs_simplified(inst: WzInstance, params: BoundParams, evaluator: TailEvaluator = EXACT) -> BoundReport:
    n = params.n
    log_m, log_big_l, gp, gc, delta = params.need("log_m", "log_big_l", "gamma_p", "gamma_c", "delta")
    atoms = _wz_atoms(inst)
    primary, info = _prob(evaluator, atoms, n, (-gp, gc, _wz_distortion_threshold(inst, n)),
                          (">", ">", ">"))
    terms = {"primary_prob": primary, "packing_residual": _pow2(log_big_l - gp - log_m),
             "covering_residual": math.sqrt(_pow2(gc - log_big_l)), "delta": delta}
    return BoundReport("wz-cs-simple", terms, evaluator.method, params.as_dict(), _info_notes(info))


def _wz_marginals(inst, params, evaluator):
    n = params.n
    log_m, log_big_l, gp, gc = params.need("log_m", "log_big_l", "gamma_p", "gamma_c")
    atoms = _wz_atoms(inst)
    p_p = _single(evaluator, atoms, n, 0, -gp, ">")
    p_c = _single(evaluator, atoms, n, 1, gc, ">")
    p_d = _single(evaluator, atoms, n, 2, _wz_distortion_threshold(inst, n), ">")
    return p_p, p_c, p_d, _pow2(log_big_l - gp - log_m), _expm(_pow2(log_big_l - gc))


def wz_verdu_bound(inst: WzInstance, params: BoundParams, evaluator: TailEvaluator = EXACT) -> BoundReport:
    p_p, p_c, p_d, res_p, res_c = _wz_marginals(inst, params, evaluator)
    terms = {"packing_prob": p_p, "covering_prob": p_c, "distortion_prob": p_d,
             "packing_residual": res_p, "covering_residual": res_c}
    return BoundReport("wz-verdu", terms, evaluator.method, params.as_dict())


def wz_iwata_bound(inst: WzInstance, params: BoundParams, evaluator: TailEvaluator = EXACT) -> BoundReport:
    p_p, p_c, p_d, res_p, res_c = _wz_marginals(inst, params, evaluator)
    terms = {"packing_prob": 2.0 * math.sqrt(p_p), "covering_prob": p_c, "distortion_prob": p_d,
             "packing_residual": res_p, "covering_residual": res_c}
    return BoundReport("wz-iwata", terms, evaluator.method, params.as_dict())


# ---------------------------------------------------------------- GP


def _gp_atoms(inst: GpInstance) -> AtomDistribution:
    if not isinstance(inst, GpInstance):
        raise TypeError("a GP instance is required")
    return per_letter_atoms(inst.flattened(), "gp")


def _gp_cost_threshold(inst: GpInstance, n: int) -> float:
    # the third coordinate is -g(x); excess cost means its sum drops below -n Gamma
    return -n * inst.budget_gamma if math.isfinite(inst.budget_gamma) else -INF


def gp_cs_bound(inst: GpInstance, params: BoundParams, evaluator: TailEvaluator = EXACT) -> BoundReport:
    n = params.n
    log_m, log_big_l, gp, gc, delta = params.need("log_m", "log_big_l", "gamma_p", "gamma_c", "delta")
    atoms = _gp_atoms(inst)
    primary, info = _prob(evaluator, atoms, n, (gp, -gc, _gp_cost_threshold(inst, n)),
                          ("<", "<", "<"))
    notes = list(_info_notes(info))
    s_p = _weighted_1d(evaluator, atoms, n, 0, gp, ">=", -1.0)
    if s_p is None:
        s_p = _pow2(-gp)
        notes.append("packing_residual: relaxed to L|M|/2^gamma_p")
    d = _delta_nfold(evaluator, atoms, n, 1, gc, sign=-1.0)
    if d is None:
        d = _pow2(gc)
        notes.append("covering_residual: Delta relaxed to 2^gamma_c")
    terms = {"primary_prob": primary, "packing_residual": s_p * _pow2(log_m + log_big_l),
             "covering_residual": math.sqrt(d * _pow2(-log_big_l)), "delta": delta}
    return BoundReport("gp-cs", terms, evaluator.method, params.as_dict(), tuple(notes))


def gp_cs_simplified(inst: GpInstance, params: BoundParams, evaluator: TailEvaluator = EXACT) -> BoundReport:
    n = params.n
    log_m, log_big_l, gp, gc, delta = params.need("log_m", "log_big_l", "gamma_p", "gamma_c", "delta")
    atoms = _gp_atoms(inst)
    primary, info = _prob(evaluator, atoms, n, (gp, -gc, _gp_cost_threshold(inst, n)),
                          ("<", "<", "<"))
    terms = {"primary_prob": primary, "packing_residual": _pow2(log_m + log_big_l - gp),
             "covering_residual": math.sqrt(_pow2(gc - log_big_l)), "delta": delta}
    return BoundReport("gp-cs-simple", terms, evaluator.method, params.as_dict(), _info_notes(info))


def _gp_marginals(inst, params, evaluator):
    # the earlier bounds carry no cost constraint
    inst = replace(inst, budget_gamma=INF)
    n = params.n
    log_m, log_big_l, gp, gc = params.need("log_m", "log_big_l", "gamma_p", "gamma_c")
    atoms = _gp_atoms(inst)
    p_p = _single(evaluator, atoms, n, 0, gp, "<")
    p_c = _single(evaluator, atoms, n, 1, -gc, "<")
    return p_p, p_c, _pow2(log_m + log_big_l - gp), _expm(_pow2(log_big_l - gc))


def gp_verdu_bound(inst: GpInstance, params: BoundParams, evaluator: TailEvaluator = EXACT) -> BoundReport:
    p_p, p_c, res_p, res_c = _gp_marginals(inst, params, evaluator)
    terms = {"packing_prob": p_p, "covering_prob": p_c,
             "packing_residual": res_p, "covering_residual": res_c}
    return BoundReport("gp-verdu", terms, evaluator.method, params.as_dict())


def gp_tan_bound(inst: GpInstance, params: BoundParams, evaluator: TailEvaluator = EXACT) -> BoundReport:
    p_p, p_c, res_p, res_c = _gp_marginals(inst, params, evaluator)
    terms = {"packing_prob": 2.0 * math.sqrt(p_p), "covering_prob": p_c,
             "packing_residual": res_p, "covering_residual": res_c}
    return BoundReport("gp-tan", terms, evaluator.method, params.as_dict())


# ---------------------------------------------------------------- Delta


def delta_quantity(p_uz, gamma_c: float) -> float:
    """sum_{u,z} P_U(u) P_{Z|U}(z|u)^2 / P_Z(z) 1{P_{Z|U}(z|u)/P_Z(z) <= 2^gamma_c}."""
    p = np.asarray(p_uz.probs if isinstance(p_uz, JointPmf) else JointPmf(np.asarray(p_uz, float)).probs)
    if p.ndim != 2:
        raise ValueError("a two-dimensional joint pmf of (U, Z) is required")
    p_u = p.sum(axis=1, keepdims=True)
    p_z = p.sum(axis=0, keepdims=True)
    pos = p > 0
    ratio = np.zeros_like(p)
    ratio[pos] = (p / (p_u * p_z))[pos]
    log_ratio = np.full_like(p, -INF)
    log_ratio[pos] = np.log2(ratio[pos])
    # same tie tolerance as the density engine, so U independent of Z keeps every pair at gamma_c = 0
    keep = pos & (log_ratio <= gamma_c + TIE_TOL)
    return math.fsum((p * ratio)[keep])


__all__ = [
    "BoundParams", "BoundReport", "TailEvaluator", "EXACT", "delta_quantity",
    "wak_auto_params", "corner_auto_params", "wz_auto_params", "gp_auto_params",
    "wak_cs_bound", "wak_cs_simplified", "wak_modified_bound", "wak_corner_bound",
    "wak_kuzuoka_bound", "wak_verdu_bound",
    "wz_cs_bound", "wz_cs_simplified", "wz_verdu_bound", "wz_iwata_bound",
    "gp_cs_bound", "gp_cs_simplified", "gp_verdu_bound", "gp_tan_bound",
]
