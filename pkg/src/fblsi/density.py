"""Per-letter density-vector atoms and n-fold tail probabilities.

Every achievability bound in this package has the form "probability that a sum
of n i.i.d. density vectors crosses some thresholds" plus residuals.  This module
turns an instance into the finite distribution of the per-letter vector and then
evaluates such events exactly (composition enumeration), by Monte Carlo, or with
a Gaussian approximation carrying a Berry-Esseen slack.
"""

from __future__ import annotations

import itertools
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import special

from .instances import ChannelInstance, GpInstance, WakInstance, WzInstance
from .prob import JointPmf, Pmf
from .second_order.mvn import RANK_TOL, mvn_lower_orthant

DEDUP_TOL = 1e-12
TIE_TOL = 1e-9
MAX_COMPOSITIONS = 10**7
_CHUNK = 1 << 16
_MC_SHARD = 1 << 15
BERRY_ESSEEN_CONST = 254.0


class InfeasibleError(RuntimeError):
    """Raised when exact enumeration would exceed the composition budget."""


@dataclass(frozen=True)
class AtomDistribution:
    """Finite distribution of a k-dimensional per-letter vector."""

    values: np.ndarray
    probs: np.ndarray
    dedup_tol: float = DEDUP_TOL

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        p = np.array(self.probs, dtype=float)
        if vals.ndim != 2 or p.ndim != 1 or vals.shape[0] != p.size or p.size == 0:
            raise ValueError("values must be (m, k) with one probability per atom")
        if not 1 <= vals.shape[1] <= 4:
            raise ValueError("atom dimension must be between 1 and 4")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("atom probabilities must be a pmf")
        if not np.all(np.isfinite(vals)):
            raise ValueError("atom values must be finite")
        vals, p = _dedup(vals, p, self.dedup_tol)
        vals.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "probs", p)

    @property
    def dim(self) -> int:
        return int(self.values.shape[1])

    @property
    def size(self) -> int:
        return int(self.probs.size)

    def mean(self) -> np.ndarray:
        return self.probs @ self.values

    def cov(self) -> np.ndarray:
        c = self.values - self.mean()
        return (c * self.probs[:, None]).T @ c

    def third_abs_moment(self) -> float:
        c = self.values - self.mean()
        return float(self.probs @ np.linalg.norm(c, axis=1) ** 3)

    def project(self, coords: Sequence[int]) -> "AtomDistribution":
        return AtomDistribution(self.values[:, list(coords)], self.probs, self.dedup_tol)


def _dedup(vals: np.ndarray, p: np.ndarray, tol: float):
    keep = p > 0
    vals, p = vals[keep], p[keep]
    order = np.lexsort(vals.T[::-1])
    vals, p = vals[order], p[order]
    out_v, out_p = [], []
    for v, q in zip(vals, p):
        for i, w in enumerate(out_v):
            if np.max(np.abs(w - v)) <= tol:
                out_p[i] += q
                break
        else:
            out_v.append(v.copy())
            out_p.append(q)
    return np.array(out_v), np.array(out_p)


def _log2_ratio(num, den):
    return np.log2(num) - np.log2(den)


def _require_positive(arr, mask, what: str):
    if np.any(arr[mask] <= 0):
        raise ValueError(f"zero probability inside a log on a positive-probability outcome ({what})")


def _wak_atoms(inst: WakInstance):
    p = inst.joint()  # t u x y
    p_tu = p.sum(axis=(2, 3), keepdims=True)
    p_tux = p.sum(axis=3, keepdims=True)
    p_tuy = p.sum(axis=2, keepdims=True)
    p_y = p.sum(axis=(0, 1, 2))[None, None, None, :]
    pos = p > 0
    b = np.broadcast_to
    _require_positive(b(p_tux, p.shape), pos, "P_X|UT")
    with np.errstate(divide="ignore", invalid="ignore"):
        c1 = -_log2_ratio(b(p_tux, p.shape), b(p_tu, p.shape))
        c2 = _log2_ratio(b(p_tuy, p.shape), b(p_tu, p.shape) * b(p_y, p.shape))
    return p, np.stack([c1, c2], axis=-1)


def _wz_atoms(inst: WzInstance):
    p = inst.joint()  # t u x y z
    shp = p.shape
    b = lambda a: np.broadcast_to(a, shp)
    p_tu = b(p.sum(axis=(2, 3, 4), keepdims=True))
    p_tux = b(p.sum(axis=(3, 4), keepdims=True))
    p_tuy = b(p.sum(axis=(2, 4), keepdims=True))
    p_x = b(p.sum(axis=(0, 1, 3, 4))[None, None, :, None, None])
    p_y = b(p.sum(axis=(0, 1, 2, 4))[None, None, None, :, None])
    pos = p > 0
    _require_positive(p_tuy, pos, "P_Y|UT")
    with np.errstate(divide="ignore", invalid="ignore"):
        c1 = -_log2_ratio(p_tuy, p_tu * p_y)
        c2 = _log2_ratio(p_tux, p_tu * p_x)
    d = b(inst.distortion[None, None, :, None, :])
    return p, np.stack([c1, c2, d], axis=-1)


def _gp_atoms(inst: GpInstance):
    p = inst.joint()  # t u s x y
    shp = p.shape
    b = lambda a: np.broadcast_to(a, shp)
    p_t = b(p.sum(axis=(1, 2, 3, 4), keepdims=True))
    p_tu = b(p.sum(axis=(2, 3, 4), keepdims=True))
    p_tuy = b(p.sum(axis=(2, 3), keepdims=True))
    p_ty = b(p.sum(axis=(1, 2, 3), keepdims=True))
    p_tus = b(p.sum(axis=(3, 4), keepdims=True))
    p_s = b(inst.p_s.probs[None, None, :, None, None])
    pos = p > 0
    _require_positive(p_tus, pos, "P_S|UT")
    with np.errstate(divide="ignore", invalid="ignore"):
        c1 = _log2_ratio(p_tuy * p_t, p_tu * p_ty)
        c2 = -_log2_ratio(p_tus, p_tu * p_s)
    g = b(-inst.cost[None, None, None, :, None])
    return p, np.stack([c1, c2, g], axis=-1)


def _corner_atoms(p_xy: JointPmf):
    p = p_xy.probs
    p_y = p.sum(axis=0, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        c1 = -_log2_ratio(p, np.broadcast_to(p_y, p.shape))
        c2 = -np.log2(p)
    return p[None], np.stack([c1, c2], axis=-1)[None]


def _lossless_atoms(p_x: Pmf):
    p = p_x.probs
    with np.errstate(divide="ignore"):
        return p[None], (-np.log2(p))[None, :, None]


def _channel_atoms(inst: ChannelInstance):
    p = inst.joint()  # x y
    p_y = p.sum(axis=0, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        c = _log2_ratio(inst.channel.rows, np.broadcast_to(p_y, p.shape))
    return p[None], c[None, ..., None]


def _infer_kind(obj) -> str:
    if isinstance(obj, WakInstance):
        return "wak"
    if isinstance(obj, WzInstance):
        return "wz"
    if isinstance(obj, GpInstance):
        return "gp"
    if isinstance(obj, ChannelInstance):
        return "channel"
    if isinstance(obj, Pmf):
        return "lossless"
    if isinstance(obj, JointPmf):
        return "corner"
    raise TypeError(f"cannot build atoms for {type(obj).__name__}")


def _raw_atoms(obj, kind: str | None):
    kind = kind or _infer_kind(obj)
    if kind == "corner" and isinstance(obj, WakInstance):
        obj = obj.p_xy
    builders = {
        "wak": (WakInstance, _wak_atoms),
        "wz": (WzInstance, _wz_atoms),
        "gp": (GpInstance, _gp_atoms),
        "corner": (JointPmf, _corner_atoms),
        "lossless": (Pmf, _lossless_atoms),
        "channel": (ChannelInstance, _channel_atoms),
    }
    if kind not in builders:
        raise ValueError(f"unknown atom kind {kind!r}")
    cls, fn = builders[kind]
    if not isinstance(obj, cls):
        raise TypeError(f"kind {kind!r} needs a {cls.__name__}, got {type(obj).__name__}")
    return fn(obj)


def per_letter_atoms(obj, kind: str | None = None) -> AtomDistribution:
    """Distribution of the per-letter density vector (time-sharing symbol drawn i.i.d.)."""
    p, vals = _raw_atoms(obj, kind)
    k = vals.shape[-1]
    flat_p = p.ravel()
    flat_v = vals.reshape(-1, k)
    pos = flat_p > 0
    return AtomDistribution(flat_v[pos], flat_p[pos] / flat_p[pos].sum())


def per_letter_atoms_by_t(obj, kind: str | None = None) -> list[tuple[float, AtomDistribution]]:
    """Conditional atom distributions given each time-sharing symbol with P_T(t) > 0."""
    p, vals = _raw_atoms(obj, kind)
    k = vals.shape[-1]
    out = []
    for t in range(p.shape[0]):
        pt = p[t].ravel()
        mass = pt.sum()
        if mass <= 0:
            continue
        pos = pt > 0
        out.append((float(mass), AtomDistribution(vals[t].reshape(-1, k)[pos], pt[pos] / mass)))
    return out


# ------------------------------------------------------------------ events

_DIRS = (">", ">=", "<", "<=")


@dataclass(frozen=True)
class TailSpec:
    """Event on the n-fold sum S: per-coordinate S_i <dir_i> threshold_i, combined."""

    thresholds: tuple[float, ...]
    directions: tuple[str, ...]
    combine: str = "union"

    def __post_init__(self):
        th = tuple(float(t) for t in self.thresholds)
        dirs = tuple(self.directions)
        if len(th) != len(dirs) or not th:
            raise ValueError("one direction per threshold is required")
        if any(d not in _DIRS for d in dirs):
            raise ValueError(f"directions must be among {_DIRS}")
        if self.combine not in ("union", "intersection"):
            raise ValueError("combine must be 'union' or 'intersection'")
        if any(math.isnan(t) for t in th):
            raise ValueError("NaN threshold")
        object.__setattr__(self, "thresholds", th)
        object.__setattr__(self, "directions", dirs)

    @property
    def dim(self) -> int:
        return len(self.thresholds)

    def holds(self, sums: np.ndarray) -> np.ndarray:
        """Boolean mask over rows of ``sums`` (shape (B, k))."""
        sums = np.atleast_2d(sums)
        union = self.combine == "union"
        out = None
        for i, (t, d) in enumerate(zip(self.thresholds, self.directions)):
            s = sums[:, i]
            if d == ">":
                m = s > t + TIE_TOL
            elif d == ">=":
                m = s >= t - TIE_TOL
            elif d == "<":
                m = s < t - TIE_TOL
            else:
                m = s <= t + TIE_TOL
            if out is None:
                out = m
            elif union:
                out |= m
            else:
                out &= m
        return out


def _check_spec(atoms: AtomDistribution, spec: TailSpec):
    if spec.dim != atoms.dim:
        raise ValueError(f"spec has {spec.dim} coordinates, atoms have {atoms.dim}")


def _tilt_vector(atoms: AtomDistribution, tilt) -> np.ndarray | None:
    if tilt is None:
        return None
    if isinstance(tilt, (int, np.integer)):
        return atoms.values[:, int(tilt)].copy()
    w = np.asarray(tilt, dtype=float)
    if w.shape != (atoms.size,):
        raise ValueError("tilt must be a coordinate index or one log2-weight per atom")
    return w


def composition_count(n: int, m: int) -> int:
    return math.comb(n + m - 1, m - 1)


def _compositions(n: int, m: int):
    """Yield (B, m) integer arrays covering every composition of n into m parts."""
    if m == 1:
        yield np.array([[n]])
        return
    bars = itertools.combinations(range(n + m - 1), m - 1)
    while True:
        block = list(itertools.islice(bars, _CHUNK))
        if not block:
            return
        b = np.array(block, dtype=np.int64)
        counts = np.empty((b.shape[0], m), dtype=np.int64)
        counts[:, 0] = b[:, 0]
        counts[:, 1:-1] = np.diff(b, axis=1) - 1
        counts[:, -1] = n + m - 2 - b[:, -1]
        yield counts


def nfold_tail_exact(atoms: AtomDistribution, n: int, spec: TailSpec, tilt=None) -> float:
    """Exact Pr(event) for the sum of n i.i.d. atoms, or E[2^{sum of tilt} 1{event}].

    ``tilt`` is either a coordinate index (weight 2^{S_i}) or a per-atom log2 weight.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    _check_spec(atoms, spec)
    m = atoms.size
    count = composition_count(n, m)
    if count > MAX_COMPOSITIONS:
        raise InfeasibleError(
            f"{count} compositions of n={n} over {m} atoms exceed {MAX_COMPOSITIONS}; "
            "use the Monte Carlo or Gaussian evaluator"
        )
    w = _tilt_vector(atoms, tilt)
    lg = special.gammaln(np.arange(n + 1) + 1.0)
    logp = np.log(atoms.probs)
    terms = []
    for counts in _compositions(n, m):
        sums = counts @ atoms.values
        hit = spec.holds(sums)
        if not hit.any():
            continue
        c = counts[hit]
        logw = lg[n] - lg[c].sum(axis=1) + c @ logp
        if w is not None:
            logw = logw + math.log(2.0) * (c @ w)
        terms.append(math.fsum(np.exp(logw)))
    return math.fsum(terms)


def fblsi_threads() -> int:
    """Worker cap from the FBL_THREADS environment variable (default 1)."""
    try:
        return max(1, int(os.environ.get("FBL_THREADS", "1")))
    except ValueError:
        return 1


def nfold_tail_mc(atoms: AtomDistribution, n: int, spec: TailSpec, samples: int = 100_000,
                  seed: int = 0, tilt=None, workers: int | None = None) -> tuple[float, float]:
    """Monte Carlo estimate and standard error; deterministic for a fixed seed.

    Samples are split into fixed-size shards seeded from the master seed, so the
    result does not depend on the number of workers.
    """
    if samples < 1000:
        raise ValueError("at least 1000 samples are required")
    if n < 1:
        raise ValueError("n must be at least 1")
    _check_spec(atoms, spec)
    w = _tilt_vector(atoms, tilt)
    sizes = [_MC_SHARD] * (samples // _MC_SHARD)
    if samples % _MC_SHARD:
        sizes.append(samples % _MC_SHARD)
    seeds = np.random.SeedSequence(seed).spawn(len(sizes))

    def shard(args):
        size, ss = args
        rng = np.random.default_rng(ss)
        counts = rng.multinomial(n, atoms.probs, size=size)
        hit = spec.holds(counts @ atoms.values).astype(float)
        if w is not None:
            hit = hit * np.exp2(counts @ w)
        return float(hit.sum()), float((hit * hit).sum())

    workers = workers or fblsi_threads()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(shard, zip(sizes, seeds)))
    else:
        parts = [shard(a) for a in zip(sizes, seeds)]
    s1 = math.fsum(p[0] for p in parts)
    s2 = math.fsum(p[1] for p in parts)
    mean = s1 / samples
    var = max(s2 / samples - mean * mean, 0.0)
    return mean, math.sqrt(var / samples)


@dataclass(frozen=True)
class BerryEsseen:
    """Two-sided slack on any convex-set probability of the normalized sum."""

    slack: float
    rank: int
    reduced: bool


def berry_esseen_slack(atoms: AtomDistribution, n: int, coords: Sequence[int] | None = None) -> BerryEsseen:
    """254 sqrt(r) xi / (lambda_min^{3/2} sqrt(n)) on the non-degenerate subspace."""
    a = atoms if coords is None else atoms.project(coords)
    v = a.cov()
    tr = float(np.trace(v))
    if tr <= 0:
        return BerryEsseen(0.0, 0, a.dim > 0)
    lam, e = np.linalg.eigh(v)
    keep = lam > RANK_TOL * tr
    r = int(keep.sum())
    proj = (a.values - a.mean()) @ e[:, keep]
    xi = float(a.probs @ np.linalg.norm(proj, axis=1) ** 3)
    slack = BERRY_ESSEEN_CONST * math.sqrt(r) * xi / (lam[keep].min() ** 1.5 * math.sqrt(n))
    return BerryEsseen(slack, r, r < a.dim)


def nfold_tail_gaussian(atoms: AtomDistribution, n: int, spec: TailSpec) -> tuple[float, BerryEsseen]:
    """Gaussian approximation N(nJ, nV) of the event, with a Berry-Esseen certificate."""
    if n < 1:
        raise ValueError("n must be at least 1")
    _check_spec(atoms, spec)
    union = spec.combine == "union"
    # work with the intersection form: union = 1 - Pr(all complements)
    dirs = []
    for d in spec.directions:
        upper = d in ("<", "<=")
        dirs.append(not upper if union else upper)  # True: constraint S_i <= t_i
    mean = n * atoms.mean()
    cov = n * atoms.cov()
    used, flips, z = [], [], []
    for i, (t, up) in enumerate(zip(spec.thresholds, dirs)):
        if math.isinf(t):
            always = (t > 0) == up
            if always:
                continue
            return (1.0 if union else 0.0), berry_esseen_slack(atoms, n)
        used.append(i)
        flips.append(1.0 if up else -1.0)
        z.append((t - mean[i]) * (1.0 if up else -1.0))
    if used:
        f = np.array(flips)
        sub = cov[np.ix_(used, used)] * np.outer(f, f)
        inter = mvn_lower_orthant(sub, np.array(z))
        cert = berry_esseen_slack(atoms, n, used)
    else:
        inter = 1.0
        cert = BerryEsseen(0.0, 0, False)
    est = 1.0 - inter if union else inter
    return float(min(max(est, 0.0), 1.0)), cert
