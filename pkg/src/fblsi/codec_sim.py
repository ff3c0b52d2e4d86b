"""Small-blocklength Monte Carlo of the resolvability code and the WAK code built on it.

Sequences of length n over an alphabet of size a are stored as integer indices
in [0, a^n) (first letter most significant), so every n-fold quantity the
decoder needs is a lookup table.  Codeword indices k and l are 0-based.

Random streams come from ``SeedSequence([seed, block])`` with a fixed block of
trials, so the aggregate does not depend on how blocks are scheduled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bounds import BoundParams
from .density import TIE_TOL, AtomDistribution, TailSpec, nfold_tail_exact
from .instances import WakInstance
from .prob import JointPmf, Pmf

MAX_STATES = 1_000_000
TRIAL_BLOCK = 2048


def _generator(*key: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(k) for k in key])))


def _probs(p) -> np.ndarray:
    if isinstance(p, (Pmf, JointPmf)):
        return np.asarray(p.probs, dtype=float)
    return np.asarray(p, dtype=float)


def _check_states(a: int, n: int, what: str) -> int:
    size = a ** n
    if size > MAX_STATES:
        raise ValueError(f"{what}: {a}^{n} sequences exceed the enumeration limit {MAX_STATES}")
    return size


def _seq_index(seqs: np.ndarray, a: int) -> np.ndarray:
    """Row-wise base-a index of integer sequences (last axis is time)."""
    n = seqs.shape[-1]
    return seqs @ (a ** np.arange(n - 1, -1, -1, dtype=np.int64))


def _all_sequences(a: int, n: int) -> np.ndarray:
    idx = np.arange(a ** n, dtype=np.int64)
    return (idx[:, None] // a ** np.arange(n - 1, -1, -1, dtype=np.int64)) % a


def _nfold_log2_table(log_kernel: np.ndarray, n: int) -> np.ndarray:
    """T[i, j] = sum_t log_kernel[a_t, b_t] for sequence indices i, j."""
    a, b = log_kernel.shape
    _check_states(a * b, n, "joint table")
    sa, sb = _all_sequences(a, n), _all_sequences(b, n)
    out = np.zeros((a ** n, b ** n))
    for t in range(n):
        out += log_kernel[sa[:, t][:, None], sb[:, t][None, :]]
    return out


# ---------------------------------------------------------------- resolvability code


@dataclass(frozen=True)
class ResolvabilityCode:
    """Codebook u_{kl} of U-sequences, shape (K, L, n), drawn i.i.d. from P_U."""

    codebook: np.ndarray
    k_size: int
    l_size: int
    seed: int
    n: int

    def __post_init__(self):
        cb = np.array(self.codebook, dtype=np.int64)
        if cb.shape != (self.k_size, self.l_size, self.n):
            raise ValueError("codebook shape must be (K, L, n)")
        cb.setflags(write=False)
        object.__setattr__(self, "codebook", cb)

    @property
    def size(self) -> int:
        return self.k_size * self.l_size

    def indices(self, u_size: int) -> np.ndarray:
        """Codeword sequence indices, shape (K, L)."""
        return _seq_index(self.codebook, u_size)


def build_code(p_u, n: int, K: int, L: int, seed: int) -> ResolvabilityCode:
    if K < 1 or L < 1 or n < 1:
        raise ValueError("K, L and n must be positive")
    p = _probs(p_u)
    cb = _generator(seed).choice(p.size, size=(K, L, n), p=p)
    return ResolvabilityCode(cb, int(K), int(L), int(seed), int(n))


@dataclass(frozen=True)
class _UZTables:
    """n-fold kernel P_{Z|U} and log ratio log P_{Z|U}/P_Z indexed by (u-seq, z-seq)."""

    kernel: np.ndarray
    log_ratio: np.ndarray
    p_z: np.ndarray
    u_size: int
    z_size: int


def _uz_tables(p_uz, n: int) -> _UZTables:
    p = _probs(p_uz)
    if p.ndim != 2:
        raise ValueError("a two-dimensional joint pmf of (U, Z) is required")
    p_u = p.sum(axis=1)
    p_z = p.sum(axis=0)
    with np.errstate(divide="ignore"):
        cond = np.where(p_u[:, None] > 0, p / np.where(p_u > 0, p_u, 1.0)[:, None], 0.0)
        log_k = np.log2(cond)
        log_r = log_k - np.log2(p_z)[None, :]
    log_kernel = _nfold_log2_table(log_k, n)
    log_ratio = _nfold_log2_table(np.where(np.isfinite(log_k), log_r, -np.inf), n)
    log_pz = _nfold_log2_table(np.log2(np.where(p_z > 0, p_z, 1.0))[None, :], n)[0]
    return _UZTables(np.exp2(log_kernel), log_ratio, np.exp2(log_pz), p.shape[0], p.shape[1])


def _smoothed_weights(tab: _UZTables, u_idx: np.ndarray, z_idx: np.ndarray, gamma_c) -> np.ndarray:
    """P-bar_{Z|U}(z | u) for codeword indices u_idx (..., L) and outputs z_idx (...)."""
    w = tab.kernel[u_idx, z_idx[..., None]]
    if gamma_c is not None and not math.isinf(gamma_c):
        w = np.where(tab.log_ratio[u_idx, z_idx[..., None]] <= gamma_c + TIE_TOL, w, 0.0)
    return w


def _sample_rows(w: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One index per row of w, proportional to the row; uniform on all-zero rows."""
    tot = w.sum(axis=-1, keepdims=True)
    w = np.where(tot > 0, w / np.where(tot > 0, tot, 1.0), 1.0 / w.shape[-1])
    cdf = np.cumsum(w, axis=-1)
    r = rng.random(w.shape[:-1])[..., None] * cdf[..., -1:]
    return np.minimum((cdf <= r).sum(axis=-1), w.shape[-1] - 1)


def simulation_map_sample(code: ResolvabilityCode, p_uz, k: int, z_seq, gamma_c=None,
                          rng: np.random.Generator | int | None = None) -> int:
    """Draw l with probability proportional to P-bar_{Z|U}(z | u_kl).

    The smoothed kernel keeps P_{Z|U} only where log P_{Z|U}/P_Z <= gamma_c
    (no smoothing when gamma_c is None or infinite).  When every codeword in
    row k gives zero weight the draw is uniform over l.
    """
    z = np.asarray(z_seq, dtype=np.int64)
    if z.shape != (code.n,):
        raise ValueError("z_seq must have length n")
    if not 0 <= k < code.k_size:
        raise ValueError("k out of range")
    if not isinstance(rng, np.random.Generator):
        rng = _generator(0 if rng is None else rng)
    tab = _uz_tables(p_uz, code.n)
    u_idx = code.indices(tab.u_size)[k]
    w = _smoothed_weights(tab, u_idx, np.asarray(_seq_index(z, tab.z_size)), gamma_c)
    return int(_sample_rows(w, rng))


def simulated_output_law(p_uz, code: ResolvabilityCode) -> np.ndarray:
    """P_Z~(z) = (1/|I|) sum_i P_{Z|U}(z | u_i) over all K L codewords."""
    tab = _uz_tables(p_uz, code.n)
    _check_states(tab.z_size, code.n, "output alphabet")
    u_idx = code.indices(tab.u_size).reshape(-1)
    return tab.kernel[u_idx].mean(axis=0)


def resolvability_distance(p_uz, code: ResolvabilityCode) -> float:
    """Exact d(P_Z~, P_Z^n) = (1/2) sum_z |P_Z~(z) - P_Z^n(z)|."""
    tab = _uz_tables(p_uz, code.n)
    return 0.5 * math.fsum(np.abs(simulated_output_law(p_uz, code) - tab.p_z))


def _ratio_atoms(p_uz) -> AtomDistribution:
    p = _probs(p_uz)
    p_u = p.sum(axis=1, keepdims=True)
    p_z = p.sum(axis=0, keepdims=True)
    pos = p > 0
    vals = np.log2(p[pos]) - np.log2((p_u * p_z)[pos])
    return AtomDistribution(vals, p[pos] / p[pos].sum())


def resolvability_delta(p_uz, n: int, gamma_c: float) -> float:
    """Delta(gamma_c, P_UZ^n) = E[ratio 1{log ratio <= gamma_c}], exact over types."""
    atoms = _ratio_atoms(p_uz)
    spec = TailSpec((-math.inf,), (">",)) if math.isinf(gamma_c) else TailSpec((gamma_c,), ("<=",))
    return nfold_tail_exact(atoms, n, spec, tilt=0)


def resolvability_bound(p_uz, n: int, size: int, gamma_c: float) -> float:
    """P_UZ^n(log ratio > gamma_c) + (1/2) sqrt(Delta(gamma_c, P_UZ^n) / size)."""
    tail = nfold_tail_exact(_ratio_atoms(p_uz), n, TailSpec((gamma_c,), (">",)))
    return tail + 0.5 * math.sqrt(resolvability_delta(p_uz, n, gamma_c) / size)


# ---------------------------------------------------------------- WAK pipeline


@dataclass(frozen=True)
class TrialStats:
    trials: int
    errors: int
    e1: int
    e2: int

    def __post_init__(self):
        if not 0 <= self.errors <= self.trials:
            raise ValueError("errors must lie between 0 and the number of trials")
        if self.errors > self.e1 + self.e2:
            raise ValueError("every error belongs to at least one event")

    @property
    def error_rate(self) -> float:
        return self.errors / self.trials if self.trials else 0.0

    @property
    def stderr(self) -> float:
        if self.trials == 0:
            return 0.0
        p = self.error_rate
        return math.sqrt(p * (1 - p) / self.trials)

    def to_dict(self) -> dict:
        return {"trials": self.trials, "errors": self.errors, "error_rate": self.error_rate,
                "stderr": self.stderr, "e1_binning_set": self.e1, "e2_collision": self.e2}


def _size_from_log(log_size: float, what: str) -> int:
    size = int(round(2.0 ** log_size))
    if size < 1 or abs(math.log2(size) - log_size) > 1e-9:
        raise ValueError(f"{what} must be the log2 of a positive integer, got {log_size}")
    return size


@dataclass(frozen=True)
class _WakTables:
    nx: int
    ny: int
    nu: int
    p_xy: np.ndarray
    p_u: np.ndarray
    neg_log_x_given_u: np.ndarray  # (u-seq, x-seq)
    uy: _UZTables


def _wak_tables(inst: WakInstance, n: int) -> _WakTables:
    inst = inst.flattened()
    p = inst.joint()[0]  # u x y
    nu, nx, ny = p.shape
    _check_states(nu * max(nx, ny), n, "WAK tables")
    p_ux = p.sum(axis=2)
    p_u = p_ux.sum(axis=1)
    with np.errstate(divide="ignore"):
        cond = np.where(p_u[:, None] > 0, p_ux / np.where(p_u > 0, p_u, 1.0)[:, None], 0.0)
        neg_log = -np.log2(cond)
    return _WakTables(nx, ny, nu, inst.p_xy.probs, p_u, _nfold_log2_table(neg_log, n),
                      _uz_tables(p.sum(axis=1), n))


def _draw_bins(rng, m_size: int, x_count: int, rows: int) -> np.ndarray:
    """Bin index of every x-sequence, one row per draw.

    With at least as many bins as sequences the map is a uniformly random
    injection (collisions are impossible); otherwise each sequence picks a bin
    uniformly and independently.  Either way two distinct sequences share a bin
    with probability at most 1/|M|.
    """
    if m_size >= x_count:
        keys = rng.random((rows, m_size))
        return np.argsort(keys, axis=1)[:, :x_count]
    return rng.integers(0, m_size, size=(rows, x_count))


def _wak_block(tab: _WakTables, n, trials, rng, m_size, l_size, gamma_b, gamma_c,
               code_idx=None, bins=None):
    """Run one block of trials; returns boolean arrays (error, e1, e2)."""
    xy = rng.choice(tab.p_xy.size, size=(trials, n), p=tab.p_xy.reshape(-1))
    x_idx = _seq_index(xy // tab.ny, tab.nx)
    y_idx = _seq_index(xy % tab.ny, tab.ny)
    if code_idx is None:
        # ensemble: a fresh codebook row for the drawn k and a fresh binning per trial
        rows = _seq_index(rng.choice(tab.nu, size=(trials, l_size, n), p=tab.p_u), tab.nu)
        f = _draw_bins(rng, m_size, tab.nx ** n, trials)
    else:
        rows = code_idx[rng.integers(0, code_idx.shape[0], size=trials)]
        f = np.broadcast_to(bins, (trials, bins.size))
    l_hat = _sample_rows(_smoothed_weights(tab.uy, rows, y_idx, gamma_c), rng)
    u_hat = rows[np.arange(trials), l_hat]
    in_tb = tab.neg_log_x_given_u[u_hat] <= gamma_b + TIE_TOL  # (trials, |X|^n)
    ar = np.arange(trials)
    e1 = ~in_tb[ar, x_idx]
    same_bin = f == f[ar, x_idx][:, None]
    same_bin[ar, x_idx] = False
    e2 = np.any(same_bin & in_tb, axis=1)
    return e1 | e2, e1, e2


def wak_trial(instance: WakInstance, n: int, params: BoundParams, trials: int, seed: int = 0,
              code: ResolvabilityCode | None = None, bin_seed: int | None = None) -> TrialStats:
    """Monte Carlo error rate of the WAK code: random binning for X, helper via phi_C.

    Without ``code`` every trial draws a fresh codebook row and binning, which
    estimates the error averaged over the code ensemble (the quantity the
    analytic bound controls; it does not depend on the number K of rows).
    With ``code`` the codebook is fixed, the binning is drawn once from
    ``bin_seed`` and k is uniform over the K rows.

    The decoder looks for the unique x-hat in the received bin with
    -log P_{X|U}(x-hat | u_kl) <= gamma_b; anything else is an error.
    Time-shared instances run with the flattened auxiliary (T, U).
    """
    if trials < 0:
        raise ValueError("trials must be nonnegative")
    log_m, log_l, gamma_b, gamma_c = params.need("log_m", "log_l", "gamma_b", "gamma_c")
    if params.n != n:
        raise ValueError("params.n differs from n")
    m_size = _size_from_log(log_m, "log_m")
    l_size = _size_from_log(log_l, "log_l")
    tab = _wak_tables(instance, n)
    code_idx = bins = None
    if code is not None:
        if code.n != n or code.l_size != l_size:
            raise ValueError("code must have blocklength n and L = 2^log_l")
        code_idx = code.indices(tab.nu)
        bins = _draw_bins(_generator(seed if bin_seed is None else bin_seed, 1), m_size, tab.nx ** n, 1)[0]
    errors = e1 = e2 = 0
    for block, start in enumerate(range(0, trials, TRIAL_BLOCK)):
        size = min(TRIAL_BLOCK, trials - start)
        err, b1, b2 = _wak_block(tab, n, size, _generator(seed, block), m_size, l_size,
                                 gamma_b, gamma_c, code_idx, bins)
        errors += int(err.sum())
        e1 += int(b1.sum())
        e2 += int(b2.sum())
    return TrialStats(trials, errors, e1, e2)


__all__ = [
    "ResolvabilityCode", "TrialStats", "build_code", "simulation_map_sample",
    "simulated_output_law", "resolvability_distance", "resolvability_delta", "resolvability_bound",
    "wak_trial",
]
