"""Problem instances (WAK, WZ, GP and point-to-point) and the canonical builders."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .prob import Channel, JointPmf, Pmf, binary_convolution, binary_entropy, _check_unit

STUCK_AT_NOTE = (
    "stuck-at preset: the auxiliary U is generated from the state S "
    "(P_{U|S}(0|0) = P_{U|S}(1|1) = 1 - alpha); a P_{U|X} reading of the "
    "example is inconsistent with the stated capacity"
)


def _as_channels(chs: Sequence[Channel], count: int, what: str) -> tuple[Channel, ...]:
    chs = tuple(chs)
    if len(chs) != count:
        raise ValueError(f"{what}: need one channel per time-sharing symbol ({count}), got {len(chs)}")
    return chs


def _hash_payload(payload) -> str:
    def conv(o):
        if isinstance(o, np.ndarray):
            return np.round(o, 15).tolist()
        if isinstance(o, (Pmf, Channel, JointPmf)):
            return conv(getattr(o, "probs", getattr(o, "rows", None)))
        if isinstance(o, (list, tuple)):
            return [conv(x) for x in o]
        return o

    blob = json.dumps(conv(payload), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


@dataclass(frozen=True)
class WakInstance:
    """Source P_XY, time-sharing P_T and per-t helper test channels Y -> U."""

    p_xy: JointPmf
    time_share: Pmf
    test_channels: tuple[Channel, ...]

    def __post_init__(self):
        if len(self.p_xy.dims) != 2:
            raise ValueError("p_xy must be a 2-d joint")
        chs = _as_channels(self.test_channels, self.time_share.alphabet_size, "WAK")
        ny = self.p_xy.dims[1]
        sizes = {c.output_size for c in chs}
        if len(sizes) != 1:
            raise ValueError("all test channels must share the U alphabet")
        for c in chs:
            if c.input_size != ny:
                raise ValueError("test channel input must be the Y alphabet")
        object.__setattr__(self, "test_channels", chs)

    @property
    def u_size(self) -> int:
        return self.test_channels[0].output_size

    def joint(self) -> np.ndarray:
        """Array P[t, u, x, y]."""
        pt = self.time_share.probs
        w = np.stack([c.rows for c in self.test_channels])  # t, y, u
        return np.einsum("t,xy,tyu->tuxy", pt, self.p_xy.probs, w)

    def flattened(self) -> "WakInstance":
        """Equivalent instance with |T| = 1 and auxiliary U' = (T, U), index t*|U| + u."""
        if self.time_share.alphabet_size == 1:
            return self
        pt = self.time_share.probs
        w = np.concatenate([pt[t] * c.rows for t, c in enumerate(self.test_channels)], axis=1)
        return WakInstance(self.p_xy, Pmf(np.ones(1)), (Channel(w),))

    def fingerprint(self) -> str:
        return _hash_payload(["wak", self.p_xy, self.time_share, list(self.test_channels)])


@dataclass(frozen=True)
class WzInstance:
    """Source P_XY, per-t test channels X -> U, and reproduction channels (U,Y) -> X_hat.

    Reproduction rows are indexed by u * |Y| + y.
    """

    p_xy: JointPmf
    time_share: Pmf
    test_channels: tuple[Channel, ...]
    reproduction: tuple[Channel, ...]
    distortion: np.ndarray
    level_d: float

    def __post_init__(self):
        if len(self.p_xy.dims) != 2:
            raise ValueError("p_xy must be a 2-d joint")
        nt = self.time_share.alphabet_size
        chs = _as_channels(self.test_channels, nt, "WZ test")
        rep = _as_channels(self.reproduction, nt, "WZ reproduction")
        nx, ny = self.p_xy.dims
        if len({c.output_size for c in chs}) != 1 or any(c.input_size != nx for c in chs):
            raise ValueError("test channels must map X to a common U alphabet")
        nu = chs[0].output_size
        d = np.array(self.distortion, dtype=float)
        if d.ndim != 2 or d.shape[0] != nx:
            raise ValueError("distortion must be an |X| x |X_hat| matrix")
        if not np.all(np.isfinite(d)) or np.any(d < 0):
            raise ValueError("distortion entries must be finite and nonnegative")
        if np.any(d.min(axis=1) > 0):
            raise ValueError("every x needs a reproduction symbol with zero distortion")
        for r in rep:
            if r.input_size != nu * ny or r.output_size != d.shape[1]:
                raise ValueError("reproduction channel must map (U,Y) to X_hat")
        if not np.isfinite(self.level_d) or self.level_d < 0:
            raise ValueError("distortion level must be finite and nonnegative")
        d.setflags(write=False)
        object.__setattr__(self, "distortion", d)
        object.__setattr__(self, "test_channels", chs)
        object.__setattr__(self, "reproduction", rep)

    @property
    def u_size(self) -> int:
        return self.test_channels[0].output_size

    @property
    def d_max(self) -> float:
        return float(self.distortion.max())

    def joint(self) -> np.ndarray:
        """Array P[t, u, x, y, x_hat]."""
        pt = self.time_share.probs
        nx, ny = self.p_xy.dims
        nu = self.u_size
        w = np.stack([c.rows for c in self.test_channels])  # t, x, u
        r = np.stack([c.rows.reshape(nu, ny, -1) for c in self.reproduction])  # t, u, y, xh
        return np.einsum("t,xy,txu,tuyz->tuxyz", pt, self.p_xy.probs, w, r)

    def flattened(self) -> "WzInstance":
        if self.time_share.alphabet_size == 1:
            return self
        pt = self.time_share.probs
        nu = self.u_size
        ny = self.p_xy.dims[1]
        w = np.concatenate([pt[t] * c.rows for t, c in enumerate(self.test_channels)], axis=1)
        r = np.concatenate([c.rows.reshape(nu, ny, -1) for c in self.reproduction], axis=0)
        return WzInstance(
            self.p_xy, Pmf(np.ones(1)), (Channel(w),), (Channel(r.reshape(-1, r.shape[-1])),),
            self.distortion, self.level_d,
        )

    def with_level(self, level_d: float) -> "WzInstance":
        return WzInstance(self.p_xy, self.time_share, self.test_channels, self.reproduction,
                          self.distortion, level_d)

    def fingerprint(self) -> str:
        return _hash_payload(["wz", self.p_xy, self.time_share, list(self.test_channels),
                              list(self.reproduction), self.distortion, self.level_d])


@dataclass(frozen=True)
class GpInstance:
    """State P_S, channel W with rows indexed x * |S| + s, per-t encoders S -> (U,X).

    Encoder outputs are indexed u * |X| + x. ``budget_gamma`` may be ``math.inf``.
    """

    p_s: Pmf
    channel_w: Channel
    time_share: Pmf
    encoder_channels: tuple[Channel, ...]
    cost: np.ndarray
    budget_gamma: float = math.inf

    def __post_init__(self):
        ns = self.p_s.alphabet_size
        g = np.array(self.cost, dtype=float)
        if g.ndim != 1 or np.any(g < 0) or not np.all(np.isfinite(g)):
            raise ValueError("cost must be a finite nonnegative vector over X")
        nx = g.size
        if self.channel_w.input_size != nx * ns:
            raise ValueError("channel W must have |X|*|S| input rows")
        enc = _as_channels(self.encoder_channels, self.time_share.alphabet_size, "GP encoder")
        sizes = {c.output_size for c in enc}
        if len(sizes) != 1 or any(c.input_size != ns for c in enc):
            raise ValueError("encoders must map S to a common (U,X) alphabet")
        if next(iter(sizes)) % nx:
            raise ValueError("encoder output size must be a multiple of |X|")
        if math.isnan(self.budget_gamma) or self.budget_gamma < 0:
            raise ValueError("cost budget must be nonnegative (inf allowed)")
        g.setflags(write=False)
        object.__setattr__(self, "cost", g)
        object.__setattr__(self, "encoder_channels", enc)

    @property
    def x_size(self) -> int:
        return int(self.cost.size)

    @property
    def u_size(self) -> int:
        return self.encoder_channels[0].output_size // self.x_size

    def joint(self) -> np.ndarray:
        """Array P[t, u, s, x, y]."""
        nx, ns, nu = self.x_size, self.p_s.alphabet_size, self.u_size
        e = np.stack([c.rows.reshape(ns, nu, nx) for c in self.encoder_channels])  # t s u x
        w = self.channel_w.rows.reshape(nx, ns, -1)  # x s y
        return np.einsum("t,s,tsux,xsy->tusxy", self.time_share.probs, self.p_s.probs, e, w)

    def flattened(self) -> "GpInstance":
        if self.time_share.alphabet_size == 1:
            return self
        pt = self.time_share.probs
        ns, nx, nu = self.p_s.alphabet_size, self.x_size, self.u_size
        blocks = [pt[t] * c.rows.reshape(ns, nu, nx) for t, c in enumerate(self.encoder_channels)]
        e = np.concatenate(blocks, axis=1).reshape(ns, -1)
        return GpInstance(self.p_s, self.channel_w, Pmf(np.ones(1)), (Channel(e),),
                          self.cost, self.budget_gamma)

    def fingerprint(self) -> str:
        return _hash_payload(["gp", self.p_s, self.channel_w, self.time_share,
                              list(self.encoder_channels), self.cost, str(self.budget_gamma)])


@dataclass(frozen=True)
class ChannelInstance:
    """Point-to-point channel X -> Y used with a fixed input law."""

    channel: Channel
    p_x: Pmf

    def __post_init__(self):
        if self.channel.input_size != self.p_x.alphabet_size:
            raise ValueError("input law does not match the channel")

    def joint(self) -> np.ndarray:
        return self.p_x.probs[:, None] * self.channel.rows

    def fingerprint(self) -> str:
        return _hash_payload(["channel", self.channel, self.p_x])


# ---------------------------------------------------------------- builders


def dsbs_joint(alpha: float) -> JointPmf:
    _check_unit(alpha, "alpha")
    return JointPmf(0.5 * np.array([[1 - alpha, alpha], [alpha, 1 - alpha]]), ("X", "Y"))


def dsbs_wak(alpha: float, beta: float) -> WakInstance:
    if not (0 <= alpha <= 0.5 and 0 <= beta <= 0.5):
        raise ValueError("need 0 <= alpha, beta <= 1/2")
    return WakInstance(dsbs_joint(alpha), Pmf(np.ones(1)), (Channel.bsc(beta),))


def dsbs_wak_timeshared(alpha: float, beta0: float, beta1: float, lam: float,
                        grid: int | None = None) -> WakInstance:
    """Time-share BSC(beta0) with weight lam and BSC(beta1) with weight 1 - lam.

    When ``grid`` is given, lam is rounded to the nearest multiple of 1/grid.
    """
    if not (0 <= alpha <= 0.5 and 0 <= beta0 <= 0.5 and 0 <= beta1 <= 0.5):
        raise ValueError("need 0 <= alpha, beta <= 1/2")
    if not (0 <= lam <= 1):
        raise ValueError("lam must lie in [0, 1]")
    if grid is not None:
        lam = round(lam * grid) / grid
    if lam == 1.0:
        return dsbs_wak(alpha, beta0)
    if lam == 0.0:
        return dsbs_wak(alpha, beta1)
    return WakInstance(dsbs_joint(alpha), Pmf(np.array([lam, 1 - lam])),
                       (Channel.bsc(beta0), Channel.bsc(beta1)))


def biased_joint(p: float, alpha: float) -> JointPmf:
    """P_Y(0) = p and X = Y through BSC(alpha)."""
    _check_unit(p, "p")
    _check_unit(alpha, "alpha")
    py = np.array([p, 1 - p])
    return JointPmf((Channel.bsc(alpha).rows * py[:, None]).T, ("X", "Y"))


def biased_binary_wak(p: float, alpha: float, beta: float) -> WakInstance:
    """Backward test channel U -> Y is BSC(beta); the forward channel follows by Bayes."""
    if not (0 < p <= 0.5):
        raise ValueError("need 0 < p <= 1/2")
    if not (0 <= alpha <= 0.5 and 0 <= beta <= 0.5):
        raise ValueError("need 0 <= alpha, beta <= 1/2")
    if beta > p:
        raise ValueError("beta must not exceed p")
    if beta == 0.5:  # only reachable when p = 1/2: U is independent of Y
        pu0 = 0.5
    else:
        pu0 = (p - beta) / (1 - 2 * beta)
    pu = np.array([pu0, 1 - pu0])
    back = Channel.bsc(beta).rows  # u, y
    puy = pu[:, None] * back
    py = puy.sum(axis=0)
    forward = (puy / py[None, :]).T  # y, u
    return WakInstance(biased_joint(p, alpha), Pmf(np.ones(1)), (Channel.renormalized(forward),))


def stuck_at_gp(p: float, alpha: float) -> GpInstance:
    if not (0 <= p <= 1 and 0 <= alpha <= 0.5):
        raise ValueError("need 0 <= p <= 1 and 0 <= alpha <= 1/2")
    p_s = Pmf(np.array([p / 2, p / 2, 1 - p]))
    w = np.zeros((6, 2))  # row x*3 + s
    for x in range(2):
        w[3 * x + 0] = [1, 0]
        w[3 * x + 1] = [0, 1]
        w[3 * x + 2] = Channel.bsc(alpha).rows[x]
    p_u_s = np.array([[1 - alpha, alpha], [alpha, 1 - alpha], [0.5, 0.5]])
    enc = np.zeros((3, 4))  # column u*2 + x with x = u
    enc[:, 0] = p_u_s[:, 0]
    enc[:, 3] = p_u_s[:, 1]
    return GpInstance(p_s, Channel(w), Pmf(np.ones(1)), (Channel(enc),), np.zeros(2), math.inf)


def stuck_at_decoder_si(p: float, alpha: float) -> ChannelInstance:
    """Channel X -> (S, Y) (output index s*2 + y) with uniform input."""
    gp = stuck_at_gp(p, alpha)
    w = gp.channel_w.rows.reshape(2, 3, 2)  # x s y
    rows = gp.p_s.probs[None, :, None] * w
    return ChannelInstance(Channel(rows.reshape(2, 6)), Pmf.uniform(2))


def bsc_channel(alpha: float) -> ChannelInstance:
    return ChannelInstance(Channel.bsc(alpha), Pmf.uniform(2))


def dsbs_wz(alpha: float, beta: float, level_d: float) -> WzInstance:
    """DSBS(alpha) source, U = X through BSC(beta), reproduction X_hat = U, Hamming distortion."""
    if not (0 <= alpha <= 0.5 and 0 <= beta <= 0.5):
        raise ValueError("need 0 <= alpha, beta <= 1/2")
    rep = np.zeros((4, 2))
    for u in range(2):
        for y in range(2):
            rep[2 * u + y, u] = 1.0
    return WzInstance(dsbs_joint(alpha), Pmf(np.ones(1)), (Channel.bsc(beta),), (Channel(rep),),
                      1.0 - np.eye(2), level_d)


def lossy_as_wz(p_x: Pmf, p_xhat_x: Channel, distortion, level_d: float) -> WzInstance:
    """Point-to-point lossy coding embedded as WZ: constant Y and U = X_hat."""
    nx = p_x.alphabet_size
    nxh = p_xhat_x.output_size
    p_xy = JointPmf(p_x.probs[:, None].copy(), ("X", "Y"))
    return WzInstance(p_xy, Pmf(np.ones(1)), (p_xhat_x,), (Channel.identity(nxh),),
                      np.asarray(distortion, dtype=float).reshape(nx, nxh), level_d)


def random_wak(rng: np.random.Generator, nx: int = 2, ny: int = 2, nu: int = 2,
               floor: float = 0.02) -> WakInstance:
    """Random instance with every probability at least ``floor`` before renormalization."""
    pxy = rng.dirichlet(np.ones(nx * ny)).reshape(nx, ny) + floor
    ch = rng.dirichlet(np.ones(nu), size=ny) + floor
    return WakInstance(JointPmf.renormalized(pxy, ("X", "Y")), Pmf(np.ones(1)),
                       (Channel.renormalized(ch),))


def capacity_first_order_stuck_at(p: float, alpha: float) -> float:
    """Closed form (1 - p)(1 - h(alpha))."""
    return (1 - p) * (1 - binary_entropy(alpha))


__all__ = [
    "WakInstance", "WzInstance", "GpInstance", "ChannelInstance",
    "dsbs_joint", "dsbs_wak", "dsbs_wak_timeshared", "biased_joint", "biased_binary_wak",
    "stuck_at_gp", "stuck_at_decoder_si", "bsc_channel", "dsbs_wz", "lossy_as_wz",
    "random_wak", "capacity_first_order_stuck_at", "binary_convolution", "STUCK_AT_NOTE",
]
