"""Finite-alphabet probability objects and Shannon quantities (all in bits)."""

from __future__ import annotations

import string
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

NORM_TOL = 1e-12


def _frozen_array(values, ndim: int | None = None) -> np.ndarray:
    arr = np.array(values, dtype=float, copy=True)
    if ndim is not None and arr.ndim != ndim:
        raise ValueError(f"expected a {ndim}-d array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("probabilities must be finite")
    arr.setflags(write=False)
    return arr


def _check_mass(arr: np.ndarray, what: str) -> None:
    if np.any(arr < 0):
        raise ValueError(f"{what}: negative probability")
    total = float(arr.sum())
    if abs(total - 1.0) > NORM_TOL:
        raise ValueError(f"{what}: total mass {total!r} differs from 1")


@dataclass(frozen=True)
class Pmf:
    """Probability mass function on {0, ..., alphabet_size - 1}."""

    probs: np.ndarray

    def __post_init__(self):
        arr = _frozen_array(self.probs, ndim=1)
        if arr.size == 0:
            raise ValueError("empty alphabet")
        _check_mass(arr, "Pmf")
        object.__setattr__(self, "probs", arr)

    @property
    def alphabet_size(self) -> int:
        return int(self.probs.size)

    @classmethod
    def renormalized(cls, weights) -> "Pmf":
        w = np.asarray(weights, dtype=float)
        if np.any(w < 0) or w.sum() <= 0:
            raise ValueError("weights must be nonnegative with positive sum")
        return cls(w / w.sum())

    @classmethod
    def uniform(cls, size: int) -> "Pmf":
        return cls(np.full(size, 1.0 / size))

    def entropy(self) -> float:
        return entropy(self.probs)


@dataclass(frozen=True)
class Channel:
    """Stochastic matrix; ``rows[a, b]`` is the probability of output b given input a."""

    rows: np.ndarray

    def __post_init__(self):
        arr = _frozen_array(self.rows, ndim=2)
        if arr.size == 0:
            raise ValueError("empty channel")
        if np.any(arr < 0):
            raise ValueError("Channel: negative probability")
        sums = arr.sum(axis=1)
        bad = np.flatnonzero(np.abs(sums - 1.0) > NORM_TOL)
        if bad.size:
            raise ValueError(f"Channel: row {int(bad[0])} sums to {sums[bad[0]]!r}")
        object.__setattr__(self, "rows", arr)

    @property
    def input_size(self) -> int:
        return int(self.rows.shape[0])

    @property
    def output_size(self) -> int:
        return int(self.rows.shape[1])

    @classmethod
    def renormalized(cls, weights) -> "Channel":
        w = np.asarray(weights, dtype=float)
        s = w.sum(axis=1, keepdims=True)
        if np.any(w < 0) or np.any(s <= 0):
            raise ValueError("every row needs nonnegative weights with positive sum")
        return cls(w / s)

    @classmethod
    def identity(cls, size: int) -> "Channel":
        return cls(np.eye(size))

    @classmethod
    def bsc(cls, crossover: float) -> "Channel":
        _check_unit(crossover, "crossover")
        return cls(np.array([[1 - crossover, crossover], [crossover, 1 - crossover]]))

    def output(self, p: Pmf) -> Pmf:
        if p.alphabet_size != self.input_size:
            raise ValueError("input distribution does not match the channel")
        return Pmf.renormalized(p.probs @ self.rows)


@dataclass(frozen=True)
class JointPmf:
    """Dense joint distribution; axis i ranges over an alphabet of size dims[i]."""

    probs: np.ndarray
    labels: tuple[str, ...] | None = field(default=None)

    def __post_init__(self):
        arr = _frozen_array(self.probs)
        if arr.ndim == 0 or arr.size == 0:
            raise ValueError("joint needs at least one nonempty axis")
        _check_mass(arr, "JointPmf")
        object.__setattr__(self, "probs", arr)
        if self.labels is not None:
            labels = tuple(self.labels)
            if len(labels) != arr.ndim or len(set(labels)) != len(labels):
                raise ValueError("labels must be distinct and one per axis")
            object.__setattr__(self, "labels", labels)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(int(d) for d in self.probs.shape)

    @classmethod
    def renormalized(cls, weights, labels=None) -> "JointPmf":
        w = np.asarray(weights, dtype=float)
        if np.any(w < 0) or w.sum() <= 0:
            raise ValueError("weights must be nonnegative with positive sum")
        return cls(w / w.sum(), labels)

    def axis(self, label: str) -> int:
        if self.labels is None or label not in self.labels:
            raise KeyError(label)
        return self.labels.index(label)


def _check_unit(q: float, name: str) -> None:
    if not (0.0 <= q <= 1.0):
        raise ValueError(f"{name} must lie in [0, 1], got {q!r}")


@dataclass(frozen=True)
class Factor:
    """One factor of a product: ``dist`` is a Pmf (no parents) or a Channel.

    A Channel conditioned on several variables indexes its rows by the
    row-major flattening of ``given`` in the listed order.
    """

    name: str
    dist: Pmf | Channel
    given: tuple[str, ...] = ()


def compose(parts: Sequence[Factor]) -> JointPmf:
    """Multiply factors into a joint whose axes follow the order of ``parts``."""
    parts = list(parts)
    names = [f.name for f in parts]
    if len(set(names)) != len(names):
        raise ValueError("duplicate variable name")
    by_name = {f.name: f for f in parts}
    for f in parts:
        for g in f.given:
            if g not in by_name:
                raise ValueError(f"{f.name} is conditioned on undeclared variable {g}")
        if isinstance(f.dist, Pmf) and f.given:
            raise ValueError(f"{f.name}: a Pmf factor cannot have parents")
        if isinstance(f.dist, Channel) and not f.given:
            raise ValueError(f"{f.name}: a Channel factor needs parents")

    order: list[str] = []
    state = {n: 0 for n in names}  # 0 new, 1 visiting, 2 done

    def visit(n: str) -> None:
        if state[n] == 2:
            return
        if state[n] == 1:
            raise ValueError("conditioning pattern is cyclic")
        state[n] = 1
        for g in by_name[n].given:
            visit(g)
        state[n] = 2
        order.append(n)

    for n in names:
        visit(n)

    size = {}
    for n in order:
        f = by_name[n]
        if isinstance(f.dist, Pmf):
            size[n] = f.dist.alphabet_size
        else:
            expect = int(np.prod([size[g] for g in f.given]))
            if f.dist.input_size != expect:
                raise ValueError(
                    f"{n}: channel has {f.dist.input_size} inputs but parents span {expect}"
                )
            size[n] = f.dist.output_size

    letters = dict(zip(names, string.ascii_letters))
    tensor = np.ones(())
    axes: list[str] = []
    for n in order:
        f = by_name[n]
        if isinstance(f.dist, Pmf):
            fac = f.dist.probs
            fac_axes = [n]
        else:
            fac = f.dist.rows.reshape([size[g] for g in f.given] + [size[n]])
            fac_axes = list(f.given) + [n]
        out_axes = axes + [n]
        spec = "{},{}->{}".format(
            "".join(letters[a] for a in axes),
            "".join(letters[a] for a in fac_axes),
            "".join(letters[a] for a in out_axes),
        )
        tensor = np.einsum(spec, tensor, fac)
        axes = out_axes
    perm = [axes.index(n) for n in names]
    return JointPmf(np.transpose(tensor, perm), tuple(names))


def marginal(j: JointPmf, keep: Sequence[int]) -> JointPmf:
    """Sum out every axis not in ``keep``; kept axes appear in the order given."""
    keep = list(keep)
    if not keep:
        raise ValueError("keep set is empty")
    if len(set(keep)) != len(keep) or any(k < 0 or k >= j.probs.ndim for k in keep):
        raise ValueError(f"invalid axes {keep} for a {j.probs.ndim}-d joint")
    drop = tuple(a for a in range(j.probs.ndim) if a not in keep)
    m = j.probs.sum(axis=drop)
    remaining = [a for a in range(j.probs.ndim) if a in keep]
    m = np.transpose(m, [remaining.index(k) for k in keep])
    labels = None if j.labels is None else tuple(j.labels[k] for k in keep)
    return JointPmf(m, labels)


def conditional(j: JointPmf, target: Sequence[int], given: Sequence[int]) -> np.ndarray:
    """Array P(target | given) with axes given + target; zero where P(given)=0."""
    joint = marginal(j, list(given) + list(target)).probs
    den = joint.sum(axis=tuple(range(len(given), joint.ndim)), keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(den > 0, joint / np.where(den > 0, den, 1.0), 0.0)
    return out


def binary_entropy(q: float) -> float:
    _check_unit(q, "q")
    if q == 0.0 or q == 1.0:
        return 0.0
    return float(-q * np.log2(q) - (1 - q) * np.log2(1 - q))


def binary_convolution(beta: float, alpha: float) -> float:
    _check_unit(beta, "beta")
    _check_unit(alpha, "alpha")
    return beta * (1 - alpha) + (1 - beta) * alpha


def entropy(probs) -> float:
    p = np.asarray(probs, dtype=float).ravel()
    p = p[p > 0]
    return float(-np.sum(p * np.log2(p)))


def mutual_information(j: JointPmf, a: Sequence[int] = (0,), b: Sequence[int] = (1,)) -> float:
    """I(A;B) in bits; A and B are groups of axes (remaining axes are summed out)."""
    a, b = list(a), list(b)
    h_a = entropy(marginal(j, a).probs)
    h_b = entropy(marginal(j, b).probs)
    h_ab = entropy(marginal(j, a + b).probs)
    return max(h_a + h_b - h_ab, 0.0)


def conditional_entropy(j: JointPmf, a: Sequence[int] = (0,), b: Sequence[int] = (1,)) -> float:
    """H(A|B) in bits."""
    a, b = list(a), list(b)
    return entropy(marginal(j, a + b).probs) - entropy(marginal(j, b).probs)
