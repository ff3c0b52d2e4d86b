"""Mean vector J, dispersion matrix V and third absolute moment of density vectors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..density import per_letter_atoms_by_t
from .mvn import numerical_rank

# Selector matrix that adds the first two coordinates and keeps the third.
M_MATRIX = np.array([[1.0, 1.0, 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class DispersionStats:
    dim: int
    j_mean: np.ndarray
    v_matrix: np.ndarray
    xi: float

    def __post_init__(self):
        j = np.array(self.j_mean, dtype=float).reshape(-1)
        v = np.array(self.v_matrix, dtype=float).reshape(j.size, j.size)
        if j.size != self.dim:
            raise ValueError("mean vector length differs from dim")
        if np.max(np.abs(v - v.T), initial=0.0) > 1e-12:
            raise ValueError("dispersion matrix must be symmetric")
        v = 0.5 * (v + v.T)
        if np.linalg.eigvalsh(v).min() < -1e-10:
            raise ValueError("dispersion matrix must be positive semidefinite")
        j.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "j_mean", j)
        object.__setattr__(self, "v_matrix", v)

    @property
    def rank(self) -> int:
        return numerical_rank(self.v_matrix)

    def marginal(self, coords) -> "DispersionStats":
        c = list(coords)
        return DispersionStats(len(c), self.j_mean[c], self.v_matrix[np.ix_(c, c)], self.xi)


def dispersion_stats(obj, kind: str | None = None) -> DispersionStats:
    """J = E[j], V = sum_t P_T(t) cov(j | t), xi = sum_t P_T(t) E|j - E[j|t]|^3."""
    parts = per_letter_atoms_by_t(obj, kind)
    k = parts[0][1].dim
    j = np.zeros(k)
    v = np.zeros((k, k))
    xi = 0.0
    for pt, atoms in parts:
        j += pt * atoms.mean()
        v += pt * atoms.cov()
        xi += pt * atoms.third_abs_moment()
    return DispersionStats(k, j, v, xi)
