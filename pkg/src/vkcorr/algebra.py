"""Rank-one primitive basis of symmetric matrices, and defect evaluation.

The d(d+1)/2 matrices eta_ij (x) eta_ij with eta_ij = (e_i+e_j)/|e_i+e_j|
form a basis of the symmetric matrices; the engine cancels defects one basis
direction at a time.  Coordinate functionals are materialized once per
dimension as a dense inverse matrix.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .fields import (DEFAULT_FD_ORDER, SymmField, VectorField,
                     metric_product, sym_grad, sym_pairs)


@dataclass(frozen=True)
class Dims:
    """Dimension bookkeeping: base dimension, Janet dimension, target codimension."""

    d: int

    def __post_init__(self):
        if self.d < 2:
            raise ValueError("dimension must be >= 2")

    @property
    def janet(self) -> int:
        return self.d * (self.d + 1) // 2

    @property
    def codim(self) -> int:
        # equals janet - d + 1
        return (self.d * self.d - self.d + 2) // 2


def codim_index(i: int, j: int, d: int) -> int:
    """Slot index n in 2..codim for the 1-based pair (i, j), 2 <= i <= j <= d."""
    if not (2 <= i <= j <= d):
        raise IndexError(f"pair ({i}, {j}) out of range for d={d}")
    return (i - 2) * (2 * d - 1 - i) // 2 + j


def codim_pair(n: int, d: int) -> tuple[int, int]:
    """Inverse of codim_index: the 1-based pair (i, j) owning slot n."""
    dims = Dims(d)
    if not (2 <= n <= dims.codim):
        raise IndexError(f"slot {n} out of range for d={d}")
    for i in range(2, d + 1):
        lo = codim_index(i, i, d)
        hi = codim_index(i, d, d)
        if lo <= n <= hi:
            return i, i + (n - lo)
    raise IndexError(f"slot {n} not reachable for d={d}")  # pragma: no cover


@lru_cache(maxsize=None)
def _basis_arrays(d: int):
    pairs = sym_pairs(d)
    dirs = []
    for i, j in pairs:
        v = np.zeros(d)
        v[i] += 1.0
        v[j] += 1.0
        dirs.append(v / np.linalg.norm(v))
    mats = [np.outer(e, e) for e in dirs]
    npairs = len(pairs)
    basis = np.empty((npairs, npairs))
    for q, (s, t) in enumerate(pairs):
        for p in range(npairs):
            basis[q, p] = mats[p][s, t]
    inv = np.linalg.inv(basis)
    return tuple(dirs), tuple(mats), basis, inv


class PrimitiveBasis:
    """Directions eta_ij, their rank-one matrices, and coordinate functionals."""

    def __init__(self, d: int):
        self.dims = Dims(d)
        self.pairs = sym_pairs(d)
        dirs, mats, basis, inv = _basis_arrays(d)
        self.directions = dirs
        self.matrices = mats
        self._basis = basis
        self._inv = inv

    @property
    def d(self) -> int:
        return self.dims.d

    def direction(self, i: int, j: int) -> np.ndarray:
        """Unit vector eta_ij for a 0-based pair."""
        from .fields import sym_entry_index
        return self.directions[sym_entry_index(self.d, i, j)]

    @property
    def center(self) -> np.ndarray:
        """The matrix H0 = sum of all rank-one basis matrices."""
        return sum(self.matrices)

    def decompose(self, H: np.ndarray) -> np.ndarray:
        """Coefficients of a single symmetric matrix in the rank-one basis."""
        vec = np.array([H[i, j] for i, j in self.pairs])
        return self._inv @ vec

    def decompose_field(self, H: SymmField) -> np.ndarray:
        """Coefficient fields, shape (d*, *grid); linear and pointwise."""
        return np.tensordot(self._inv, H.data, axes=1)

    def reconstruct(self, coeffs: np.ndarray) -> np.ndarray:
        vec = self._basis @ coeffs
        d = self.d
        out = np.zeros((d, d))
        for q, (i, j) in enumerate(self.pairs):
            out[i, j] = vec[q]
            out[j, i] = vec[q]
        return out

    def reconstruct_field(self, coeff_fields: np.ndarray, spec, valid_margin: float) -> SymmField:
        data = np.tensordot(self._basis, coeff_fields, axes=1)
        return SymmField(spec, data, valid_margin)

    def functional_norms(self) -> np.ndarray:
        """Operator norm of each coordinate functional against the max-entry norm."""
        return np.abs(self._inv).sum(axis=1)

    @property
    def r0(self) -> float:
        """Radius around H0 on which every coefficient stays within 1/2 of 1.

        Computed as 1 / (2 max_p ||a_p||_op), capped strictly below 1; any
        smaller radius works too, so this choice only sets guard thresholds.
        """
        return min(1.0 - 1e-6, 1.0 / (2.0 * float(self.functional_norms().max())))


def estimate_r0(d: int) -> float:
    return PrimitiveBasis(d).r0


def export_basis_csv(d: int, path: str):
    """Dump the rank-one basis matrices and coefficient functionals for inspection."""
    basis = PrimitiveBasis(d)
    with open(path, "w") as fh:
        fh.write("# directions eta_ij (rows) for 0-based pairs "
                 f"{basis.pairs}\n")
        for (i, j), e in zip(basis.pairs, basis.directions):
            fh.write(f"eta_{i}{j}," + ",".join(repr(float(x)) for x in e) + "\n")
        fh.write(f"# coefficient functionals (rows); stability radius r0 = {basis.r0!r}\n")
        for (i, j), row in zip(basis.pairs, basis._inv):
            fh.write(f"coeff_{i}{j}," + ",".join(repr(float(x)) for x in row) + "\n")


def defect(A: SymmField, v: VectorField, w: VectorField,
           order: int = DEFAULT_FD_ORDER) -> SymmField:
    """A - ((1/2) (grad v)^T grad v + sym grad w), with FD gradients."""
    if A.spec != v.spec or A.spec != w.spec:
        raise ValueError("defect inputs live on different grids")
    return A - (0.5 * metric_product(v, order) + sym_grad(w, order))
