"""Compressed-row sparse matrices for graph adjacency.

Storage is delegated to :mod:`scipy.sparse`; this wrapper pins the canonical
form (sorted, unique column indices, no explicit zeros) that the forward and
relevance passes rely on.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
import scipy.sparse as sp


class SparseMatrix:
    """Real-valued CSR matrix in canonical form."""

    __slots__ = ("_csr",)

    def __init__(self, indptr, indices, data, shape: tuple[int, int]):
        csr = sp.csr_matrix(
            (np.asarray(data, dtype=np.float64),
             np.asarray(indices, dtype=np.int64),
             np.asarray(indptr, dtype=np.int64)),
            shape=shape,
        )
        self._csr = _canonical(csr)

    @classmethod
    def _wrap(cls, csr: sp.spmatrix) -> "SparseMatrix":
        obj = cls.__new__(cls)
        obj._csr = _canonical(sp.csr_matrix(csr, dtype=np.float64))
        return obj

    @classmethod
    def from_coo(cls, rows: Sequence[int], cols: Sequence[int], values,
                 shape: tuple[int, int]) -> "SparseMatrix":
        """Build from triplets; duplicate entries are summed."""
        m = sp.coo_matrix((np.asarray(values, dtype=np.float64),
                           (np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64))),
                          shape=shape)
        return cls._wrap(m.tocsr())

    @classmethod
    def from_dense(cls, dense) -> "SparseMatrix":
        return cls._wrap(sp.csr_matrix(np.asarray(dense, dtype=np.float64)))

    @classmethod
    def identity(cls, n: int) -> "SparseMatrix":
        return cls._wrap(sp.identity(n, format="csr"))

    @classmethod
    def empty(cls, n_rows: int, n_cols: int) -> "SparseMatrix":
        return cls._wrap(sp.csr_matrix((n_rows, n_cols)))

    @property
    def shape(self) -> tuple[int, int]:
        return self._csr.shape

    @property
    def n_rows(self) -> int:
        return self._csr.shape[0]

    @property
    def n_cols(self) -> int:
        return self._csr.shape[1]

    @property
    def nnz(self) -> int:
        return int(self._csr.nnz)

    @property
    def indptr(self) -> np.ndarray:
        return self._csr.indptr

    @property
    def indices(self) -> np.ndarray:
        return self._csr.indices

    @property
    def data(self) -> np.ndarray:
        return self._csr.data

    def to_scipy(self) -> sp.csr_matrix:
        return self._csr

    def to_dense(self) -> np.ndarray:
        return self._csr.toarray()

    def transpose(self) -> "SparseMatrix":
        return SparseMatrix._wrap(self._csr.T.tocsr())

    @property
    def T(self) -> "SparseMatrix":
        return self.transpose()

    def row_degrees(self) -> np.ndarray:
        return np.diff(self._csr.indptr)

    def submatrix(self, keep: np.ndarray) -> "SparseMatrix":
        """Principal submatrix on the index array ``keep`` (in the given order)."""
        keep = np.asarray(keep, dtype=np.int64)
        return SparseMatrix._wrap(self._csr[keep][:, keep])

    def mask_blocks(self, labels: np.ndarray) -> "SparseMatrix":
        """Keep entry (i, j) only where ``labels[i] == labels[j]``.

        A negative label removes the node entirely.
        """
        labels = np.asarray(labels)
        coo = self._csr.tocoo()
        li, lj = labels[coo.row], labels[coo.col]
        keep = (li == lj) & (li >= 0)
        m = sp.csr_matrix((coo.data[keep], (coo.row[keep], coo.col[keep])), shape=self.shape)
        return SparseMatrix._wrap(m)

    def mask_nodes(self, members: np.ndarray) -> "SparseMatrix":
        """Keep entries whose row and column both lie in the boolean mask ``members``."""
        members = np.asarray(members, dtype=bool)
        return self.mask_blocks(np.where(members, 0, -1))

    def is_symmetric(self) -> bool:
        diff = self._csr - self._csr.T
        return diff.nnz == 0 or not np.any(diff.data)

    def __matmul__(self, other):
        return spmm(self, other)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SparseMatrix) or other.shape != self.shape:
            return False
        return (np.array_equal(self.indptr, other.indptr)
                and np.array_equal(self.indices, other.indices)
                and np.array_equal(self.data, other.data))

    __hash__ = None

    def __repr__(self) -> str:
        return f"SparseMatrix(shape={self.shape}, nnz={self.nnz})"


def _canonical(csr: sp.csr_matrix) -> sp.csr_matrix:
    csr = csr.copy()
    csr.sum_duplicates()
    csr.eliminate_zeros()
    csr.sort_indices()
    return csr


def spmm(A: SparseMatrix, X) -> np.ndarray:
    """Sparse-dense product ``A @ X``."""
    X = np.asarray(X, dtype=np.float64)
    vector = X.ndim == 1
    if vector:
        X = X[:, None]
    if A.n_cols != X.shape[0]:
        raise ValueError(f"dimension mismatch: A is {A.shape}, X has {X.shape[0]} rows")
    out = np.asarray(A.to_scipy() @ X)
    return out[:, 0] if vector else out
