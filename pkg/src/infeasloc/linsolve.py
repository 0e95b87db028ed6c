"""Sparse unsymmetric solves for the Newton iterations.

Factorization is SciPy's SuperLU (partial pivoting, COLAMD ordering). Every
Newton step refactors; only the sparsity pattern is reused, through
:class:`PatternAssembler`.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import SingularMatrix

PIVOT_TOL = 1e-12


class PatternAssembler:
    """Scatter triplet values into a fixed compressed-column pattern.

    Duplicate ``(row, col)`` pairs are summed. Explicit zeros are kept, so
    the pattern (and ``nnz``) does not depend on the values.
    """

    def __init__(self, rows, cols, shape):
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        if rows.shape != cols.shape:
            raise ValueError("rows and cols must have the same length")
        if rows.size and (rows.min() < 0 or cols.min() < 0 or rows.max() >= shape[0] or cols.max() >= shape[1]):
            raise ValueError("triplet index out of range")
        self.shape = tuple(shape)
        key = cols * shape[0] + rows
        uniq, self._slot = np.unique(key, return_inverse=True)
        self.indices = (uniq % shape[0]).astype(np.int32)
        ucols = uniq // shape[0]
        self.indptr = np.searchsorted(ucols, np.arange(shape[1] + 1)).astype(np.int32)
        self.nnz = uniq.size
        self.n_triplets = rows.size

    def assemble(self, values) -> sp.csc_matrix:
        values = np.asarray(values, dtype=float)
        if values.shape != (self.n_triplets,):
            raise ValueError(f"expected {self.n_triplets} values, got {values.shape}")
        data = np.bincount(self._slot, weights=values, minlength=self.nnz)
        return sp.csc_matrix((data, self.indices.copy(), self.indptr.copy()), shape=self.shape)


def lu_solve(A, b) -> np.ndarray:
    """Solve ``A x = b`` for square sparse ``A``.

    Raises
    ------
    SingularMatrix
        If the factorization meets a pivot with magnitude below
        ``1e-12 * max|A|``.
    """
    A = sp.csc_matrix(A)
    b = np.asarray(b, dtype=float)
    n, m = A.shape
    if n != m:
        raise ValueError(f"matrix must be square, got {A.shape}")
    if b.shape[0] != n:
        raise ValueError(f"rhs length {b.shape[0]} does not match matrix size {n}")
    scale = np.abs(A.data).max() if A.nnz else 0.0
    if scale == 0.0:
        raise SingularMatrix("matrix is identically zero")
    try:
        lu = splu(A, permc_spec="COLAMD")
    except RuntimeError as exc:
        raise SingularMatrix(str(exc)) from None
    piv = np.abs(lu.U.diagonal())
    if piv.min() <= PIVOT_TOL * scale:
        raise SingularMatrix(f"pivot {piv.min():.3e} below tolerance (max |A| = {scale:.3e})")
    x = lu.solve(b)
    # one step of iterative refinement
    r = b - A @ x
    x += lu.solve(r)
    if not np.all(np.isfinite(x)):
        raise SingularMatrix("non-finite solution")
    return x
