"""Sparse scatter of element matrices and the shared symmetric direct solver."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from ._validation import NumericalError


class ElementAssembler:
    """Precomputed CSC pattern for repeated assembly of element matrices.

    Elements are sorted into a canonical order once, so the global matrix is
    reproduced bit-for-bit whatever order the element arrays are given in.
    When ``free`` is given, rows and columns outside it are dropped and the
    result lives on the reduced (free) index range.
    """

    def __init__(self, edofs: np.ndarray, ndof: int, free: np.ndarray | None = None):
        edofs = np.asarray(edofs, dtype=np.int64)
        self.n_elements, self.k = edofs.shape
        self.perm = np.lexsort(edofs.T[::-1])
        edofs = edofs[self.perm]
        if free is None:
            local = edofs
            self.n = ndof
        else:
            free = np.asarray(free, dtype=np.int64)
            index = np.full(ndof, -1, dtype=np.int64)
            index[free] = np.arange(free.size)
            local = index[edofs]
            self.n = free.size
        rows = np.repeat(local, self.k, axis=1).ravel()
        cols = np.tile(local, (1, self.k)).ravel()
        keep = (rows >= 0) & (cols >= 0)
        self._keep = keep if not keep.all() else None
        keys = cols[keep] * self.n + rows[keep]
        uniq, self._inverse = np.unique(keys, return_inverse=True)
        self._indices = (uniq % self.n).astype(np.int32)
        self._indptr = np.searchsorted(uniq // self.n, np.arange(self.n + 1)).astype(np.int32)
        self._nnz = uniq.size

    def assemble(self, element_matrices: np.ndarray) -> sp.csc_matrix:
        """Scatter an (Ne, k, k) stack of element matrices."""
        vals = np.asarray(element_matrices)[self.perm].ravel()
        if self._keep is not None:
            vals = vals[self._keep]
        data = np.bincount(self._inverse, weights=vals, minlength=self._nnz)
        return sp.csc_matrix((data, self._indices.copy(), self._indptr.copy()),
                             shape=(self.n, self.n))

    def assemble_scaled(self, scales: np.ndarray, ke: np.ndarray, ke2: np.ndarray | None = None,
                        scales2: np.ndarray | None = None) -> sp.csc_matrix:
        """Assemble ``sum_e scales[e] * ke (+ scales2[e] * ke2)`` for a shared element matrix."""
        mats = np.asarray(scales)[:, None, None] * ke[None]
        if ke2 is not None:
            mats = mats + np.asarray(scales2)[:, None, None] * ke2[None]
        return self.assemble(mats)


class SymmetricSolver:
    """Sparse direct factorization reused for several right-hand sides."""

    def __init__(self, matrix: sp.spmatrix, rtol: float = 1e-10, name: str = "system"):
        self.matrix = sp.csc_matrix(matrix)
        self.rtol = rtol
        self.name = name
        self._norm = float(abs(self.matrix).sum(axis=1).max()) if self.matrix.nnz else 0.0
        if self.matrix.shape[0] == 0:
            self._lu = None
            return
        try:
            self._lu = splu(self.matrix, permc_spec="MMD_AT_PLUS_A",
                            diag_pivot_thresh=0.0, options={"SymmetricMode": True})
        except RuntimeError as exc:
            raise NumericalError(f"{self.name}: factorization failed ({exc})") from exc
        pivots = np.abs(self._lu.U.diagonal())
        scale = pivots.max() if pivots.size else 1.0
        bad = np.flatnonzero(pivots <= 1e-14 * scale)
        if bad.size:
            col = int(np.flatnonzero(self._lu.perm_c == bad[0])[0])
            raise NumericalError(
                f"{self.name}: near-zero pivot at reduced index {col} (|pivot|={pivots[bad[0]]:.3e})")

    def backward_error(self, x: np.ndarray, rhs: np.ndarray) -> float:
        """Normwise backward error ``|A x - b| / (|A| |x| + |b|)`` in the max norm."""
        r = np.abs(self.matrix @ x - rhs).max()
        den = self._norm * np.abs(x).max() + np.abs(rhs).max()
        return float(r / den) if den > 0 else 0.0

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        if self._lu is None:
            return np.zeros_like(rhs)
        x = self._lu.solve(rhs)
        if not np.all(np.isfinite(x)):
            raise NumericalError(f"{self.name}: solve produced non-finite values")
        err = self.backward_error(x, rhs)
        if err > self.rtol:
            # one step of iterative refinement before giving up
            x = x + self._lu.solve(rhs - self.matrix @ x)
            err = self.backward_error(x, rhs)
            if err > self.rtol:
                raise NumericalError(f"{self.name}: backward error {err:.2e} exceeds {self.rtol:.0e}")
        return x
