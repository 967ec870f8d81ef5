"""Sparse rate-matrix substrate: Kronecker algebra and steady-state solving.

Matrices are stored as canonical COO triplets (row-major order, duplicates
summed, exact zeros dropped) so that two matrices built from the same
literal rates compare equal entry-by-entry.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.csgraph as csgraph
import scipy.sparse.linalg as spla

from .errors import DimensionError, NoStationaryDistributionError, ValidationError

__all__ = [
    "RateMatrix",
    "ProbabilityVector",
    "kron_product",
    "kron_sum",
    "steady_state",
]


def _canonicalize(rows: int, cols: int, r, c, v):
    """Sort triplets row-major, sum duplicate coordinates, drop exact zeros."""
    r = np.asarray(r, dtype=np.int64)
    c = np.asarray(c, dtype=np.int64)
    v = np.asarray(v, dtype=np.float64)
    if r.size == 0:
        return r, c, v
    if r.min() < 0 or r.max() >= rows or c.min() < 0 or c.max() >= cols:
        raise ValidationError("matrix entry coordinates out of range")
    key = r * cols + c
    uniq, inverse = np.unique(key, return_inverse=True)
    data = np.bincount(inverse, weights=v, minlength=uniq.size)
    keep = data != 0.0
    uniq, data = uniq[keep], data[keep]
    return uniq // cols, uniq % cols, data


@dataclass(frozen=True, eq=False)
class RateMatrix:
    """Immutable sparse matrix of transition rates.

    Use :meth:`from_triplets` or :meth:`from_dense` to build one; raw field
    assignment bypasses canonicalization and is not supported.
    """

    rows: int
    cols: int
    row_idx: np.ndarray = field(repr=False)
    col_idx: np.ndarray = field(repr=False)
    data: np.ndarray = field(repr=False)

    @classmethod
    def from_triplets(cls, rows: int, cols: int, triplets) -> "RateMatrix":
        """Build from an iterable of (row, col, rate); duplicate coordinates are summed."""
        if rows < 0 or cols < 0:
            raise DimensionError("matrix dimensions must be nonnegative")
        trip = list(triplets)
        if trip:
            r, c, v = zip(*trip)
        else:
            r = c = v = ()
        r, c, v = _canonicalize(rows, cols, r, c, v)
        return cls(rows, cols, r, c, v)

    @classmethod
    def from_arrays(cls, rows: int, cols: int, r, c, v) -> "RateMatrix":
        r, c, v = _canonicalize(rows, cols, r, c, v)
        return cls(rows, cols, r, c, v)

    @classmethod
    def from_dense(cls, array) -> "RateMatrix":
        a = np.asarray(array, dtype=np.float64)
        if a.ndim != 2:
            raise DimensionError("dense input must be two-dimensional")
        r, c = np.nonzero(a)
        return cls.from_arrays(a.shape[0], a.shape[1], r, c, a[r, c])

    @classmethod
    def identity(cls, n: int) -> "RateMatrix":
        idx = np.arange(n, dtype=np.int64)
        return cls(n, n, idx, idx.copy(), np.ones(n))

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "RateMatrix":
        e = np.empty(0, dtype=np.int64)
        return cls(rows, cols, e, e.copy(), np.empty(0, dtype=np.float64))

    @property
    def nnz(self) -> int:
        return self.data.size

    @property
    def is_square(self) -> bool:
        return self.rows == self.cols

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.rows, self.cols))
        out[self.row_idx, self.col_idx] = self.data
        return out

    def to_csr(self) -> sp.csr_matrix:
        return sp.csr_matrix(
            (self.data, (self.row_idx, self.col_idx)), shape=(self.rows, self.cols)
        )

    def row_sums(self) -> np.ndarray:
        return np.bincount(self.row_idx, weights=self.data, minlength=self.rows)

    def diagonal(self) -> np.ndarray:
        out = np.zeros(min(self.rows, self.cols))
        on_diag = self.row_idx == self.col_idx
        out[self.row_idx[on_diag]] = self.data[on_diag]
        return out

    def scale(self, factor: float) -> "RateMatrix":
        return RateMatrix.from_arrays(
            self.rows, self.cols, self.row_idx, self.col_idx, self.data * factor
        )

    def transpose(self) -> "RateMatrix":
        return RateMatrix.from_arrays(
            self.cols, self.rows, self.col_idx, self.row_idx, self.data
        )

    def __add__(self, other: "RateMatrix") -> "RateMatrix":
        if (self.rows, self.cols) != (other.rows, other.cols):
            raise DimensionError(
                f"cannot add {self.rows}x{self.cols} and {other.rows}x{other.cols}"
            )
        return RateMatrix.from_arrays(
            self.rows,
            self.cols,
            np.concatenate([self.row_idx, other.row_idx]),
            np.concatenate([self.col_idx, other.col_idx]),
            np.concatenate([self.data, other.data]),
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, RateMatrix):
            return NotImplemented
        return (
            self.rows == other.rows
            and self.cols == other.cols
            and np.array_equal(self.row_idx, other.row_idx)
            and np.array_equal(self.col_idx, other.col_idx)
            and np.array_equal(self.data, other.data)
        )

    def __hash__(self):
        return hash((self.rows, self.cols, self.data.tobytes()))

    def __repr__(self):
        return f"RateMatrix({self.rows}x{self.cols}, nnz={self.nnz})"


@dataclass(frozen=True, eq=False)
class ProbabilityVector:
    """Dense stochastic vector: entries >= 0 summing to 1 within 1e-12."""

    entries: np.ndarray

    _SUM_TOL = 1e-12

    def __init__(self, entries):
        values = np.asarray(entries, dtype=np.float64).copy()
        values.flags.writeable = False
        if values.ndim != 1:
            raise ValidationError("probability vector must be one-dimensional")
        if values.size == 0:
            raise ValidationError("probability vector must be nonempty")
        if np.any(values < 0):
            raise ValidationError("probability vector has negative entries")
        if abs(values.sum() - 1.0) > self._SUM_TOL:
            raise ValidationError(
                f"probability vector sums to {values.sum()!r}, not 1"
            )
        object.__setattr__(self, "entries", values)

    def __len__(self) -> int:
        return self.entries.size

    def __getitem__(self, i):
        return self.entries[i]

    def __iter__(self):
        return iter(self.entries)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ProbabilityVector):
            return NotImplemented
        return np.array_equal(self.entries, other.entries)

    def __hash__(self):
        return hash(self.entries.tobytes())

    def __repr__(self):
        return f"ProbabilityVector({np.array2string(self.entries, precision=6)})"


def kron_product(a: RateMatrix, b: RateMatrix) -> RateMatrix:
    """Kronecker product: block (i, j) of the result equals a[i, j] * b."""
    r = (a.row_idx[:, None] * b.rows + b.row_idx[None, :]).ravel()
    c = (a.col_idx[:, None] * b.cols + b.col_idx[None, :]).ravel()
    v = (a.data[:, None] * b.data[None, :]).ravel()
    return RateMatrix.from_arrays(a.rows * b.rows, a.cols * b.cols, r, c, v)


def kron_sum(a: RateMatrix, b: RateMatrix) -> RateMatrix:
    """Kronecker sum a (x) I_n + I_m (x) b for square a (m x m) and b (n x n)."""
    if not a.is_square or not b.is_square:
        raise DimensionError("kron_sum requires square matrices")
    return kron_product(a, RateMatrix.identity(b.rows)) + kron_product(
        RateMatrix.identity(a.rows), b
    )


def _check_generator(q: RateMatrix, tol: float = 1e-9) -> None:
    if not q.is_square:
        raise ValidationError("generator must be square")
    off_diag = q.row_idx != q.col_idx
    if np.any(q.data[off_diag] < 0):
        raise ValidationError("generator has negative off-diagonal entries")
    sums = q.row_sums()
    worst = np.max(np.abs(sums)) if sums.size else 0.0
    if worst > tol:
        raise ValidationError(f"generator rows do not sum to 0 (max |sum| = {worst:g})")


def _is_strongly_connected(q: RateMatrix) -> bool:
    if q.rows <= 1:
        return True
    pattern = sp.csr_matrix(
        (np.ones_like(q.data), (q.row_idx, q.col_idx)), shape=(q.rows, q.cols)
    )
    n_components, _ = csgraph.connected_components(pattern, connection="strong")
    return n_components == 1


def steady_state(q: RateMatrix) -> ProbabilityVector:
    """Stationary distribution p of a conservative irreducible generator.

    Solves p q = 0, p 1 = 1 by replacing the last balance equation with the
    normalization constraint, using a sparse LU factorization with one round
    of iterative refinement.

    Raises
    ------
    ValidationError
        If q is not a conservative generator.
    NoStationaryDistributionError
        If the chain is not irreducible (no unique stationary distribution).
    """
    _check_generator(q)
    if not _is_strongly_connected(q):
        raise NoStationaryDistributionError(
            "generator is reducible: no unique stationary distribution"
        )
    n = q.rows
    # Transpose of q with the last equation replaced by sum(p) = 1.
    keep = q.col_idx != (n - 1)
    rows = np.concatenate([q.col_idx[keep], np.full(n, n - 1, dtype=np.int64)])
    cols = np.concatenate([q.row_idx[keep], np.arange(n, dtype=np.int64)])
    vals = np.concatenate([q.data[keep], np.ones(n)])
    a = sp.csc_matrix((vals, (rows, cols)), shape=(n, n))
    b = np.zeros(n)
    b[n - 1] = 1.0
    try:
        lu = spla.splu(a)
    except RuntimeError as exc:  # pragma: no cover - guards exact singularity
        raise NoStationaryDistributionError(str(exc)) from exc
    x = lu.solve(b)
    x += lu.solve(b - a @ x)  # one refinement pass
    if np.any(x < -1e-9 * max(1.0, np.max(np.abs(x)))):
        raise NoStationaryDistributionError("solver returned a non-probability vector")
    x = np.clip(x, 0.0, None)
    x /= x.sum()
    residual = np.max(np.abs(q.to_csr().T @ x)) if q.nnz else 0.0
    scale = np.max(np.abs(q.data)) if q.nnz else 1.0
    if residual > max(1e-10, 1e-13 * scale):
        raise NoStationaryDistributionError(
            f"stationary residual too large ({residual:g}); generator may be defective"
        )
    return ProbabilityVector(x)
