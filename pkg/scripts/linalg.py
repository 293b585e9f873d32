#!/usr/bin/env python3
"""
Sparsebench Dense Linear Algebra Module
Least-squares projection, extreme singular values and correlation vectors,
the numeric substrate shared by the recovery, RIC and experiment modules.

Matrices are float64 numpy arrays stored row-major (C order); vectors are
1-d float64 arrays. Arrays handed out by this module are never modified
after they are returned.
"""

import logging

import numpy as np
from scipy.linalg import solve_triangular

from sparse_errors import DimensionMismatch, InputError, InvalidDimensions, RankDeficient

logger = logging.getLogger(__name__)

# Diagonal entries of R below RANK_TOLERANCE * max|diag(R)| mean rank loss
RANK_TOLERANCE = 1e-12

CSV_FORMAT = '%.17g'


def as_matrix(A, name='matrix'):
    """Validate and return A as a finite 2-d float64 array (row-major)"""
    A = np.ascontiguousarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise InvalidDimensions(f"{name} must be 2-d, got shape {A.shape}")
    if A.shape[0] < 1 or A.shape[1] < 1:
        raise InvalidDimensions(f"{name} must have at least one row and column, got {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InputError(f"{name} contains non-finite entries")
    return A


def as_vector(v, name='vector'):
    """Validate and return v as a finite 1-d float64 array"""
    v = np.ascontiguousarray(v, dtype=np.float64)
    if v.ndim == 2 and 1 in v.shape:
        v = v.ravel()
    if v.ndim != 1:
        raise InvalidDimensions(f"{name} must be 1-d, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise InputError(f"{name} contains non-finite entries")
    return v


def frozen(array):
    array.setflags(write=False)
    return array


def column_norms(A):
    return np.linalg.norm(A, axis=0)


def _check_rank(diag, k):
    magnitudes = np.abs(diag)
    largest = magnitudes.max() if magnitudes.size else 0.0
    if largest == 0.0 or magnitudes.min() < RANK_TOLERANCE * largest:
        effective = int(np.count_nonzero(magnitudes >= RANK_TOLERANCE * largest)) if largest > 0 else 0
        raise RankDeficient(f"effective rank {effective} < {k} columns")


def least_squares(A, b):
    """Coefficients c minimizing ||A c - b||_2 via Householder QR"""
    A = as_matrix(A, 'A')
    b = as_vector(b, 'b')
    m, k = A.shape
    if b.shape[0] != m:
        raise DimensionMismatch(f"A has {m} rows but b has length {b.shape[0]}")
    if m < k:
        raise InvalidDimensions(f"least squares needs m >= k, got {m}x{k}")

    q, r = np.linalg.qr(A, mode='reduced')
    _check_rank(np.diag(r), k)
    return solve_triangular(r, q.T @ b, lower=False)


def extreme_singular_values(A):
    """Return (sigma_min, sigma_max) of A

    For a wide matrix the smallest singular value of the k columns is 0.
    """
    A = as_matrix(A, 'A')
    s = np.linalg.svd(A, compute_uv=False)
    sigma_max = float(s[0])
    sigma_min = float(s[-1]) if A.shape[0] >= A.shape[1] else 0.0
    return sigma_min, sigma_max


def residual_correlations(Phi, r):
    """Vector of inner products <phi_i, r> over all columns"""
    Phi = np.asarray(Phi, dtype=np.float64)
    r = as_vector(r, 'r')
    if Phi.shape[0] != r.shape[0]:
        raise DimensionMismatch(f"Phi has {Phi.shape[0]} rows but r has length {r.shape[0]}")
    return Phi.T @ r


class IncrementalLeastSquares:
    """Least squares against a target b as columns are appended one at a time

    Keeps a thin QR factorization built by modified Gram-Schmidt with one
    re-orthogonalization pass, so each append costs O(m k). Results agree
    with least_squares on the same columns.
    """

    def __init__(self, b, capacity=None):
        self.b = as_vector(b, 'b')
        self.m = self.b.shape[0]
        self.capacity = capacity or self.m
        self._q = np.zeros((self.m, self.capacity))
        self._r = np.zeros((self.capacity, self.capacity))
        self._qtb = np.zeros(self.capacity)
        self.size = 0
        self._max_diag = 0.0

    def append(self, column):
        """Add a column; raises RankDeficient if it is dependent on the others"""
        if self.size >= min(self.capacity, self.m):
            raise RankDeficient(f"cannot hold more than {min(self.capacity, self.m)} independent columns")

        column = as_vector(column, 'column')
        if column.shape[0] != self.m:
            raise DimensionMismatch(f"column has length {column.shape[0]}, expected {self.m}")

        k = self.size
        q = self._q[:, :k]
        v = column.copy()
        h = q.T @ v
        v -= q @ h
        # second pass restores orthogonality lost to cancellation
        h2 = q.T @ v
        v -= q @ h2
        h += h2

        rho = float(np.linalg.norm(v))
        largest = max(self._max_diag, rho)
        if largest == 0.0 or rho < RANK_TOLERANCE * largest:
            raise RankDeficient(f"column {k + 1} is linearly dependent on the previous {k}")
        if k > 0 and rho < RANK_TOLERANCE * float(np.linalg.norm(column)):
            raise RankDeficient(f"column {k + 1} is linearly dependent on the previous {k}")

        self._q[:, k] = v / rho
        self._r[:k, k] = h
        self._r[k, k] = rho
        self._qtb[k] = self._q[:, k] @ self.b
        self._max_diag = largest
        self.size = k + 1

    def coefficients(self):
        k = self.size
        if k == 0:
            return np.zeros(0)
        return solve_triangular(self._r[:k, :k], self._qtb[:k], lower=False)

    def residual(self):
        """b minus its projection onto the span of the appended columns"""
        k = self.size
        return self.b - self._q[:, :k] @ self._qtb[:k]


def save_matrix_csv(path, A, header_lines=()):
    """Write a matrix (or a vector, one entry per line) at full precision"""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim == 1:
        A = A.reshape(-1, 1)
    header = '\n'.join(header_lines)
    np.savetxt(path, A, fmt=CSV_FORMAT, delimiter=',', header=header, comments='# ')
    logger.debug(f"Saved {A.shape[0]}x{A.shape[1]} array to {path}")


def load_matrix_csv(path):
    """Read a CSV written by save_matrix_csv; '#' lines are skipped"""
    try:
        A = np.loadtxt(path, delimiter=',', comments='#', ndmin=2)
    except ValueError as e:
        raise InputError(f"{path}: malformed CSV ({e})") from e
    return as_matrix(A, str(path))


def load_vector_csv(path):
    A = load_matrix_csv(path)
    if A.shape[1] != 1 and A.shape[0] != 1:
        raise InvalidDimensions(f"{path}: expected a single column, got shape {A.shape}")
    return A.ravel()


def main():
    """Demonstrate the projection and singular value helpers"""
    logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')

    A = np.array([[1.0, 1.0], [1.0, 2.0], [1.0, 3.0]])
    b = np.array([1.0, 2.0, 4.0])
    c = least_squares(A, b)
    logger.info(f"🧮 least squares coefficients: {c}")

    sigma_min, sigma_max = extreme_singular_values(np.array([[1.0, 1.0], [0.0, 1.0]]))
    logger.info(f"🧮 singular values: min={sigma_min:.5f} max={sigma_max:.5f}")


if __name__ == "__main__":
    main()
