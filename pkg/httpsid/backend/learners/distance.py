"""Pairwise distances, computed exactly coordinate by coordinate."""

from enum import Enum

import numpy as np

# elements per broadcast block; bounds the (rows, cols, dim) temporary
_BLOCK_ELEMENTS = 1 << 22


class DistanceMetric(str, Enum):
    Euclidean = "euclidean"
    Manhattan = "manhattan"
    Chebyshev = "chebyshev"
    Hamming = "hamming"
    Canberra = "canberra"

    def reduce(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """distances between the rows of a (r, 1, d) and b (1, c, d) blocks"""
        diff = a - b
        match self:
            case DistanceMetric.Euclidean:
                return np.sqrt(np.sum(diff * diff, axis=-1))
            case DistanceMetric.Manhattan:
                return np.sum(np.abs(diff), axis=-1)
            case DistanceMetric.Chebyshev:
                return np.max(np.abs(diff), axis=-1) if diff.shape[-1] else np.zeros(diff.shape[:-1])
            case DistanceMetric.Hamming:
                return np.count_nonzero(diff != 0, axis=-1).astype(np.float64)
            case DistanceMetric.Canberra:
                denom = np.abs(a) + np.abs(b)
                num = np.abs(diff)
                # 0/0 coordinates contribute 0
                terms = np.divide(num, denom, out=np.zeros_like(num), where=denom != 0)
                return np.sum(terms, axis=-1)


def pairwise(A: np.ndarray, B: np.ndarray, metric: DistanceMetric) -> np.ndarray:
    """(len(A), len(B)) distance matrix between the rows of A and B"""
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    B = np.atleast_2d(np.asarray(B, dtype=np.float64))
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")

    out = np.empty((A.shape[0], B.shape[0]), dtype=np.float64)
    rows = max(1, _BLOCK_ELEMENTS // max(1, B.shape[0] * max(1, A.shape[1])))
    for start in range(0, A.shape[0], rows):
        block = A[start:start + rows, None, :]
        out[start:start + rows] = metric.reduce(block, B[None, :, :])
    return out
