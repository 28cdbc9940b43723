"""Soft-margin SVM dual solved by sequential minimal optimisation.

    min_a  1/2 a'Qa - e'a   s.t.  0 <= a_i <= C,  y'a = 0,  Q_ij = y_i y_j K_ij

Each step picks the maximal violating pair and solves the two-variable
sub-problem analytically; the loop stops when the KKT gap drops below the
tolerance. Update, clipping and bias formulas are the ones of LIBSVM.
"""

import functools
import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .... import config
from ....exceptions import TrainingError

log = logging.getLogger(__name__)

TAU = 1e-12
# Gram matrices up to this many bytes are computed up front
GRAM_BYTES = 256 << 20
ROW_CACHE = 2048


def rbf_kernel(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    """exp(-gamma * ||a - b||^2) for every row pair"""
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    sq = np.sum(A * A, axis=1)[:, None] + np.sum(B * B, axis=1)[None, :] - 2.0 * (A @ B.T)
    return np.exp(-gamma * np.maximum(sq, 0.0))


class KernelRows:
    """Rows of the kernel matrix of X with itself, cached"""

    def __init__(self, X: np.ndarray, kernel: Callable[[np.ndarray, np.ndarray], np.ndarray]):
        self.X = X
        self.kernel = kernel
        self.n = len(X)
        self.gram = kernel(X, X) if self.n * self.n * 8 <= GRAM_BYTES else None
        self.row = functools.lru_cache(maxsize=ROW_CACHE)(self._row)

    def _row(self, i: int) -> np.ndarray:
        if self.gram is not None:
            return self.gram[i]
        return self.kernel(self.X[i:i + 1], self.X)[0]

    def diag(self) -> np.ndarray:
        if self.gram is not None:
            return np.diag(self.gram).copy()
        return np.array([self.kernel(self.X[i:i + 1], self.X[i:i + 1])[0, 0] for i in range(self.n)])


@dataclass
class BinarySolution:
    alpha: np.ndarray
    rho: float
    iterations: int

    def coef(self, y: np.ndarray) -> np.ndarray:
        return self.alpha * y


def _calculate_rho(alpha: np.ndarray, G: np.ndarray, y: np.ndarray, C: float) -> float:
    yG = y * G
    upper = alpha >= C
    lower = alpha <= 0
    free = ~upper & ~lower
    if np.any(free):
        return float(np.mean(yG[free]))
    ub_mask = (upper & (y < 0)) | (lower & (y > 0))
    lb_mask = (upper & (y > 0)) | (lower & (y < 0))
    ub = yG[ub_mask].min() if np.any(ub_mask) else np.inf
    lb = yG[lb_mask].max() if np.any(lb_mask) else -np.inf
    return float((ub + lb) / 2)


def solve(
    rows: KernelRows,
    y: np.ndarray,
    C: float,
    tol: float = config.SVM_TOLERANCE,
    max_iter: int = config.SVM_MAX_ITER,
) -> BinarySolution:
    """Train one binary machine; ``y`` holds +1/-1"""
    y = np.asarray(y, dtype=np.float64)
    if len(np.unique(y)) < 2:
        raise TrainingError("binary SVM needs samples of both classes")

    n = len(y)
    QD = rows.diag()
    alpha = np.zeros(n)
    G = -np.ones(n)

    it = 0
    while it < max_iter:
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        score = -y * G
        i = int(np.argmax(np.where(up, score, -np.inf)))
        j = int(np.argmin(np.where(low, score, np.inf)))
        if not up[i] or not low[j] or score[i] - score[j] < tol:
            break
        it += 1

        Ki, Kj = rows.row(i), rows.row(j)
        Qi, Qj = y[i] * y * Ki, y[j] * y * Kj
        old_i, old_j = alpha[i], alpha[j]

        if y[i] != y[j]:
            quad = max(QD[i] + QD[j] + 2 * Qi[j], TAU)
            delta = (-G[i] - G[j]) / quad
            diff = alpha[i] - alpha[j]
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0:
                if alpha[j] < 0:
                    alpha[j], alpha[i] = 0.0, diff
            elif alpha[i] < 0:
                alpha[i], alpha[j] = 0.0, -diff
            if diff > 0:
                if alpha[i] > C:
                    alpha[i], alpha[j] = C, C - diff
            elif alpha[j] > C:
                alpha[j], alpha[i] = C, C + diff
        else:
            quad = max(QD[i] + QD[j] - 2 * Qi[j], TAU)
            delta = (G[i] - G[j]) / quad
            total = alpha[i] + alpha[j]
            alpha[i] -= delta
            alpha[j] += delta
            if total > C:
                if alpha[i] > C:
                    alpha[i], alpha[j] = C, total - C
            elif alpha[j] < 0:
                alpha[j], alpha[i] = 0.0, total
            if total > C:
                if alpha[j] > C:
                    alpha[j], alpha[i] = C, total - C
            elif alpha[i] < 0:
                alpha[i], alpha[j] = 0.0, total

        G += Qi * (alpha[i] - old_i) + Qj * (alpha[j] - old_j)
    else:
        log.warning(f"SMO reached max_iter={max_iter} before the KKT gap fell below {tol}")

    log.debug(f"SMO n={n}, C={C}: {it} iterations, {int(np.count_nonzero(alpha))} support vectors")
    return BinarySolution(alpha=alpha, rho=_calculate_rho(alpha, G, y, C), iterations=it)
