import logging

import numpy as np

from ..api import Classifier
from ..distance import pairwise
from .config import KnnConfig, Weighting

log = logging.getLogger(__name__)


class Knn(Classifier):
    """k nearest neighbours over the stored training matrix.

    Neighbours are ranked by (distance, training row). With inverse distance
    weighting, neighbours at distance 0 outvote every other neighbour. Vote
    ties go to the class whose neighbours are closer on average, then to the
    smaller label.
    """

    config_cls = KnnConfig

    def __init__(self, config: KnnConfig, seed: int = 0):
        super().__init__(config, seed)
        self.X = np.empty((0, 0))
        self.y = np.empty(0, dtype=np.int64)

    @property
    def k(self) -> int:
        return min(self.config.k, len(self.y))

    def _fit(self, X: np.ndarray, y: np.ndarray):
        if self.config.k > len(y):
            log.debug(f"k={self.config.k} > {len(y)} training rows, using k={len(y)}")
        self.X, self.y = X.copy(), y.copy()

    def _neighbours(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        d = pairwise(X, self.X, self.config.metric)
        idx = np.arange(d.shape[1])
        nn = np.array([np.lexsort((idx, row))[: self.k] for row in d], dtype=np.int64).reshape(len(d), self.k)
        return nn, np.take_along_axis(d, nn, axis=1)

    def _scores(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        nn, dist = self._neighbours(X)
        n_cls = len(self.classes)
        votes = np.zeros((len(X), n_cls))
        dist_sum = np.zeros((len(X), n_cls))
        members = np.zeros((len(X), n_cls))
        for r in range(len(X)):
            labels = self.y[nn[r]]
            if self.config.weights == Weighting.Uniform:
                w = np.ones(self.k)
            elif np.any(dist[r] == 0):
                w = (dist[r] == 0).astype(np.float64)
            else:
                w = 1.0 / dist[r]
            np.add.at(votes[r], labels, w)
            np.add.at(dist_sum[r], labels, dist[r])
            np.add.at(members[r], labels, 1.0)
        mean_dist = np.divide(dist_sum, members, out=np.full_like(dist_sum, np.inf), where=members > 0)
        return votes, mean_dist

    def _votes(self, X: np.ndarray) -> np.ndarray:
        return self._scores(X)[0]

    def _decide(self, X: np.ndarray) -> np.ndarray:
        votes, mean_dist = self._scores(X)
        out = np.empty(len(X), dtype=np.int64)
        for r in range(len(X)):
            top = np.flatnonzero(votes[r] == votes[r].max())
            # smaller mean distance, then smaller label (lower index)
            out[r] = min(top, key=lambda c: (mean_dist[r, c], c))
        return out

    def params_dict(self) -> dict:
        return {"X": self.X.tolist(), "y": self.y.tolist()}

    def load_params(self, params: dict):
        self.X = np.asarray(params["X"], dtype=np.float64).reshape(-1, self.n_features)
        self.y = np.asarray(params["y"], dtype=np.int64)
