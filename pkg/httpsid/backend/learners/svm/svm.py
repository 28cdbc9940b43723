import itertools
import logging
from typing import Any

import numpy as np

from .... import config
from ....exceptions import TrainingError
from ..api import Classifier
from ..distance import DistanceMetric, pairwise
from .config import SvmMapConfig, SvmRbfConfig, SvmSimConfig
from .smo import KernelRows, rbf_kernel, solve

log = logging.getLogger(__name__)


def sim_features(X: np.ndarray, anchors: np.ndarray, threshold: float, metric: DistanceMetric) -> np.ndarray:
    """1 - min(d, threshold) / threshold against every anchor"""
    if threshold <= 0:
        raise ValueError(f"similarity threshold must be > 0, got {threshold}")
    d = pairwise(X, anchors, metric)
    return 1.0 - np.minimum(d, threshold) / threshold


def map_features(X: np.ndarray, anchors: np.ndarray, gamma_map: float, metric: DistanceMetric) -> np.ndarray:
    """exp(-gamma_map * d) against every anchor, d not squared"""
    if gamma_map <= 0:
        raise ValueError(f"gamma_map must be > 0, got {gamma_map}")
    return np.exp(-gamma_map * pairwise(X, anchors, metric))


def resolve_threshold(X: np.ndarray, quantile: float, metric: DistanceMetric, seed: int,
                      sample: int = config.SIM_DISTANCE_SAMPLE) -> float:
    """The ``quantile`` of the pairwise distances between (at most ``sample``
    seeded) rows of X, falling back to the smallest positive distance and
    then to 1.0 when the quantile is 0."""
    if len(X) > sample:
        rows = np.sort(np.random.default_rng(seed).choice(len(X), size=sample, replace=False))
        X = X[rows]
    if len(X) < 2:
        return 1.0
    d = pairwise(X, X, metric)[np.triu_indices(len(X), k=1)]
    t = float(np.quantile(d, quantile))
    if t > 0:
        return t
    positive = d[d > 0]
    return float(positive.min()) if positive.size else 1.0


class SvmOvo(Classifier):
    """One-vs-one RBF SVM.

    One binary machine per class pair (a, b), a < b; a positive decision value
    votes for a. Vote ties go to the class with the larger sum of |decision|
    over the machines that voted for it, then to the smaller label.
    """

    config_cls = SvmRbfConfig

    def __init__(self, config: SvmRbfConfig, seed: int = 0):
        super().__init__(config, seed)
        self.support = np.empty((0, 0))
        self.support_index = np.empty(0, dtype=np.int64)
        self.machines: list[dict[str, Any]] = []

    def transform(self, X: np.ndarray) -> np.ndarray:
        """input of the RBF kernel"""
        return X

    def _kernel(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        return rbf_kernel(A, B, self.config.gamma)

    def _fit(self, X: np.ndarray, y: np.ndarray):
        if len(self.classes) < 2:
            raise TrainingError(f"SVM needs at least 2 classes, got {self.classes}")
        Z = self.transform(X)

        solved = []
        for a, b in itertools.combinations(range(len(self.classes)), 2):
            idx = np.flatnonzero((y == a) | (y == b))
            yb = np.where(y[idx] == a, 1.0, -1.0)
            sol = solve(KernelRows(Z[idx], self._kernel), yb, self.config.C)
            nz = np.flatnonzero(sol.alpha > 0)
            solved.append((a, b, idx[nz], sol.coef(yb)[nz], sol.rho))

        used = np.unique(np.concatenate([s[2] for s in solved]))
        position = {int(r): p for p, r in enumerate(used)}
        self.support_index = used
        self.support = Z[used]
        self.machines = [
            {"pair": [a, b], "sv": [position[int(r)] for r in rows], "coef": coef.tolist(), "rho": rho}
            for a, b, rows, coef, rho in solved
        ]
        log.debug(f"{type(self).__name__} {self.config.label()}: {len(self.machines)} machines, {len(used)} support vectors")

    def decision_values(self, X: np.ndarray) -> np.ndarray:
        """(n, n_machines) decision values, machines in pair order"""
        K = self._kernel(self.transform(X), self.support) if len(self.support) else np.zeros((len(X), 0))
        out = np.empty((len(X), len(self.machines)))
        for m, machine in enumerate(self.machines):
            out[:, m] = K[:, machine["sv"]] @ np.asarray(machine["coef"]) - machine["rho"]
        return out

    def _tally(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        dec = self.decision_values(X)
        votes = np.zeros((len(X), len(self.classes)))
        strength = np.zeros_like(votes)
        for m, machine in enumerate(self.machines):
            a, b = machine["pair"]
            winner = np.where(dec[:, m] > 0, a, b)
            rows = np.arange(len(X))
            np.add.at(votes, (rows, winner), 1.0)
            np.add.at(strength, (rows, winner), np.abs(dec[:, m]))
        return votes, strength

    def _votes(self, X: np.ndarray) -> np.ndarray:
        return self._tally(X)[0]

    def _decide(self, X: np.ndarray) -> np.ndarray:
        votes, strength = self._tally(X)
        out = np.empty(len(X), dtype=np.int64)
        for r in range(len(X)):
            top = np.flatnonzero(votes[r] == votes[r].max())
            out[r] = min(top, key=lambda c: (-strength[r, c], c))
        return out

    def params_dict(self) -> dict:
        return {"support": self.support.tolist(), "machines": self.machines}

    def load_params(self, params: dict):
        self.support = np.asarray(params["support"], dtype=np.float64)
        self.machines = list(params["machines"])
        if self.support.size == 0:
            self.support = self.support.reshape(0, self.n_features)


class _MappedSvm(SvmOvo):
    """SVM over similarities to the training rows (the anchors).

    Support vectors are kept as anchor indices; their mapped vectors are
    recomputed from the anchors, so training and prediction map identically.
    """

    def __init__(self, config, seed: int = 0):
        super().__init__(config, seed)
        self.anchors = np.empty((0, 0))

    def feature_map(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def transform(self, X: np.ndarray) -> np.ndarray:
        return self.feature_map(X)

    def _fit(self, X: np.ndarray, y: np.ndarray):
        self.anchors = X.copy()
        self._resolve(X)
        super()._fit(X, y)

    def _resolve(self, X: np.ndarray):
        pass

    def params_dict(self) -> dict:
        return {
            "anchors": self.anchors.tolist(),
            "support_index": self.support_index.tolist(),
            "machines": self.machines,
        }

    def load_params(self, params: dict):
        self.anchors = np.asarray(params["anchors"], dtype=np.float64).reshape(-1, self.n_features)
        self.support_index = np.asarray(params["support_index"], dtype=np.int64)
        self.machines = list(params["machines"])
        self.support = self.feature_map(self.anchors[self.support_index])


class SvmSim(_MappedSvm):
    config_cls = SvmSimConfig

    def __init__(self, config: SvmSimConfig, seed: int = 0):
        super().__init__(config, seed)
        self.threshold = 0.0

    def _resolve(self, X: np.ndarray):
        self.threshold = resolve_threshold(X, self.config.threshold_quantile, self.config.metric, self.seed)
        log.debug(f"SIM threshold q={self.config.threshold_quantile} -> {self.threshold}")

    def feature_map(self, X: np.ndarray) -> np.ndarray:
        return sim_features(X, self.anchors, self.threshold, self.config.metric)

    def params_dict(self) -> dict:
        return {"threshold": self.threshold, **super().params_dict()}

    def load_params(self, params: dict):
        self.threshold = float(params["threshold"])
        super().load_params(params)


class SvmMap(_MappedSvm):
    config_cls = SvmMapConfig

    def feature_map(self, X: np.ndarray) -> np.ndarray:
        return map_features(X, self.anchors, self.config.gamma_map, self.config.metric)
