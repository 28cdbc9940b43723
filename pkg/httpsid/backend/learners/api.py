from abc import ABC, abstractmethod
from typing import Any, ClassVar

import numpy as np
from pydantic import Extra

from ...base import BaseModel
from ...exceptions import ModelFormatError, TrainingError


class LearnerConfig(BaseModel):
    """Hyper-parameters of one grid cell"""

    class Config:
        extra = Extra.forbid
        frozen = True

    def to_dict(self) -> dict:
        return {k: (v.value if hasattr(v, "value") else v) for k, v in self.dict().items()}

    def label(self) -> str:
        return ",".join(f"{k}={v}" for k, v in self.to_dict().items())


class Classifier(ABC):
    """A multi-class classifier over scaled feature matrices.

    Labels are plain strings; ``classes`` is kept in lexicographic order and
    every tie between classes is resolved towards the smaller label.
    """

    config_cls: ClassVar[type[LearnerConfig]]

    def __init__(self, config: LearnerConfig, seed: int = 0):
        self.config = config
        self.seed = int(seed)
        self.classes: list[str] = []

    @abstractmethod
    def _fit(self, X: np.ndarray, y: np.ndarray):
        """y holds class indices into self.classes"""
        raise NotImplementedError

    @abstractmethod
    def _votes(self, X: np.ndarray) -> np.ndarray:
        """(n, n_classes) vote matrix"""
        raise NotImplementedError

    @abstractmethod
    def _decide(self, X: np.ndarray) -> np.ndarray:
        """winning class index per row"""
        raise NotImplementedError

    @abstractmethod
    def params_dict(self) -> dict[str, Any]:
        raise NotImplementedError

    @abstractmethod
    def load_params(self, params: dict[str, Any]):
        raise NotImplementedError

    def fit(self, X, y) -> "Classifier":
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or len(X) != len(y):
            raise TrainingError(f"expected a 2-d matrix with one label per row, got {X.shape} and {len(y)} labels")
        if len(y) == 0:
            raise TrainingError("empty training set")
        self.classes = sorted(set(y))
        index = {c: i for i, c in enumerate(self.classes)}
        self.n_features = X.shape[1]
        self._fit(X, np.array([index[c] for c in y], dtype=np.int64))
        return self

    def _check(self, X) -> np.ndarray:
        if not self.classes:
            raise TrainingError(f"{type(self).__name__} is not fitted")
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[0] and X.shape[1] != self.n_features:
            raise TrainingError(f"model expects {self.n_features} features, got {X.shape[1]}")
        return X

    def predict(self, X) -> list[str]:
        X = self._check(X)
        if X.shape[0] == 0:
            return []
        return [self.classes[i] for i in self._decide(X)]

    def votes(self, X) -> list[dict[str, float]]:
        X = self._check(X)
        if X.shape[0] == 0:
            return []
        return [dict(zip(self.classes, row.tolist())) for row in self._votes(X)]

    def to_dict(self) -> dict:
        return {
            "classes": list(self.classes),
            "n_features": self.n_features,
            "seed": self.seed,
            **self.params_dict(),
        }

    @classmethod
    def from_dict(cls, config: LearnerConfig, d: dict) -> "Classifier":
        m = cls(config, d.get("seed", 0))
        try:
            m.classes = list(d["classes"])
            m.n_features = int(d["n_features"])
            m.load_params(d)
        except (KeyError, TypeError, ValueError) as e:
            raise ModelFormatError(f"{cls.__name__} params: {e!r}") from None
        return m

