from enum import Enum
from typing import Any, Iterable, Type

from .api import Classifier, LearnerConfig
from .distance import DistanceMetric, pairwise


class Learner(Enum):
    """Learner types

    Examples:
        >>> Learner.RF
        <Learner.RF: 'RF'>
        >>> Learner.parse("svm-map")
        <Learner.SVM_MAP: 'SVM_MAP'>
    """

    KNN = "KNN"
    SVM_RBF = "SVM_RBF"
    SVM_SIM = "SVM_SIM"
    SVM_MAP = "SVM_MAP"
    RF = "RF"

    @property
    def init_cls(self) -> Type[Classifier]:
        """Import while in use"""
        if self == Learner.KNN:
            from .knn.knn import Knn
            return Knn

        if self == Learner.SVM_RBF:
            from .svm.svm import SvmOvo
            return SvmOvo

        if self == Learner.SVM_SIM:
            from .svm.svm import SvmSim
            return SvmSim

        if self == Learner.SVM_MAP:
            from .svm.svm import SvmMap
            return SvmMap

        if self == Learner.RF:
            from .forest.forest import RandomForest
            return RandomForest

    @property
    def config_cls(self) -> Type[LearnerConfig]:
        """Import while in use"""
        if self == Learner.KNN:
            from .knn.config import KnnConfig
            return KnnConfig

        if self == Learner.SVM_RBF:
            from .svm.config import SvmRbfConfig
            return SvmRbfConfig

        if self == Learner.SVM_SIM:
            from .svm.config import SvmSimConfig
            return SvmSimConfig

        if self == Learner.SVM_MAP:
            from .svm.config import SvmMapConfig
            return SvmMapConfig

        if self == Learner.RF:
            from .forest.config import ForestConfig
            return ForestConfig

    def create(self, hyperparameters: LearnerConfig | dict, seed: int = 0) -> Classifier:
        cfg = hyperparameters if isinstance(hyperparameters, LearnerConfig) else self.config_cls(**hyperparameters)
        return self.init_cls(cfg, seed)

    @classmethod
    def parse(cls, text: str) -> "Learner":
        key = text.upper().replace("-", "_").replace("+", "_")
        aliases = {"SVM": "SVM_RBF", "SVM_RBF": "SVM_RBF", "RANDOM_FOREST": "RF", "FOREST": "RF"}
        key = aliases.get(key, key)
        for m in cls:
            if m.value == key:
                return m
        raise ValueError(f"unknown learner {text!r}, expected one of {[m.value for m in cls]}")


def grid_for(learner: Learner, restrict: dict[str, Iterable[Any]] | None = None) -> list[LearnerConfig]:
    """The learner's hyper-parameter grid in canonical order.

    ``restrict`` keeps only the cells whose value on each named axis is one of
    the given values.
    """
    cells = learner.config_cls.grid()
    if not restrict:
        return cells

    axes = set(learner.config_cls.__fields__)
    unknown = set(restrict) - axes
    if unknown:
        raise ValueError(f"{learner.value} grid has no axis {sorted(unknown)}, axes are {sorted(axes)}")

    def allowed(cell: LearnerConfig) -> bool:
        values = cell.to_dict()
        return all(_matches(values[axis], wanted) for axis, wanted in restrict.items())

    kept = [c for c in cells if allowed(c)]
    if not kept:
        raise ValueError(f"grid restriction {restrict} leaves no {learner.value} cell")
    return kept


def _matches(value: Any, wanted: Iterable[Any]) -> bool:
    for w in wanted:
        if isinstance(value, float) and isinstance(w, (int, float)):
            if abs(value - w) <= 1e-12 * max(1.0, abs(value)):
                return True
        elif str(value).lower() == str(w).lower():
            return True
    return False


__all__ = [
    "Learner", "Classifier", "LearnerConfig", "DistanceMetric", "pairwise", "grid_for",
]
