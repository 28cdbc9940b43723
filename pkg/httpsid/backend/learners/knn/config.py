from enum import Enum

from pydantic import conint

from ..api import LearnerConfig
from ..distance import DistanceMetric


class Weighting(str, Enum):
    Uniform = "uniform"
    DistanceInverse = "distance"


class KnnConfig(LearnerConfig):
    k: conint(ge=1) = 5
    weights: Weighting = Weighting.Uniform
    metric: DistanceMetric = DistanceMetric.Euclidean

    @classmethod
    def grid(cls) -> list["KnnConfig"]:
        return [
            cls(k=k, weights=w, metric=m)
            for k in range(4, 21, 2)
            for w in Weighting
            for m in DistanceMetric
        ]
