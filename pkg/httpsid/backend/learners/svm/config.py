from pydantic import confloat

from ..api import LearnerConfig
from ..distance import DistanceMetric

C_GRID = tuple(2.0 ** e for e in range(-5, 16, 2))
GAMMA_GRID = tuple(2.0 ** e for e in range(-15, 4, 2))
SIM_QUANTILES = tuple(round(0.1 * i, 1) for i in range(1, 10))


class SvmRbfConfig(LearnerConfig):
    C: confloat(gt=0) = 1.0
    gamma: confloat(gt=0) = 2.0 ** -3

    @classmethod
    def grid(cls) -> list["SvmRbfConfig"]:
        return [cls(C=c, gamma=g) for c in C_GRID for g in GAMMA_GRID]


class SvmSimConfig(SvmRbfConfig):
    """RBF SVM on thresholded similarities to the training samples.

    ``threshold_quantile`` picks the threshold as that quantile of the pairwise
    training distances under ``metric``.
    """

    threshold_quantile: confloat(gt=0, lt=1) = 0.5
    metric: DistanceMetric = DistanceMetric.Euclidean

    @classmethod
    def grid(cls) -> list["SvmSimConfig"]:
        return [
            cls(C=c, gamma=g, threshold_quantile=q, metric=m)
            for c in C_GRID
            for g in GAMMA_GRID
            for q in SIM_QUANTILES
            for m in DistanceMetric
        ]


class SvmMapConfig(SvmRbfConfig):
    """RBF SVM on exp(-gamma_map * distance) similarities to the training samples"""

    gamma_map: confloat(gt=0) = 1.0
    metric: DistanceMetric = DistanceMetric.Euclidean

    @classmethod
    def grid(cls) -> list["SvmMapConfig"]:
        return [
            cls(C=c, gamma=g, gamma_map=gm, metric=m)
            for c in C_GRID
            for g in GAMMA_GRID
            for gm in GAMMA_GRID
            for m in DistanceMetric
        ]
