"""
Model files: one ujson document, keys sorted so equal models give equal bytes.
Layout is described in docs/model_format.md.
"""

import logging
import pathlib
from dataclasses import dataclass

import numpy as np
import ujson

from ..exceptions import ModelFormatError, SchemaMismatchError
from .dataset import LabeledSample, ScalingParams, to_matrix
from .features import FeatureSetId
from .labels import Target
from .learners import Classifier, Learner
from .utils import atomic_write

log = logging.getLogger(__name__)

MODEL_FORMAT = "httpsid-model"
FORMAT_VERSION = 1


@dataclass
class TrainedModel:
    learner: Learner
    target: Target
    schema_id: FeatureSetId
    scaling: ScalingParams
    classifier: Classifier

    @property
    def hyperparameters(self) -> dict:
        return self.classifier.config.to_dict()

    def matrix(self, samples: list[LabeledSample]) -> np.ndarray:
        """scaled feature matrix of ``samples`` under this model's schema"""
        missing = [n for n in self.schema_id.names if samples and n not in samples[0].features.names]
        if missing:
            raise SchemaMismatchError(
                f"model schema {self.schema_id.value} needs {missing[0]!r}, "
                f"data schema is {samples[0].features.schema_id.value}"
            )
        X, _ = to_matrix(samples, self.schema_id, self.target)
        return self.scaling.apply(X)

    def predict(self, samples: list[LabeledSample]) -> list[str]:
        return self.classifier.predict(self.matrix(samples)) if samples else []

    def votes(self, samples: list[LabeledSample]) -> list[dict[str, float]]:
        return self.classifier.votes(self.matrix(samples)) if samples else []

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "format_version": FORMAT_VERSION,
            "learner": self.learner.value,
            "hyperparameters": self.hyperparameters,
            "target": self.target.value,
            "schema_id": self.schema_id.value,
            "scaling": self.scaling.to_dict(),
            "params": self.classifier.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainedModel":
        if d.get("format") != MODEL_FORMAT:
            raise ModelFormatError(f"not a model file (format={d.get('format')!r})")
        if d.get("format_version") != FORMAT_VERSION:
            raise ModelFormatError(f"unsupported model format_version {d.get('format_version')!r}, expected {FORMAT_VERSION}")
        try:
            learner = Learner(d["learner"])
            config = learner.config_cls(**d["hyperparameters"])
            scaling = ScalingParams.from_dict(d["scaling"])
            target = Target(d["target"])
            schema_id = FeatureSetId(d["schema_id"])
        except (KeyError, ValueError, TypeError) as e:
            raise ModelFormatError(f"malformed model file: {e!r}") from None
        if scaling.schema_id != schema_id:
            raise ModelFormatError(f"scaling schema {scaling.schema_id.value} != model schema {schema_id.value}")
        return cls(learner, target, schema_id, scaling, learner.init_cls.from_dict(config, d["params"]))


def dumps(model: TrainedModel) -> str:
    return ujson.dumps(model.to_dict(), sort_keys=True, ensure_ascii=True)


def save_model(path: pathlib.Path | str, model: TrainedModel):
    with atomic_write(path, "w", encoding="utf-8") as f:
        f.write(dumps(model))
    log.info(f"saved {model.learner.value} model ({model.schema_id.value}, {model.target.value}) to {path}")


def load_model(path: pathlib.Path | str) -> TrainedModel:
    p = pathlib.Path(path)
    try:
        with open(p, encoding="utf-8") as f:
            data = ujson.load(f)
    except ValueError as e:
        raise ModelFormatError(f"{p}: not a JSON model file ({e})") from None
    if not isinstance(data, dict):
        raise ModelFormatError(f"{p}: not a JSON model file")
    return TrainedModel.from_dict(data)
