import logging
import pathlib
from datetime import date
from enum import Enum
from typing import Any, Self

import ujson
from pydantic import Extra, conint, validator

from . import config
from .backend.features import FeatureSetId
from .backend.labels import Target
from .backend.learners import Learner
from .backend.utils import atomic_write
from .base import BaseModel
from .exceptions import (
    CaptureFormatError,
    ConfigError,
    DatasetFormatError,
    HttpsIdError,
    LabelError,
    ModelFormatError,
    SchemaMismatchError,
    TLSParseError,
    TrainingError,
)

log = logging.getLogger(__name__)

REPORT_VERSION = 1


class HorizonScope(str, Enum):
    """Which split a time horizon truncates"""

    Test = "test"
    Both = "both"


class CipherPerturbation(BaseModel):
    delta_suites: int = 0
    delta_extensions: int = 0
    new_version: int | None = None

    class Config:
        extra = Extra.forbid

    @property
    def is_identity(self) -> bool:
        return self.delta_suites == 0 and self.delta_extensions == 0 and self.new_version is None


class ExperimentSpec(BaseModel):
    """One evaluation protocol: learner, feature set, target and test conditions.

    ``grid`` restricts hyper-parameter axes, e.g. ``{"k": [4, 6]}``; None
    searches the full grid.
    """

    learner: Learner
    feature_set: FeatureSetId = FeatureSetId.Combined
    target: Target = Target.Tuple
    repetitions: conint(ge=1) = config.REPETITIONS
    folds: conint(ge=2) = config.FOLDS
    seed: int = config.DEFAULT_SEED
    time_horizon: float | None = None
    horizon_scope: HorizonScope = HorizonScope.Test
    train_size: conint(ge=1) | None = None
    perturbation: CipherPerturbation | None = None
    vpn: bool = False
    vpn_group_size: conint(ge=1) = config.VPN_GROUP_SIZE
    tunnel: str = config.DEFAULT_TUNNEL
    silence_gap: float = config.SILENCE_GAP
    min_peak_packets: conint(ge=1) = config.MIN_PEAK_PACKETS
    grid: dict[str, list[Any]] | None = None

    class Config:
        extra = Extra.forbid

    @validator("time_horizon", "silence_gap")
    def positive(cls, v, field):
        if v is not None and v <= 0:
            raise ValueError(f"{field.name} must be > 0")
        return v

    @property
    def needs_sessions(self) -> bool:
        return self.vpn or self.time_horizon is not None

    def label(self) -> str:
        return f"{self.learner.value}_{self.feature_set.value}_{self.target.value}"

    def to_dict(self) -> dict:
        return ujson.loads(self.json())


class RepetitionResult(BaseModel):
    repetition: int
    accuracy: float
    train_size: int
    test_size: int
    hyperparameters: dict[str, Any]


class TimingReport(BaseModel):
    """Wall-clock seconds; kept out of the report so reports stay reproducible"""

    train_seconds: list[float] = []
    test_seconds: list[float] = []
    dataset_size: int = 0
    jobs: int = 1
    host: dict[str, Any] = {}


class EvaluationReport(BaseModel):
    spec: ExperimentSpec
    dataset_size: int
    mean_accuracy: float
    repetitions: list[RepetitionResult]
    labels: list[str]
    confusion_counts: list[list[int]]
    confusion: list[list[float]]
    per_class_recall: list[float]
    learning_curve: list[tuple[int, float]] | None = None
    report_version: int = REPORT_VERSION

    timing: TimingReport | None = None

    file_fmt: str = "result_{}_{}_{}.json"  # result_20240101_mylabel_RF_Combined_Tuple.json

    @property
    def accuracies(self) -> list[float]:
        return [r.accuracy for r in self.repetitions]

    def to_dict(self) -> dict:
        return ujson.loads(self.json(exclude={"timing", "file_fmt"}))

    def dumps(self) -> str:
        return ujson.dumps(self.to_dict(), sort_keys=True, indent=2)

    def write(self, path: pathlib.Path | str):
        """write the report and, when timed, ``<stem>.timing.json`` next to it"""
        p = pathlib.Path(path)
        with atomic_write(p, "w", encoding="utf-8") as f:
            f.write(self.dumps())
        if self.timing is not None:
            with atomic_write(timing_path(p), "w", encoding="utf-8") as f:
                f.write(ujson.dumps(ujson.loads(self.timing.json()), sort_keys=True, indent=2))
        log.info(f"write results to disk {p}")

    def flush(self, task_label: str, result_dir: pathlib.Path | None = None) -> pathlib.Path:
        result_dir = result_dir or config.RESULTS_LOCAL_DIR
        if not result_dir.exists():
            log.info(f"local result directory not exist, creating it: {result_dir}")
            result_dir.mkdir(parents=True)

        file_name = self.file_fmt.format(date.today().strftime("%Y%m%d"), task_label, self.spec.label())
        result_file = result_dir.joinpath(file_name)
        if result_file.exists():
            log.warning(f"Replacing existing result with the same file_name: {result_file}")
        self.write(result_file)
        return result_file

    @classmethod
    def read_file(cls, full_path: pathlib.Path) -> Self:
        if not full_path.exists():
            raise ValueError(f"No such file: {full_path}")

        with open(full_path) as f:
            report = ujson.loads(f.read())
        if report.get("report_version") != REPORT_VERSION:
            raise ModelFormatError(f"{full_path}: unsupported report_version {report.get('report_version')!r}")
        result = cls.parse_obj(report)

        t = timing_path(full_path)
        if t.exists():
            with open(t) as f:
                result.timing = TimingReport.parse_obj(ujson.loads(f.read()))
        return result

    def display(self):
        display_reports([self])


def timing_path(report_path: pathlib.Path) -> pathlib.Path:
    return report_path.with_name(f"{report_path.stem}.timing.json")


def display_reports(reports: list[EvaluationReport], task_label: str = ""):
    """aligned summary table on the no_color logger"""
    if not reports:
        return

    rows = []
    for r in reports:
        train_s = f"{sum(r.timing.train_seconds):.3f}" if r.timing else "-"
        test_s = f"{sum(r.timing.test_seconds):.3f}" if r.timing else "-"
        rows.append((
            r.spec.learner.value,
            r.spec.feature_set.value,
            r.spec.target.value,
            str(r.dataset_size),
            f"{r.mean_accuracy:.4f}",
            " ".join(f"{a:.4f}" for a in r.accuracies),
            train_s,
            test_s,
        ))

    TITLE = ("learner", "features", "target", "n", "accuracy", "per-repetition", "train(s)", "test(s)")
    widths = [max(len(TITLE[i]), *(len(row[i]) for row in rows)) for i in range(len(TITLE))]
    DATA_FORMAT = " | ".join(f"%-{w}s" for w in widths)
    SPLIT = DATA_FORMAT % tuple("-" * w for w in widths)

    fmt = [f"Evaluation summary: task_label={task_label}" if task_label else "Evaluation summary", DATA_FORMAT % TITLE, SPLIT]
    fmt.extend(DATA_FORMAT % row for row in rows)

    tmp_logger = logging.getLogger("no_color")
    for f in fmt:
        tmp_logger.info(f)


__all__ = [
    "HttpsIdError", "CaptureFormatError", "TLSParseError", "SchemaMismatchError", "DatasetFormatError",
    "LabelError", "TrainingError", "ModelFormatError", "ConfigError",
    "HorizonScope", "CipherPerturbation", "ExperimentSpec", "RepetitionResult", "TimingReport",
    "EvaluationReport", "display_reports", "timing_path",
]
