import itertools
import logging
import pathlib
import traceback
import uuid
from typing import Iterable, Sequence

import polars as pl

from . import config
from .backend.dataset import LabeledSample
from .backend.features import FeatureSetId
from .backend.labels import Target
from .backend.learners import Learner
from .backend.task_runner import Evaluator
from .backend.utils import atomic_write
from .models import EvaluationReport, ExperimentSpec, HttpsIdError, display_reports

log = logging.getLogger(__name__)


class EvaluationRunner:
    """Batch evaluation over learners x feature sets x targets.

    Every finished spec is written to ``result_dir`` as its own result file;
    a failing spec is logged and skipped.
    """

    def __init__(self, jobs: int = config.NUM_WORKERS, result_dir: pathlib.Path | None = None):
        self.evaluator = Evaluator(jobs)
        self.result_dir = result_dir or config.RESULTS_LOCAL_DIR
        self.failed: list[tuple[ExperimentSpec, str]] = []
        self.written: list[pathlib.Path] = []

    @staticmethod
    def cross_product(
        base: ExperimentSpec,
        learners: Iterable[Learner],
        feature_sets: Iterable[FeatureSetId],
        targets: Iterable[Target],
    ) -> list[ExperimentSpec]:
        return [
            base.copy(update={"learner": lr, "feature_set": fs, "target": t})
            for lr, fs, t in itertools.product(learners, feature_sets, targets)
        ]

    def run(
        self,
        data: Sequence[LabeledSample],
        specs: list[ExperimentSpec],
        task_label: str | None = None,
        learning_curve: Sequence[int | None] | None = None,
        timing: bool = True,
        plots: bool = False,
    ) -> list[EvaluationReport]:
        """run all the specs, write one result file per spec"""
        if not specs:
            log.warning("Empty specs submitted")
            return []

        run_id = uuid.uuid4().hex
        task_label = task_label if task_label else run_id[:8]
        log.info(f"task submitted: run_id={run_id}, task_label={task_label}, spec number: {len(specs)}")

        reports = []
        self.failed, self.written = [], []
        for idx, spec in enumerate(specs):
            try:
                log.info(f"[{idx+1}/{len(specs)}] start {spec.label()}")
                report = self.evaluator.run_experiment(data, spec)
                if learning_curve:
                    report.learning_curve = self.evaluator.learning_curve(data, spec, learning_curve)
                if not timing:
                    report.timing = None
                path = report.flush(task_label, self.result_dir)
                if plots:
                    write_plot_csvs(report, path.parent, path.stem)
                reports.append(report)
                self.written.append(path)
            except HttpsIdError as e:
                log.warning(f"[{idx+1}/{len(specs)}] {spec.label()} failed to run, reason={e}")
                self.failed.append((spec, str(e)))
            except Exception as e:
                log.warning(f"[{idx+1}/{len(specs)}] {spec.label()} failed to run, reason={e}")
                traceback.print_exc()
                self.failed.append((spec, str(e)))

        display_reports(reports, task_label)
        log.info(f"finished task: label={task_label}, {len(reports)} succeeded, {len(self.failed)} failed")
        return reports

    def get_results(self, result_dir: pathlib.Path | None = None) -> list[EvaluationReport]:
        """all result files under result_dir, in file name order"""
        target_dir = result_dir if result_dir else self.result_dir
        if not target_dir.exists():
            return []
        files = sorted(p for p in target_dir.rglob("result_*.json") if not p.name.endswith(".timing.json"))
        return [EvaluationReport.read_file(p) for p in files]


def _write_frame(df: pl.DataFrame, path: pathlib.Path):
    with atomic_write(path, "wb") as f:
        df.write_csv(f, line_terminator="\n")


def write_plot_csvs(report: EvaluationReport, out_dir: pathlib.Path, stem: str) -> list[pathlib.Path]:
    """confusion (truth,predicted,share), recall (label,recall) and, when
    present, learning curve (n,accuracy) series"""
    written = []

    confusion = pl.DataFrame({
        "truth": [t for t in report.labels for _ in report.labels],
        "predicted": [p for _ in report.labels for p in report.labels],
        "share": [v for row in report.confusion for v in row],
    }, schema={"truth": pl.Utf8, "predicted": pl.Utf8, "share": pl.Float64})
    path = out_dir / f"{stem}.confusion.csv"
    _write_frame(confusion, path)
    written.append(path)

    recall = pl.DataFrame({"label": report.labels, "recall": report.per_class_recall},
                          schema={"label": pl.Utf8, "recall": pl.Float64})
    path = out_dir / f"{stem}.recall.csv"
    _write_frame(recall, path)
    written.append(path)

    if report.learning_curve:
        curve = pl.DataFrame({
            "n": [n for n, _ in report.learning_curve],
            "accuracy": [a for _, a in report.learning_curve],
        }, schema={"n": pl.Int64, "accuracy": pl.Float64})
        path = out_dir / f"{stem}.learning_curve.csv"
        _write_frame(curve, path)
        written.append(path)

    log.debug(f"plot series: {[p.name for p in written]}")
    return written
