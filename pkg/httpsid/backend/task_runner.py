import functools
import logging
import platform
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import psutil

from .. import config
from ..exceptions import SchemaMismatchError, TrainingError
from ..metric import accuracy_from_counts, calc_accuracy, confusion_counts, per_class_recall, row_normalize
from ..models import (
    CipherPerturbation,
    EvaluationReport,
    ExperimentSpec,
    HorizonScope,
    RepetitionResult,
    TimingReport,
)
from . import utils
from .dataset import (
    LabeledSample,
    aggregate_test_sessions,
    fit_scaling,
    perturb_samples,
    split_70_30,
    subsample_train,
    to_matrix,
    truncate_samples,
)
from .features import FeatureSetId
from .labels import Target
from .learners import Learner, LearnerConfig, grid_for
from .model_io import TrainedModel
from .runner import make_runner
from .sessions import parse_endpoint

log = logging.getLogger(__name__)

ROBUSTNESS_TARGETS = (Target.OS, Target.Browser, Target.OSBrowser)


def stratified_folds(labels: Sequence[str], folds: int, seed: int) -> np.ndarray:
    """Fold index per sample: each label's samples are shuffled and dealt
    round robin, continuing where the previous label stopped."""
    rng = np.random.default_rng(seed)
    out = np.empty(len(labels), dtype=np.int64)
    by_label: dict[str, list[int]] = {}
    for i, lab in enumerate(labels):
        by_label.setdefault(lab, []).append(i)
    pos = 0
    for lab in sorted(by_label):
        members = by_label[lab]
        for j in rng.permutation(len(members)):
            out[members[j]] = pos % folds
            pos += 1
    return out


def _score_cell(cell: LearnerConfig, learner: Learner, set_id: FeatureSetId, X: np.ndarray, y: list[str],
                fold_of: np.ndarray, folds: int, seed: int) -> float:
    """mean validation accuracy of one grid cell, scaling fitted per fold"""
    scores = []
    y_arr = np.asarray(y, dtype=object)
    for f in range(folds):
        val = fold_of == f
        if not val.any():
            continue
        train = ~val
        scaling = fit_scaling(X[train], set_id)
        model = learner.init_cls(cell, seed).fit(scaling.apply(X[train]), list(y_arr[train]))
        scores.append(calc_accuracy(list(y_arr[val]), model.predict(scaling.apply(X[val]))))
    return float(np.mean(scores))


@dataclass
class Fitted:
    """What one repetition trains, before touching its test split"""
    model: TrainedModel
    train: list[LabeledSample]
    test: list[LabeledSample]
    cv_score: float
    train_seconds: float


class Evaluator:
    """Runs the repeated 70/30 protocol and its variants.

    Repetition r splits with seed+r and seeds learners with seed+1000+r.
    Scaling, CV folds and hyper-parameter search only ever see the training
    split of a repetition.
    """

    def __init__(self, jobs: int = config.NUM_WORKERS):
        self.jobs = max(1, int(jobs))

    def grid_search_cv(
        self,
        train: Sequence[LabeledSample],
        spec: ExperimentSpec,
        seed: int,
    ) -> tuple[LearnerConfig, float]:
        """best grid cell by mean k-fold accuracy, ties to the first cell"""
        X, y = to_matrix(train, spec.feature_set, spec.target)
        if len(set(y)) < 2:
            raise TrainingError(f"training data has a single {spec.target.value} class: {sorted(set(y))}")

        cells = grid_for(spec.learner, spec.grid)
        fold_of = stratified_folds(y, spec.folds, seed)
        if len(cells) == 1:
            log.debug(f"single grid cell {cells[0].label()}, skipping CV")
            return cells[0], float("nan")

        score = functools.partial(_score_cell, learner=spec.learner, set_id=spec.feature_set, X=X, y=y, fold_of=fold_of, folds=spec.folds, seed=seed)
        try:
            scores = make_runner(self.jobs).map(score, cells, desc=f"{spec.learner.value} grid")
        except TrainingError as e:
            raise TrainingError(f"grid search {spec.label()}: {e}") from None

        best = 0
        for i, s in enumerate(scores):
            log.debug(f"cv {cells[i].label()}: {s:.4f}")
            if s > scores[best]:
                best = i
        log.info(f"grid search {spec.label()}: {len(cells)} cells, best {cells[best].label()} cv={scores[best]:.4f}")
        return cells[best], scores[best]

    def fit(self, train: Sequence[LabeledSample], spec: ExperimentSpec, seed: int) -> tuple[TrainedModel, float]:
        """grid search then refit the winner on the whole training split"""
        cell, cv = self.grid_search_cv(train, spec, seed)
        X, y = to_matrix(train, spec.feature_set, spec.target)
        scaling = fit_scaling(X, spec.feature_set)
        classifier = spec.learner.init_cls(cell, seed).fit(scaling.apply(X), y)
        return TrainedModel(spec.learner, spec.target, spec.feature_set, scaling, classifier), cv

    def fit_for_repetition(self, data: Sequence[LabeledSample], spec: ExperimentSpec, r: int) -> Fitted:
        """split, optional subsample and horizon, search and refit for repetition r"""
        train, test = split_70_30(data, spec.seed + r)
        if spec.train_size is not None:
            if spec.train_size > len(train):
                raise ValueError(f"train_size {spec.train_size} exceeds the training split ({len(train)})")
            train = subsample_train(train, spec.train_size, spec.seed + r)
        if spec.time_horizon is not None and spec.horizon_scope == HorizonScope.Both:
            train = truncate_samples(train, spec.time_horizon, spec.silence_gap, spec.min_peak_packets)

        learner_seed = spec.seed + config.LEARNER_SEED_OFFSET + r
        (model, cv), seconds = utils.time_it(self.fit)(train, spec, learner_seed)
        return Fitted(model, train, test, cv, seconds)

    def prepare_test(self, test: Sequence[LabeledSample], spec: ExperimentSpec) -> list[LabeledSample]:
        """test-only transforms: horizon, then VPN aggregation, then cipher perturbation"""
        out = list(test)
        if spec.time_horizon is not None:
            out = truncate_samples(out, spec.time_horizon, spec.silence_gap, spec.min_peak_packets)
        if spec.vpn:
            out = aggregate_test_sessions(
                out, spec.target, parse_endpoint(spec.tunnel), spec.vpn_group_size, spec.silence_gap, spec.min_peak_packets,
            )
        if spec.perturbation is not None and not spec.perturbation.is_identity:
            out = perturb_samples(out, **spec.perturbation.dict())
        return out

    def run_experiment(self, data: Sequence[LabeledSample], spec: ExperimentSpec) -> EvaluationReport:
        if spec.needs_sessions and any(s.session is None for s in data):
            raise SchemaMismatchError("time horizon and VPN runs need samples extracted from captures, not a CSV")
        if spec.vpn or (spec.perturbation is not None and not spec.perturbation.is_identity):
            check_robustness_target(spec)

        reps, truth, predicted = [], [], []
        timing = TimingReport(dataset_size=len(data), jobs=self.jobs, host=host_info())
        for r in range(spec.repetitions):
            fitted = self.fit_for_repetition(data, spec, r)
            test = self.prepare_test(fitted.test, spec)
            y_test = [s.target(spec.target) for s in test]
            pred, test_seconds = utils.time_it(fitted.model.predict)(test)

            acc = calc_accuracy(y_test, pred)
            log.info(f"{spec.label()} repetition {r}: accuracy={acc:.4f}, train={len(fitted.train)}, test={len(test)}, "
                     f"train_dur={fitted.train_seconds:.3f}s, test_dur={test_seconds:.3f}s")
            reps.append(RepetitionResult(
                repetition=r,
                accuracy=acc,
                train_size=len(fitted.train),
                test_size=len(test),
                hyperparameters=fitted.model.hyperparameters,
            ))
            truth.extend(y_test)
            predicted.extend(pred)
            timing.train_seconds.append(fitted.train_seconds)
            timing.test_seconds.append(test_seconds)

        labels = sorted(set(truth) | set(predicted))
        counts = confusion_counts(truth, predicted, labels)
        report = EvaluationReport(
            spec=spec,
            dataset_size=len(data),
            mean_accuracy=accuracy_from_counts(counts),
            repetitions=reps,
            labels=labels,
            confusion_counts=counts.tolist(),
            confusion=row_normalize(counts).tolist(),
            per_class_recall=per_class_recall(counts).tolist(),
            timing=timing,
        )
        log.info(f"{spec.label()}: mean accuracy {report.mean_accuracy:.4f} over {spec.repetitions} repetitions, "
                 f"{len(truth)} test samples")
        return report

    def learning_curve(self, data: Sequence[LabeledSample], spec: ExperimentSpec,
                       sizes: Sequence[int | None]) -> list[tuple[int, float]]:
        """mean accuracy per training size; None stands for the full training split"""
        full = len(split_70_30(data, spec.seed)[0])
        resolved = [full if n is None else int(n) for n in sizes]
        if resolved != sorted(resolved):
            raise ValueError(f"learning curve sizes must be ascending, got {resolved}")
        if resolved and resolved[-1] > full:
            raise ValueError(f"learning curve size {resolved[-1]} exceeds the training split ({full})")

        curve = []
        for n in resolved:
            report = self.run_experiment(data, spec.copy(update={"train_size": None if n == full else n}))
            curve.append((n, report.mean_accuracy))
            log.info(f"learning curve {spec.label()}: n={n} accuracy={report.mean_accuracy:.4f}")
        return curve

    def measure_timing(self, data: Sequence[LabeledSample], spec: ExperimentSpec) -> tuple[float, float]:
        """(train seconds incl. grid search, test seconds) of repetition 0"""
        fitted = self.fit_for_repetition(data, spec, 0)
        test = self.prepare_test(fitted.test, spec)
        _, test_seconds = utils.time_it(fitted.model.predict)(test)
        log.info(f"timing {spec.label()} n={utils.numerize(len(data))} jobs={self.jobs}: train={fitted.train_seconds:.3f}s test={test_seconds:.3f}s")
        return fitted.train_seconds, test_seconds

    def robustness_vpn(self, data: Sequence[LabeledSample], spec: ExperimentSpec) -> EvaluationReport:
        return self.run_experiment(data, spec.copy(update={"vpn": True}))

    def robustness_cipher(self, data: Sequence[LabeledSample], spec: ExperimentSpec,
                          perturbation: CipherPerturbation) -> EvaluationReport:
        return self.run_experiment(data, spec.copy(update={"perturbation": perturbation}))


def check_robustness_target(spec: ExperimentSpec):
    if spec.target not in ROBUSTNESS_TARGETS:
        raise ValueError(f"robustness runs predict one of {[t.value for t in ROBUSTNESS_TARGETS]}, got {spec.target.value}")


def host_info() -> dict:
    mem = psutil.virtual_memory()
    return {
        "cpu_count": psutil.cpu_count(logical=True),
        "cpu_physical": psutil.cpu_count(logical=False),
        "memory_total": mem.total,
        "platform": platform.platform(),
        "python": platform.python_version(),
    }
