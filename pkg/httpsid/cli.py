"""
Command-line surface: extract, train, evaluate, predict, perturb and stats.

Every sub-command reads its options from the flags given on the command line,
overlaid on the matching table of an optional ``--config FILE.toml``::

    [extract]
    port = 443
    silence_gap = 1.0

    [evaluate]
    learner = ["RF", "KNN"]
    grid = { n_trees = [20, 40] }

Exit codes: 0 on success, 1 on data and configuration errors, 2 on usage
errors (argparse).
"""

import argparse
import logging
import pathlib
import sys
import tomllib
from typing import Any, Callable

import polars as pl
from pydantic import Extra, ValidationError, conint, root_validator, validator

from . import config, log_util
from .backend.dataset import (
    ExtractOptions,
    aggregate_test_sessions,
    label_statistics,
    majority_baseline,
    perturb_samples,
    read_csv,
    samples_from_pcaps,
    write_csv,
)
from .backend.features import FeatureSetId
from .backend.labels import OS, LabelRules, Target
from .backend.learners import Learner
from .backend.model_io import load_model, save_model
from .backend.sessions import DirectionConvention, parse_endpoint
from .backend.task_runner import Evaluator
from .backend.utils import atomic_write
from .base import BaseModel
from .interface import EvaluationRunner
from .models import CipherPerturbation, ConfigError, ExperimentSpec, HorizonScope, HttpsIdError, SchemaMismatchError
from .metric import calc_accuracy

log = logging.getLogger(__name__)

PCAP_SUFFIXES = (".pcap", ".cap", ".dmp")
_NOT_OPTIONS = ("command", "config", "verbose", "parser")


def _parse_grid(value: Any) -> Any:
    """``["k=4,6", "metric=euclidean"]`` -> ``{"k": [4, 6], "metric": ["euclidean"]}``"""
    if not isinstance(value, list):
        return value
    grid: dict[str, list[Any]] = {}
    for item in value:
        axis, sep, values = str(item).partition("=")
        if not sep or not axis or not values:
            raise ValueError(f"grid restriction must look like axis=v1,v2, got {item!r}")
        grid.setdefault(axis.strip(), []).extend(_scalar(v.strip()) for v in values.split(","))
    return grid


def _scalar(text: str) -> Any:
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def _as_list(v: Any) -> list:
    return v if isinstance(v, (list, tuple)) else [v]


class RunConfig(BaseModel):
    jobs: conint(ge=1) = config.NUM_WORKERS

    class Config:
        extra = Extra.forbid


class SessionOptions(RunConfig):
    """How captures become labeled sessions"""

    labels: pathlib.Path | None = None
    port: conint(ge=0, le=65535) = config.DEFAULT_PORT
    silence_gap: float = config.SILENCE_GAP
    min_peak_packets: conint(ge=1) = config.MIN_PEAK_PACKETS
    direction_convention: DirectionConvention = DirectionConvention.ClientToServer
    default_os: OS | None = None

    @validator("default_os", pre=True)
    def _os(cls, v):
        return OS.parse(v) if isinstance(v, str) else v

    @validator("silence_gap")
    def _positive_gap(cls, v):
        if v <= 0:
            raise ValueError("silence_gap must be > 0")
        return v

    def extract_options(self, horizon: float | None = None, keep_sessions: bool = False) -> ExtractOptions:
        return ExtractOptions(
            port_filter=self.port or None,
            silence_gap=self.silence_gap,
            min_peak_packets=self.min_peak_packets,
            convention=self.direction_convention,
            horizon=horizon,
            default_os=self.default_os,
            keep_sessions=keep_sessions,
        )

    def rules(self) -> LabelRules | None:
        return LabelRules.load(self.labels) if self.labels is not None else None


class SpecOptions(RunConfig):
    """Learner, feature set, target and search settings of a run"""

    learner: list[Learner] = [Learner.RF]
    features: list[FeatureSetId] = [FeatureSetId.Combined]
    target: list[Target] = [Target.Tuple]
    seed: int = config.DEFAULT_SEED
    folds: conint(ge=2) = config.FOLDS
    grid: dict[str, list[Any]] | None = None

    @validator("learner", pre=True)
    def _learner(cls, v):
        return [Learner.parse(x) if isinstance(x, str) else x for x in _as_list(v)]

    @validator("features", pre=True)
    def _features(cls, v):
        return [FeatureSetId.parse(x) if isinstance(x, str) else x for x in _as_list(v)]

    @validator("target", pre=True)
    def _target(cls, v):
        return [Target.parse(x) if isinstance(x, str) else x for x in _as_list(v)]

    @validator("grid", pre=True)
    def _grid(cls, v):
        return _parse_grid(v)


class CipherOptions(RunConfig):
    """Shift of the ClientHello counts applied to test sessions"""

    cipher: bool = False
    delta_suites: int = 0
    delta_extensions: int = 0
    new_version: int | None = None

    def perturbation(self) -> CipherPerturbation | None:
        if not self.cipher:
            return None
        return CipherPerturbation(
            delta_suites=self.delta_suites, delta_extensions=self.delta_extensions, new_version=self.new_version,
        )


class ExtractConfig(SessionOptions):
    inputs: list[pathlib.Path]
    out: pathlib.Path
    horizon: float | None = None


class TrainConfig(SpecOptions):
    dataset: pathlib.Path
    out: pathlib.Path

    @root_validator(skip_on_failure=True)
    def _single_combination(cls, values):
        for key in ("learner", "features", "target"):
            if len(values[key]) != 1:
                raise ValueError(f"train builds one model, got {len(values[key])} values for {key}")
        return values


class EvaluateConfig(SpecOptions, SessionOptions, CipherOptions):
    dataset: pathlib.Path | None = None
    pcap_dir: pathlib.Path | None = None
    out: pathlib.Path | None = None
    label: str | None = None
    repetitions: conint(ge=1) = config.REPETITIONS
    horizon: float | None = None
    horizon_scope: HorizonScope = HorizonScope.Test
    train_size: conint(ge=1) | None = None
    vpn: bool = False
    vpn_group_size: conint(ge=1) = config.VPN_GROUP_SIZE
    tunnel: str = config.DEFAULT_TUNNEL
    learning_curve: list[int | None] | None = None
    timing: bool = False

    @validator("learning_curve", pre=True)
    def _sizes(cls, v):
        if v is None:
            return v
        return [None if str(x).lower() == "full" else x for x in _as_list(v)]

    @validator("tunnel")
    def _tunnel(cls, v):
        parse_endpoint(v)
        return v

    @root_validator(skip_on_failure=True)
    def _one_source(cls, values):
        if (values["dataset"] is None) == (values["pcap_dir"] is None):
            raise ValueError("give exactly one of a dataset CSV or --pcap-dir")
        if values["vpn"] and values["pcap_dir"] is None:
            raise ValueError("--vpn aggregates packets, it needs --pcap-dir captures instead of a CSV")
        return values

    def base_spec(self) -> ExperimentSpec:
        return ExperimentSpec(
            learner=self.learner[0],
            feature_set=self.features[0],
            target=self.target[0],
            repetitions=self.repetitions,
            folds=self.folds,
            seed=self.seed,
            time_horizon=self.horizon,
            horizon_scope=self.horizon_scope,
            train_size=self.train_size,
            perturbation=self.perturbation(),
            vpn=self.vpn,
            vpn_group_size=self.vpn_group_size,
            tunnel=self.tunnel,
            silence_gap=self.silence_gap,
            min_peak_packets=self.min_peak_packets,
            grid=self.grid,
        )


class PredictConfig(RunConfig):
    model: pathlib.Path
    dataset: pathlib.Path
    out: pathlib.Path


class PerturbConfig(SessionOptions, CipherOptions):
    inputs: list[pathlib.Path]
    out: pathlib.Path
    vpn: bool = False
    vpn_group_size: conint(ge=1) = config.VPN_GROUP_SIZE
    tunnel: str = config.DEFAULT_TUNNEL
    target: Target = Target.Tuple

    @validator("target", pre=True)
    def _target(cls, v):
        return Target.parse(v) if isinstance(v, str) else v

    @root_validator(skip_on_failure=True)
    def _some_transform(cls, values):
        if not values["vpn"] and not values["cipher"]:
            raise ValueError("nothing to do, give --vpn and/or --cipher")
        return values


class StatsConfig(RunConfig):
    dataset: pathlib.Path
    target: list[Target] = list(Target)
    out: pathlib.Path | None = None

    @validator("target", pre=True)
    def _target(cls, v):
        return [Target.parse(x) if isinstance(x, str) else x for x in _as_list(v)]


def _describe(e: ValidationError, section: str) -> str:
    parts = []
    for err in e.errors():
        loc = ".".join(str(x) for x in err["loc"] if x != "__root__")
        parts.append(f"{loc}: {err['msg']}" if loc else err["msg"])
    return f"[{section}] " + "; ".join(parts)


def load_overlay(path: pathlib.Path | None, section: str) -> dict[str, Any]:
    """the ``[section]`` table of a TOML config file"""
    if path is None:
        return {}
    try:
        with open(path, "rb") as f:
            data = tomllib.load(f)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: {e}") from None

    unknown = sorted(set(data) - set(COMMANDS))
    if unknown:
        raise ConfigError(f"{path}: unknown table [{unknown[0]}], expected one of {sorted(COMMANDS)}")
    table = data.get(section, {})
    if not isinstance(table, dict):
        raise ConfigError(f"{path}: {section} must be a table")
    return table


def build_config(section: str, args: argparse.Namespace, parser: argparse.ArgumentParser) -> RunConfig:
    """config file table, then the flags given on the command line"""
    cls = COMMANDS[section][0]
    explicit = {
        k: v for k, v in vars(args).items()
        if k not in _NOT_OPTIONS and v is not None and v != []
    }
    merged = {**load_overlay(args.config, section), **explicit}
    missing = [name for name, f in cls.__fields__.items() if f.required and name not in merged]
    if missing:
        parser.error(f"the following arguments are required: {', '.join(missing)}")
    try:
        return cls(**merged)
    except ValidationError as e:
        raise ConfigError(_describe(e, section)) from None


def expand_inputs(inputs: list[pathlib.Path]) -> list[pathlib.Path]:
    """files as given, directories expanded to the captures below them"""
    paths = []
    for p in inputs:
        if p.is_dir():
            paths.extend(sorted(f for f in p.rglob("*") if f.is_file() and f.suffix.lower() in PCAP_SUFFIXES))
        elif p.exists():
            paths.append(p)
        else:
            raise FileNotFoundError(f"No such file or directory: {p}")
    return paths


def _is_csv(inputs: list[pathlib.Path]) -> bool:
    return len(inputs) == 1 and inputs[0].suffix.lower() == ".csv"


def cmd_extract(cfg: ExtractConfig) -> int:
    paths = expand_inputs(cfg.inputs)
    samples = samples_from_pcaps(paths, cfg.rules(), cfg.extract_options(horizon=cfg.horizon), cfg.jobs)
    if not samples:
        log.warning(f"no sessions found in {len(paths)} captures, writing an empty dataset")
    write_csv(cfg.out, samples, FeatureSetId.Combined)
    return 0


def cmd_train(cfg: TrainConfig) -> int:
    data = read_csv(cfg.dataset)
    spec = ExperimentSpec(
        learner=cfg.learner[0], feature_set=cfg.features[0], target=cfg.target[0],
        folds=cfg.folds, seed=cfg.seed, grid=cfg.grid,
    )
    model, cv = Evaluator(cfg.jobs).fit(data, spec, cfg.seed)
    log.info(f"trained {spec.label()} on {len(data)} samples, {model.hyperparameters}, cv={cv:.4f}")
    save_model(cfg.out, model)
    return 0


def cmd_evaluate(cfg: EvaluateConfig) -> int:
    if cfg.pcap_dir is not None:
        data = samples_from_pcaps(expand_inputs([cfg.pcap_dir]), cfg.rules(), cfg.extract_options(keep_sessions=True), cfg.jobs)
    else:
        data = read_csv(cfg.dataset)

    runner = EvaluationRunner(cfg.jobs, cfg.out)
    specs = runner.cross_product(cfg.base_spec(), cfg.learner, cfg.features, cfg.target)
    reports = runner.run(data, specs, cfg.label, learning_curve=cfg.learning_curve, timing=cfg.timing, plots=True)
    for spec, reason in runner.failed:
        log.error(f"{spec.label()}: {reason}")
    return 0 if reports and not runner.failed else 1


def cmd_predict(cfg: PredictConfig) -> int:
    model = load_model(cfg.model)
    data = read_csv(cfg.dataset)
    predicted = model.predict(data)
    votes = model.votes(data)

    classes = model.classifier.classes
    columns: dict[str, list[str]] = {
        "session_id": [s.session_id for s in data],
        "predicted": predicted,
    }
    for c in classes:
        columns[f"votes:{c}"] = [repr(float(v.get(c, 0.0))) for v in votes]
    df = pl.DataFrame(columns, schema={k: pl.Utf8 for k in columns})
    with atomic_write(cfg.out, "wb") as f:
        df.write_csv(f, line_terminator="\n")

    if data:
        truth = [s.target(model.target) for s in data]
        log.info(f"{len(data)} predictions, accuracy against the file's labels: {calc_accuracy(truth, predicted):.4f}")
    else:
        log.info("empty dataset, wrote an empty prediction file")
    return 0


def cmd_perturb(cfg: PerturbConfig) -> int:
    if _is_csv(cfg.inputs):
        if cfg.vpn:
            raise SchemaMismatchError("--vpn aggregates packets, it needs pcap input instead of a CSV")
        data = read_csv(cfg.inputs[0])
    else:
        data = samples_from_pcaps(expand_inputs(cfg.inputs), cfg.rules(), cfg.extract_options(keep_sessions=cfg.vpn), cfg.jobs)

    if cfg.vpn and data:
        data = aggregate_test_sessions(
            data, cfg.target, parse_endpoint(cfg.tunnel), cfg.vpn_group_size, cfg.silence_gap, cfg.min_peak_packets,
        )
    perturbation = cfg.perturbation()
    if perturbation is not None and not perturbation.is_identity:
        data = perturb_samples(data, **perturbation.dict())
    write_csv(cfg.out, data, data[0].features.schema_id if data else FeatureSetId.Combined)
    return 0


def cmd_stats(cfg: StatsConfig) -> int:
    data = read_csv(cfg.dataset)
    table = logging.getLogger("no_color")
    rows = []
    for t in cfg.target:
        stats = label_statistics(data, t)
        rows.extend((t.value, label, count, percent) for label, count, percent in stats)
        width = max([len("label"), *(len(label) for label, _, _ in stats)])
        table.info(f"{t.value} labels, {len(data)} samples")
        table.info(f"{'label':<{width}} | {'count':>7} | {'percent':>7}")
        for label, count, percent in stats:
            table.info(f"{label:<{width}} | {count:>7} | {percent:>6.2f}%")
        if data:
            modal, share = majority_baseline(data, t)
            table.info(f"majority baseline: {modal} ({100 * share:.2f}%)")
        table.info("")

    if cfg.out is not None:
        df = pl.DataFrame(rows, schema={"target": pl.Utf8, "label": pl.Utf8, "count": pl.Int64, "percent": pl.Float64}, orient="row")
        with atomic_write(cfg.out, "wb") as f:
            df.write_csv(f, line_terminator="\n")
    return 0


COMMANDS: dict[str, tuple[type[RunConfig], Callable[[Any], int]]] = {
    "extract": (ExtractConfig, cmd_extract),
    "train": (TrainConfig, cmd_train),
    "evaluate": (EvaluateConfig, cmd_evaluate),
    "predict": (PredictConfig, cmd_predict),
    "perturb": (PerturbConfig, cmd_perturb),
    "stats": (StatsConfig, cmd_stats),
}


def _common_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", type=pathlib.Path, help="TOML file with one table per sub-command; flags given here win")
    p.add_argument("--jobs", type=int, help=f"worker processes (default {config.NUM_WORKERS})")
    return p


def _session_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--labels", type=pathlib.Path, help="TOML labels file mapping captures and server endpoints to labels")
    p.add_argument("--port", type=int, help=f"server port filter, 0 keeps every TCP session (default {config.DEFAULT_PORT})")
    p.add_argument("--silence-gap", type=float, help=f"seconds of silence closing a peak (default {config.SILENCE_GAP})")
    p.add_argument("--min-peak-packets", type=int, help=f"packets needed for a peak (default {config.MIN_PEAK_PACKETS})")
    p.add_argument("--direction-convention", choices=[c.value for c in DirectionConvention],
                   help=f"which endpoint sends the forward flow (default {DirectionConvention.ClientToServer.value})")
    p.add_argument("--default-os", help="OS of sessions no label rule covers (default from the labels file)")
    return p


def _spec_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--learner", nargs="+", help=f"one or more of {[m.value for m in Learner]} (default RF)")
    p.add_argument("--features", nargs="+", help=f"one or more of {[m.value for m in FeatureSetId]} (default Combined)")
    p.add_argument("--target", nargs="+", help=f"one or more of {[m.value for m in Target]} (default Tuple)")
    p.add_argument("--seed", type=int, help=f"base seed (default {config.DEFAULT_SEED})")
    p.add_argument("--folds", type=int, help=f"cross-validation folds (default {config.FOLDS})")
    p.add_argument("--grid", action="append", metavar="AXIS=V1,V2",
                   help="restrict a hyper-parameter axis, repeatable, e.g. --grid k=4,6")
    return p


def _vpn_arguments(p: argparse.ArgumentParser):
    p.add_argument("--vpn", action="store_true", default=None, help="merge test sessions into tunnel-like sessions")
    p.add_argument("--vpn-group-size", type=int, help=f"sessions per tunnel (default {config.VPN_GROUP_SIZE})")
    p.add_argument("--tunnel", help=f"tunnel endpoint ip:port (default {config.DEFAULT_TUNNEL})")


def _cipher_arguments(p: argparse.ArgumentParser):
    p.add_argument("--cipher", action="store_true", default=None, help="shift the ClientHello features of the test sessions")
    p.add_argument("--delta-suites", type=int, help="shift of the cipher suite count")
    p.add_argument("--delta-extensions", type=int, help="shift of the extension count")
    p.add_argument("--new-version", type=int, help="replacement SSL version code")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="httpsid", description="OS, browser and application identification from HTTPS traffic")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    common, sessions, spec = _common_parser(), _session_parser(), _spec_parser()

    p = sub.add_parser("extract", parents=[common, sessions], help="captures to a labeled Combined feature CSV")
    p.add_argument("inputs", nargs="*", type=pathlib.Path, help="pcap files or directories")
    p.add_argument("-o", "--out", type=pathlib.Path, help="dataset CSV to write")
    p.add_argument("--horizon", type=float, help="keep only the first N seconds of every session")

    p = sub.add_parser("train", parents=[common, spec], help="grid search, refit and save a model")
    p.add_argument("dataset", nargs="?", type=pathlib.Path, help="dataset CSV")
    p.add_argument("-o", "--out", type=pathlib.Path, help="model file to write")

    p = sub.add_parser("evaluate", parents=[common, sessions, spec], help="repeated 70/30 evaluation")
    p.add_argument("dataset", nargs="?", type=pathlib.Path, help="dataset CSV (or use --pcap-dir)")
    p.add_argument("--pcap-dir", type=pathlib.Path, help="evaluate straight from captures, needed by --vpn")
    p.add_argument("-o", "--out", type=pathlib.Path, help=f"result directory (default {config.RESULTS_LOCAL_DIR})")
    p.add_argument("--label", help="task label used in result file names")
    p.add_argument("--repetitions", type=int, help=f"70/30 repetitions (default {config.REPETITIONS})")
    p.add_argument("--horizon", type=float, help="truncate sessions to their first N seconds")
    p.add_argument("--horizon-scope", choices=[s.value for s in HorizonScope], help="splits the horizon applies to (default test)")
    p.add_argument("--train-size", type=int, help="subsample each training split to N samples")
    p.add_argument("--learning-curve", nargs="+", metavar="N", help="training sizes to sweep, 'full' for the whole split")
    p.add_argument("--timing", action="store_true", default=None, help="keep wall-clock timings next to the report")
    _vpn_arguments(p)
    _cipher_arguments(p)

    p = sub.add_parser("predict", parents=[common], help="label the sessions of a CSV with a saved model")
    p.add_argument("model", nargs="?", type=pathlib.Path, help="model file")
    p.add_argument("dataset", nargs="?", type=pathlib.Path, help="dataset CSV")
    p.add_argument("-o", "--out", type=pathlib.Path, help="predictions CSV to write")

    p = sub.add_parser("perturb", parents=[common, sessions], help="write a transformed test set")
    p.add_argument("inputs", nargs="*", type=pathlib.Path, help="dataset CSV, or pcap files or directories")
    p.add_argument("-o", "--out", type=pathlib.Path, help="dataset CSV to write")
    p.add_argument("--target", help="label grouping tunnel sessions (default Tuple)")
    _vpn_arguments(p)
    _cipher_arguments(p)

    p = sub.add_parser("stats", parents=[common], help="label shares and the majority baseline")
    p.add_argument("dataset", nargs="?", type=pathlib.Path, help="dataset CSV")
    p.add_argument("--target", nargs="+", help="targets to tabulate (default all)")
    p.add_argument("-o", "--out", type=pathlib.Path, help="also write the table as CSV")

    for p in sub.choices.values():
        p.set_defaults(parser=p)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.verbose:
        log_util.set_level("DEBUG")

    try:
        cfg = build_config(args.command, args, args.parser)
        return COMMANDS[args.command][1](cfg)
    except (HttpsIdError, OSError, ValueError) as e:
        log.error(f"{args.command} failed: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
