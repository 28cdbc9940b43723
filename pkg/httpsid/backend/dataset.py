"""
Labeled samples: CSV persistence, splits, scaling and test-time perturbations.

Usage:
    >>> samples = read_csv("sessions.csv")
    >>> train, test = split_70_30(samples, seed=0)
    >>> params = scale_fit(train)
    >>> v = scale_apply(params, test[0].features)
"""

import functools
import logging
import math
import pathlib
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import polars as pl
from tqdm import tqdm

from .. import config
from ..exceptions import DatasetFormatError, LabelError, SchemaMismatchError
from .features import FEATURE_DICTIONARY, FeatureSetId, FeatureVector, extract_session, project
from .labels import OS, LabelRules, LabelTuple, Target, unlabeled
from .runner import make_runner
from .sessions import DirectionConvention, Endpoint, Session, aggregate_vpn, sessions_from_pcap, truncate_session
from .utils import atomic_write

log = logging.getLogger(__name__)

LABEL_COLUMNS = ("session_id", "os", "browser", "application")
SSL_CIPHER = "ssl_cipher_methods"
SSL_EXTENSIONS = "ssl_extension_count"
SSL_VERSION = "ssl_version"


@dataclass(frozen=True)
class LabeledSample:
    features: FeatureVector
    label: LabelTuple
    session_id: str
    session: Session | None = field(default=None, compare=False, repr=False)

    def target(self, t: Target) -> str:
        return t.project(self.label)


@dataclass(frozen=True)
class ScalingParams:
    schema_id: FeatureSetId
    mins: np.ndarray
    maxs: np.ndarray

    def __post_init__(self):
        if np.any(self.maxs < self.mins):
            raise ValueError("scaling params need max >= min per feature")

    def to_dict(self) -> dict:
        return {"schema_id": self.schema_id.value, "min": self.mins.tolist(), "max": self.maxs.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "ScalingParams":
        return cls(FeatureSetId(d["schema_id"]), np.asarray(d["min"], dtype=np.float64), np.asarray(d["max"], dtype=np.float64))

    def apply(self, X: np.ndarray) -> np.ndarray:
        """scale a sample-by-feature matrix; degenerate columns map to 0"""
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != len(self.mins):
            raise SchemaMismatchError(f"{self.schema_id.value} scaling expects {len(self.mins)} columns, got {X.shape[-1]}")
        span = self.maxs - self.mins
        degenerate = span == 0
        out = (X - self.mins) / np.where(degenerate, 1.0, span)
        return np.where(degenerate, 0.0, out)


def fit_scaling(X: np.ndarray, schema_id: FeatureSetId) -> ScalingParams:
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] == 0:
        raise ValueError("cannot fit scaling on an empty training set")
    return ScalingParams(schema_id, X.min(axis=0), X.max(axis=0))


def scale_fit(train: Sequence[LabeledSample]) -> ScalingParams:
    if not train:
        raise ValueError("cannot fit scaling on an empty training set")
    schema = train[0].features.schema_id
    return fit_scaling(np.stack([s.features.values for s in train]), schema)


def scale_apply(p: ScalingParams, v: FeatureVector) -> FeatureVector:
    if v.schema_id != p.schema_id:
        raise SchemaMismatchError(f"scaling fitted on {p.schema_id.value}, vector is {v.schema_id.value}")
    return FeatureVector(p.apply(v.values), v.schema_id)


def to_matrix(samples: Sequence[LabeledSample], set_id: FeatureSetId, target: Target) -> tuple[np.ndarray, list[str]]:
    """Project every sample onto ``set_id`` and its label onto ``target``"""
    if not samples:
        return np.empty((0, len(set_id))), []
    X = np.stack([project(s.features, set_id).values for s in samples])
    return X, [s.target(target) for s in samples]


def _check_split_input(data: Sequence[LabeledSample]):
    ids = [s.session_id for s in data]
    if len(set(ids)) != len(ids):
        dup = next(i for i, c in Counter(ids).items() if c > 1)
        raise ValueError(f"duplicate session_id {dup!r}")


def split_70_30(
    data: Sequence[LabeledSample],
    seed: int,
    ratio: float = config.TRAIN_RATIO,
) -> tuple[list[LabeledSample], list[LabeledSample]]:
    """Stratified seeded split into ceil(ratio * n) training samples and the rest.

    Every label gets floor(ratio * count) training slots; the remaining slots go
    to the labels with the largest fractional part (ties by label string).
    Both halves keep the input order.
    """
    n = len(data)
    if n < 10:
        raise ValueError(f"split needs at least 10 samples, got {n}")
    _check_split_input(data)

    by_label: dict[str, list[int]] = defaultdict(list)
    for i, s in enumerate(data):
        by_label[str(s.label)].append(i)
    keys = sorted(by_label)

    quota = {k: math.floor(ratio * len(by_label[k])) for k in keys}
    left = math.ceil(ratio * n) - sum(quota.values())
    by_fraction = sorted(keys, key=lambda k: (-(ratio * len(by_label[k]) - quota[k]), k))
    for k in by_fraction[:left]:
        quota[k] += 1

    rng = np.random.default_rng(seed)
    train_idx = set()
    for k in keys:
        members = by_label[k]
        picked = rng.permutation(len(members))[: quota[k]]
        train_idx.update(members[j] for j in picked)

    train = [s for i, s in enumerate(data) if i in train_idx]
    test = [s for i, s in enumerate(data) if i not in train_idx]
    log.debug(f"split seed={seed}: train={len(train)}, test={len(test)}, labels={len(keys)}")
    return train, test


def subsample_train(train: Sequence[LabeledSample], n: int, seed: int) -> list[LabeledSample]:
    """Seeded subset of size n, taking one sample per label in turn
    (labels in shuffled order) until n are drawn."""
    if not 1 <= n <= len(train):
        raise ValueError(f"subsample size must be in [1, {len(train)}], got {n}")
    if n == len(train):
        return list(train)

    rng = np.random.default_rng(seed)
    by_label: dict[str, list[int]] = defaultdict(list)
    for i, s in enumerate(train):
        by_label[str(s.label)].append(i)

    keys = sorted(by_label)
    order = [keys[j] for j in rng.permutation(len(keys))]
    queues = {k: [by_label[k][j] for j in rng.permutation(len(by_label[k]))] for k in order}

    picked: list[int] = []
    rnd = 0
    while len(picked) < n:
        for k in order:
            if rnd < len(queues[k]):
                picked.append(queues[k][rnd])
                if len(picked) == n:
                    break
        rnd += 1
    return [train[i] for i in picked]


def perturb_cipher(
    v: FeatureVector,
    delta_suites: int = 0,
    delta_extensions: int = 0,
    new_version: int | None = None,
) -> FeatureVector:
    names = v.names
    if SSL_CIPHER not in names or SSL_EXTENSIONS not in names:
        raise SchemaMismatchError(f"{v.schema_id.value} carries no SSL features to perturb")
    if new_version is not None and SSL_VERSION not in names:
        raise SchemaMismatchError(f"{v.schema_id.value} has no {SSL_VERSION} feature")

    updates = {
        SSL_CIPHER: max(0.0, v[SSL_CIPHER] + delta_suites),
        SSL_EXTENSIONS: max(0.0, v[SSL_EXTENSIONS] + delta_extensions),
    }
    if new_version is not None:
        updates[SSL_VERSION] = float(new_version)
    return v.replace(**updates)


def perturb_samples(samples: Iterable[LabeledSample], **kwargs) -> list[LabeledSample]:
    return [LabeledSample(perturb_cipher(s.features, **kwargs), s.label, s.session_id, s.session) for s in samples]


def label_statistics(samples: Sequence[LabeledSample], target: Target = Target.Tuple) -> list[tuple[str, int, float]]:
    """(label, count, percent) rows, largest share first, ties by label"""
    counts = Counter(s.target(target) for s in samples)
    total = sum(counts.values())
    rows = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return [(label, c, 100.0 * c / total) for label, c in rows]


def majority_baseline(samples: Sequence[LabeledSample], target: Target = Target.Tuple) -> tuple[str, float]:
    """modal label and its share, i.e. the accuracy of always predicting it"""
    if not samples:
        raise ValueError("majority baseline of an empty dataset")
    label, count, _ = label_statistics(samples, target)[0]
    return label, count / len(samples)


def aggregate_test_sessions(
    test: Sequence[LabeledSample],
    target: Target,
    tunnel: Endpoint,
    group_size: int = config.VPN_GROUP_SIZE,
    silence_gap: float = config.SILENCE_GAP,
    min_peak_packets: int = config.MIN_PEAK_PACKETS,
) -> list[LabeledSample]:
    """Merge test sessions into tunnel-like sessions sharing one target label.

    Sessions are grouped by (capture, target label), in session-id order, and
    chunked into groups of ``group_size``; each group becomes one sample.
    """
    if group_size < 1:
        raise ValueError(f"group size must be >= 1, got {group_size}")
    missing = [s.session_id for s in test if s.session is None]
    if missing:
        raise SchemaMismatchError(f"VPN aggregation needs packet-level sessions, {missing[0]!r} has none")

    groups: dict[tuple[str, str], list[LabeledSample]] = defaultdict(list)
    for s in sorted(test, key=lambda s: s.session_id):
        groups[(s.session.capture, s.target(target))].append(s)

    out = []
    for key in sorted(groups):
        members = groups[key]
        for start in range(0, len(members), group_size):
            chunk = members[start:start + group_size]
            merged = aggregate_vpn([s.session for s in chunk], tunnel)
            fv = extract_session(merged, FeatureSetId.Combined, silence_gap, min_peak_packets)
            out.append(LabeledSample(fv, chunk[0].label, f"vpn:{chunk[0].session_id}+{len(chunk)}", merged))
    log.info(f"VPN aggregation: {len(test)} test sessions -> {len(out)} tunnel sessions")
    return out


def truncate_samples(
    samples: Sequence[LabeledSample],
    horizon: float,
    silence_gap: float = config.SILENCE_GAP,
    min_peak_packets: int = config.MIN_PEAK_PACKETS,
) -> list[LabeledSample]:
    """Re-extract features from the first ``horizon`` seconds of each session"""
    out = []
    for s in samples:
        if s.session is None:
            raise SchemaMismatchError(f"time horizon needs packet-level sessions, {s.session_id!r} has none")
        short = truncate_session(s.session, horizon)
        out.append(LabeledSample(extract_session(short, FeatureSetId.Combined, silence_gap, min_peak_packets), s.label, s.session_id, short))
    return out


@dataclass(frozen=True)
class ExtractOptions:
    port_filter: int | None = config.DEFAULT_PORT
    silence_gap: float = config.SILENCE_GAP
    min_peak_packets: int = config.MIN_PEAK_PACKETS
    convention: DirectionConvention = DirectionConvention.ClientToServer
    horizon: float | None = None
    default_os: OS | None = None
    keep_sessions: bool = False


def _samples_from_pcap(path: pathlib.Path, rules: LabelRules | None, opts: ExtractOptions) -> list[LabeledSample]:
    sessions, _ = sessions_from_pcap(path, opts.port_filter, opts.convention)
    samples = []
    for s in sessions:
        if opts.horizon is not None:
            s = truncate_session(s, opts.horizon)
        fv = extract_session(s, FeatureSetId.Combined, opts.silence_gap, opts.min_peak_packets)
        server_ip, server_port = s.server_endpoint
        if rules is not None:
            label = rules.label_for(s.capture, server_ip, server_port, opts.default_os)
        else:
            label = unlabeled(opts.default_os or OS.Windows)
        samples.append(LabeledSample(fv, label, s.session_id, s if opts.keep_sessions else None))
    return samples


def samples_from_pcaps(
    paths: Sequence[pathlib.Path],
    rules: LabelRules | None = None,
    opts: ExtractOptions = ExtractOptions(),
    jobs: int = config.NUM_WORKERS,
) -> list[LabeledSample]:
    """Decode, split, extract Combined features and label every capture"""
    runner = make_runner(min(jobs, len(paths)) if paths else 1)
    fn = functools.partial(_samples_from_pcap, rules=rules, opts=opts)
    if runner.jobs == 1:
        per_file = [fn(p) for p in tqdm(paths, desc="extract", unit="pcap", disable=len(paths) < 2)]
    else:
        per_file = runner.map(fn, paths, desc="extract")
    samples = [s for batch in per_file for s in batch]
    log.info(f"extracted {len(samples)} sessions from {len(paths)} captures")
    return samples


def _csv_schema(columns: list[str], path) -> FeatureSetId:
    """The smallest feature set whose names cover the header"""
    for name in LABEL_COLUMNS:
        if name not in columns:
            raise DatasetFormatError("missing column", path, 1, name)
    feature_cols = [c for c in columns if c not in LABEL_COLUMNS]
    known = {f.name for f in FEATURE_DICTIONARY}
    for c in feature_cols:
        if c not in known:
            raise DatasetFormatError("unknown column", path, 1, c)

    candidates = sorted(
        (s for s in FeatureSetId if set(feature_cols) <= set(s.names)),
        key=lambda s: (len(s), list(FeatureSetId).index(s)),
    )
    schema = candidates[0]
    missing = [n for n in schema.names if n not in feature_cols]
    if missing:
        raise DatasetFormatError(f"missing column for {schema.value} features", path, 1, missing[0])
    return schema


def read_csv(path: pathlib.Path | str) -> list[LabeledSample]:
    p = pathlib.Path(path)
    try:
        df = pl.read_csv(p, infer_schema_length=0, raise_if_empty=True)
    except pl.exceptions.NoDataError:
        raise DatasetFormatError("empty file, header row is mandatory", p) from None
    except pl.exceptions.PolarsError as e:
        raise DatasetFormatError(f"unreadable CSV: {e}", p) from None

    schema = _csv_schema(df.columns, p)
    names = schema.names

    values = np.empty((df.height, len(names)), dtype=np.float64)
    for j, name in enumerate(names):
        raw = df.get_column(name)
        parsed = raw.str.strip_chars().cast(pl.Float64, strict=False)
        bad = (parsed.is_null() | ~parsed.is_finite()).arg_true()
        if len(bad):
            i = bad[0]
            raise DatasetFormatError(f"not a finite number: {raw[i]!r}", p, i + 2, name)
        values[:, j] = parsed.to_numpy()

    samples = []
    seen = set()
    for i, row in enumerate(df.select(LABEL_COLUMNS).iter_rows()):
        sid, os_, browser, app = row
        if not sid:
            raise DatasetFormatError("empty session_id", p, i + 2, "session_id")
        if sid in seen:
            raise DatasetFormatError(f"duplicate session_id {sid!r}", p, i + 2, "session_id")
        seen.add(sid)
        try:
            label = LabelTuple.of(os_ or "", browser or "", app or "")
        except LabelError as e:
            raise DatasetFormatError(str(e), p, i + 2) from None
        samples.append(LabeledSample(FeatureVector(values[i], schema), label, sid))

    log.info(f"read {len(samples)} samples ({schema.value}, {len(names)} features) from {p}")
    return samples


def write_csv(path: pathlib.Path | str, samples: Sequence[LabeledSample], set_id: FeatureSetId | None = None):
    """Write samples with shortest round-trip float text, atomically"""
    if set_id is None:
        set_id = samples[0].features.schema_id if samples else FeatureSetId.Combined

    columns: dict[str, list[str]] = {
        "session_id": [s.session_id for s in samples],
        "os": [s.label.os.value for s in samples],
        "browser": [s.label.browser.value for s in samples],
        "application": [s.label.application.value for s in samples],
    }
    X = np.stack([project(s.features, set_id).values for s in samples]) if samples else np.empty((0, len(set_id)))
    for j, name in enumerate(set_id.names):
        columns[name] = [repr(float(x)) for x in X[:, j]]

    df = pl.DataFrame(columns, schema={k: pl.Utf8 for k in columns})
    with atomic_write(path, "wb") as f:
        df.write_csv(f, line_terminator="\n")
    log.info(f"wrote {len(samples)} samples ({set_id.value}) to {path}")
