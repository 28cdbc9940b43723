"""
Per-session statistical features and the nine feature sets built from them.

The common features are flow statistics found in most traffic classifiers,
the new features add TCP handshake parameters, ClientHello counts and
burst ("peak") behaviour. Feature names and order are frozen in
FEATURE_DICTIONARY and documented in docs/feature_dictionary.md.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable

import numpy as np

from .. import config
from ..exceptions import SchemaMismatchError
from .capture import DecodedPacket, TcpFlag
from .sessions import Direction, Session

log = logging.getLogger(__name__)

SEQ_MOD = 1 << 32


class Group(str, Enum):
    Flow = "flow"
    TCP = "tcp"
    SSL = "ssl"
    Peak = "peak"


@dataclass(frozen=True)
class FeatureInfo:
    name: str
    unit: str
    table: str
    group: Group

    @property
    def is_statistic(self) -> bool:
        return any(tag in self.name.split("_") for tag in ("min", "max", "mean", "std", "var"))


def _common(name: str, unit: str) -> FeatureInfo:
    return FeatureInfo(name, unit, "common", Group.Flow)


COMMON_FEATURES: tuple[FeatureInfo, ...] = (
    _common("fwd_packets", "packets"),
    _common("fwd_total_bytes", "bytes"),
    _common("fwd_iat_min", "s"),
    _common("fwd_iat_max", "s"),
    _common("fwd_iat_mean", "s"),
    _common("fwd_iat_std", "s"),
    _common("fwd_pkt_size_mean", "bytes"),
    _common("fwd_pkt_size_std", "bytes"),
    _common("bwd_packets", "packets"),
    _common("bwd_total_bytes", "bytes"),
    _common("bwd_iat_min", "s"),
    _common("bwd_iat_max", "s"),
    _common("bwd_iat_mean", "s"),
    _common("bwd_iat_std", "s"),
    _common("bwd_pkt_size_mean", "bytes"),
    _common("bwd_pkt_size_std", "bytes"),
    _common("fwd_ttl_mean", "hops"),
    _common("fwd_pkt_size_min", "bytes"),
    _common("bwd_pkt_size_min", "bytes"),
    _common("fwd_pkt_size_max", "bytes"),
    _common("bwd_pkt_size_max", "bytes"),
    _common("total_packets", "packets"),
    _common("pkt_size_min", "bytes"),
    _common("pkt_size_max", "bytes"),
    _common("pkt_size_mean", "bytes"),
    _common("pkt_size_var", "bytes^2"),
)

NEW_FEATURES: tuple[FeatureInfo, ...] = (
    FeatureInfo("tcp_init_window", "bytes", "new", Group.TCP),
    FeatureInfo("tcp_window_scale", "shift", "new", Group.TCP),
    FeatureInfo("ssl_compression_methods", "count", "new", Group.SSL),
    FeatureInfo("ssl_extension_count", "count", "new", Group.SSL),
    FeatureInfo("ssl_cipher_methods", "count", "new", Group.SSL),
    FeatureInfo("ssl_session_id_len", "bytes", "new", Group.SSL),
    FeatureInfo("fwd_peak_throughput_max", "bytes/s", "new", Group.Peak),
    FeatureInfo("bwd_peak_throughput_mean", "bytes/s", "new", Group.Peak),
    FeatureInfo("bwd_peak_throughput_max", "bytes/s", "new", Group.Peak),
    FeatureInfo("bwd_peak_throughput_min", "bytes/s", "new", Group.Peak),
    FeatureInfo("bwd_peak_throughput_std", "bytes/s", "new", Group.Peak),
    FeatureInfo("fwd_bursts", "count", "new", Group.Peak),
    FeatureInfo("bwd_bursts", "count", "new", Group.Peak),
    FeatureInfo("fwd_peak_throughput_min", "bytes/s", "new", Group.Peak),
    FeatureInfo("fwd_peak_throughput_mean", "bytes/s", "new", Group.Peak),
    FeatureInfo("fwd_peak_throughput_std", "bytes/s", "new", Group.Peak),
    FeatureInfo("bwd_peak_iat_mean", "s", "new", Group.Peak),
    FeatureInfo("bwd_peak_iat_min", "s", "new", Group.Peak),
    FeatureInfo("bwd_peak_iat_max", "s", "new", Group.Peak),
    FeatureInfo("bwd_peak_iat_std", "s", "new", Group.Peak),
    FeatureInfo("fwd_peak_iat_mean", "s", "new", Group.Peak),
    FeatureInfo("fwd_peak_iat_min", "s", "new", Group.Peak),
    FeatureInfo("fwd_peak_iat_max", "s", "new", Group.Peak),
    FeatureInfo("fwd_peak_iat_std", "s", "new", Group.Peak),
    FeatureInfo("keepalive_packets", "packets", "new", Group.TCP),
    FeatureInfo("tcp_mss", "bytes", "new", Group.TCP),
    FeatureInfo("ssl_version", "code", "new", Group.SSL),
)

FEATURE_DICTIONARY: tuple[FeatureInfo, ...] = COMMON_FEATURES + NEW_FEATURES


class FeatureSetId(str, Enum):
    Common = "Common"
    Peaks = "Peaks"
    New = "New"
    CommonStats = "CommonStats"
    Statistics = "Statistics"
    Combined = "Combined"
    CombinedNoPeaks = "CombinedNoPeaks"
    CombinedNoSSL = "CombinedNoSSL"
    CombinedNoTCP = "CombinedNoTCP"

    @property
    def features(self) -> tuple[FeatureInfo, ...]:
        return _SET_MEMBERS[self]

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.features)

    def __len__(self) -> int:
        return len(self.features)

    @property
    def has_ssl(self) -> bool:
        return any(f.group == Group.SSL for f in self.features)

    @classmethod
    def parse(cls, text: str) -> "FeatureSetId":
        for m in cls:
            if m.value.lower() == text.replace("-", "").replace("_", "").lower():
                return m
        raise ValueError(f"unknown feature set {text!r}, expected one of {[m.value for m in cls]}")


_SET_MEMBERS = {
    FeatureSetId.Common: COMMON_FEATURES,
    FeatureSetId.New: NEW_FEATURES,
    FeatureSetId.Combined: FEATURE_DICTIONARY,
    FeatureSetId.Peaks: tuple(f for f in NEW_FEATURES if f.group == Group.Peak),
    FeatureSetId.CommonStats: tuple(f for f in COMMON_FEATURES if f.is_statistic),
    FeatureSetId.Statistics: tuple(f for f in FEATURE_DICTIONARY if f.is_statistic),
    FeatureSetId.CombinedNoPeaks: tuple(f for f in FEATURE_DICTIONARY if f.group != Group.Peak),
    FeatureSetId.CombinedNoSSL: tuple(f for f in FEATURE_DICTIONARY if f.group != Group.SSL),
    FeatureSetId.CombinedNoTCP: tuple(f for f in FEATURE_DICTIONARY if f.group != Group.TCP),
}


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    schema_id: FeatureSetId

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != (len(self.schema_id),):
            raise SchemaMismatchError(
                f"{self.schema_id.value} expects {len(self.schema_id)} values, got {values.shape}"
            )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def names(self) -> tuple[str, ...]:
        return self.schema_id.names

    def __getitem__(self, name: str) -> float:
        return float(self.values[self.index(name)])

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise SchemaMismatchError(f"{self.schema_id.value} has no feature {name!r}") from None

    def replace(self, **updates: float) -> "FeatureVector":
        values = self.values.copy()
        for name, v in updates.items():
            values[self.index(name)] = v
        return FeatureVector(values, self.schema_id)

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.names, self.values.tolist()))

    def __eq__(self, other) -> bool:
        if not isinstance(other, FeatureVector):
            return NotImplemented
        return self.schema_id == other.schema_id and np.array_equal(self.values, other.values)

    def __hash__(self) -> int:
        return hash((self.schema_id, self.values.tobytes()))


@dataclass(frozen=True)
class Peak:
    start_ts: float
    end_ts: float
    byte_count: int
    packets: int = field(default=0, compare=False)

    @property
    def throughput(self) -> float:
        return self.byte_count / max(self.end_ts - self.start_ts, config.PEAK_EPSILON)


def _min_max_mean_std(values) -> tuple[float, float, float, float]:
    """(min, max, mean, population std); zeros for an empty sequence"""
    a = np.asarray(values, dtype=np.float64)
    if a.size == 0:
        return 0.0, 0.0, 0.0, 0.0
    return float(a.min()), float(a.max()), float(a.mean()), float(a.std())


def _iat(packets: list[DecodedPacket]) -> np.ndarray:
    if len(packets) < 2:
        return np.empty(0)
    return np.diff(np.fromiter((p.timestamp for p in packets), dtype=np.float64))


def _sizes(packets: list[DecodedPacket]) -> np.ndarray:
    return np.fromiter((p.total_ip_len for p in packets), dtype=np.float64, count=len(packets))


def _direction_stats(packets: list[DecodedPacket]) -> dict[str, float]:
    sizes = _sizes(packets)
    iat_min, iat_max, iat_mean, iat_std = _min_max_mean_std(_iat(packets))
    size_min, size_max, size_mean, size_std = _min_max_mean_std(sizes)
    return {
        "packets": float(len(packets)),
        "total_bytes": float(sizes.sum()),
        "iat_min": iat_min,
        "iat_max": iat_max,
        "iat_mean": iat_mean,
        "iat_std": iat_std,
        "pkt_size_mean": size_mean,
        "pkt_size_std": size_std,
        "pkt_size_min": size_min,
        "pkt_size_max": size_max,
    }


def extract_common(s: Session) -> FeatureVector:
    if not s.packets:
        raise ValueError(f"session {s.session_id} has no packets")

    fwd = s.direction_packets(Direction.Forward)
    bwd = s.direction_packets(Direction.Backward)
    values = {f"fwd_{k}": v for k, v in _direction_stats(fwd).items()}
    values |= {f"bwd_{k}": v for k, v in _direction_stats(bwd).items()}

    values["fwd_ttl_mean"] = float(np.mean([p.ttl for p in fwd])) if fwd else 0.0
    sizes = _sizes([p for p, _ in s.packets])
    values["total_packets"] = float(len(sizes))
    values["pkt_size_min"] = float(sizes.min())
    values["pkt_size_max"] = float(sizes.max())
    values["pkt_size_mean"] = float(sizes.mean())
    values["pkt_size_var"] = float(sizes.var())

    return FeatureVector([values[f.name] for f in COMMON_FEATURES], FeatureSetId.Common)


def detect_peaks(
    direction_packets: Iterable[tuple[float, int]],
    silence_gap: float = config.SILENCE_GAP,
    min_peak_packets: int = config.MIN_PEAK_PACKETS,
) -> list[Peak]:
    """Split time-ordered (timestamp, bytes) pairs into bursts.

    A burst is a maximal run of packets no more than ``silence_gap`` seconds
    apart; runs shorter than ``min_peak_packets`` are dropped.
    """
    if silence_gap <= 0:
        raise ValueError(f"silence_gap must be > 0, got {silence_gap}")

    peaks: list[Peak] = []
    run: list[tuple[float, int]] = []

    def close_run():
        if len(run) >= min_peak_packets:
            peaks.append(Peak(run[0][0], run[-1][0], sum(b for _, b in run), len(run)))

    for ts, size in direction_packets:
        if run and ts - run[-1][0] > silence_gap:
            close_run()
            run = []
        run.append((ts, size))
    close_run()
    return peaks


def _peak_stats(peaks: list[Peak]) -> dict[str, float]:
    tp_min, tp_max, tp_mean, tp_std = _min_max_mean_std([p.throughput for p in peaks])
    starts = [p.start_ts for p in peaks]
    iat_min, iat_max, iat_mean, iat_std = _min_max_mean_std(np.diff(starts) if len(starts) >= 2 else [])
    return {
        "bursts": float(len(peaks)),
        "peak_throughput_min": tp_min,
        "peak_throughput_max": tp_max,
        "peak_throughput_mean": tp_mean,
        "peak_throughput_std": tp_std,
        "peak_iat_min": iat_min,
        "peak_iat_max": iat_max,
        "peak_iat_mean": iat_mean,
        "peak_iat_std": iat_std,
    }


def count_keepalives(s: Session) -> int:
    """Packets with at most one payload byte whose sequence number sits one
    below the highest ACK the opposite side has sent so far."""
    highest_ack: dict[Direction, int | None] = {Direction.Forward: None, Direction.Backward: None}
    count = 0
    for p, d in s.packets:
        other = Direction.Backward if d == Direction.Forward else Direction.Forward
        edge = highest_ack[other]
        if edge is not None and p.payload_len <= 1 and p.seq == (edge - 1) % SEQ_MOD:
            count += 1
        if p.has(TcpFlag.ACK):
            current = highest_ack[d]
            # serial number comparison, RFC 1982
            if current is None or 0 < (p.ack - current) % SEQ_MOD < (1 << 31):
                highest_ack[d] = p.ack
    return count


def _client_syn(s: Session) -> DecodedPacket | None:
    for p in s.client_packets():
        if p.has(TcpFlag.SYN) and not p.has(TcpFlag.ACK):
            return p
    return None


def extract_new(
    s: Session,
    silence_gap: float = config.SILENCE_GAP,
    min_peak_packets: int = config.MIN_PEAK_PACKETS,
) -> FeatureVector:
    if not s.packets:
        raise ValueError(f"session {s.session_id} has no packets")

    syn = _client_syn(s)
    values = {
        "tcp_init_window": float(syn.window) if syn else 0.0,
        "tcp_window_scale": float(syn.opt_window_scale or 0) if syn else 0.0,
        "tcp_mss": float(syn.opt_mss or 0) if syn else 0.0,
        "keepalive_packets": float(count_keepalives(s)),
    }

    hello = None if s.tls_parse_failed else s.client_hello
    values |= {
        "ssl_compression_methods": float(hello.compression_method_count) if hello else 0.0,
        "ssl_extension_count": float(hello.extension_count) if hello else 0.0,
        "ssl_cipher_methods": float(hello.cipher_suite_count) if hello else 0.0,
        "ssl_session_id_len": float(hello.session_id_len) if hello else 0.0,
        "ssl_version": float(hello.tls_version) if hello else 0.0,
    }

    for prefix, direction in (("fwd", Direction.Forward), ("bwd", Direction.Backward)):
        pairs = [(p.timestamp, p.total_ip_len) for p in s.direction_packets(direction)]
        peaks = detect_peaks(pairs, silence_gap, min_peak_packets)
        values |= {f"{prefix}_{k}": v for k, v in _peak_stats(peaks).items()}

    return FeatureVector([values[f.name] for f in NEW_FEATURES], FeatureSetId.New)


def assemble_set(set_id: FeatureSetId, common: FeatureVector, new: FeatureVector) -> FeatureVector:
    if common.schema_id != FeatureSetId.Common or new.schema_id != FeatureSetId.New:
        raise SchemaMismatchError(
            f"assemble_set needs (Common, New) vectors, got ({common.schema_id.value}, {new.schema_id.value})"
        )
    combined = common.as_dict() | new.as_dict()
    return FeatureVector([combined[name] for name in set_id.names], set_id)


def project(v: FeatureVector, set_id: FeatureSetId) -> FeatureVector:
    """Restrict ``v`` to the features of a subset schema"""
    missing = [n for n in set_id.names if n not in v.names]
    if missing:
        raise SchemaMismatchError(f"{v.schema_id.value} lacks {missing[:3]} needed by {set_id.value}")
    by_name = v.as_dict()
    return FeatureVector([by_name[n] for n in set_id.names], set_id)


def extract_session(
    s: Session,
    set_id: FeatureSetId = FeatureSetId.Combined,
    silence_gap: float = config.SILENCE_GAP,
    min_peak_packets: int = config.MIN_PEAK_PACKETS,
) -> FeatureVector:
    return assemble_set(set_id, extract_common(s), extract_new(s, silence_gap, min_peak_packets))
