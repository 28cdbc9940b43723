"""
Bidirectional TCP sessions, one per 5-tuple and capture file.

Usage:
    >>> sessions, stats = sessions_from_pcap("win_ie.pcap")
    >>> short = [truncate_session(s, 10.0) for s in sessions]
"""

import dataclasses
import heapq
import logging
import pathlib
from dataclasses import dataclass
from enum import Enum
from typing import Iterable

from .. import config
from ..exceptions import HttpsIdError
from .capture import DecodedPacket, DecodeStats, TcpFlag, decode_frame, read_pcap
from .tls import ClientHelloSummary, inspect_client_hello

log = logging.getLogger(__name__)

Endpoint = tuple[str, int]


class Direction(Enum):
    Forward = "forward"
    Backward = "backward"


class DirectionConvention(str, Enum):
    """Which endpoint's packets form the forward flow"""

    ClientToServer = "client-to-server"
    ServerToClient = "server-to-client"


@dataclass(frozen=True, slots=True)
class FlowKey:
    """5-tuple in canonical orientation, initiator first"""

    ip_a: str
    port_a: int
    ip_b: str
    port_b: int
    protocol: str = "TCP"

    def matches(self, p: DecodedPacket) -> bool:
        return {p.src, p.dst} == {(self.ip_a, self.port_a), (self.ip_b, self.port_b)}

    def __str__(self) -> str:
        return f"{self.ip_a}:{self.port_a}|{self.ip_b}:{self.port_b}"


@dataclass(frozen=True)
class Session:
    key: FlowKey
    client_endpoint: Endpoint
    packets: tuple[tuple[DecodedPacket, Direction], ...]
    client_hello: ClientHelloSummary | None = None
    tls_parse_failed: bool = False
    capture: str = ""
    convention: DirectionConvention = DirectionConvention.ClientToServer

    @property
    def session_id(self) -> str:
        return f"{self.capture}|{self.key}"

    @property
    def first_ts(self) -> float:
        return self.packets[0][0].timestamp if self.packets else 0.0

    @property
    def last_ts(self) -> float:
        return self.packets[-1][0].timestamp if self.packets else 0.0

    @property
    def server_endpoint(self) -> Endpoint:
        a, b = (self.key.ip_a, self.key.port_a), (self.key.ip_b, self.key.port_b)
        return b if a == self.client_endpoint else a

    def direction_packets(self, direction: Direction) -> list[DecodedPacket]:
        return [p for p, d in self.packets if d == direction]

    def client_packets(self) -> list[DecodedPacket]:
        return [p for p, _ in self.packets if p.src == self.client_endpoint]

    def __len__(self) -> int:
        return len(self.packets)


def direction_of(p: DecodedPacket, client: Endpoint, convention: DirectionConvention) -> Direction:
    from_client = p.src == client
    if convention == DirectionConvention.ServerToClient:
        from_client = not from_client
    return Direction.Forward if from_client else Direction.Backward


def client_payload_prefix(packets: Iterable[DecodedPacket], client: Endpoint,
                          limit: int = config.CLIENT_HELLO_SCAN_LIMIT) -> bytes:
    """Concatenate the initiator's TCP payloads in packet order, up to ``limit`` bytes"""
    chunks, size = [], 0
    for p in packets:
        if p.src != client or not p.payload:
            continue
        chunks.append(p.payload)
        size += len(p.payload)
        if size >= limit:
            break
    return b"".join(chunks)[:limit]


def build_session(
    key: FlowKey,
    client: Endpoint,
    packets: list[DecodedPacket],
    capture: str = "",
    convention: DirectionConvention = DirectionConvention.ClientToServer,
) -> Session:
    """Order packets, label directions and parse the client's ClientHello"""
    ordered = sorted(packets, key=lambda p: p.timestamp)  # stable: ties keep capture order
    hello, failed = inspect_client_hello(client_payload_prefix(ordered, client))
    return Session(
        key=key,
        client_endpoint=client,
        packets=tuple((p, direction_of(p, client, convention)) for p in ordered),
        client_hello=hello,
        tls_parse_failed=failed,
        capture=capture,
        convention=convention,
    )


def _initiator(packets: list[DecodedPacket]) -> Endpoint:
    for p in packets:
        if p.has(TcpFlag.SYN) and not p.has(TcpFlag.ACK):
            return p.src
    return packets[0].src


def split_sessions(
    packets: Iterable[DecodedPacket],
    port_filter: int | None = config.DEFAULT_PORT,
    capture: str = "",
    convention: DirectionConvention = DirectionConvention.ClientToServer,
) -> list[Session]:
    """Group packets into one session per orientation-insensitive 5-tuple.

    The initiator is the source of the first SYN (without ACK) of the tuple,
    else the source of the first packet seen. Sessions are returned in order
    of their first packet in the capture.
    """
    groups: dict[frozenset, list[DecodedPacket]] = {}
    for p in packets:
        if port_filter and port_filter not in (p.src_port, p.dst_port):
            continue
        groups.setdefault(frozenset({p.src, p.dst}), []).append(p)

    sessions = []
    for pkts in groups.values():
        client = _initiator(pkts)
        server = pkts[0].dst if pkts[0].src == client else pkts[0].src
        key = FlowKey(ip_a=client[0], port_a=client[1], ip_b=server[0], port_b=server[1])
        sessions.append(build_session(key, client, pkts, capture, convention))

    log.debug(f"{capture or 'stream'}: {len(sessions)} sessions, port_filter={port_filter}")
    return sessions


def sessions_from_pcap(
    path: pathlib.Path | str,
    port_filter: int | None = config.DEFAULT_PORT,
    convention: DirectionConvention = DirectionConvention.ClientToServer,
) -> tuple[list[Session], DecodeStats]:
    p = pathlib.Path(path)
    stats = DecodeStats()
    decoded = (decode_frame(f, stats) for f in read_pcap(p))
    sessions = split_sessions((d for d in decoded if d is not None), port_filter, p.name, convention)
    log.info(f"{p.name}: frames={stats.frames}, decoded={stats.decoded}, skipped={stats.skipped}, sessions={len(sessions)}")
    return sessions, stats


def truncate_session(s: Session, horizon: float) -> Session:
    """Keep the packets within ``horizon`` seconds of the session start"""
    if horizon <= 0:
        raise ValueError(f"horizon must be > 0, got {horizon}")
    edge = s.first_ts + horizon
    kept = [(p, d) for p, d in s.packets if p.timestamp <= edge]
    if len(kept) == len(s.packets):
        return s
    hello, failed = inspect_client_hello(client_payload_prefix((p for p, _ in kept), s.client_endpoint))
    return dataclasses.replace(s, packets=tuple(kept), client_hello=hello, tls_parse_failed=failed)


def _rewrite(p: DecodedPacket, from_client: bool, client: Endpoint, tunnel: Endpoint) -> DecodedPacket:
    src, dst = (client, tunnel) if from_client else (tunnel, client)
    return dataclasses.replace(p, src_ip=src[0], src_port=src[1], dst_ip=dst[0], dst_port=dst[1])


def aggregate_vpn(sessions: list[Session], tunnel_endpoint: Endpoint) -> Session:
    """Collapse sessions into one tunnel-like session.

    Packets are merged by timestamp (ties keep input order), keep their
    direction and are re-addressed between the earliest session's client and
    the tunnel endpoint.
    """
    if not sessions:
        raise HttpsIdError("nothing to aggregate")

    earliest = min(sessions, key=lambda s: s.first_ts)
    client = earliest.client_endpoint
    key = FlowKey(ip_a=client[0], port_a=client[1], ip_b=tunnel_endpoint[0], port_b=tunnel_endpoint[1])

    streams = [
        [(p.timestamp, i, j, p, d, p.src == s.client_endpoint) for j, (p, d) in enumerate(s.packets)]
        for i, s in enumerate(sessions)
    ]
    merged = tuple(
        (_rewrite(p, from_client, client, tunnel_endpoint), d)
        for _, _, _, p, d, from_client in heapq.merge(*streams, key=lambda t: (t[0], t[1], t[2]))
    )
    return Session(
        key=key,
        client_endpoint=client,
        packets=merged,
        client_hello=earliest.client_hello,
        tls_parse_failed=earliest.tls_parse_failed,
        capture=earliest.capture,
        convention=earliest.convention,
    )


def parse_endpoint(text: str) -> Endpoint:
    host, _, port = text.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"endpoint must look like ip:port, got {text!r}")
    return (host.strip("[]"), int(port))
