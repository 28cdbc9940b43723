"""
Decode classic pcap captures into TCP packets.

Usage:
    >>> stats = DecodeStats()
    >>> packets = [p for p in (decode_frame(f, stats) for f in read_pcap("a.pcap")) if p]
"""

import ipaddress
import logging
import pathlib
import struct
from dataclasses import dataclass, field
from enum import Enum, IntFlag
from typing import Iterator

import dpkt

from .. import config
from ..exceptions import CaptureFormatError

log = logging.getLogger(__name__)


class LinkType(Enum):
    Ethernet = "Ethernet"
    RawIP = "RawIP"

    @classmethod
    def from_dlt(cls, dlt: int) -> "LinkType":
        if dlt == dpkt.pcap.DLT_EN10MB:
            return cls.Ethernet
        # DLT_RAW differs between platforms (12 or 14), 101 is LINKTYPE_RAW,
        # 228/229 are LINKTYPE_IPV4/LINKTYPE_IPV6
        if dlt in (12, 14, 101, 228, 229):
            return cls.RawIP
        raise CaptureFormatError(f"unsupported link type: {dlt}, expected Ethernet or raw IP")

    @property
    def min_header_len(self) -> int:
        return 14 if self == LinkType.Ethernet else 20


class TcpFlag(IntFlag):
    FIN = dpkt.tcp.TH_FIN
    SYN = dpkt.tcp.TH_SYN
    RST = dpkt.tcp.TH_RST
    PSH = dpkt.tcp.TH_PUSH
    ACK = dpkt.tcp.TH_ACK

    @classmethod
    def parse(cls, flags: int) -> "TcpFlag":
        return cls(flags & int(cls.FIN | cls.SYN | cls.RST | cls.PSH | cls.ACK))


@dataclass(frozen=True, slots=True)
class RawFrame:
    timestamp: float
    link_type: LinkType
    data: bytes


@dataclass(frozen=True, slots=True)
class DecodedPacket:
    """One timestamped IP/TCP packet with the header fields the features need.

    ``payload`` keeps at most CLIENT_HELLO_SCAN_LIMIT bytes of the TCP payload,
    ``payload_len`` is always the full payload length.
    """
    timestamp: float
    src_ip: str
    dst_ip: str
    src_port: int
    dst_port: int
    ttl: int
    total_ip_len: int
    payload_len: int
    tcp_flags: TcpFlag
    seq: int
    ack: int
    window: int
    opt_mss: int | None = None
    opt_window_scale: int | None = None
    payload: bytes = field(default=b"", repr=False)
    protocol: str = "TCP"

    @property
    def src(self) -> tuple[str, int]:
        return (self.src_ip, self.src_port)

    @property
    def dst(self) -> tuple[str, int]:
        return (self.dst_ip, self.dst_port)

    def has(self, flag: TcpFlag) -> bool:
        return bool(self.tcp_flags & flag)


@dataclass
class DecodeStats:
    """per-run skip counters"""

    frames: int = 0
    decoded: int = 0
    too_short: int = 0
    non_ip: int = 0
    non_tcp: int = 0
    truncated: int = 0
    fragments_dropped: int = 0

    @property
    def skipped(self) -> int:
        return self.frames - self.decoded

    def merge(self, other: "DecodeStats") -> "DecodeStats":
        for k in self.__dataclass_fields__:
            setattr(self, k, getattr(self, k) + getattr(other, k))
        return self


def read_pcap(path: pathlib.Path | str) -> Iterator[RawFrame]:
    """Yield the frames of a classic pcap file in file order.

    Both byte orders and the nanosecond variants are accepted; pcapng is not.
    """
    p = pathlib.Path(path)
    with open(p, "rb") as f:
        try:
            reader = dpkt.pcap.Reader(f)
        except (ValueError, dpkt.dpkt.NeedData) as e:
            raise CaptureFormatError(f"{p}: not a classic pcap file ({e})") from None

        link_type = LinkType.from_dlt(reader.datalink())
        log.debug(f"reading {p.name}: link_type={link_type.value}, nano={getattr(reader, 'nano', False)}")
        for ts, buf in reader:
            yield RawFrame(timestamp=float(ts), link_type=link_type, data=bytes(buf))


def _tcp_options(tcp: dpkt.tcp.TCP) -> tuple[int | None, int | None]:
    mss, wscale = None, None
    if not tcp.opts:
        return mss, wscale
    try:
        opts = dpkt.tcp.parse_opts(tcp.opts)
    except (dpkt.dpkt.UnpackError, struct.error, IndexError):
        return mss, wscale

    for kind, data in opts:
        if kind == dpkt.tcp.TCP_OPT_MSS and len(data) == 2:
            mss = struct.unpack("!H", data)[0]
        elif kind == dpkt.tcp.TCP_OPT_WSCALE and len(data) == 1:
            wscale = min(data[0], 14)
    return mss, wscale


def _network_layer(frame: RawFrame, stats: DecodeStats):
    buf = frame.data
    if frame.link_type == LinkType.Ethernet:
        try:
            eth = dpkt.ethernet.Ethernet(buf)
        except (dpkt.dpkt.NeedData, dpkt.dpkt.UnpackError):
            stats.truncated += 1
            return None
        ip = eth.data
        if isinstance(ip, (dpkt.ip.IP, dpkt.ip6.IP6)):
            return ip
        stats.non_ip += 1
        return None

    version = buf[0] >> 4
    try:
        if version == 4:
            return dpkt.ip.IP(buf)
        if version == 6:
            return dpkt.ip6.IP6(buf)
    except (dpkt.dpkt.NeedData, dpkt.dpkt.UnpackError):
        stats.truncated += 1
        return None
    stats.non_ip += 1
    return None


def decode_frame(frame: RawFrame, stats: DecodeStats | None = None) -> DecodedPacket | None:
    """Decode one capture frame into a DecodedPacket.

    Returns None for non-IP, non-TCP, truncated frames and non-first IP
    fragments; the reason is counted in ``stats``.
    """
    stats = stats if stats is not None else DecodeStats()
    stats.frames += 1

    if len(frame.data) < frame.link_type.min_header_len:
        stats.too_short += 1
        return None

    ip = _network_layer(frame, stats)
    if ip is None:
        return None

    if isinstance(ip, dpkt.ip.IP):
        if ip.offset:
            stats.fragments_dropped += 1
            return None
        total_ip_len, ttl = ip.len, ip.ttl
    else:
        frag = getattr(ip, "extension_hdrs", {}).get(dpkt.ip.IP_PROTO_FRAGMENT)
        if frag is not None and frag.frag_off:
            stats.fragments_dropped += 1
            return None
        total_ip_len, ttl = 40 + ip.plen, ip.hlim

    tcp = ip.data
    if not isinstance(tcp, dpkt.tcp.TCP):
        if getattr(ip, "p", None) == dpkt.ip.IP_PROTO_TCP:
            stats.truncated += 1
        else:
            stats.non_tcp += 1
        return None

    # snaplen cut the packet: the declared length was never captured
    payload = bytes(tcp.data)
    if total_ip_len > len(frame.data) or (
        isinstance(ip, dpkt.ip.IP) and len(payload) < ip.len - ip.hl * 4 - tcp.off * 4
    ):
        stats.truncated += 1
        return None

    mss, wscale = _tcp_options(tcp)
    stats.decoded += 1
    return DecodedPacket(
        timestamp=frame.timestamp,
        src_ip=str(ipaddress.ip_address(ip.src)),
        dst_ip=str(ipaddress.ip_address(ip.dst)),
        src_port=tcp.sport,
        dst_port=tcp.dport,
        ttl=ttl,
        total_ip_len=total_ip_len,
        payload_len=len(payload),
        tcp_flags=TcpFlag.parse(tcp.flags),
        seq=tcp.seq,
        ack=tcp.ack,
        window=tcp.win,
        opt_mss=mss,
        opt_window_scale=wscale,
        payload=payload[: config.CLIENT_HELLO_SCAN_LIMIT],
    )
