"""TLS ClientHello summary parsing.

Walks TLS records from the start of the client's byte stream and counts the
ClientHello fields used as features. The layout follows RFC 5246 7.4.1.2:

    record:     type(1) version(2) length(2) fragment
    handshake:  msg_type(1) length(3) body
    hello body: client_version(2) random(32) session_id<0..32>
                cipher_suites<2..2^16-2> compression_methods<1..2^8-1>
                [extensions<0..2^16-1>]
"""

import logging
import struct
from dataclasses import dataclass

from .. import config
from ..exceptions import TLSParseError

log = logging.getLogger(__name__)

RECORD_HEADER_LEN = 5
HANDSHAKE_HEADER_LEN = 4
CONTENT_HANDSHAKE = 22
HANDSHAKE_CLIENT_HELLO = 1
CONTENT_TYPES = (20, 21, 22, 23, 24)


@dataclass(frozen=True)
class ClientHelloSummary:
    tls_version: int
    cipher_suite_values: tuple[int, ...]
    extension_count: int
    compression_method_count: int
    session_id_len: int
    record_version: int = 0

    @property
    def cipher_suite_count(self) -> int:
        return len(self.cipher_suite_values)


class _Cursor:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if n < 0 or self.pos + n > len(self.buf):
            raise TLSParseError(f"{what}: needs {n} bytes at offset {self.pos}, {len(self.buf) - self.pos} left")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def u8(self, what: str) -> int:
        return self.take(1, what)[0]

    def u16(self, what: str) -> int:
        return struct.unpack("!H", self.take(2, what))[0]

    def u24(self, what: str) -> int:
        return int.from_bytes(self.take(3, what), "big")

    @property
    def remaining(self) -> int:
        return len(self.buf) - self.pos


def _looks_like_record(buf: bytes, pos: int) -> bool:
    return (
        len(buf) - pos >= RECORD_HEADER_LEN
        and buf[pos] in CONTENT_TYPES
        and buf[pos + 1] == 3
    )


def _handshake_bytes(prefix: bytes, start: int) -> bytes:
    """Concatenate the fragments of consecutive handshake records from ``start``
    until the first handshake message is complete."""
    pos, body = start, b""
    while True:
        if not _looks_like_record(prefix, pos) or prefix[pos] != CONTENT_HANDSHAKE:
            raise TLSParseError(f"handshake record expected at offset {pos}")
        length = struct.unpack("!H", prefix[pos + 3:pos + 5])[0]
        fragment = prefix[pos + RECORD_HEADER_LEN:pos + RECORD_HEADER_LEN + length]
        if len(fragment) < length:
            raise TLSParseError(f"record at offset {pos} declares {length} bytes, {len(fragment)} available")
        body += fragment
        pos += RECORD_HEADER_LEN + length
        if len(body) >= HANDSHAKE_HEADER_LEN:
            needed = HANDSHAKE_HEADER_LEN + int.from_bytes(body[1:4], "big")
            if len(body) >= needed:
                return body[:needed]


def _parse_hello(record_version: int, handshake: bytes) -> ClientHelloSummary:
    c = _Cursor(handshake)
    c.u8("handshake type")
    hello = _Cursor(c.take(c.u24("handshake length"), "client hello body"))

    version = hello.u16("client_version")
    hello.take(32, "random")
    session_id_len = hello.u8("session_id length")
    if session_id_len > 32:
        raise TLSParseError(f"session_id length {session_id_len} > 32")
    hello.take(session_id_len, "session_id")

    suites_len = hello.u16("cipher_suites length")
    if suites_len % 2:
        raise TLSParseError(f"odd cipher_suites length {suites_len}")
    suites_raw = hello.take(suites_len, "cipher_suites")
    suites = struct.unpack(f"!{suites_len // 2}H", suites_raw)

    compression_count = hello.u8("compression_methods length")
    hello.take(compression_count, "compression_methods")

    extension_count = 0
    if hello.remaining:
        ext = _Cursor(hello.take(hello.u16("extensions length"), "extensions"))
        while ext.remaining:
            ext.u16("extension type")
            ext.take(ext.u16("extension length"), "extension data")
            extension_count += 1

    return ClientHelloSummary(
        tls_version=version,
        cipher_suite_values=tuple(suites),
        extension_count=extension_count,
        compression_method_count=compression_count,
        session_id_len=session_id_len,
        record_version=record_version,
    )


def parse_client_hello(
    forward_payload_prefix: bytes,
    scan_limit: int = config.CLIENT_HELLO_SCAN_LIMIT,
) -> ClientHelloSummary | None:
    """Find and summarise the first ClientHello of a client byte stream.

    Returns None when no TLS ClientHello starts in the scanned prefix.

    Raises:
        TLSParseError: a ClientHello was detected but its length fields are
            inconsistent with the bytes available.
    """
    prefix = bytes(forward_payload_prefix[:scan_limit])
    pos = 0
    while _looks_like_record(prefix, pos):
        content_type = prefix[pos]
        length = struct.unpack("!H", prefix[pos + 3:pos + 5])[0]
        body_start = pos + RECORD_HEADER_LEN
        if (
            content_type == CONTENT_HANDSHAKE
            and body_start < len(prefix)
            and prefix[body_start] == HANDSHAKE_CLIENT_HELLO
        ):
            record_version = struct.unpack("!H", prefix[pos + 1:pos + 3])[0]
            return _parse_hello(record_version, _handshake_bytes(prefix, pos))
        pos = body_start + length
    return None


def inspect_client_hello(
    forward_payload_prefix: bytes,
    scan_limit: int = config.CLIENT_HELLO_SCAN_LIMIT,
) -> tuple[ClientHelloSummary | None, bool]:
    """parse_client_hello returning (summary, parse_failed) instead of raising"""
    try:
        return parse_client_hello(forward_payload_prefix, scan_limit), False
    except TLSParseError as e:
        log.debug(f"garbled ClientHello: {e}")
        return None, True
