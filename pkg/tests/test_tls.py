import logging
import struct

import pytest

from httpsid.backend.tls import inspect_client_hello, parse_client_hello
from httpsid.exceptions import TLSParseError

from ut_cases import client_hello

log = logging.getLogger("httpsid")

# record(5) + handshake header(4) + version(2) + random(32) + sid len(1) + sid(32)
SUITES_LEN_OFFSET = 76


class TestParseClientHello:
    def test_counts(self):
        summary = parse_client_hello(client_hello(suites=15, extensions=10, session_id_len=32, compression=1))
        assert summary is not None
        assert summary.cipher_suite_count == 15
        assert summary.extension_count == 10
        assert summary.compression_method_count == 1
        assert summary.session_id_len == 32
        assert summary.tls_version == 0x0303
        assert summary.record_version == 0x0301
        assert summary.cipher_suite_values[0] == 0xC02B

    def test_no_extensions(self):
        summary = parse_client_hello(client_hello(extensions=0, session_id_len=0))
        assert (summary.extension_count, summary.session_id_len) == (0, 0)

    def test_plain_http_is_absent(self):
        summary, failed = inspect_client_hello(b"GET / HTTP/1.1\r\nHost: example.com\r\n\r\n")
        assert summary is None
        assert not failed

    def test_empty_prefix(self):
        assert inspect_client_hello(b"") == (None, False)

    def test_suite_length_overflow_flags_failure(self):
        raw = bytearray(client_hello())
        raw[SUITES_LEN_OFFSET:SUITES_LEN_OFFSET + 2] = struct.pack("!H", 0xFFF0)
        with pytest.raises(TLSParseError):
            parse_client_hello(bytes(raw))
        summary, failed = inspect_client_hello(bytes(raw))
        assert summary is None
        assert failed

    def test_truncated_hello_flags_failure(self):
        summary, failed = inspect_client_hello(client_hello(), scan_limit=40)
        assert summary is None
        assert failed

    def test_prefix_stability(self):
        hello = client_hello(suites=21, extensions=7)
        expected = parse_client_hello(hello)
        for suffix in (b"\x00", b"\x17\x03\x03\x00\x05hello", bytes(range(256)) * 4):
            assert parse_client_hello(hello + suffix) == expected

    def test_skips_leading_records(self):
        change_cipher_spec = bytes([20, 3, 3, 0, 1, 1])
        summary = parse_client_hello(change_cipher_spec + client_hello(suites=4))
        assert summary.cipher_suite_count == 4

    def test_hello_split_over_records(self):
        hello = client_hello(suites=30, extensions=12)
        handshake = hello[5:]
        head, tail = handshake[:60], handshake[60:]
        split = (
            bytes([22]) + struct.pack("!HH", 0x0301, len(head)) + head
            + bytes([22]) + struct.pack("!HH", 0x0301, len(tail)) + tail
        )
        assert parse_client_hello(split) == parse_client_hello(hello)

    def test_odd_suite_length(self):
        raw = bytearray(client_hello())
        raw[SUITES_LEN_OFFSET:SUITES_LEN_OFFSET + 2] = struct.pack("!H", 3)
        assert inspect_client_hello(bytes(raw)) == (None, True)
