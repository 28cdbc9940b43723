import logging

import pytest

from httpsid.backend.sessions import (
    Direction,
    DirectionConvention,
    aggregate_vpn,
    parse_endpoint,
    sessions_from_pcap,
    split_sessions,
    truncate_session,
)
from httpsid.exceptions import HttpsIdError

from ut_cases import ACK, CLIENT, PSH_ACK, SERVER, SYN, SYN_ACK, client_hello, packet, session_of, two_session_pcap

log = logging.getLogger("httpsid")

OTHER_SERVER = ("151.101.1.69", 443)


def _handshake(client=CLIENT, server=SERVER, t0=0.0):
    return [
        packet(t0, client, server, flags=SYN),
        packet(t0 + 0.01, server, client, flags=SYN_ACK),
        packet(t0 + 0.02, client, server, flags=ACK),
    ]


def _stream(t0: float, n: int, client=CLIENT, server=SERVER, step: float = 0.1):
    return [
        packet(t0 + i * step, *((client, server) if i % 2 == 0 else (server, client)))
        for i in range(n)
    ]


class TestSplitSessions:
    def test_handshake_directions(self):
        s = session_of(_handshake())
        assert s.client_endpoint == CLIENT
        assert s.server_endpoint == SERVER
        assert [d for _, d in s.packets] == [Direction.Forward, Direction.Backward, Direction.Forward]

    def test_interleaved_tuples_are_partitioned(self):
        a = _handshake(CLIENT, SERVER, 0.0)
        b = _handshake(CLIENT, OTHER_SERVER, 0.005)
        sessions = split_sessions(sorted(a + b, key=lambda p: p.timestamp))
        assert len(sessions) == 2
        assert [s.server_endpoint for s in sessions] == [SERVER, OTHER_SERVER]
        assert sorted(len(s) for s in sessions) == [3, 3]
        for s in sessions:
            assert all(s.key.matches(p) for p, _ in s.packets)

    def test_mid_session_start(self):
        pkts = [
            packet(0.0, SERVER, CLIENT, flags=PSH_ACK),
            packet(0.1, CLIENT, SERVER, flags=ACK),
        ]
        s = session_of(pkts)
        assert s.client_endpoint == SERVER
        assert s.packets[0][1] == Direction.Forward

    def test_port_filter(self):
        web = ("10.0.0.9", 8080)
        pkts = _handshake() + _handshake(CLIENT, web, 1.0)
        assert len(split_sessions(pkts)) == 1
        assert len(split_sessions(pkts, port_filter=None)) == 2

    def test_server_to_client_convention(self):
        sessions = split_sessions(_handshake(), convention=DirectionConvention.ServerToClient)
        assert [d for _, d in sessions[0].packets] == [Direction.Backward, Direction.Forward, Direction.Backward]

    def test_out_of_order_timestamps_are_sorted(self):
        pkts = _handshake()
        s = session_of([pkts[2], pkts[0], pkts[1]])
        assert [p.timestamp for p, _ in s.packets] == sorted(p.timestamp for p in pkts)

    def test_client_hello_is_parsed(self):
        pkts = _handshake() + [packet(0.03, CLIENT, SERVER, flags=PSH_ACK, payload=client_hello(suites=9))]
        s = session_of(pkts)
        assert s.client_hello.cipher_suite_count == 9
        assert not s.tls_parse_failed


class TestSessionsFromPcap:
    def test_two_sessions(self, tmp_path):
        sessions, stats = sessions_from_pcap(two_session_pcap(tmp_path / "two.pcap"))
        assert len(sessions) == 2
        assert stats.decoded == stats.frames == 16
        assert sorted(s.client_hello.cipher_suite_count for s in sessions) == [15, 20]
        assert all(s.session_id.startswith("two.pcap|") for s in sessions)

    def test_port_zero_disables_filter(self, tmp_path):
        sessions, _ = sessions_from_pcap(two_session_pcap(tmp_path / "two.pcap"), port_filter=0)
        assert len(sessions) == 2


class TestTruncate:
    def _session(self):
        return session_of([packet(t, flags=SYN if t == 0 else ACK) for t in (0.0, 0.5, 2.0, 30.0)])

    def test_threshold_inclusion(self):
        short = truncate_session(self._session(), 1.0)
        assert [p.timestamp for p, _ in short.packets] == [0.0, 0.5]

    def test_horizon_beyond_duration_is_identity(self):
        s = self._session()
        assert truncate_session(s, 30.0) is s
        assert truncate_session(s, 1000.0) is s

    @pytest.mark.parametrize("horizon", [0.25, 1.0, 5.0, 100.0])
    def test_idempotent(self, horizon):
        once = truncate_session(self._session(), horizon)
        assert truncate_session(once, horizon) == once

    def test_hello_outside_horizon_is_dropped(self):
        pkts = _handshake() + [packet(2.0, CLIENT, SERVER, flags=PSH_ACK, payload=client_hello())]
        s = session_of(pkts)
        assert s.client_hello is not None
        assert truncate_session(s, 1.0).client_hello is None

    def test_non_positive_horizon(self):
        with pytest.raises(ValueError):
            truncate_session(self._session(), 0)


class TestAggregateVpn:
    TUNNEL = ("198.51.100.7", 1194)

    def test_merges_by_timestamp(self):
        a = session_of(_stream(0.0, 10, CLIENT, SERVER))
        b = session_of(_stream(0.05, 10, ("10.0.0.1", 50001), OTHER_SERVER))
        merged = aggregate_vpn([a, b], self.TUNNEL)
        ts = [p.timestamp for p, _ in merged.packets]
        assert len(merged) == 20
        assert ts == sorted(ts)
        assert merged.client_endpoint == CLIENT
        assert merged.server_endpoint == self.TUNNEL
        assert all({p.src, p.dst} == {CLIENT, self.TUNNEL} for p, _ in merged.packets)

    def test_directions_are_kept(self):
        a = session_of(_stream(0.0, 6))
        merged = aggregate_vpn([a], self.TUNNEL)
        assert [d for _, d in merged.packets] == [d for _, d in a.packets]
        assert [p.total_ip_len for p, _ in merged.packets] == [p.total_ip_len for p, _ in a.packets]
        assert str(merged.key) == f"{CLIENT[0]}:{CLIENT[1]}|{self.TUNNEL[0]}:{self.TUNNEL[1]}"

    def test_earliest_session_gives_client_and_hello(self):
        late = session_of(_stream(5.0, 4, ("10.0.0.2", 40000), OTHER_SERVER))
        early = session_of(_handshake() + [packet(0.03, CLIENT, SERVER, flags=PSH_ACK, payload=client_hello(suites=3))])
        merged = aggregate_vpn([late, early], self.TUNNEL)
        assert merged.client_endpoint == CLIENT
        assert merged.client_hello.cipher_suite_count == 3

    def test_nothing_to_aggregate(self):
        with pytest.raises(HttpsIdError, match="nothing to aggregate"):
            aggregate_vpn([], self.TUNNEL)


class TestParseEndpoint:
    @pytest.mark.parametrize("text, expected", [
        ("10.8.0.1:1194", ("10.8.0.1", 1194)),
        ("[2001:db8::1]:443", ("2001:db8::1", 443)),
    ])
    def test_valid(self, text, expected):
        assert parse_endpoint(text) == expected

    @pytest.mark.parametrize("text", ["10.8.0.1", ":443", "host:port"])
    def test_invalid(self, text):
        with pytest.raises(ValueError):
            parse_endpoint(text)
