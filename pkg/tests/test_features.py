import dataclasses
import logging
import math

import numpy as np
import pytest

from httpsid.backend.features import (
    FEATURE_DICTIONARY,
    FeatureSetId,
    FeatureVector,
    assemble_set,
    count_keepalives,
    detect_peaks,
    extract_common,
    extract_new,
    extract_session,
    project,
)
from httpsid.backend.sessions import sessions_from_pcap
from httpsid.exceptions import SchemaMismatchError

from ut_cases import (
    ACK,
    CLIENT,
    SERVER,
    SYN,
    SYN_ACK,
    handshake_frames,
    packet,
    random_session,
    random_tls_session,
    session_of,
    write_pcap,
)

log = logging.getLogger("httpsid")


def _straight_line_direction(packets):
    """per-direction statistics computed with plain loops"""
    n = len(packets)
    sizes = [p.total_ip_len for p in packets]
    gaps = [packets[i + 1].timestamp - packets[i].timestamp for i in range(n - 1)]

    def mean(xs):
        return sum(xs) / len(xs) if xs else 0.0

    def pstd(xs):
        if not xs:
            return 0.0
        m = mean(xs)
        return math.sqrt(sum((x - m) ** 2 for x in xs) / len(xs))

    return {
        "packets": n,
        "total_bytes": sum(sizes),
        "iat_min": min(gaps) if gaps else 0.0,
        "iat_max": max(gaps) if gaps else 0.0,
        "iat_mean": mean(gaps),
        "iat_std": pstd(gaps),
        "pkt_size_mean": mean(sizes),
        "pkt_size_std": pstd(sizes),
        "pkt_size_min": min(sizes) if sizes else 0.0,
        "pkt_size_max": max(sizes) if sizes else 0.0,
    }


def _straight_line_session(packets, hello, gap=1.0, min_packets=2):
    """all 53 features of a client->server session, with plain loops"""
    def mean(xs):
        return sum(xs) / len(xs) if xs else 0.0

    def pstd(xs):
        if not xs:
            return 0.0
        m = mean(xs)
        return math.sqrt(sum((x - m) ** 2 for x in xs) / len(xs))

    out = {}
    fwd = [p for p in packets if (p.src_ip, p.src_port) == CLIENT]
    bwd = [p for p in packets if (p.src_ip, p.src_port) != CLIENT]
    for prefix, direction in (("fwd", fwd), ("bwd", bwd)):
        for k, v in _straight_line_direction(direction).items():
            out[f"{prefix}_{k}"] = v

        runs, run = [], []
        for p in direction:
            if run and p.timestamp - run[-1].timestamp > gap:
                runs.append(run)
                run = []
            run.append(p)
        if run:
            runs.append(run)
        peaks = [r for r in runs if len(r) >= min_packets]
        rates = [sum(p.total_ip_len for p in r) / max(r[-1].timestamp - r[0].timestamp, 1e-6) for r in peaks]
        starts = [r[0].timestamp for r in peaks]
        gaps = [starts[i + 1] - starts[i] for i in range(len(starts) - 1)]
        out[f"{prefix}_bursts"] = len(peaks)
        for stem, xs in (("peak_throughput", rates), ("peak_iat", gaps)):
            out[f"{prefix}_{stem}_min"] = min(xs) if xs else 0.0
            out[f"{prefix}_{stem}_max"] = max(xs) if xs else 0.0
            out[f"{prefix}_{stem}_mean"] = mean(xs)
            out[f"{prefix}_{stem}_std"] = pstd(xs)

    sizes = [p.total_ip_len for p in packets]
    out["fwd_ttl_mean"] = mean([p.ttl for p in fwd])
    out["total_packets"] = len(sizes)
    out["pkt_size_min"], out["pkt_size_max"] = min(sizes), max(sizes)
    out["pkt_size_mean"] = mean(sizes)
    out["pkt_size_var"] = pstd(sizes) ** 2

    syn = next(p for p in fwd if p.has(SYN) and not p.has(ACK))
    out["tcp_init_window"] = syn.window
    out["tcp_window_scale"] = syn.opt_window_scale or 0
    out["tcp_mss"] = syn.opt_mss or 0

    hello = hello or {}
    out["ssl_cipher_methods"] = hello.get("suites", 0)
    out["ssl_extension_count"] = hello.get("extensions", 0)
    out["ssl_compression_methods"] = hello.get("compression", 0)
    out["ssl_session_id_len"] = hello.get("session_id_len", 0)
    out["ssl_version"] = hello.get("version", 0)

    keepalives = 0
    highest = {True: None, False: None}
    for p in packets:
        forward = (p.src_ip, p.src_port) == CLIENT
        edge = highest[not forward]
        if edge is not None and p.payload_len <= 1 and p.seq == (edge - 1) % (1 << 32):
            keepalives += 1
        if p.has(ACK):
            highest[forward] = p.ack if highest[forward] is None else max(highest[forward], p.ack)
    out["keepalive_packets"] = keepalives
    return out


def _rescale(s, size_factor: int = 1, shift: float = 0.0):
    pkts = [
        dataclasses.replace(p, timestamp=p.timestamp + shift, total_ip_len=p.total_ip_len * size_factor)
        for p, _ in s.packets
    ]
    return session_of(pkts, s.capture)


class TestFeatureSets:
    @pytest.mark.parametrize("set_id, size", [
        (FeatureSetId.Common, 26),
        (FeatureSetId.New, 27),
        (FeatureSetId.Combined, 53),
        (FeatureSetId.Peaks, 18),
        (FeatureSetId.CombinedNoPeaks, 35),
        (FeatureSetId.CombinedNoSSL, 48),
        (FeatureSetId.CombinedNoTCP, 49),
        (FeatureSetId.CommonStats, 21),
        (FeatureSetId.Statistics, 37),
    ])
    def test_sizes(self, set_id, size):
        assert len(set_id) == size
        assert len(set(set_id.names)) == size

    def test_nine_sets(self):
        assert len(FeatureSetId) == 9

    def test_subsets_keep_dictionary_order(self):
        order = [f.name for f in FEATURE_DICTIONARY]
        for set_id in FeatureSetId:
            positions = [order.index(n) for n in set_id.names]
            assert positions == sorted(positions)

    def test_no_ssl_set(self):
        assert not FeatureSetId.CombinedNoSSL.has_ssl
        assert FeatureSetId.Combined.has_ssl
        assert not any(n.startswith("ssl_") for n in FeatureSetId.CombinedNoSSL.names)

    @pytest.mark.parametrize("text", ["Combined", "combined", "combined-no-ssl", "COMMON_STATS"])
    def test_parse(self, text):
        assert FeatureSetId.parse(text) in FeatureSetId

    def test_parse_unknown(self):
        with pytest.raises(ValueError):
            FeatureSetId.parse("Everything")

    def test_vector_length_checked(self):
        with pytest.raises(SchemaMismatchError):
            FeatureVector(np.zeros(52), FeatureSetId.Combined)

    def test_project_and_assemble(self):
        s = random_session(np.random.default_rng(3), 20)
        combined = extract_session(s)
        for set_id in FeatureSetId:
            direct = assemble_set(set_id, extract_common(s), extract_new(s))
            assert project(combined, set_id) == direct
        with pytest.raises(SchemaMismatchError):
            project(project(combined, FeatureSetId.Common), FeatureSetId.New)
        with pytest.raises(SchemaMismatchError):
            assemble_set(FeatureSetId.Combined, extract_new(s), extract_common(s))


class TestCommonFeatures:
    def test_three_forward_packets(self):
        s = session_of([packet(0.0, size=100), packet(1.0, size=200), packet(3.0, size=300)])
        v = extract_common(s)
        assert v["fwd_packets"] == 3
        assert v["fwd_total_bytes"] == 600
        assert (v["fwd_iat_min"], v["fwd_iat_max"], v["fwd_iat_mean"]) == (1.0, 2.0, 1.5)
        assert v["fwd_pkt_size_mean"] == 200
        assert (v["fwd_pkt_size_min"], v["fwd_pkt_size_max"]) == (100, 300)
        assert v["total_packets"] == 3
        assert v["bwd_packets"] == v["bwd_total_bytes"] == v["bwd_iat_mean"] == 0

    def test_single_packet(self):
        v = extract_common(session_of([packet(7.0, size=321, ttl=99)]))
        assert all(v[n] == 0 for n in v.names if "iat" in n)
        assert v["fwd_packets"] == v["total_packets"] == 1
        assert v["pkt_size_min"] == v["pkt_size_max"] == v["pkt_size_mean"] == 321
        assert v["pkt_size_var"] == 0
        assert v["fwd_ttl_mean"] == 99

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_straight_line_oracle(self, seed):
        s = random_session(np.random.default_rng(seed))
        v = extract_common(s)
        for prefix in ("fwd", "bwd"):
            direction = [p for p, d in s.packets if d.value == ("forward" if prefix == "fwd" else "backward")]
            for k, expected in _straight_line_direction(direction).items():
                assert v[f"{prefix}_{k}"] == pytest.approx(expected, abs=1e-9), f"{prefix}_{k}"
        sizes = [p.total_ip_len for p, _ in s.packets]
        assert v["total_packets"] == len(sizes)
        assert v["pkt_size_var"] == pytest.approx(float(np.var(sizes)))

    @pytest.mark.parametrize("seed", range(100))
    def test_every_feature_matches_straight_line_oracle(self, seed):
        s, hello = random_tls_session(np.random.default_rng(1000 + seed))
        v = extract_session(s)
        expected = _straight_line_session([p for p, _ in s.packets], hello)
        assert sorted(expected) == sorted(FeatureSetId.Combined.names)
        for name in FeatureSetId.Combined.names:
            assert v[name] == pytest.approx(expected[name], rel=1e-9, abs=1e-9), name

    def test_random_tls_sessions_vary(self):
        sessions = [random_tls_session(np.random.default_rng(1000 + seed)) for seed in range(100)]
        vectors = [extract_session(s) for s, _ in sessions]
        assert any(h is not None for _, h in sessions) and any(h is None for _, h in sessions)
        assert any(s.tls_parse_failed for s, _ in sessions)
        assert any(v["keepalive_packets"] > 0 for v in vectors)
        assert any(v["tcp_mss"] == 0 for v in vectors) and any(v["fwd_bursts"] > 1 for v in vectors)

    @pytest.mark.parametrize("seed", range(10))
    def test_min_mean_max_ordering(self, seed):
        v = extract_session(random_session(np.random.default_rng(100 + seed)))
        for name in v.names:
            if name.endswith("_mean"):
                stem = name[: -len("_mean")]
                lo, hi = f"{stem}_min", f"{stem}_max"
                if lo in v.names and hi in v.names:
                    assert v[lo] <= v[name] + 1e-9 <= v[hi] + 2e-9
            if name.endswith(("_std", "_var")):
                assert v[name] >= 0
        assert not np.isnan(v.values).any()


class TestDetectPeaks:
    def test_two_bursts(self):
        peaks = detect_peaks([(t, 100) for t in (0.0, 0.1, 0.2, 5.0, 5.1)], silence_gap=1.0)
        assert [(p.start_ts, p.end_ts, p.packets) for p in peaks] == [(0.0, 0.2, 3), (5.0, 5.1, 2)]
        assert [p.byte_count for p in peaks] == [300, 200]

    def test_no_silence(self):
        peaks = detect_peaks([(0.5 * i, 10) for i in range(21)], silence_gap=1.0)
        assert len(peaks) == 1
        assert (peaks[0].start_ts, peaks[0].end_ts) == (0.0, 10.0)

    def test_isolated_packets(self):
        assert detect_peaks([(2.0 * i, 10) for i in range(6)], silence_gap=1.0, min_peak_packets=2) == []

    def test_empty(self):
        assert detect_peaks([]) == []

    def test_bad_gap(self):
        with pytest.raises(ValueError):
            detect_peaks([(0.0, 1)], silence_gap=0)

    @pytest.mark.parametrize("seed", range(20))
    def test_matches_brute_force(self, seed):
        rng = np.random.default_rng(seed)
        ts = np.cumsum(rng.choice([0.05, 0.3, 0.9, 1.7, 6.0], size=int(rng.integers(0, 40))))
        sizes = rng.integers(40, 1500, size=len(ts))
        gap, min_packets = 1.0, int(rng.integers(1, 4))

        breaks = np.flatnonzero(np.diff(ts) > gap) + 1
        runs = [r for r in np.split(np.arange(len(ts)), breaks) if len(r) >= min_packets and len(r) > 0]
        expected = [(float(ts[r[0]]), float(ts[r[-1]]), int(sizes[r].sum())) for r in runs]

        peaks = detect_peaks(zip(ts.tolist(), sizes.tolist()), gap, min_packets)
        assert [(p.start_ts, p.end_ts, p.byte_count) for p in peaks] == expected
        assert sum(p.byte_count for p in peaks) <= int(sizes.sum())
        for a, b in zip(peaks, peaks[1:]):
            assert b.start_ts - a.end_ts > gap


class TestNewFeatures:
    def test_handshake_capture(self, tmp_path):
        sessions, _ = sessions_from_pcap(write_pcap(tmp_path / "hs.pcap", handshake_frames()))
        v = extract_session(sessions[0])
        assert v["tcp_init_window"] == 29200
        assert v["tcp_window_scale"] == 7
        assert v["tcp_mss"] == 1460
        assert v["ssl_cipher_methods"] == 15
        assert v["ssl_extension_count"] == 10
        assert v["ssl_compression_methods"] == 1
        assert v["ssl_session_id_len"] == 32
        assert v["ssl_version"] == 0x0303
        assert (v["fwd_packets"], v["bwd_packets"]) == (5, 3)

    def test_single_forward_peak(self):
        s = session_of([packet(0.0, size=400), packet(0.5, size=600)])
        v = extract_new(s)
        assert v["fwd_bursts"] == 1
        assert v["fwd_peak_throughput_max"] == v["fwd_peak_throughput_mean"] == pytest.approx(2000.0)
        assert v["fwd_peak_throughput_std"] == 0
        assert all(v[n] == 0 for n in v.names if n.startswith("fwd_peak_iat"))
        assert all(v[n] == 0 for n in v.names if n.startswith("bwd_"))

    def test_no_syn_no_hello(self):
        v = extract_new(session_of([packet(0.0, flags=ACK), packet(0.1, SERVER, CLIENT)]))
        assert v["tcp_init_window"] == v["tcp_window_scale"] == v["tcp_mss"] == 0
        assert all(v[n] == 0 for n in v.names if n.startswith("ssl_"))

    def test_garbled_hello_zeroes_ssl(self):
        s = session_of([packet(0.0, flags=SYN), packet(0.1, payload=bytes([22, 3, 1, 0, 200, 1, 0, 0]))])
        assert s.tls_parse_failed
        v = extract_new(s)
        assert all(v[n] == 0 for n in v.names if n.startswith("ssl_"))

    def test_keepalive(self):
        s = session_of([
            packet(0.0, flags=SYN, seq=0),
            packet(0.1, SERVER, CLIENT, flags=SYN_ACK, seq=5000, ack=1000),
            packet(0.2, flags=ACK, seq=1000, ack=5001),
            packet(0.3, flags=ACK, seq=999, ack=5001),
        ])
        assert count_keepalives(s) == 1


class TestInvariances:
    @pytest.mark.parametrize("seed", range(5))
    def test_time_shift(self, seed):
        s = random_session(np.random.default_rng(seed), 40)
        assert extract_session(_rescale(s, shift=1000.0)).values == pytest.approx(extract_session(s).values, rel=1e-6, abs=1e-6)

    @pytest.mark.parametrize("seed", range(5))
    def test_doubling_sizes(self, seed):
        s = random_session(np.random.default_rng(seed), 40)
        base, doubled = extract_session(s), extract_session(_rescale(s, size_factor=2))
        for name in base.names:
            if name == "pkt_size_var":
                assert doubled[name] == pytest.approx(4 * base[name])
            elif "bytes" in name or "pkt_size" in name or "throughput" in name:
                assert doubled[name] == pytest.approx(2 * base[name]), name
            elif "packets" in name or "bursts" in name or "iat" in name:
                assert doubled[name] == base[name], name
