"""Transport and demo harness tests."""

import threading

import pytest

from coapsec.edhoc import TransportError
from coapsec.harness.demo import (
    EdhocDemoResult,
    parse_mode,
    run_combined_demo,
    run_edhoc_demo,
    run_edhoc_endpoint,
    run_edhoc_matrix,
    run_oscore_demo,
)
from coapsec.harness.fixtures import (
    coap_request_fixture,
    coap_response_fixture,
    oscore_context_pair,
)
from coapsec.harness.transports import InMemoryLink, RecordingChannel, UdpChannel


class TestTransports:
    def test_inmemory_delivery_order(self):
        link = InMemoryLink()
        a, b = link.endpoint_a(), link.endpoint_b()
        a.tx(b"one")
        a.tx(b"two")
        assert b.rx() == b"one"
        assert b.rx() == b"two"
        b.tx(b"reply")
        assert a.rx() == b"reply"

    def test_inmemory_timeout(self):
        link = InMemoryLink(timeout_ms=30)
        with pytest.raises(TransportError):
            link.endpoint_a().rx()

    def test_udp_pair(self):
        with UdpChannel(("127.0.0.1", 0), timeout_ms=2000) as server:
            with UdpChannel(("127.0.0.1", 0), peer=server.address, timeout_ms=2000) as client:
                client.tx(b"ping")
                assert server.rx() == b"ping"
                server.tx(b"pong")  # peer learned from first datagram
                assert client.rx() == b"pong"

    def test_udp_timeout(self):
        with UdpChannel(("127.0.0.1", 0), timeout_ms=30) as channel:
            with pytest.raises(TransportError):
                channel.rx()

    def test_udp_tx_without_peer(self):
        with UdpChannel(("127.0.0.1", 0)) as channel:
            with pytest.raises(TransportError):
                channel.tx(b"x")

    def test_recording_channel(self):
        link = InMemoryLink()
        rec = RecordingChannel(link.endpoint_a())
        rec.tx(b"hello")
        assert rec.sent == [b"hello"]
        link.endpoint_b().tx(b"back")
        assert rec.rx() == b"back"
        assert rec.received == [b"back"]


class TestFixtures:
    def test_fixture_lengths(self):
        assert len(coap_request_fixture()) == 24
        assert len(coap_response_fixture()) == 24

    def test_context_pair_mirrors(self):
        client, server = oscore_context_pair()
        assert client.sender.sender_id == server.recipient.recipient_id
        assert client.recipient.recipient_id == server.sender.sender_id


class TestEdhocDemo:
    def test_single_mode(self):
        result = run_edhoc_demo("static-dh-rpk", seed=1)
        assert result.complete and result.exporter_match
        assert (result.msg1_len, result.msg2_len, result.msg3_len) == (37, 52, 18)
        assert result.reference == (37, 46, 20)
        assert result.deviation_pct is not None

    def test_seed_determinism(self):
        a = run_edhoc_demo("sig-cert", seed=42)
        b = run_edhoc_demo("sig-cert", seed=42)
        assert a.transcript_sha256 == b.transcript_sha256
        c = run_edhoc_demo("sig-cert", seed=43)
        assert c.transcript_sha256 != a.transcript_sha256

    def test_udp_and_mem_identical_bytes(self):
        mem = run_edhoc_demo("sig-rpk", transport="mem", seed=5)
        udp = run_edhoc_demo("sig-rpk", transport="udp", seed=5)
        assert mem.complete and udp.complete
        assert mem.transcript_sha256 == udp.transcript_sha256

    def test_matrix_all_complete(self):
        rows = run_edhoc_matrix(seed=1)
        assert len(rows) == 16
        assert all(r.complete and r.exporter_match for r in rows)
        assert all(r.msg1_len == 37 for r in rows)

    def test_tamper_fails_with_error(self):
        result = run_edhoc_demo("static-dh-rpk", tamper="msg2", seed=1)
        assert not result.complete
        assert result.error

    def test_parse_mode_full_form(self):
        method = parse_mode("i:sig-rpk/r:static-dh-cert")
        result = run_edhoc_demo(method, seed=1)
        assert result.complete
        assert result.reference is None

    def test_split_role_endpoints_over_udp(self):
        results: dict[str, EdhocDemoResult] = {}
        listening = threading.Event()
        address = {}

        def on_listening(addr):
            address["addr"] = addr
            listening.set()

        def responder():
            results["r"] = run_edhoc_endpoint(
                "responder", "sig-rpk", seed=3, listen=("127.0.0.1", 0),
                on_listening=on_listening,
            )

        thread = threading.Thread(target=responder)
        thread.start()
        assert listening.wait(timeout=5)
        results["i"] = run_edhoc_endpoint(
            "initiator", "sig-rpk", seed=3, connect=address["addr"]
        )
        thread.join()
        assert results["i"].complete and results["r"].complete
        assert results["i"].th_hex == results["r"].th_hex
        assert results["i"].msg2_len == results["r"].msg2_len == 118


class TestOscoreDemo:
    def test_default_roundtrip(self):
        result = run_oscore_demo()
        assert result.ok
        assert result.headline() == "coap=24 oscore=35 roundtrip=ok"
        assert result.request_coap_len == 22
        assert result.request_oscore_len == 35
        assert result.response_coap_len == 24
        assert result.response_oscore_len == 35
        assert result.padded_request_coap_len == 24
        assert result.padded_request_oscore_len == 37

    def test_tamper_tag(self):
        result = run_oscore_demo(tamper="tag")
        assert not result.ok
        assert result.roundtrip == "failed(AuthFailed)"

    def test_replay(self):
        result = run_oscore_demo(replay=True)
        assert result.ok
        assert result.replay_result == "rejected(ReplayDetected)"

    def test_udp_transport(self):
        result = run_oscore_demo(transport="udp")
        assert result.ok


class TestCombinedDemo:
    def test_default_combined(self):
        result = run_combined_demo()
        assert result.ok
        assert result.master_secret_len == 16
        assert result.request_oscore_len == 35
        assert result.response_oscore_len == 35

    def test_combined_all_modes(self):
        from coapsec.edhoc import all_method_combinations

        for method in all_method_combinations():
            result = run_combined_demo(method, seed=2)
            assert result.ok, method.name()

    def test_dropped_message_hits_timeout_path(self):
        # responder never runs: initiator times out waiting for message 2
        from coapsec import crypto
        from coapsec.edhoc import initiator_run
        from coapsec.harness.fixtures import build_initiator

        endpoint = build_initiator(parse_mode("static-dh-rpk"), crypto.DeterministicRng(1))
        link = InMemoryLink(timeout_ms=40)
        chan = link.endpoint_a()
        with pytest.raises(TransportError):
            initiator_run(endpoint.vault, endpoint.params, endpoint.creds, chan.tx, chan.rx)
