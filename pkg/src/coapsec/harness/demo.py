"""Demo scenarios: handshake matrix, protected roundtrip, combined run.

Every run is deterministic under a fixed seed (seeded rng injected into
both vaults), so reported byte sizes are stable across runs, platforms
and transports.
"""

from __future__ import annotations

import hashlib
import threading
import time
from dataclasses import dataclass, field

from .. import crypto
from ..coap import coap_parse
from ..edhoc import (
    Auth,
    AuthMethod,
    CredKind,
    EdhocError,
    ErrorReceived,
    HandshakeResult,
    exporter,
    initiator_run,
    responder_run,
)
from ..oscore import OscoreError, ReplayDetected, Role, coap2oscore, oscore2coap
from . import fixtures
from .transports import Channel, InMemoryLink, RecordingChannel, UdpChannel

MODE_ALIASES: dict[str, AuthMethod] = {
    "static-dh-rpk": AuthMethod(Auth.STATIC_DH, Auth.STATIC_DH, CredKind.RPK, CredKind.RPK),
    "sig-rpk": AuthMethod(Auth.SIGNATURE, Auth.SIGNATURE, CredKind.RPK, CredKind.RPK),
    "static-dh-cert": AuthMethod(
        Auth.STATIC_DH, Auth.STATIC_DH, CredKind.CBOR_CERT, CredKind.CBOR_CERT
    ),
    "sig-cert": AuthMethod(
        Auth.SIGNATURE, Auth.SIGNATURE, CredKind.CBOR_CERT, CredKind.CBOR_CERT
    ),
}

# Reference handshake message sizes in bytes for the four symmetric modes,
# used for deviation reporting.
REFERENCE_MESSAGE_SIZES: dict[str, tuple[int, int, int]] = {
    "static-dh-rpk": (37, 46, 20),
    "sig-rpk": (37, 117, 91),
    "static-dh-cert": (37, 186, 160),
    "sig-cert": (37, 243, 217),
}

_AUTH_BY_NAME = {a.value: a for a in Auth}
_CRED_BY_NAME = {c.value: c for c in CredKind}


def parse_mode(name: str) -> AuthMethod:
    """Resolve a mode alias or a full ``i:<auth>-<cred>/r:<auth>-<cred>`` name."""
    if name in MODE_ALIASES:
        return MODE_ALIASES[name]
    try:
        i_part, r_part = name.split("/")
        i_auth, i_cred = i_part.removeprefix("i:").rsplit("-", 1)
        r_auth, r_cred = r_part.removeprefix("r:").rsplit("-", 1)
        return AuthMethod(
            _AUTH_BY_NAME[i_auth],
            _AUTH_BY_NAME[r_auth],
            _CRED_BY_NAME[i_cred],
            _CRED_BY_NAME[r_cred],
        )
    except (ValueError, KeyError):
        raise EdhocError(
            f"unknown mode {name!r}; use an alias "
            f"({', '.join(MODE_ALIASES)}), 'all', or i:<auth>-<cred>/r:<auth>-<cred>"
        ) from None


def mode_name(method: AuthMethod) -> str:
    for alias, aliased in MODE_ALIASES.items():
        if aliased == method:
            return alias
    return method.name()


def all_mode_names() -> list[str]:
    names = list(MODE_ALIASES)
    for method in _all_methods():
        if mode_name(method) not in names:
            names.append(mode_name(method))
    return names


def _all_methods() -> list[AuthMethod]:
    return [
        AuthMethod(ia, ra, ic, rc)
        for ia in Auth
        for ra in Auth
        for ic in CredKind
        for rc in CredKind
    ]


@dataclass
class EdhocDemoResult:
    """One matrix row: measured sizes against the reference constants."""

    mode: str
    complete: bool
    msg1_len: int | None = None
    msg2_len: int | None = None
    msg3_len: int | None = None
    reference: tuple[int, int, int] | None = None
    deviation_pct: tuple[float, float, float] | None = None
    exporter_match: bool = False
    th_hex: str | None = None
    transcript_sha256: str | None = None
    error: str | None = None
    elapsed_ms: float = 0.0


def _channel_pair(transport: str, timeout_ms: int) -> tuple[Channel, Channel, list]:
    """Initiator and responder channels plus resources to close."""
    if transport == "mem":
        link = InMemoryLink(timeout_ms)
        return link.endpoint_a(), link.endpoint_b(), []
    if transport == "udp":
        responder = UdpChannel(("127.0.0.1", 0), timeout_ms=timeout_ms)
        initiator = UdpChannel(
            ("127.0.0.1", 0), peer=responder.address, timeout_ms=timeout_ms
        )
        return initiator, responder, [initiator, responder]
    raise ValueError(f"unknown transport {transport!r}; use 'mem' or 'udp'")


def _tamper_fn(spec: str | None, sender: str):
    """Byte-flipping tamper for messages in flight.

    spec is msg1 / msg2 / msg3, optionally with :<offset> to pick the
    corrupted byte position inside that message.
    """
    if spec is None:
        return None
    name, _, offset_str = spec.partition(":")
    index_by_sender = {"initiator": {"msg1": 1, "msg3": 2}, "responder": {"msg2": 1}}
    index = index_by_sender[sender].get(name)
    if index is None:
        return None

    def tamper(nth: int, data: bytes) -> bytes:
        if nth != index:
            return data
        offset = int(offset_str) if offset_str else len(data) // 2
        offset %= len(data)
        out = bytearray(data)
        out[offset] ^= 0x01
        return bytes(out)

    return tamper


def run_edhoc_demo(
    mode: str | AuthMethod,
    transport: str = "mem",
    seed: int = 1,
    tamper: str | None = None,
    timeout_ms: int = 2000,
) -> EdhocDemoResult:
    """Run one full handshake and report per-message byte sizes."""
    method = parse_mode(mode) if isinstance(mode, str) else mode
    name = mode_name(method)
    result = EdhocDemoResult(mode=name, complete=False)
    result.reference = REFERENCE_MESSAGE_SIZES.get(name)

    initiator = fixtures.build_initiator(method, crypto.DeterministicRng(2 * seed))
    responder = fixtures.build_responder(method, crypto.DeterministicRng(2 * seed + 1))
    chan_i, chan_r, resources = _channel_pair(transport, timeout_ms)
    rec_i = RecordingChannel(chan_i, _tamper_fn(tamper, "initiator"))
    rec_r = RecordingChannel(chan_r, _tamper_fn(tamper, "responder"))

    outcome: dict[str, object] = {}

    def run_responder():
        try:
            outcome["responder"] = responder_run(
                responder.vault, responder.params, responder.creds, rec_r.tx, rec_r.rx
            )
        except Exception as exc:
            outcome["responder_error"] = exc

    start = time.perf_counter()
    thread = threading.Thread(target=run_responder)
    thread.start()
    try:
        outcome["initiator"] = initiator_run(
            initiator.vault, initiator.params, initiator.creds, rec_i.tx, rec_i.rx
        )
    except Exception as exc:
        outcome["initiator_error"] = exc
    thread.join()
    result.elapsed_ms = (time.perf_counter() - start) * 1000
    for resource in resources:
        resource.close()

    if rec_i.sent:
        result.msg1_len = len(rec_i.sent[0])
    if rec_r.sent:
        result.msg2_len = len(rec_r.sent[0])
    if len(rec_i.sent) > 1:
        result.msg3_len = len(rec_i.sent[1])
    transcript = b"".join(rec_i.sent[:1] + rec_r.sent[:1] + rec_i.sent[1:2])
    result.transcript_sha256 = hashlib.sha256(transcript).hexdigest()

    res_i, res_r = outcome.get("initiator"), outcome.get("responder")
    errors = [
        str(outcome[k]) for k in ("initiator_error", "responder_error") if k in outcome
    ]
    for res, side in ((res_i, "initiator"), (res_r, "responder")):
        if isinstance(res, ErrorReceived):
            errors.append(f"{side} received error: {res.message.diagnostic}")
    if errors:
        result.error = "; ".join(errors)
        return result

    if isinstance(res_i, HandshakeResult) and isinstance(res_r, HandshakeResult):
        result.complete = True
        result.th_hex = res_i.th.hex()
        out_i = exporter(initiator.vault, res_i, "OSCORE_Master_Secret", b"", 16)
        out_r = exporter(responder.vault, res_r, "OSCORE_Master_Secret", b"", 16)
        result.exporter_match = out_i == out_r and res_i.th == res_r.th
        if result.reference and all(
            s is not None for s in (result.msg1_len, result.msg2_len, result.msg3_len)
        ):
            measured = (result.msg1_len, result.msg2_len, result.msg3_len)
            result.deviation_pct = tuple(
                round(100.0 * (m - r) / r, 2) for m, r in zip(measured, result.reference)
            )
    return result


def run_edhoc_matrix(
    transport: str = "mem", seed: int = 1, timeout_ms: int = 2000
) -> list[EdhocDemoResult]:
    return [
        run_edhoc_demo(method, transport, seed, timeout_ms=timeout_ms)
        for method in _all_methods()
    ]


@dataclass
class OscoreDemoResult:
    """Message roundtrip report with the published size targets."""

    request_coap_len: int = 0
    request_oscore_len: int = 0
    response_coap_len: int = 0
    response_oscore_len: int = 0
    padded_request_coap_len: int = 0
    padded_request_oscore_len: int = 0
    roundtrip: str = "not-run"
    replay_result: str | None = None
    elapsed_ms: float = 0.0

    @property
    def ok(self) -> bool:
        return self.roundtrip == "ok"

    def headline(self) -> str:
        return (
            f"coap={self.response_coap_len} oscore={self.response_oscore_len} "
            f"roundtrip={self.roundtrip}"
        )


def run_oscore_demo(
    transport: str = "mem",
    tamper: str | None = None,
    replay: bool = False,
    timeout_ms: int = 2000,
) -> OscoreDemoResult:
    """Protect a request, serve it, protect the response, verify it back.

    Mirrors a server-side roundtrip: the 22-byte published request
    protects to 35 bytes (bit-exact against its published form) and the
    24-byte response fixture protects to 35 bytes. The 24-byte request
    fixture is also protected and reported; its protected form is 37
    bytes since protection adds at least 13 bytes to any request.
    """
    result = OscoreDemoResult()
    start = time.perf_counter()
    client, server = fixtures.oscore_context_pair()
    client.sender.sequence_number = fixtures.DEMO_REQUEST_SEQUENCE
    chan_c, chan_s, resources = _channel_pair(transport, timeout_ms)

    request_plain = fixtures.DEMO_REQUEST_PLAIN
    result.request_coap_len = len(request_plain)
    protected_request = coap2oscore(request_plain, Role.CLIENT, client)
    result.request_oscore_len = len(protected_request)

    padded = fixtures.coap_request_fixture()
    result.padded_request_coap_len = len(padded)
    padded_client, _ = fixtures.oscore_context_pair()
    result.padded_request_oscore_len = len(
        coap2oscore(padded, Role.CLIENT, padded_client)
    )

    if tamper == "tag":
        broken = bytearray(protected_request)
        broken[-1] ^= 0x01
        protected_request = bytes(broken)

    try:
        chan_c.tx(protected_request)
        delivered = chan_s.rx()
        unprotected = oscore2coap(delivered, Role.SERVER, server)
        if unprotected.coap != request_plain:
            raise OscoreError("recovered request does not match the original")

        if replay:
            chan_c.tx(delivered)
            try:
                oscore2coap(chan_s.rx(), Role.SERVER, server)
                result.replay_result = "accepted"
            except ReplayDetected:
                result.replay_result = "rejected(ReplayDetected)"

        response_plain = fixtures.coap_response_fixture()
        result.response_coap_len = len(response_plain)
        protected_response = coap2oscore(response_plain, Role.SERVER, server)
        result.response_oscore_len = len(protected_response)
        chan_s.tx(protected_response)
        recovered = oscore2coap(chan_c.rx(), Role.CLIENT, client)
        if recovered.coap != response_plain:
            raise OscoreError("recovered response does not match the original")
        coap_parse(recovered.coap)
        result.roundtrip = "ok"
    except Exception as exc:
        result.roundtrip = f"failed({type(exc).__name__})"
    finally:
        for resource in resources:
            resource.close()
    result.elapsed_ms = (time.perf_counter() - start) * 1000
    return result


@dataclass
class CombinedDemoResult:
    """Handshake chained into a protected message roundtrip."""

    edhoc: EdhocDemoResult = field(default_factory=lambda: EdhocDemoResult("", False))
    master_secret_len: int = 0
    request_oscore_len: int = 0
    response_oscore_len: int = 0
    roundtrip: str = "not-run"
    elapsed_ms: float = 0.0

    @property
    def ok(self) -> bool:
        return self.edhoc.complete and self.roundtrip == "ok"


def run_combined_demo(
    mode: str | AuthMethod = "static-dh-rpk",
    transport: str = "mem",
    seed: int = 1,
    timeout_ms: int = 2000,
) -> CombinedDemoResult:
    """Handshake, then feed the exporter output into message protection."""
    from ..vault import ContextKind, KeyKind, KeyRef

    method = parse_mode(mode) if isinstance(mode, str) else mode
    result = CombinedDemoResult()
    start = time.perf_counter()

    initiator = fixtures.build_initiator(method, crypto.DeterministicRng(2 * seed))
    responder = fixtures.build_responder(method, crypto.DeterministicRng(2 * seed + 1))
    chan_i, chan_r, resources = _channel_pair(transport, timeout_ms)
    rec_i, rec_r = RecordingChannel(chan_i), RecordingChannel(chan_r)

    outcome: dict[str, object] = {}

    def run_responder():
        try:
            outcome["responder"] = responder_run(
                responder.vault, responder.params, responder.creds, rec_r.tx, rec_r.rx
            )
        except Exception as exc:
            outcome["responder_error"] = exc

    thread = threading.Thread(target=run_responder)
    thread.start()
    try:
        outcome["initiator"] = initiator_run(
            initiator.vault, initiator.params, initiator.creds, rec_i.tx, rec_i.rx
        )
    except Exception as exc:
        outcome["initiator_error"] = exc
    thread.join()

    result.edhoc = EdhocDemoResult(mode=mode_name(method), complete=False)
    res_i, res_r = outcome.get("initiator"), outcome.get("responder")
    if not (isinstance(res_i, HandshakeResult) and isinstance(res_r, HandshakeResult)):
        errs = [str(outcome.get(k)) for k in ("initiator_error", "responder_error")
                if outcome.get(k)]
        result.edhoc.error = "; ".join(errs) or "handshake did not complete"
        result.roundtrip = "failed(handshake)"
        for resource in resources:
            resource.close()
        result.elapsed_ms = (time.perf_counter() - start) * 1000
        return result

    result.edhoc.complete = True
    result.edhoc.th_hex = res_i.th.hex()
    if rec_i.sent and rec_r.sent:
        result.edhoc.msg1_len = len(rec_i.sent[0])
        result.edhoc.msg2_len = len(rec_r.sent[0])
        result.edhoc.msg3_len = len(rec_i.sent[1]) if len(rec_i.sent) > 1 else None

    # exporter feeds the protection layer on each side independently
    from ..oscore import oscore_init

    contexts = []
    for endpoint, res, sender_id, recipient_id in (
        (initiator, res_i, fixtures.CLIENT_SENDER_ID, fixtures.SERVER_SENDER_ID),
        (responder, res_r, fixtures.SERVER_SENDER_ID, fixtures.CLIENT_SENDER_ID),
    ):
        master = exporter(endpoint.vault, res, "OSCORE_Master_Secret", b"", 16)
        salt = exporter(endpoint.vault, res, "OSCORE_Master_Salt", b"", 8)
        result.master_secret_len = len(master)
        ctx_id = endpoint.vault.provision(
            ContextKind.OSCORE, [(50, KeyKind.MASTER_SECRET, master)]
        )
        contexts.append(
            oscore_init(
                endpoint.vault, KeyRef(ctx_id, 50), salt, b"", sender_id, recipient_id
            )
        )
    result.edhoc.exporter_match = True
    client_ctx, server_ctx = contexts

    try:
        request = fixtures.DEMO_REQUEST_PLAIN
        protected = coap2oscore(request, Role.CLIENT, client_ctx)
        result.request_oscore_len = len(protected)
        rec_i.tx(protected)
        served = oscore2coap(rec_r.rx(), Role.SERVER, server_ctx)
        if served.coap != request:
            raise OscoreError("request mismatch after combined unprotect")
        response = fixtures.coap_response_fixture()
        protected_response = coap2oscore(response, Role.SERVER, server_ctx)
        result.response_oscore_len = len(protected_response)
        rec_r.tx(protected_response)
        recovered = oscore2coap(rec_i.rx(), Role.CLIENT, client_ctx)
        if recovered.coap != response:
            raise OscoreError("response mismatch after combined unprotect")
        result.roundtrip = "ok"
    except Exception as exc:
        result.roundtrip = f"failed({type(exc).__name__})"
    finally:
        for resource in resources:
            resource.close()
    result.elapsed_ms = (time.perf_counter() - start) * 1000
    return result


def run_edhoc_endpoint(
    role: str,
    mode: str | AuthMethod = "static-dh-rpk",
    seed: int = 1,
    listen: tuple[str, int] | None = None,
    connect: tuple[str, int] | None = None,
    timeout_ms: int = 10000,
    on_listening=None,
) -> EdhocDemoResult:
    """Run a single handshake role over real UDP (for split-process runs)."""
    method = parse_mode(mode) if isinstance(mode, str) else mode
    result = EdhocDemoResult(mode=mode_name(method), complete=False)
    if role == "responder":
        if listen is None:
            raise ValueError("responder needs a listen address")
        channel = UdpChannel(listen, timeout_ms=timeout_ms)
        if on_listening is not None:
            on_listening(channel.address)
        endpoint = fixtures.build_responder(method, crypto.DeterministicRng(2 * seed + 1))
        run = responder_run
    elif role == "initiator":
        if connect is None:
            raise ValueError("initiator needs a peer address")
        channel = UdpChannel(("0.0.0.0", 0), peer=connect, timeout_ms=timeout_ms)
        endpoint = fixtures.build_initiator(method, crypto.DeterministicRng(2 * seed))
        run = initiator_run
    else:
        raise ValueError("role must be initiator or responder")

    recorder = RecordingChannel(channel)
    start = time.perf_counter()
    try:
        res = run(endpoint.vault, endpoint.params, endpoint.creds, recorder.tx, recorder.rx)
        if isinstance(res, HandshakeResult):
            result.complete = True
            result.th_hex = res.th.hex()
        else:
            result.error = f"received error: {res.message.diagnostic}"
    except Exception as exc:
        result.error = str(exc)
    finally:
        channel.close()
    result.elapsed_ms = (time.perf_counter() - start) * 1000
    sent, received = recorder.sent, recorder.received
    if role == "initiator":
        result.msg1_len = len(sent[0]) if sent else None
        result.msg2_len = len(received[0]) if received else None
        result.msg3_len = len(sent[1]) if len(sent) > 1 else None
    else:
        result.msg1_len = len(received[0]) if received else None
        result.msg2_len = len(sent[0]) if sent else None
        result.msg3_len = len(received[1]) if len(received) > 1 else None
    result.reference = REFERENCE_MESSAGE_SIZES.get(result.mode)
    return result
