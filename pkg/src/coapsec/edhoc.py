"""Authenticated ephemeral Diffie-Hellman key exchange (EDHOC style).

Three messages between an initiator and a responder, SIGMA-I shaped:

* message 1: method id, cipher suite id, ephemeral public key G_X and
  the initiator connection id (one CBOR sequence, 37 bytes).
* message 2: one byte string bundling G_Y with an AEAD ciphertext that
  carries ID_CRED_R, the responder's signature (signature modes only)
  and an 8-byte MAC; then the responder connection id.
* message 3: one byte string with the mirrored ciphertext for the
  initiator credential.

Each side authenticates with a long-term signature key or a static DH
key, identified by a raw-public-key kid or a CBOR certificate, giving
sixteen method/credential combinations. Static-DH authentication folds
the long-term key into the PRK chain; the transmitted MAC then proves
possession, so no signature is sent.

All secrets live in the vault. Every authenticity check (the two
message ciphertexts, the MACs, the signatures) runs inside the vault
gateway, whose failure path erases the session's intermediate keys.
The runners additionally wipe the session on decode or credential
failures, so any tampered message 2 or 3 ends the protocol for good.

Key schedule (labels are fixed constants of this implementation; the
acceptance bar is agreement between the two sides, not interop with
other stacks):

    TH_1 = H(message_1)            TH_2 = H(TH_1 | G_Y | C_R)
    TH_3 = H(TH_2 | CIPHERTEXT_2)  TH_4 = H(TH_3 | CIPHERTEXT_3)
    PRK_2E   = HKDF-Extract(TH_2, G_XY)
    PRK_3E2M = HKDF-Extract(PRK_2E, G_RX)   if responder static DH else PRK_2E
    PRK_4X3M = HKDF-Extract(PRK_3E2M, G_IY) if initiator static DH else PRK_3E2M
    K_2/IV_2 from PRK_2E, K_2m/IV_2m from PRK_3E2M (message 2)
    K_3/IV_3 from PRK_3E2M, K_3m/IV_3m from PRK_4X3M (message 3)
    PRK_OUT  = HKDF-Expand(PRK_4X3M, "PRK_out" | TH_4, 32)

The exporter interface expands PRK_OUT with a caller label and context,
e.g. to produce an OSCORE master secret.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

from . import crypto
from .cbor import CborError, cbor_decode, cbor_encode
from .certs import CertificateError, decode_certificate, tbs_bytes
from .vault import (
    AeadDirection,
    AuthFailedWiped,
    ContextKind,
    KeyKind,
    KeyRef,
    Vault,
)

CIPHER_SUITE = 0
MAX_CONNECTION_ID = 23
MAC_LEN = crypto.AEAD_TAG_LEN
MESSAGE_1_LEN = 37

# Vault key ids for per-session material
KID_EPHEMERAL = 100
KID_G_XY = 101
KID_G_RX = 102
KID_G_IY = 103
KID_PRK_2E = 104
KID_PRK_3E2M = 105
KID_PRK_4X3M = 106
KID_K2 = 107
KID_K2M = 108
KID_K3 = 109
KID_K3M = 110
KID_PRK_OUT = 111


class EdhocError(Exception):
    """Base class for handshake errors."""


class DecodeError(EdhocError):
    pass


class WrongState(EdhocError):
    pass


class CredentialUnknown(EdhocError):
    pass


class CertExpired(EdhocError):
    pass


class CertSignatureInvalid(EdhocError):
    pass


class TransportError(EdhocError):
    """tx/rx callback failure, including receive timeouts."""


class Auth(Enum):
    SIGNATURE = "sig"
    STATIC_DH = "static-dh"


class CredKind(Enum):
    RPK = "rpk"
    CBOR_CERT = "cert"


class EdhocRole(Enum):
    INITIATOR = "initiator"
    RESPONDER = "responder"


_METHOD_IDS = {
    (Auth.SIGNATURE, Auth.SIGNATURE): 0,
    (Auth.SIGNATURE, Auth.STATIC_DH): 1,
    (Auth.STATIC_DH, Auth.SIGNATURE): 2,
    (Auth.STATIC_DH, Auth.STATIC_DH): 3,
}


@dataclass(frozen=True)
class AuthMethod:
    """One of the sixteen initiator/responder auth and credential combinations."""

    initiator_auth: Auth
    responder_auth: Auth
    initiator_cred: CredKind
    responder_cred: CredKind

    @property
    def method_id(self) -> int:
        return _METHOD_IDS[(self.initiator_auth, self.responder_auth)]

    def name(self) -> str:
        return (
            f"i:{self.initiator_auth.value}-{self.initiator_cred.value}/"
            f"r:{self.responder_auth.value}-{self.responder_cred.value}"
        )


def all_method_combinations() -> list[AuthMethod]:
    return [
        AuthMethod(ia, ra, ic, rc)
        for ia in Auth
        for ra in Auth
        for ic in CredKind
        for rc in CredKind
    ]


@dataclass(frozen=True)
class OwnCredential:
    """What an endpoint presents about itself."""

    kind: CredKind
    public_bytes: bytes
    kid: int | None = None
    cert: bytes | None = None

    def id_cred_encoded(self) -> bytes:
        if self.kind == CredKind.RPK:
            if self.kid is None:
                raise EdhocError("RPK credential needs a kid")
            return cbor_encode(self.kid)
        if self.cert is None:
            raise EdhocError("certificate credential needs cert bytes")
        return cbor_encode(self.cert)

    def cred_bytes(self) -> bytes:
        return self.public_bytes if self.kind == CredKind.RPK else self.cert


@dataclass
class CredentialSet:
    """Trusted peer material: RPKs by kid plus CA roots by issuer id.

    Public key bytes are kept alongside the vault references because DH
    derivation takes the peer public key as a byte parameter; the vault
    copies are the pinned keys signature verification runs against.
    """

    rpks: dict[int, tuple[KeyRef, bytes]] = field(default_factory=dict)
    ca_roots: dict[bytes, KeyRef] = field(default_factory=dict)

    def is_empty(self) -> bool:
        return not self.rpks and not self.ca_roots


@dataclass(frozen=True)
class EndpointParams:
    role: EdhocRole
    method: AuthMethod
    auth_key: KeyRef
    own_credential: OwnCredential
    connection_id: int

    def __post_init__(self):
        if not 0 <= self.connection_id <= MAX_CONNECTION_ID:
            raise EdhocError(
                f"connection id must be 0..{MAX_CONNECTION_ID} (one CBOR byte)"
            )


# -- message codecs ---------------------------------------------------------


@dataclass(frozen=True)
class Message1:
    method_id: int
    suite: int
    g_x: bytes
    c_i: int


@dataclass(frozen=True)
class Message2:
    g_y: bytes
    ciphertext: bytes
    c_r: int


@dataclass(frozen=True)
class Message3:
    ciphertext: bytes


@dataclass(frozen=True)
class ErrorMessage:
    code: int
    diagnostic: str


@dataclass(frozen=True)
class ErrorReceived:
    """Peer aborted: returned by the runners instead of a result."""

    message: ErrorMessage


def encode_message1(msg: Message1) -> bytes:
    return (
        cbor_encode(msg.method_id)
        + cbor_encode(msg.suite)
        + cbor_encode(msg.g_x)
        + cbor_encode(msg.c_i)
    )


def decode_message1(data: bytes) -> Message1:
    try:
        method_id, offset = cbor_decode(data)
        suite, offset = cbor_decode(data, offset)
        g_x, offset = cbor_decode(data, offset)
        c_i, offset = cbor_decode(data, offset)
    except CborError as exc:
        raise DecodeError(f"message 1: {exc}") from None
    if offset != len(data):
        raise DecodeError("message 1: trailing bytes")
    if not isinstance(method_id, int) or method_id not in (0, 1, 2, 3):
        raise DecodeError("message 1: bad method id")
    if not isinstance(suite, int):
        raise DecodeError("message 1: bad suite")
    if not isinstance(g_x, bytes) or len(g_x) != crypto.DH_KEY_LEN:
        raise DecodeError("message 1: G_X must be 32 bytes")
    if not isinstance(c_i, int) or not 0 <= c_i <= MAX_CONNECTION_ID:
        raise DecodeError("message 1: bad connection id")
    return Message1(method_id, suite, g_x, c_i)


def encode_message2(msg: Message2) -> bytes:
    return cbor_encode(msg.g_y + msg.ciphertext) + cbor_encode(msg.c_r)


def decode_message2(data: bytes) -> Message2:
    try:
        bundle, offset = cbor_decode(data)
        c_r, offset = cbor_decode(data, offset)
    except CborError as exc:
        raise DecodeError(f"message 2: {exc}") from None
    if offset != len(data):
        raise DecodeError("message 2: trailing bytes")
    if not isinstance(bundle, bytes) or len(bundle) < crypto.DH_KEY_LEN + MAC_LEN:
        raise DecodeError("message 2: bundle too short")
    if not isinstance(c_r, int) or not 0 <= c_r <= MAX_CONNECTION_ID:
        raise DecodeError("message 2: bad connection id")
    return Message2(bundle[: crypto.DH_KEY_LEN], bundle[crypto.DH_KEY_LEN :], c_r)


def encode_message3(msg: Message3) -> bytes:
    return cbor_encode(msg.ciphertext)


def decode_message3(data: bytes) -> Message3:
    try:
        ciphertext, offset = cbor_decode(data)
    except CborError as exc:
        raise DecodeError(f"message 3: {exc}") from None
    if offset != len(data):
        raise DecodeError("message 3: trailing bytes")
    if not isinstance(ciphertext, bytes) or len(ciphertext) < MAC_LEN:
        raise DecodeError("message 3: ciphertext too short")
    return Message3(ciphertext)


def encode_error(diagnostic: str, code: int = 1) -> bytes:
    return cbor_encode([code, diagnostic])


def decode_error(data: bytes) -> ErrorMessage:
    try:
        items, offset = cbor_decode(data)
    except CborError as exc:
        raise DecodeError(f"error message: {exc}") from None
    if (
        offset != len(data)
        or not isinstance(items, list)
        or len(items) != 2
        or not isinstance(items[0], int)
        or not isinstance(items[1], str)
    ):
        raise DecodeError("error message: expected [code, diagnostic]")
    return ErrorMessage(items[0], items[1])


def is_error_message(data: bytes) -> bool:
    return bool(data) and data[0] == 0x82  # two-element CBOR array head


# -- session state ----------------------------------------------------------


class SessionState(Enum):
    START = "start"
    WAIT_MSG2 = "wait_msg2"
    WAIT_MSG3 = "wait_msg3"
    COMPLETE = "complete"
    FAILED = "failed"


class KeyScheduleStep(Enum):
    PRK_2E = "prk_2e"
    PRK_3E2M = "prk_3e2m"
    PRK_4X3M = "prk_4x3m"
    PRK_OUT = "prk_out"


@dataclass
class EdhocSession:
    role: EdhocRole
    method: AuthMethod
    vault: Vault
    params: EndpointParams
    creds: CredentialSet
    state: SessionState = SessionState.START
    c_i: int | None = None
    c_r: int | None = None
    g_x: bytes | None = None
    g_y: bytes | None = None
    ephemeral: KeyRef | None = None
    transcript_hash: bytes | None = None  # running TH
    th4: bytes | None = None
    g_xy: KeyRef | None = None
    g_rx: KeyRef | None = None
    g_iy: KeyRef | None = None
    prk_2e: KeyRef | None = None
    prk_3e2m: KeyRef | None = None
    prk_4x3m: KeyRef | None = None
    prk_out: KeyRef | None = None


@dataclass(frozen=True)
class HandshakeResult:
    """Session-result key reference plus the public final transcript hash."""

    prk: KeyRef
    th: bytes


def _expand_info(label: str, context: bytes, length: int) -> bytes:
    return cbor_encode(label) + cbor_encode(context) + cbor_encode(length)


def key_schedule_step(session: EdhocSession, step: KeyScheduleStep) -> None:
    """Advance the PRK chain one step; raises WrongState out of order."""
    vault = session.vault
    if step == KeyScheduleStep.PRK_2E:
        if session.g_xy is None or session.transcript_hash is None:
            raise WrongState("PRK_2E needs the ephemeral DH secret and TH_2")
        session.prk_2e = vault.hkdf_extract(
            session.transcript_hash, session.g_xy, KID_PRK_2E
        )
    elif step == KeyScheduleStep.PRK_3E2M:
        if session.prk_2e is None:
            raise WrongState("PRK_3E2M needs PRK_2E")
        if session.method.responder_auth == Auth.STATIC_DH:
            if session.g_rx is None:
                raise WrongState("PRK_3E2M needs the responder static DH secret")
            session.prk_3e2m = vault.hkdf_extract(
                session.prk_2e, session.g_rx, KID_PRK_3E2M
            )
        else:
            session.prk_3e2m = session.prk_2e
    elif step == KeyScheduleStep.PRK_4X3M:
        if session.prk_3e2m is None:
            raise WrongState("PRK_4X3M needs PRK_3E2M")
        if session.method.initiator_auth == Auth.STATIC_DH:
            if session.g_iy is None:
                raise WrongState("PRK_4X3M needs the initiator static DH secret")
            session.prk_4x3m = vault.hkdf_extract(
                session.prk_3e2m, session.g_iy, KID_PRK_4X3M
            )
        else:
            session.prk_4x3m = session.prk_3e2m
    elif step == KeyScheduleStep.PRK_OUT:
        if session.prk_4x3m is None or session.th4 is None:
            raise WrongState("PRK_OUT needs PRK_4X3M and TH_4")
        session.prk_out = vault.hkdf_expand(
            session.prk_4x3m,
            _expand_info("PRK_out", session.th4, crypto.HASH_LEN),
            crypto.HASH_LEN,
            KID_PRK_OUT,
            KeyKind.SESSION_RESULT,
        )


def exporter(
    vault: Vault, result: HandshakeResult, label: str, context: bytes, length: int
) -> bytes:
    """Derive application key material from a completed handshake."""
    if not 1 <= length <= 255:
        raise crypto.BadLength("exporter length must be 1..255")
    okm = vault.hkdf_expand(result.prk, _expand_info(label, context, length), length)
    assert isinstance(okm, bytes)
    return okm


def validate_credential(
    vault: Vault,
    creds: CredentialSet,
    id_cred: int | bytes,
    now: int | None = None,
) -> tuple[KeyRef, bytes, bytes]:
    """Authenticate a presented credential against the trusted set.

    Returns (vault ref of the peer public key, credential bytes for MAC
    content, peer public key bytes). An int is an RPK kid, bytes are a
    certificate by value validated under a provisioned CA root.
    """
    if isinstance(id_cred, int):
        entry = creds.rpks.get(id_cred)
        if entry is None:
            raise CredentialUnknown(f"no raw public key with kid {id_cred}")
        ref, public = entry
        return ref, public, public
    if isinstance(id_cred, bytes):
        try:
            fields, signature = decode_certificate(id_cred)
        except CertificateError as exc:
            raise DecodeError(str(exc)) from None
        ca_ref = creds.ca_roots.get(fields.issuer_id)
        if ca_ref is None:
            raise CredentialUnknown(
                f"no CA root for issuer {fields.issuer_id.hex()}"
            )
        if not vault.asymm_verify(ca_ref, tbs_bytes(fields), signature):
            raise CertSignatureInvalid("certificate signature does not verify")
        at = int(time.time()) if now is None else now
        if not fields.not_before <= at <= fields.not_after:
            raise CertExpired(
                f"certificate valid {fields.not_before}..{fields.not_after}, now {at}"
            )
        peer_ctx = vault.provision(
            ContextKind.PEER, [(1, KeyKind.PEER_PUBLIC, fields.subject_public_key)]
        )
        return KeyRef(peer_ctx, 1), id_cred, fields.subject_public_key
    raise DecodeError("credential identifier must be an int kid or cert bytes")


# -- internal helpers -------------------------------------------------------


def _mac_content(th: bytes, cred: bytes, id_cred_encoded: bytes) -> bytes:
    return cbor_encode(th) + cbor_encode(cred) + id_cred_encoded


def _sig_content(label: str, th: bytes, cred: bytes, id_cred: bytes, mac: bytes) -> bytes:
    return cbor_encode(label) + _mac_content(th, cred, id_cred) + cbor_encode(mac)


def _derive_pair(
    vault: Vault, prk: KeyRef, key_label: str, iv_label: str, th: bytes, key_id: int
) -> tuple[KeyRef, bytes]:
    key_ref = vault.hkdf_expand(
        prk, _expand_info(key_label, th, crypto.AEAD_KEY_LEN), crypto.AEAD_KEY_LEN, key_id
    )
    iv = vault.hkdf_expand(
        prk, _expand_info(iv_label, th, crypto.AEAD_NONCE_LEN), crypto.AEAD_NONCE_LEN
    )
    return key_ref, iv


def _parse_inner_plaintext(
    plaintext: bytes, peer_uses_signature: bool
) -> tuple[int | bytes, bytes | None, bytes]:
    """Split a message 2/3 plaintext into (id_cred, signature, mac)."""
    try:
        id_cred, offset = cbor_decode(plaintext)
    except CborError as exc:
        raise DecodeError(f"plaintext: {exc}") from None
    if not isinstance(id_cred, (int, bytes)):
        raise DecodeError("plaintext: bad credential identifier")
    signature = None
    if peer_uses_signature:
        try:
            signature, offset = cbor_decode(plaintext, offset)
        except CborError as exc:
            raise DecodeError(f"plaintext signature: {exc}") from None
        if not isinstance(signature, bytes) or len(signature) != crypto.SIGNATURE_LEN:
            raise DecodeError("plaintext: signature must be 64 bytes")
    mac = plaintext[offset:]
    if len(mac) != MAC_LEN:
        raise DecodeError(f"plaintext: MAC must be {MAC_LEN} bytes")
    return id_cred, signature, mac


class _Runner:
    """Shared handshake mechanics for both roles."""

    def __init__(
        self,
        vault: Vault,
        params: EndpointParams,
        creds: CredentialSet,
        tx: Callable[[bytes], None],
        rx: Callable[[], bytes],
    ):
        if creds.is_empty():
            raise EdhocError("credential set must not be empty")
        self.vault = vault
        self.params = params
        self.tx = tx
        self.rx = rx
        self.session = EdhocSession(
            role=params.role,
            method=params.method,
            vault=vault,
            params=params,
            creds=creds,
        )

    def receive(self) -> bytes:
        try:
            data = self.rx()
        except TransportError:
            raise
        except Exception as exc:
            raise TransportError(f"rx callback failed: {exc}") from exc
        if not data:
            raise TransportError("rx returned no data")
        return data

    def send(self, data: bytes) -> None:
        try:
            self.tx(data)
        except Exception as exc:
            raise TransportError(f"tx callback failed: {exc}") from exc

    def abort(self, diagnostic: str) -> None:
        """Wipe the session and tell the peer, best effort."""
        self.session.state = SessionState.FAILED
        self.vault.wipe_session()
        try:
            self.tx(encode_error(diagnostic))
        except Exception:
            pass

    def hash_th(self, data: bytes) -> bytes:
        return self.vault.hash(data)

    # -- key schedule wrappers ----------------------------------------

    def derive_shared(self, own_ref: KeyRef, peer_public: bytes, out_id: int) -> KeyRef:
        return self.vault.dh_secret_derive(own_ref, peer_public, out_id)

    def message2_keys(self) -> tuple[KeyRef, bytes]:
        return _derive_pair(
            self.vault, self.session.prk_2e, "K_2", "IV_2", self.session.transcript_hash, KID_K2
        )

    def mac2_keys(self) -> tuple[KeyRef, bytes]:
        return _derive_pair(
            self.vault, self.session.prk_3e2m, "K_2m", "IV_2m", self.session.transcript_hash, KID_K2M
        )

    def message3_keys(self, th3: bytes) -> tuple[KeyRef, bytes]:
        return _derive_pair(self.vault, self.session.prk_3e2m, "K_3", "IV_3", th3, KID_K3)

    def mac3_keys(self, th3: bytes) -> tuple[KeyRef, bytes]:
        return _derive_pair(self.vault, self.session.prk_4x3m, "K_3m", "IV_3m", th3, KID_K3M)

    def compute_mac(self, key: KeyRef, iv: bytes, th: bytes, cred: bytes, id_cred: bytes) -> bytes:
        return self.vault.aead(
            key, AeadDirection.SEAL, iv, _mac_content(th, cred, id_cred), b""
        )

    def verify_mac(
        self, key: KeyRef, iv: bytes, th: bytes, cred: bytes, id_cred: bytes, mac: bytes
    ) -> None:
        self.vault.aead(
            key, AeadDirection.OPEN, iv, _mac_content(th, cred, id_cred), mac
        )

    def finish(self, th4: bytes) -> HandshakeResult:
        self.session.th4 = th4
        key_schedule_step(self.session, KeyScheduleStep.PRK_OUT)
        self.session.state = SessionState.COMPLETE
        self.vault.session_end()
        return HandshakeResult(prk=self.session.prk_out, th=th4)


def initiator_run(
    vault: Vault,
    params: EndpointParams,
    creds: CredentialSet,
    tx: Callable[[bytes], None],
    rx: Callable[[], bytes],
) -> HandshakeResult | ErrorReceived:
    """Run the initiator side over the given transport callbacks.

    Returns the handshake result, or ErrorReceived if the peer aborted.
    Local failures wipe the session, send an error message and raise.
    """
    if params.role != EdhocRole.INITIATOR:
        raise EdhocError("params are not for an initiator")
    runner = _Runner(vault, params, creds, tx, rx)
    session = runner.session
    method = params.method
    vault.session_begin(params.auth_key.context_id)

    # message 1
    g_x = vault.generate_ephemeral(KID_EPHEMERAL)
    session.ephemeral = KeyRef(params.auth_key.context_id, KID_EPHEMERAL)
    session.g_x = g_x
    session.c_i = params.connection_id
    msg1 = Message1(method.method_id, CIPHER_SUITE, g_x, params.connection_id)
    msg1_bytes = encode_message1(msg1)
    runner.send(msg1_bytes)
    th1 = runner.hash_th(msg1_bytes)
    session.state = SessionState.WAIT_MSG2

    # message 2
    data = runner.receive()
    if is_error_message(data):
        session.state = SessionState.FAILED
        vault.wipe_session()
        return ErrorReceived(decode_error(data))
    try:
        msg2 = decode_message2(data)
        session.g_y, session.c_r = msg2.g_y, msg2.c_r
        session.transcript_hash = runner.hash_th(
            th1 + msg2.g_y + bytes([msg2.c_r])
        )
        session.g_xy = runner.derive_shared(session.ephemeral, msg2.g_y, KID_G_XY)
        key_schedule_step(session, KeyScheduleStep.PRK_2E)
        k2, iv2 = runner.message2_keys()
        plaintext = vault.aead(
            k2,
            AeadDirection.OPEN,
            iv2,
            cbor_encode("CT2") + session.transcript_hash,
            msg2.ciphertext,
        )
        id_cred, signature, mac2 = _parse_inner_plaintext(
            plaintext, method.responder_auth == Auth.SIGNATURE
        )
        peer_ref, cred_r, peer_public = validate_credential(vault, creds, id_cred)
        id_cred_enc = cbor_encode(id_cred)
        if method.responder_auth == Auth.STATIC_DH:
            session.g_rx = runner.derive_shared(session.ephemeral, peer_public, KID_G_RX)
        key_schedule_step(session, KeyScheduleStep.PRK_3E2M)
        k2m, iv2m = runner.mac2_keys()
        runner.verify_mac(k2m, iv2m, session.transcript_hash, cred_r, id_cred_enc, mac2)
        if method.responder_auth == Auth.SIGNATURE:
            content = _sig_content(
                "Sig2", session.transcript_hash, cred_r, id_cred_enc, mac2
            )
            if not vault.asymm_verify(peer_ref, content, signature):
                raise AuthFailedWiped("message 2 signature verification failed")
    except (AuthFailedWiped, DecodeError, CredentialUnknown, CertExpired,
            CertSignatureInvalid, crypto.CryptoError) as exc:
        runner.abort(f"message 2 rejected: {exc}")
        raise

    # message 3
    th3 = runner.hash_th(session.transcript_hash + msg2.ciphertext)
    session.transcript_hash = th3
    if method.initiator_auth == Auth.STATIC_DH:
        session.g_iy = runner.derive_shared(params.auth_key, session.g_y, KID_G_IY)
    key_schedule_step(session, KeyScheduleStep.PRK_4X3M)
    own = params.own_credential
    id_cred_i = own.id_cred_encoded()
    cred_i = own.cred_bytes()
    k3m, iv3m = runner.mac3_keys(th3)
    mac3 = runner.compute_mac(k3m, iv3m, th3, cred_i, id_cred_i)
    plaintext3 = id_cred_i
    if method.initiator_auth == Auth.SIGNATURE:
        sig3 = vault.asymm_sign(
            params.auth_key, _sig_content("Sig3", th3, cred_i, id_cred_i, mac3)
        )
        plaintext3 += cbor_encode(sig3)
    plaintext3 += mac3
    k3, iv3 = runner.message3_keys(th3)
    ct3 = vault.aead(
        k3, AeadDirection.SEAL, iv3, cbor_encode("CT3") + th3, plaintext3
    )
    runner.send(encode_message3(Message3(ct3)))
    th4 = runner.hash_th(th3 + ct3)
    return runner.finish(th4)


def responder_run(
    vault: Vault,
    params: EndpointParams,
    creds: CredentialSet,
    tx: Callable[[bytes], None],
    rx: Callable[[], bytes],
) -> HandshakeResult | ErrorReceived:
    """Run the responder side over the given transport callbacks."""
    if params.role != EdhocRole.RESPONDER:
        raise EdhocError("params are not for a responder")
    runner = _Runner(vault, params, creds, tx, rx)
    session = runner.session
    method = params.method
    vault.session_begin(params.auth_key.context_id)

    # message 1
    data = runner.receive()
    if is_error_message(data):
        session.state = SessionState.FAILED
        vault.wipe_session()
        return ErrorReceived(decode_error(data))
    try:
        msg1 = decode_message1(data)
        if msg1.suite != CIPHER_SUITE:
            raise DecodeError(f"unsupported cipher suite {msg1.suite}")
        if msg1.method_id != method.method_id:
            raise DecodeError(
                f"method {msg1.method_id} does not match configured {method.method_id}"
            )
    except DecodeError as exc:
        runner.abort(f"message 1 rejected: {exc}")
        raise
    session.g_x, session.c_i = msg1.g_x, msg1.c_i
    th1 = runner.hash_th(data)

    # message 2
    g_y = vault.generate_ephemeral(KID_EPHEMERAL)
    session.ephemeral = KeyRef(params.auth_key.context_id, KID_EPHEMERAL)
    session.g_y = g_y
    session.c_r = params.connection_id
    session.transcript_hash = runner.hash_th(th1 + g_y + bytes([params.connection_id]))
    session.g_xy = runner.derive_shared(session.ephemeral, msg1.g_x, KID_G_XY)
    key_schedule_step(session, KeyScheduleStep.PRK_2E)
    if method.responder_auth == Auth.STATIC_DH:
        session.g_rx = runner.derive_shared(params.auth_key, msg1.g_x, KID_G_RX)
    key_schedule_step(session, KeyScheduleStep.PRK_3E2M)
    own = params.own_credential
    id_cred_r = own.id_cred_encoded()
    cred_r = own.cred_bytes()
    k2m, iv2m = runner.mac2_keys()
    mac2 = runner.compute_mac(k2m, iv2m, session.transcript_hash, cred_r, id_cred_r)
    plaintext2 = id_cred_r
    if method.responder_auth == Auth.SIGNATURE:
        sig2 = vault.asymm_sign(
            params.auth_key,
            _sig_content("Sig2", session.transcript_hash, cred_r, id_cred_r, mac2),
        )
        plaintext2 += cbor_encode(sig2)
    plaintext2 += mac2
    k2, iv2 = runner.message2_keys()
    ct2 = vault.aead(
        k2, AeadDirection.SEAL, iv2, cbor_encode("CT2") + session.transcript_hash, plaintext2
    )
    runner.send(encode_message2(Message2(g_y, ct2, params.connection_id)))
    session.state = SessionState.WAIT_MSG3
    th3 = runner.hash_th(session.transcript_hash + ct2)
    session.transcript_hash = th3

    # message 3
    data = runner.receive()
    if is_error_message(data):
        session.state = SessionState.FAILED
        vault.wipe_session()
        return ErrorReceived(decode_error(data))
    try:
        msg3 = decode_message3(data)
        k3, iv3 = runner.message3_keys(th3)
        plaintext3 = vault.aead(
            k3, AeadDirection.OPEN, iv3, cbor_encode("CT3") + th3, msg3.ciphertext
        )
        id_cred, signature, mac3 = _parse_inner_plaintext(
            plaintext3, method.initiator_auth == Auth.SIGNATURE
        )
        peer_ref, cred_i, peer_public = validate_credential(vault, creds, id_cred)
        id_cred_enc = cbor_encode(id_cred)
        if method.initiator_auth == Auth.STATIC_DH:
            session.g_iy = runner.derive_shared(session.ephemeral, peer_public, KID_G_IY)
        key_schedule_step(session, KeyScheduleStep.PRK_4X3M)
        k3m, iv3m = runner.mac3_keys(th3)
        runner.verify_mac(k3m, iv3m, th3, cred_i, id_cred_enc, mac3)
        if method.initiator_auth == Auth.SIGNATURE:
            content = _sig_content("Sig3", th3, cred_i, id_cred_enc, mac3)
            if not vault.asymm_verify(peer_ref, content, signature):
                raise AuthFailedWiped("message 3 signature verification failed")
    except (AuthFailedWiped, DecodeError, CredentialUnknown, CertExpired,
            CertSignatureInvalid, crypto.CryptoError) as exc:
        runner.abort(f"message 3 rejected: {exc}")
        raise

    th4 = runner.hash_th(th3 + msg3.ciphertext)
    return runner.finish(th4)
