"""Deterministic key, credential and message fixtures.

Long-term keys are derived from fixed labels so every run (and every
platform) provisions identical material; handshake ephemerals come from
a seeded rng injected per run. The certificate profile here serializes
to exactly 135 bytes.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

from .. import crypto
from ..certs import CertificateFields, issue_certificate
from ..coap import CODE_CONTENT, CODE_GET, CoapMessage, CoapOption, MsgType, coap_serialize
from ..edhoc import (
    Auth,
    AuthMethod,
    CredentialSet,
    CredKind,
    EdhocRole,
    EndpointParams,
    OwnCredential,
)
from ..oscore import SecurityContext, oscore_init
from ..vault import ContextKind, KeyKind, KeyRef, Vault


def fixture_secret(label: str) -> bytes:
    return hashlib.sha256(b"fixture-key:" + label.encode()).digest()


CA_SIGNING_SECRET = fixture_secret("ca-root-ed25519")
CA_ROOT_PUBLIC = crypto.sign_public(CA_SIGNING_SECRET)
CA_ISSUER_ID = b"rootca"

CERT_NOT_BEFORE = 1_600_000_000
CERT_NOT_AFTER = 2_500_000_000

# Raw-public-key identifiers (one CBOR byte each)
KID_INITIATOR_SIG = 1
KID_RESPONDER_SIG = 2
KID_INITIATOR_SDH = 3
KID_RESPONDER_SDH = 4

CONNECTION_ID_INITIATOR = 10
CONNECTION_ID_RESPONDER = 20

# Vault key ids for long-term keys in an own context
OWN_SIG_KEY_ID = 1
OWN_SDH_KEY_ID = 2


@dataclass(frozen=True)
class PartyKeys:
    name: str
    sig_secret: bytes
    sdh_secret: bytes

    @property
    def sig_public(self) -> bytes:
        return crypto.sign_public(self.sig_secret)

    @property
    def sdh_public(self) -> bytes:
        return crypto.dh_public(self.sdh_secret)

    def subject_id(self) -> bytes:
        return self.name.encode().ljust(6, b"0")[:6]

    def certificate(self, auth: Auth) -> bytes:
        public = self.sig_public if auth == Auth.SIGNATURE else self.sdh_public
        serial = hashlib.sha256(self.subject_id() + auth.value.encode()).digest()[:8]
        fields = CertificateFields(
            serial=serial,
            issuer_id=CA_ISSUER_ID,
            not_before=CERT_NOT_BEFORE,
            not_after=CERT_NOT_AFTER,
            subject_id=self.subject_id(),
            subject_public_key=public,
        )
        return issue_certificate(CA_SIGNING_SECRET, fields)


INITIATOR_KEYS = PartyKeys(
    "init", fixture_secret("initiator-ed25519"), fixture_secret("initiator-x25519")
)
RESPONDER_KEYS = PartyKeys(
    "resp", fixture_secret("responder-ed25519"), fixture_secret("responder-x25519")
)


@dataclass
class Endpoint:
    """One handshake party: its vault, parameters and trusted peers."""

    vault: Vault
    params: EndpointParams
    creds: CredentialSet
    own_context: int


def _build_endpoint(
    role: EdhocRole,
    method: AuthMethod,
    own: PartyKeys,
    peer: PartyKeys,
    peer_sig_kid: int,
    peer_sdh_kid: int,
    own_kid_sig: int,
    own_kid_sdh: int,
    connection_id: int,
    rng,
) -> Endpoint:
    vault = Vault(crypto.default_provider(rng))
    own_ctx = vault.provision(
        ContextKind.OWN,
        [
            (OWN_SIG_KEY_ID, KeyKind.SIGNATURE_SECRET, own.sig_secret),
            (OWN_SDH_KEY_ID, KeyKind.STATIC_DH_SECRET, own.sdh_secret),
        ],
    )
    peer_sig_ctx = vault.provision(
        ContextKind.PEER, [(1, KeyKind.PEER_PUBLIC, peer.sig_public)]
    )
    peer_sdh_ctx = vault.provision(
        ContextKind.PEER, [(1, KeyKind.PEER_PUBLIC, peer.sdh_public)]
    )
    ca_ctx = vault.provision(
        ContextKind.PEER, [(1, KeyKind.CA_ROOT_PUBLIC, CA_ROOT_PUBLIC)]
    )
    creds = CredentialSet(
        rpks={
            peer_sig_kid: (KeyRef(peer_sig_ctx, 1), peer.sig_public),
            peer_sdh_kid: (KeyRef(peer_sdh_ctx, 1), peer.sdh_public),
        },
        ca_roots={CA_ISSUER_ID: KeyRef(ca_ctx, 1)},
    )
    own_auth = (
        method.initiator_auth if role == EdhocRole.INITIATOR else method.responder_auth
    )
    own_cred_kind = (
        method.initiator_cred if role == EdhocRole.INITIATOR else method.responder_cred
    )
    if own_auth == Auth.SIGNATURE:
        auth_key = KeyRef(own_ctx, OWN_SIG_KEY_ID)
        public = own.sig_public
        kid = own_kid_sig
    else:
        auth_key = KeyRef(own_ctx, OWN_SDH_KEY_ID)
        public = own.sdh_public
        kid = own_kid_sdh
    if own_cred_kind == CredKind.RPK:
        credential = OwnCredential(CredKind.RPK, public, kid=kid)
    else:
        credential = OwnCredential(
            CredKind.CBOR_CERT, public, cert=own.certificate(own_auth)
        )
    params = EndpointParams(
        role=role,
        method=method,
        auth_key=auth_key,
        own_credential=credential,
        connection_id=connection_id,
    )
    return Endpoint(vault, params, creds, own_ctx)


def build_initiator(method: AuthMethod, rng) -> Endpoint:
    return _build_endpoint(
        EdhocRole.INITIATOR,
        method,
        INITIATOR_KEYS,
        RESPONDER_KEYS,
        KID_RESPONDER_SIG,
        KID_RESPONDER_SDH,
        KID_INITIATOR_SIG,
        KID_INITIATOR_SDH,
        CONNECTION_ID_INITIATOR,
        rng,
    )


def build_responder(method: AuthMethod, rng) -> Endpoint:
    return _build_endpoint(
        EdhocRole.RESPONDER,
        method,
        RESPONDER_KEYS,
        INITIATOR_KEYS,
        KID_INITIATOR_SIG,
        KID_INITIATOR_SDH,
        KID_RESPONDER_SIG,
        KID_RESPONDER_SDH,
        CONNECTION_ID_RESPONDER,
        rng,
    )


# -- message protection fixtures ---------------------------------------------

OSCORE_MASTER_SECRET = bytes.fromhex("0102030405060708090a0b0c0d0e0f10")
OSCORE_MASTER_SALT = bytes.fromhex("9e7ca92223786340")
CLIENT_SENDER_ID = b""
SERVER_SENDER_ID = b"\x01"

# The published 22-byte request and its 35-byte protected form
DEMO_REQUEST_PLAIN = bytes.fromhex("44015d1f00003974396c6f63616c686f737483747631")
DEMO_REQUEST_PROTECTED = bytes.fromhex(
    "44025d1f00003974396c6f63616c686f7374620914ff612f1092f1776f1c1668b3825e"
)
DEMO_REQUEST_SEQUENCE = 20

REFERENCE_COAP_LEN = 24
REFERENCE_OSCORE_LEN = 35


def oscore_context_pair(
    master_secret: bytes = OSCORE_MASTER_SECRET,
    master_salt: bytes = OSCORE_MASTER_SALT,
    rng_seed: int = 1,
) -> tuple[SecurityContext, SecurityContext]:
    """Client and server contexts in separate vaults from one secret."""
    pair = []
    for sender_id, recipient_id in (
        (CLIENT_SENDER_ID, SERVER_SENDER_ID),
        (SERVER_SENDER_ID, CLIENT_SENDER_ID),
    ):
        vault = Vault(crypto.default_provider(crypto.DeterministicRng(rng_seed)))
        ctx_id = vault.provision(
            ContextKind.OSCORE, [(1, KeyKind.MASTER_SECRET, master_secret)]
        )
        pair.append(
            oscore_init(
                vault, KeyRef(ctx_id, 1), master_salt, b"", sender_id, recipient_id
            )
        )
    return pair[0], pair[1]


def coap_request_fixture() -> bytes:
    """Representative 24-byte request: GET with a short padded payload."""
    msg = CoapMessage(
        msg_type=MsgType.CONFIRMABLE,
        code=CODE_GET,
        message_id=0x5D20,
        token=b"\x71\x72",
        options=[CoapOption(11, b"tv1")],
        payload=b"sensor-query1",
    )
    return coap_serialize(msg)


def coap_response_fixture() -> bytes:
    """24-byte response whose protected form is exactly 35 bytes."""
    msg = CoapMessage(
        msg_type=MsgType.ACK,
        code=CODE_CONTENT,
        message_id=0x5D1F,
        token=bytes.fromhex("00003974"),
        options=[],
        payload=b"temperature=21C",
    )
    return coap_serialize(msg)
