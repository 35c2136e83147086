"""OSCORE message protection (RFC 8613 wire format).

Three-function surface: ``oscore_init`` derives a security context,
``coap2oscore`` protects a CoAP message and ``oscore2coap`` unprotects
one (or reports plain CoAP passthrough). Key material stays in the
vault; this module only ever holds key references, the public common IV
and public message bytes.

Class E options are encrypted into the plaintext together with the real
code and payload; class U options (Uri-Host, Uri-Port, Proxy-Uri,
Proxy-Scheme) stay outer so proxies keep working. The outer code is
fixed to 0.02 for requests and 2.04 for responses.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from . import crypto
from .cbor import cbor_encode
from .coap import (
    CODE_CHANGED,
    CODE_POST,
    OPT_OSCORE,
    CoapMessage,
    CoapOption,
    coap_parse,
    coap_serialize,
    parse_options,
    serialize_options,
)
from .vault import AeadDirection, KeyKind, KeyRef, Vault

OSCORE_VERSION = 1
NONCE_LEN = crypto.AEAD_NONCE_LEN
MAX_ID_LEN = NONCE_LEN - 6
MAX_PIV_LEN = 5
MAX_SEQUENCE_NUMBER = 2**40 - 1

# Option numbers that stay in the outer message (proxy visible)
CLASS_U_OPTIONS = frozenset({3, 7, 35, 39})

SENDER_KEY_ID = 2
RECIPIENT_KEY_ID = 3


class Role(Enum):
    CLIENT = "client"
    SERVER = "server"


class OscoreError(Exception):
    """Base class for OSCORE processing errors."""


class ReplayDetected(OscoreError):
    pass


class UnknownKid(OscoreError):
    pass


class MalformedOscoreOption(OscoreError):
    pass


class SeqNumExhausted(OscoreError):
    pass


class IdTooLong(OscoreError):
    pass


@dataclass
class OscoreOptionValue:
    """Decoded OSCORE option: flag-consistent piv / kid context / kid."""

    partial_iv: bytes | None = None
    kid_context: bytes | None = None
    kid: bytes | None = None


def encode_oscore_option(value: OscoreOptionValue) -> bytes:
    piv = value.partial_iv
    if piv is not None and not 1 <= len(piv) <= MAX_PIV_LEN:
        raise MalformedOscoreOption(f"piv length {len(piv)} outside 1..{MAX_PIV_LEN}")
    if value.kid_context is not None and len(value.kid_context) > 255:
        raise MalformedOscoreOption("kid context longer than 255 bytes")
    if piv is None and value.kid is None and value.kid_context is None:
        return b""
    flags = len(piv) if piv is not None else 0
    if value.kid is not None:
        flags |= 0x08
    if value.kid_context is not None:
        flags |= 0x10
    out = bytes([flags])
    if piv is not None:
        out += piv
    if value.kid_context is not None:
        out += bytes([len(value.kid_context)]) + value.kid_context
    if value.kid is not None:
        out += value.kid
    return out


def decode_oscore_option(data: bytes) -> OscoreOptionValue:
    if not data:
        return OscoreOptionValue()
    flags = data[0]
    if flags & 0xE0:
        raise MalformedOscoreOption(f"reserved flag bits set: {flags:#04x}")
    n = flags & 0x07
    if n > MAX_PIV_LEN:
        raise MalformedOscoreOption(f"reserved piv length {n}")
    offset = 1
    piv = None
    if n:
        if offset + n > len(data):
            raise MalformedOscoreOption("piv shorter than declared")
        piv = data[offset : offset + n]
        offset += n
    kid_context = None
    if flags & 0x10:
        if offset >= len(data):
            raise MalformedOscoreOption("missing kid context length")
        clen = data[offset]
        offset += 1
        if offset + clen > len(data):
            raise MalformedOscoreOption("kid context shorter than declared")
        kid_context = data[offset : offset + clen]
        offset += clen
    kid = None
    if flags & 0x08:
        kid = data[offset:]
    elif offset != len(data):
        raise MalformedOscoreOption("trailing bytes but kid flag not set")
    return OscoreOptionValue(piv, kid_context, kid)


class ReplayWindow:
    """32-entry sliding bitmask anchored at the highest sequence seen."""

    SIZE = 32

    def __init__(self):
        self.highest_seen: int | None = None
        self.bitmask = 0

    def check(self, value: int) -> bool:
        """True if the value would be accepted (no state change)."""
        if self.highest_seen is None or value > self.highest_seen:
            return True
        offset = self.highest_seen - value
        if offset == 0 or offset > self.SIZE:
            return False
        return not (self.bitmask >> (offset - 1)) & 1

    def update(self, value: int) -> None:
        """Mark a verified value as seen. Call only after check passed."""
        if self.highest_seen is None:
            self.highest_seen = value
            self.bitmask = 0
            return
        if value > self.highest_seen:
            shift = value - self.highest_seen
            self.bitmask = ((self.bitmask << 1) | 1) << (shift - 1)
            self.bitmask &= (1 << self.SIZE) - 1
            self.highest_seen = value
        else:
            self.bitmask |= 1 << (self.highest_seen - value - 1)


@dataclass
class CommonContext:
    aead_alg: crypto.AeadAlg
    hkdf_alg: crypto.HkdfAlg
    master_secret: KeyRef
    master_salt: bytes
    id_context: bytes
    common_iv: bytes


@dataclass
class SenderContext:
    sender_id: bytes
    sender_key: KeyRef
    sequence_number: int = 0


@dataclass
class RecipientContext:
    recipient_id: bytes
    recipient_key: KeyRef
    replay_window: ReplayWindow = field(default_factory=ReplayWindow)


@dataclass
class RequestBinding:
    """Request kid/piv held between a request and its response."""

    kid: bytes
    piv: bytes


@dataclass
class SecurityContext:
    common: CommonContext
    sender: SenderContext
    recipient: RecipientContext
    vault: Vault
    binding: RequestBinding | None = None


def _derivation_info(ident: bytes, id_context: bytes, alg: int, out_type: str, length: int) -> bytes:
    context_field = id_context if id_context else None
    return cbor_encode([ident, context_field, alg, out_type, length])


def oscore_init(
    vault: Vault,
    master_secret: KeyRef,
    master_salt: bytes,
    id_context: bytes,
    sender_id: bytes,
    recipient_id: bytes,
    aead_alg: crypto.AeadAlg = crypto.AeadAlg.AES_CCM_16_64_128,
    hkdf_alg: crypto.HkdfAlg = crypto.HkdfAlg.HMAC_SHA256,
) -> SecurityContext:
    """Derive sender/recipient keys into the vault and build a context.

    The common IV is public and comes back as bytes; the derived keys
    stay inside the vault under fixed key ids in the master's context.
    """
    for ident, name in ((sender_id, "sender"), (recipient_id, "recipient")):
        if len(ident) > MAX_ID_LEN:
            raise IdTooLong(f"{name} id longer than {MAX_ID_LEN} bytes")
    if sender_id == recipient_id:
        raise OscoreError("sender and recipient ids must differ")
    alg_id = aead_alg.value
    key_len = aead_alg.key_len
    vault.tee_hkdf(
        master_secret,
        master_salt,
        _derivation_info(sender_id, id_context, alg_id, "Key", key_len),
        key_len,
        SENDER_KEY_ID,
        KeyKind.SENDER_KEY,
    )
    vault.tee_hkdf(
        master_secret,
        master_salt,
        _derivation_info(recipient_id, id_context, alg_id, "Key", key_len),
        key_len,
        RECIPIENT_KEY_ID,
        KeyKind.RECIPIENT_KEY,
    )
    common_iv = vault.tee_hkdf(
        master_secret,
        master_salt,
        _derivation_info(b"", id_context, alg_id, "IV", aead_alg.nonce_len),
        aead_alg.nonce_len,
    )
    common = CommonContext(aead_alg, hkdf_alg, master_secret, master_salt, id_context, common_iv)
    sender = SenderContext(sender_id, KeyRef(master_secret.context_id, SENDER_KEY_ID))
    recipient = RecipientContext(
        recipient_id, KeyRef(master_secret.context_id, RECIPIENT_KEY_ID)
    )
    return SecurityContext(common, sender, recipient, vault)


def compute_nonce(generator_id: bytes, partial_iv: bytes, common_iv: bytes) -> bytes:
    """AEAD nonce: (len(id) | padded id | padded piv) XOR common IV."""
    if len(partial_iv) > MAX_PIV_LEN:
        raise crypto.BadLength(f"piv longer than {MAX_PIV_LEN} bytes")
    if len(generator_id) > MAX_ID_LEN:
        raise crypto.BadLength(f"id longer than {MAX_ID_LEN} bytes")
    if len(common_iv) != NONCE_LEN:
        raise crypto.BadLength(f"common IV must be {NONCE_LEN} bytes")
    packed = (
        bytes([len(generator_id)])
        + generator_id.rjust(NONCE_LEN - 6, b"\x00")
        + partial_iv.rjust(MAX_PIV_LEN, b"\x00")
    )
    return bytes(a ^ b for a, b in zip(packed, common_iv))


def piv_bytes(sequence_number: int) -> bytes:
    """Minimal big-endian encoding; sequence 0 is the single byte 0x00."""
    if sequence_number == 0:
        return b"\x00"
    return sequence_number.to_bytes((sequence_number.bit_length() + 7) // 8, "big")


def _external_aad(alg_id: int, request_kid: bytes, request_piv: bytes) -> bytes:
    external = cbor_encode([OSCORE_VERSION, [alg_id], request_kid, request_piv, b""])
    return cbor_encode(["Encrypt0", b"", external])


def _split_options(options: list[CoapOption]) -> tuple[list[CoapOption], list[CoapOption]]:
    """Return (outer class U options, encrypted class E options)."""
    outer, inner = [], []
    for opt in options:
        if opt.number == OPT_OSCORE:
            raise OscoreError("input message already carries an OSCORE option")
        (outer if opt.number in CLASS_U_OPTIONS else inner).append(opt)
    return outer, inner


def _build_plaintext(msg: CoapMessage, inner_options: list[CoapOption]) -> bytes:
    plaintext = bytes([msg.code]) + serialize_options(inner_options)
    if msg.payload:
        plaintext += b"\xff" + msg.payload
    return plaintext


def coap2oscore(coap_bytes: bytes, role: Role, ctx: SecurityContext) -> bytes:
    """Protect a CoAP message; clients send requests, servers responses."""
    msg = coap_parse(coap_bytes)
    outer_options, inner_options = _split_options(msg.options)
    plaintext = _build_plaintext(msg, inner_options)

    if role == Role.CLIENT:
        seq = ctx.sender.sequence_number
        if seq > MAX_SEQUENCE_NUMBER:
            raise SeqNumExhausted(f"sender sequence number beyond {MAX_SEQUENCE_NUMBER}")
        piv = piv_bytes(seq)
        ctx.sender.sequence_number = seq + 1
        kid = ctx.sender.sender_id
        nonce = compute_nonce(kid, piv, ctx.common.common_iv)
        aad = _external_aad(ctx.common.aead_alg.value, kid, piv)
        option_value = encode_oscore_option(
            OscoreOptionValue(
                partial_iv=piv,
                kid_context=ctx.common.id_context or None,
                kid=kid,
            )
        )
        ctx.binding = RequestBinding(kid, piv)
        outer_code = CODE_POST
    else:
        if ctx.binding is None:
            raise OscoreError("no request binding; cannot protect a response")
        nonce = compute_nonce(ctx.binding.kid, ctx.binding.piv, ctx.common.common_iv)
        aad = _external_aad(ctx.common.aead_alg.value, ctx.binding.kid, ctx.binding.piv)
        option_value = encode_oscore_option(OscoreOptionValue())
        outer_code = CODE_CHANGED

    ciphertext = ctx.vault.tee_aead(
        ctx.sender.sender_key, AeadDirection.SEAL, nonce, aad, plaintext
    )
    if role == Role.SERVER:
        # consume the binding: a second response would reuse the nonce
        ctx.binding = None
    options = sorted(
        outer_options + [CoapOption(OPT_OSCORE, option_value)], key=lambda o: o.number
    )
    outer = CoapMessage(
        msg.msg_type, outer_code, msg.message_id, msg.token, options, ciphertext
    )
    return coap_serialize(outer)


@dataclass
class UnprotectResult:
    """Either the original bytes passed through or the recovered CoAP."""

    passthrough: bool
    coap: bytes


def oscore2coap(data: bytes, role: Role, ctx: SecurityContext) -> UnprotectResult:
    """Unprotect an OSCORE message, or pass plain CoAP through untouched."""
    msg = coap_parse(data)
    oscore_opts = [o for o in msg.options if o.number == OPT_OSCORE]
    if not oscore_opts:
        return UnprotectResult(passthrough=True, coap=data)
    option = decode_oscore_option(oscore_opts[0].value)

    if role == Role.SERVER:
        if option.partial_iv is None or option.kid is None:
            raise MalformedOscoreOption("request must carry piv and kid")
        if option.kid != ctx.recipient.recipient_id:
            raise UnknownKid(f"no recipient context for kid {option.kid.hex() or '(empty)'}")
        request_kid, request_piv = option.kid, option.partial_iv
        seq = int.from_bytes(request_piv, "big")
        if not ctx.recipient.replay_window.check(seq):
            raise ReplayDetected(f"sequence {seq} already seen or too old")
        nonce = compute_nonce(request_kid, request_piv, ctx.common.common_iv)
    else:
        if ctx.binding is None:
            raise OscoreError("no request binding; cannot unprotect a response")
        request_kid, request_piv = ctx.binding.kid, ctx.binding.piv
        if option.partial_iv is not None:
            # response with its own piv: nonce from the responder's id
            nonce = compute_nonce(
                ctx.recipient.recipient_id, option.partial_iv, ctx.common.common_iv
            )
        else:
            nonce = compute_nonce(request_kid, request_piv, ctx.common.common_iv)

    aad = _external_aad(ctx.common.aead_alg.value, request_kid, request_piv)
    plaintext = ctx.vault.tee_aead(
        ctx.recipient.recipient_key, AeadDirection.OPEN, nonce, aad, msg.payload
    )

    if role == Role.SERVER:
        ctx.recipient.replay_window.update(int.from_bytes(request_piv, "big"))
        ctx.binding = RequestBinding(request_kid, request_piv)
    else:
        ctx.binding = None  # response consumed the outstanding request slot

    if not plaintext:
        raise OscoreError("empty plaintext after unprotect")
    inner_code = plaintext[0]
    inner_options, inner_payload = parse_options(plaintext, 1)
    outer_u = [
        o for o in msg.options if o.number != OPT_OSCORE and o.number in CLASS_U_OPTIONS
    ]
    merged = sorted(outer_u + inner_options, key=lambda o: o.number)
    recovered = CoapMessage(
        msg.msg_type, inner_code, msg.message_id, msg.token, merged, inner_payload
    )
    return UnprotectResult(passthrough=False, coap=coap_serialize(recovered))
