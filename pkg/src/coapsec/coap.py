"""CoAP message parsing and serialization.

Implements the wire framing from RFC 7252: fixed 4-byte header, optional
token, delta-encoded options and an optional payload after the 0xFF
marker. This is the minimal subset needed to protect and unprotect
messages; retransmission, deduplication, blockwise transfer and observe
are out of scope and belong to the host CoAP stack.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

COAP_VERSION = 1
PAYLOAD_MARKER = 0xFF
MAX_TOKEN_LENGTH = 8

# Method and response codes (class.detail packed into one byte)
CODE_EMPTY = 0x00
CODE_GET = 0x01
CODE_POST = 0x02
CODE_PUT = 0x03
CODE_DELETE = 0x04
CODE_CREATED = 0x41
CODE_CHANGED = 0x44
CODE_CONTENT = 0x45

# Option numbers used in this package
OPT_URI_HOST = 3
OPT_URI_PORT = 7
OPT_OSCORE = 9
OPT_URI_PATH = 11
OPT_CONTENT_FORMAT = 12
OPT_URI_QUERY = 15


class MsgType(IntEnum):
    CONFIRMABLE = 0
    NON_CONFIRMABLE = 1
    ACK = 2
    RESET = 3


class CoapError(Exception):
    """Base class for CoAP codec errors."""


class HeaderTooShort(CoapError):
    pass


class BadVersion(CoapError):
    pass


class BadTokenLength(CoapError):
    pass


class BadOptionDelta(CoapError):
    pass


class TruncatedOption(CoapError):
    pass


class OptionOrderError(CoapError):
    """Options handed to the serializer are not sorted by number."""


def code_str(code: int) -> str:
    """Render a code byte as the usual class.detail notation, e.g. 0.01."""
    return f"{code >> 5}.{code & 0x1F:02d}"


@dataclass(frozen=True)
class CoapOption:
    number: int
    value: bytes


@dataclass
class CoapMessage:
    msg_type: MsgType
    code: int
    message_id: int
    token: bytes = b""
    options: list[CoapOption] = field(default_factory=list)
    payload: bytes = b""
    version: int = COAP_VERSION


def _extended_field(value: int) -> tuple[int, bytes]:
    """Split an option delta or length into (nibble, extension bytes)."""
    if value < 13:
        return value, b""
    if value < 269:
        return 13, bytes([value - 13])
    if value < 269 + 65536:
        return 14, (value - 269).to_bytes(2, "big")
    raise CoapError(f"option field {value} too large to encode")


def _read_extended(data: bytes, offset: int, nibble: int, what: str) -> tuple[int, int]:
    if nibble < 13:
        return nibble, offset
    if nibble == 13:
        if offset >= len(data):
            raise TruncatedOption(f"missing extended {what} byte")
        return 13 + data[offset], offset + 1
    if nibble == 14:
        if offset + 2 > len(data):
            raise TruncatedOption(f"missing extended {what} bytes")
        return 269 + int.from_bytes(data[offset : offset + 2], "big"), offset + 2
    raise BadOptionDelta(f"reserved {what} nibble 15")


def serialize_options(options: list[CoapOption]) -> bytes:
    """Delta-encode a sorted option list (shared by outer and inner messages)."""
    out = bytearray()
    previous = 0
    for opt in options:
        if opt.number < previous:
            raise OptionOrderError(
                f"option {opt.number} after {previous}; options must be sorted"
            )
        delta_nibble, delta_ext = _extended_field(opt.number - previous)
        len_nibble, len_ext = _extended_field(len(opt.value))
        out.append((delta_nibble << 4) | len_nibble)
        out += delta_ext
        out += len_ext
        out += opt.value
        previous = opt.number
    return bytes(out)


def parse_options(data: bytes, offset: int) -> tuple[list[CoapOption], bytes]:
    """Parse options starting at ``offset`` and return (options, payload)."""
    options: list[CoapOption] = []
    number = 0
    while offset < len(data):
        byte = data[offset]
        if byte == PAYLOAD_MARKER:
            payload = data[offset + 1 :]
            if not payload:
                raise TruncatedOption("payload marker with empty payload")
            return options, payload
        offset += 1
        delta, offset = _read_extended(data, offset, byte >> 4, "delta")
        length, offset = _read_extended(data, offset, byte & 0x0F, "length")
        if offset + length > len(data):
            raise TruncatedOption("option value shorter than declared")
        number += delta
        options.append(CoapOption(number, data[offset : offset + length]))
        offset += length
    return options, b""


def coap_parse(data: bytes) -> CoapMessage:
    """Parse a CoAP message; raises a typed CoapError on malformed input."""
    if len(data) < 4:
        raise HeaderTooShort(f"need 4 header bytes, got {len(data)}")
    version = data[0] >> 6
    if version != COAP_VERSION:
        raise BadVersion(f"version {version}")
    msg_type = MsgType((data[0] >> 4) & 0x03)
    tkl = data[0] & 0x0F
    if tkl > MAX_TOKEN_LENGTH:
        raise BadTokenLength(f"token length {tkl}")
    code = data[1]
    message_id = int.from_bytes(data[2:4], "big")
    if 4 + tkl > len(data):
        raise TruncatedOption("token shorter than declared")
    token = data[4 : 4 + tkl]
    options, payload = parse_options(data, 4 + tkl)
    return CoapMessage(msg_type, code, message_id, token, options, payload)


def coap_serialize(msg: CoapMessage) -> bytes:
    """Serialize a message with minimal-length option encoding."""
    if msg.version != COAP_VERSION:
        raise BadVersion(f"version {msg.version}")
    if len(msg.token) > MAX_TOKEN_LENGTH:
        raise BadTokenLength(f"token length {len(msg.token)}")
    header = bytes(
        [
            (msg.version << 6) | (int(msg.msg_type) << 4) | len(msg.token),
            msg.code & 0xFF,
        ]
    ) + msg.message_id.to_bytes(2, "big")
    out = header + msg.token + serialize_options(msg.options)
    if msg.payload:
        out += bytes([PAYLOAD_MARKER]) + msg.payload
    return out
