"""Minimal CBOR encoder/decoder.

Covers the subset needed by the protocol messages in this package:
unsigned/negative integers, byte strings, text strings, arrays, maps and
null. No floats, no bignums, no indefinite lengths, no semantic tags.

Encoding is canonical: integer heads use the shortest form and map keys
are sorted (length first, then bytewise, as for canonical CBOR). Decoding
is lenient by default and accepts non-shortest heads; pass ``strict=True``
to reject them.
"""

from __future__ import annotations

from typing import Any

MAX_DEPTH = 8

_UINT64_MAX = 2**64 - 1

# Major types
_MT_UINT = 0
_MT_NINT = 1
_MT_BSTR = 2
_MT_TSTR = 3
_MT_ARRAY = 4
_MT_MAP = 5
_MT_SIMPLE = 7

_NULL_BYTE = 0xF6


class CborError(Exception):
    """Base class for all CBOR codec errors."""


class CborOverflow(CborError):
    """Integer value or length does not fit in 64 bits."""


class CborTruncated(CborError):
    """Input ended before the declared item was complete."""


class CborUnsupported(CborError):
    """Major type, simple value or Python type outside the supported subset."""


class CborNonCanonical(CborError):
    """Non-shortest integer head rejected in strict mode."""


class CborDepthExceeded(CborError):
    """Nesting deeper than MAX_DEPTH."""


class CborInvalidUtf8(CborError):
    """Text string payload is not valid UTF-8."""


class CborDuplicateKey(CborError):
    """Map contains the same key twice."""


def _encode_head(major: int, arg: int) -> bytes:
    if arg < 0:
        raise CborOverflow("negative head argument")
    if arg < 24:
        return bytes([(major << 5) | arg])
    if arg < 0x100:
        return bytes([(major << 5) | 24, arg])
    if arg < 0x10000:
        return bytes([(major << 5) | 25]) + arg.to_bytes(2, "big")
    if arg < 0x100000000:
        return bytes([(major << 5) | 26]) + arg.to_bytes(4, "big")
    if arg <= _UINT64_MAX:
        return bytes([(major << 5) | 27]) + arg.to_bytes(8, "big")
    raise CborOverflow(f"value {arg} exceeds 64 bits")


def cbor_encode(value: Any, _depth: int = 0) -> bytes:
    """Encode a Python value to canonical CBOR bytes.

    Supported types: int, bytes, str, list, dict and None. Raises
    CborOverflow for out-of-range integers and CborUnsupported for
    anything else (bool included: it is not part of the subset).
    """
    if _depth > MAX_DEPTH:
        raise CborDepthExceeded(f"nesting deeper than {MAX_DEPTH}")
    if value is None:
        return bytes([_NULL_BYTE])
    if isinstance(value, bool):
        raise CborUnsupported("bool is not in the supported subset")
    if isinstance(value, int):
        if value >= 0:
            return _encode_head(_MT_UINT, value)
        return _encode_head(_MT_NINT, -1 - value)
    if isinstance(value, (bytes, bytearray, memoryview)):
        b = bytes(value)
        return _encode_head(_MT_BSTR, len(b)) + b
    if isinstance(value, str):
        b = value.encode("utf-8")
        return _encode_head(_MT_TSTR, len(b)) + b
    if isinstance(value, (list, tuple)):
        out = [_encode_head(_MT_ARRAY, len(value))]
        for item in value:
            out.append(cbor_encode(item, _depth + 1))
        return b"".join(out)
    if isinstance(value, dict):
        pairs = []
        for k, v in value.items():
            pairs.append((cbor_encode(k, _depth + 1), cbor_encode(v, _depth + 1)))
        pairs.sort(key=lambda kv: (len(kv[0]), kv[0]))
        return _encode_head(_MT_MAP, len(pairs)) + b"".join(k + v for k, v in pairs)
    raise CborUnsupported(f"cannot encode {type(value).__name__}")


def _decode_head(data: bytes, offset: int, strict: bool) -> tuple[int, int, int]:
    """Return (major, argument, next_offset) for the head at ``offset``."""
    if offset >= len(data):
        raise CborTruncated("missing head byte")
    initial = data[offset]
    major = initial >> 5
    info = initial & 0x1F
    if info < 24:
        return major, info, offset + 1
    if info in (24, 25, 26, 27):
        width = 1 << (info - 24)
        end = offset + 1 + width
        if end > len(data):
            raise CborTruncated("truncated head argument")
        arg = int.from_bytes(data[offset + 1 : end], "big")
        if strict:
            limit = 24 if width == 1 else 1 << (8 * (width >> 1))
            if arg < limit:
                raise CborNonCanonical(f"non-shortest head for {arg}")
        return major, arg, end
    raise CborUnsupported(f"unsupported additional info {info}")


def _decode_item(data: bytes, offset: int, depth: int, strict: bool) -> tuple[Any, int]:
    if depth > MAX_DEPTH:
        raise CborDepthExceeded(f"nesting deeper than {MAX_DEPTH}")
    if offset >= len(data):
        raise CborTruncated("empty input")
    if data[offset] == _NULL_BYTE:
        return None, offset + 1
    major, arg, offset = _decode_head(data, offset, strict)
    if major == _MT_UINT:
        return arg, offset
    if major == _MT_NINT:
        return -1 - arg, offset
    if major in (_MT_BSTR, _MT_TSTR):
        end = offset + arg
        if end > len(data):
            raise CborTruncated("string body shorter than declared")
        raw = data[offset:end]
        if major == _MT_BSTR:
            return raw, end
        try:
            return raw.decode("utf-8"), end
        except UnicodeDecodeError as exc:
            raise CborInvalidUtf8(str(exc)) from None
    if major == _MT_ARRAY:
        items = []
        for _ in range(arg):
            item, offset = _decode_item(data, offset, depth + 1, strict)
            items.append(item)
        return items, offset
    if major == _MT_MAP:
        result: dict[Any, Any] = {}
        for _ in range(arg):
            key, offset = _decode_item(data, offset, depth + 1, strict)
            if isinstance(key, (list, dict)):
                raise CborUnsupported("container map keys are not supported")
            if key in result:
                raise CborDuplicateKey(f"duplicate map key {key!r}")
            value, offset = _decode_item(data, offset, depth + 1, strict)
            result[key] = value
        return result, offset
    raise CborUnsupported(f"unsupported major type {major}")


def cbor_decode(data: bytes, offset: int = 0, strict: bool = False) -> tuple[Any, int]:
    """Decode one CBOR item starting at ``offset``.

    Returns ``(value, next_offset)``. Bytes past the decoded item are not
    consumed, so CBOR sequences can be read by looping on the offset.
    """
    return _decode_item(bytes(data), offset, 0, strict)


def cbor_decode_exact(data: bytes, strict: bool = False) -> Any:
    """Decode a single item that must span the whole input."""
    value, end = cbor_decode(data, 0, strict)
    if end != len(data):
        raise CborError(f"{len(data) - end} trailing bytes after item")
    return value
