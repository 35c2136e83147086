"""Compact CBOR certificates.

A certificate is one flat CBOR array:

    [serial, issuer_id, [not_before, not_after], subject_id,
     subject_public_key, signature]

The signature is Ed25519 over the CBOR encoding of the first five fields
(the to-be-signed array). With 8-byte serials, 6-byte issuer/subject ids
and uint32 epoch seconds the encoding is exactly 135 bytes, which is the
profile the handshake fixtures use.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import crypto
from .cbor import CborError, cbor_decode_exact, cbor_encode

FIXTURE_CERT_LEN = 135


class CertificateError(Exception):
    pass


@dataclass(frozen=True)
class CertificateFields:
    serial: bytes
    issuer_id: bytes
    not_before: int
    not_after: int
    subject_id: bytes
    subject_public_key: bytes


def tbs_bytes(fields: CertificateFields) -> bytes:
    """The to-be-signed encoding covered by the issuer signature."""
    return cbor_encode(
        [
            fields.serial,
            fields.issuer_id,
            [fields.not_before, fields.not_after],
            fields.subject_id,
            fields.subject_public_key,
        ]
    )


def encode_certificate(fields: CertificateFields, signature: bytes) -> bytes:
    if len(signature) != crypto.SIGNATURE_LEN:
        raise CertificateError("signature must be 64 bytes")
    return cbor_encode(
        [
            fields.serial,
            fields.issuer_id,
            [fields.not_before, fields.not_after],
            fields.subject_id,
            fields.subject_public_key,
            signature,
        ]
    )


def decode_certificate(data: bytes) -> tuple[CertificateFields, bytes]:
    try:
        items = cbor_decode_exact(bytes(data))
    except CborError as exc:
        raise CertificateError(f"not a CBOR certificate: {exc}") from None
    if not isinstance(items, list) or len(items) != 6:
        raise CertificateError("certificate must be a 6-element array")
    serial, issuer_id, validity, subject_id, subject_pk, signature = items
    if not (
        isinstance(serial, bytes)
        and isinstance(issuer_id, bytes)
        and isinstance(subject_id, bytes)
        and isinstance(subject_pk, bytes)
        and isinstance(signature, bytes)
    ):
        raise CertificateError("certificate fields have wrong types")
    if (
        not isinstance(validity, list)
        or len(validity) != 2
        or not all(isinstance(v, int) and v >= 0 for v in validity)
    ):
        raise CertificateError("validity must be [not_before, not_after]")
    if len(subject_pk) != crypto.DH_KEY_LEN:
        raise CertificateError("subject public key must be 32 bytes")
    if len(signature) != crypto.SIGNATURE_LEN:
        raise CertificateError("signature must be 64 bytes")
    fields = CertificateFields(
        serial, issuer_id, validity[0], validity[1], subject_id, subject_pk
    )
    return fields, signature


def issue_certificate(ca_signing_secret: bytes, fields: CertificateFields) -> bytes:
    """Sign the TBS array with the CA key and return the full certificate."""
    signature = crypto.sign(ca_signing_secret, tbs_bytes(fields))
    return encode_certificate(fields, signature)
