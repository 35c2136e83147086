"""Crypto provider contract and the default software provider.

The protocol code never calls an algorithm directly; it goes through a
``CryptoProvider`` whose function handles can be swapped for a hardware
backend. The default provider implements the single fixed suite used
throughout the package: AES-CCM-16-64-128 (16-byte key, 13-byte nonce,
8-byte tag), HKDF with HMAC-SHA256, SHA-256, X25519 and Ed25519.

``random_bytes`` is injectable so handshakes can be replayed bit-exactly
in tests and demos; ``DeterministicRng`` and ``RecordingRng`` support
that.
"""

from __future__ import annotations

import hashlib
import hmac as _hmac
import os
from dataclasses import dataclass, fields
from enum import Enum
from typing import Callable

from cryptography.exceptions import InvalidSignature, InvalidTag
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.asymmetric.x25519 import (
    X25519PrivateKey,
    X25519PublicKey,
)
from cryptography.hazmat.primitives.ciphers.aead import AESCCM

AEAD_KEY_LEN = 16
AEAD_NONCE_LEN = 13
AEAD_TAG_LEN = 8
HASH_LEN = 32
DH_KEY_LEN = 32
SIGNATURE_LEN = 64
HKDF_MAX_OUT = 255 * HASH_LEN


class AeadAlg(Enum):
    AES_CCM_16_64_128 = 10  # COSE algorithm identifier

    @property
    def key_len(self) -> int:
        return AEAD_KEY_LEN

    @property
    def nonce_len(self) -> int:
        return AEAD_NONCE_LEN

    @property
    def tag_len(self) -> int:
        return AEAD_TAG_LEN


class HkdfAlg(Enum):
    HMAC_SHA256 = 5  # COSE algorithm identifier

    @property
    def hash_len(self) -> int:
        return HASH_LEN


class CryptoError(Exception):
    """Base class for provider errors."""


class BadLength(CryptoError):
    """A key, nonce or input has the wrong length."""


class AuthFailed(CryptoError):
    """AEAD tag did not verify. Single variant for all open failures."""


class OutLenTooLarge(CryptoError):
    """Requested HKDF output exceeds 255 * hash_len."""


class LowOrderPoint(CryptoError):
    """X25519 produced an all-zero shared secret."""


class MalformedSignature(CryptoError):
    """Signature is not 64 bytes or otherwise unparseable."""


def _check(condition: bool, message: str) -> None:
    if not condition:
        raise BadLength(message)


def aead_seal(key: bytes, nonce: bytes, aad: bytes, plaintext: bytes) -> bytes:
    """AES-CCM-16-64-128 encrypt; returns ciphertext with the 8-byte tag."""
    _check(len(key) == AEAD_KEY_LEN, f"AEAD key must be {AEAD_KEY_LEN} bytes")
    _check(len(nonce) == AEAD_NONCE_LEN, f"AEAD nonce must be {AEAD_NONCE_LEN} bytes")
    return AESCCM(key, tag_length=AEAD_TAG_LEN).encrypt(nonce, plaintext, aad)


def aead_open(key: bytes, nonce: bytes, aad: bytes, ciphertext: bytes) -> bytes:
    """Inverse of aead_seal; raises AuthFailed on any tag mismatch."""
    _check(len(key) == AEAD_KEY_LEN, f"AEAD key must be {AEAD_KEY_LEN} bytes")
    _check(len(nonce) == AEAD_NONCE_LEN, f"AEAD nonce must be {AEAD_NONCE_LEN} bytes")
    if len(ciphertext) < AEAD_TAG_LEN:
        raise BadLength(f"ciphertext shorter than {AEAD_TAG_LEN}-byte tag")
    try:
        return AESCCM(key, tag_length=AEAD_TAG_LEN).decrypt(nonce, ciphertext, aad)
    except InvalidTag:
        raise AuthFailed("AEAD verification failed") from None


def hkdf_extract(salt: bytes, ikm: bytes) -> bytes:
    """RFC 5869 extract step with SHA-256."""
    if not salt:
        salt = bytes(HASH_LEN)
    return _hmac.new(salt, ikm, hashlib.sha256).digest()


def hkdf_expand(prk: bytes, info: bytes, out_len: int) -> bytes:
    """RFC 5869 expand step with SHA-256."""
    if not 0 < out_len <= HKDF_MAX_OUT:
        raise OutLenTooLarge(f"out_len {out_len} outside 1..{HKDF_MAX_OUT}")
    out = b""
    block = b""
    counter = 1
    while len(out) < out_len:
        block = _hmac.new(prk, block + info + bytes([counter]), hashlib.sha256).digest()
        out += block
        counter += 1
    return out[:out_len]


def hash_sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def dh_derive(secret_key: bytes, peer_public: bytes) -> bytes:
    """X25519 shared secret; rejects the all-zero (low order) result."""
    _check(len(secret_key) == DH_KEY_LEN, "X25519 secret must be 32 bytes")
    _check(len(peer_public) == DH_KEY_LEN, "X25519 public must be 32 bytes")
    private = X25519PrivateKey.from_private_bytes(secret_key)
    try:
        return private.exchange(X25519PublicKey.from_public_bytes(peer_public))
    except ValueError:
        raise LowOrderPoint("all-zero shared secret") from None


def dh_public(secret_key: bytes) -> bytes:
    """X25519 public key for a 32-byte secret scalar."""
    _check(len(secret_key) == DH_KEY_LEN, "X25519 secret must be 32 bytes")
    return X25519PrivateKey.from_private_bytes(secret_key).public_key().public_bytes_raw()


def sign(secret_key: bytes, message: bytes) -> bytes:
    """Ed25519 signature (RFC 8032)."""
    _check(len(secret_key) == DH_KEY_LEN, "Ed25519 secret must be 32 bytes")
    return Ed25519PrivateKey.from_private_bytes(secret_key).sign(message)


def verify(public_key: bytes, message: bytes, signature: bytes) -> bool:
    """Ed25519 verification; returns a verdict instead of raising."""
    _check(len(public_key) == DH_KEY_LEN, "Ed25519 public must be 32 bytes")
    if len(signature) != SIGNATURE_LEN:
        raise MalformedSignature(f"signature must be {SIGNATURE_LEN} bytes")
    try:
        Ed25519PublicKey.from_public_bytes(public_key).verify(signature, message)
        return True
    except InvalidSignature:
        return False


def sign_public(secret_key: bytes) -> bytes:
    """Ed25519 public key for a 32-byte secret."""
    _check(len(secret_key) == DH_KEY_LEN, "Ed25519 secret must be 32 bytes")
    return Ed25519PrivateKey.from_private_bytes(secret_key).public_key().public_bytes_raw()


class DeterministicRng:
    """SHA-256 counter stream seeded with a 64-bit integer.

    Platform independent, so demo transcripts and size reports are stable
    across machines for a fixed seed.
    """

    def __init__(self, seed: int):
        self._seed = seed.to_bytes(8, "big", signed=False)
        self._counter = 0

    def __call__(self, n: int) -> bytes:
        out = b""
        while len(out) < n:
            block = hashlib.sha256(
                self._seed + self._counter.to_bytes(8, "big")
            ).digest()
            self._counter += 1
            out += block
        return out[:n]


class RecordingRng:
    """Wraps an rng and records every draw so a run can be replayed."""

    def __init__(self, inner: Callable[[int], bytes]):
        self._inner = inner
        self.draws: list[bytes] = []

    def __call__(self, n: int) -> bytes:
        out = self._inner(n)
        self.draws.append(out)
        return out


class ReplayRng:
    """Replays draws captured by a RecordingRng."""

    def __init__(self, draws: list[bytes]):
        self._draws = list(draws)
        self._index = 0

    def __call__(self, n: int) -> bytes:
        if self._index >= len(self._draws):
            raise CryptoError("replay rng exhausted")
        out = self._draws[self._index]
        self._index += 1
        if len(out) != n:
            raise CryptoError("replayed draw has unexpected length")
        return out


@dataclass(frozen=True)
class CryptoProvider:
    """Function handles for every cryptographic operation.

    All handles are deterministic except random_bytes. A provider must be
    safe for concurrent read-only use.
    """

    aead_seal: Callable[[bytes, bytes, bytes, bytes], bytes]
    aead_open: Callable[[bytes, bytes, bytes, bytes], bytes]
    hkdf_extract: Callable[[bytes, bytes], bytes]
    hkdf_expand: Callable[[bytes, bytes, int], bytes]
    hash: Callable[[bytes], bytes]
    dh_derive: Callable[[bytes, bytes], bytes]
    dh_public: Callable[[bytes], bytes]
    sign: Callable[[bytes, bytes], bytes]
    verify: Callable[[bytes, bytes, bytes], bool]
    random_bytes: Callable[[int], bytes]

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) is None:
                raise CryptoError(f"provider handle {f.name} is not set")


def default_provider(rng: Callable[[int], bytes] | None = None) -> CryptoProvider:
    """The software provider; pass ``rng`` to make runs reproducible."""
    return CryptoProvider(
        aead_seal=aead_seal,
        aead_open=aead_open,
        hkdf_extract=hkdf_extract,
        hkdf_expand=hkdf_expand,
        hash=hash_sha256,
        dh_derive=dh_derive,
        dh_public=dh_public,
        sign=sign,
        verify=verify,
        random_bytes=rng if rng is not None else os.urandom,
    )
