"""Provider tests against RFC vectors plus an independent CCM oracle.

The CCM oracle below assembles CBC-MAC and CTR from raw AES-ECB, a code
path disjoint from the provider's AEAD implementation, so seal outputs
are checked by two independent routes.
"""

import random

import pytest
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from coapsec import crypto, vectorio


def aes_ecb(key, block):
    enc = Cipher(algorithms.AES(key), modes.ECB()).encryptor()
    return enc.update(block) + enc.finalize()


def ccm_seal_oracle(key, nonce, aad, pt, tag_len=8):
    """Independent AES-CCM per RFC 3610 (L=2, M=tag_len)."""
    L = 15 - len(nonce)
    flags = (64 if aad else 0) | (((tag_len - 2) // 2) << 3) | (L - 1)
    blocks = bytes([flags]) + nonce + len(pt).to_bytes(L, "big")
    if aad:
        ablock = len(aad).to_bytes(2, "big") + aad
        blocks += ablock + bytes(-len(ablock) % 16)
    blocks += pt + bytes(-len(pt) % 16)
    x = bytes(16)
    for i in range(0, len(blocks), 16):
        x = aes_ecb(key, bytes(a ^ b for a, b in zip(x, blocks[i : i + 16])))

    def ctr(i):
        return aes_ecb(key, bytes([L - 1]) + nonce + i.to_bytes(L, "big"))

    tag = bytes(a ^ b for a, b in zip(x[:tag_len], ctr(0)[:tag_len]))
    ct = bytearray()
    for i in range(0, len(pt), 16):
        ct += bytes(a ^ b for a, b in zip(pt[i : i + 16], ctr(i // 16 + 1)))
    return bytes(ct) + tag


class TestAead:
    def test_rfc3610_vector_file(self):
        result = vectorio.verify_vector_file("aes_ccm.txt")
        assert result.ok, result.failures
        assert result.vectors == 3

    def test_cross_check_against_independent_ccm(self):
        rng = random.Random(0xCC)
        for _ in range(50):
            key = rng.randbytes(16)
            nonce = rng.randbytes(13)
            aad = rng.randbytes(rng.randrange(0, 32))
            pt = rng.randbytes(rng.randrange(0, 64))
            assert crypto.aead_seal(key, nonce, aad, pt) == ccm_seal_oracle(
                key, nonce, aad, pt
            )

    def test_empty_plaintext_gives_tag_only(self):
        out = crypto.aead_seal(b"k" * 16, b"n" * 13, b"", b"")
        assert len(out) == 8
        assert crypto.aead_open(b"k" * 16, b"n" * 13, b"", out) == b""

    def test_roundtrip_random(self):
        rng = random.Random(1)
        for _ in range(50):
            key, nonce = rng.randbytes(16), rng.randbytes(13)
            aad, pt = rng.randbytes(8), rng.randbytes(rng.randrange(0, 64))
            sealed = crypto.aead_seal(key, nonce, aad, pt)
            assert len(sealed) == len(pt) + 8
            assert crypto.aead_open(key, nonce, aad, sealed) == pt

    def test_single_bit_flips_fail(self):
        key, nonce = b"\x01" * 16, b"\x02" * 13
        aad, pt = b"header", b"payload bytes"
        sealed = crypto.aead_seal(key, nonce, aad, pt)
        for i in range(len(sealed)):
            for bit in (0x01, 0x80):
                broken = bytearray(sealed)
                broken[i] ^= bit
                with pytest.raises(crypto.AuthFailed):
                    crypto.aead_open(key, nonce, aad, bytes(broken))
        for i in range(len(aad)):
            broken_aad = bytearray(aad)
            broken_aad[i] ^= 0x01
            with pytest.raises(crypto.AuthFailed):
                crypto.aead_open(key, nonce, bytes(broken_aad), sealed)

    def test_bad_lengths(self):
        with pytest.raises(crypto.BadLength):
            crypto.aead_seal(b"short", b"n" * 13, b"", b"")
        with pytest.raises(crypto.BadLength):
            crypto.aead_seal(b"k" * 16, b"n" * 12, b"", b"")
        with pytest.raises(crypto.BadLength):
            crypto.aead_open(b"k" * 16, b"n" * 13, b"", b"1234567")


class TestHkdf:
    def test_rfc5869_vector_file(self):
        result = vectorio.verify_vector_file("hkdf_sha256.txt")
        assert result.ok, result.failures
        assert result.vectors == 3

    def test_expand_deterministic(self):
        prk = crypto.hkdf_extract(b"salt", b"ikm")
        assert crypto.hkdf_expand(prk, b"", 32) == crypto.hkdf_expand(prk, b"", 32)

    def test_out_len_bounds(self):
        prk = crypto.hkdf_extract(b"", b"x")
        assert len(crypto.hkdf_expand(prk, b"", 255 * 32)) == 255 * 32
        with pytest.raises(crypto.OutLenTooLarge):
            crypto.hkdf_expand(prk, b"", 255 * 32 + 1)
        with pytest.raises(crypto.OutLenTooLarge):
            crypto.hkdf_expand(prk, b"", 0)


class TestDh:
    def test_rfc7748_vector_file(self):
        result = vectorio.verify_vector_file("x25519.txt")
        assert result.ok, result.failures

    def test_symmetry(self):
        rng = random.Random(2)
        for _ in range(5):
            a, b = rng.randbytes(32), rng.randbytes(32)
            assert crypto.dh_derive(a, crypto.dh_public(b)) == crypto.dh_derive(
                b, crypto.dh_public(a)
            )

    def test_low_order_point(self):
        with pytest.raises(crypto.LowOrderPoint):
            crypto.dh_derive(b"\x01" * 32, bytes(32))

    def test_bad_length(self):
        with pytest.raises(crypto.BadLength):
            crypto.dh_derive(b"\x01" * 31, b"\x02" * 32)


class TestSignatures:
    def test_rfc8032_vector_file(self):
        result = vectorio.verify_vector_file("ed25519.txt")
        assert result.ok, result.failures

    def test_sign_verify_roundtrip(self):
        sk = bytes(range(32))
        pk = crypto.sign_public(sk)
        sig = crypto.sign(sk, b"hello")
        assert crypto.verify(pk, b"hello", sig)

    def test_flipped_message_bits_rejected(self):
        sk = bytes(range(32))
        pk = crypto.sign_public(sk)
        msg = b"authenticated content"
        sig = crypto.sign(sk, msg)
        for i in range(len(msg)):
            broken = bytearray(msg)
            broken[i] ^= 0x01
            assert not crypto.verify(pk, bytes(broken), sig)

    def test_malformed_signature(self):
        with pytest.raises(crypto.MalformedSignature):
            crypto.verify(b"\x00" * 32, b"m", b"\x00" * 63)


class TestProvider:
    def test_default_provider_complete(self):
        provider = crypto.default_provider()
        assert provider.random_bytes(16) != provider.random_bytes(16)

    def test_handles_must_be_set(self):
        with pytest.raises(crypto.CryptoError):
            crypto.CryptoProvider(
                aead_seal=None,
                aead_open=crypto.aead_open,
                hkdf_extract=crypto.hkdf_extract,
                hkdf_expand=crypto.hkdf_expand,
                hash=crypto.hash_sha256,
                dh_derive=crypto.dh_derive,
                dh_public=crypto.dh_public,
                sign=crypto.sign,
                verify=crypto.verify,
                random_bytes=None,
            )

    def test_deterministic_rng(self):
        assert crypto.DeterministicRng(7)(40) == crypto.DeterministicRng(7)(40)
        assert crypto.DeterministicRng(7)(16) != crypto.DeterministicRng(8)(16)

    def test_recording_and_replay(self):
        rec = crypto.RecordingRng(crypto.DeterministicRng(1))
        first = [rec(32), rec(13)]
        replay = crypto.ReplayRng(rec.draws)
        assert [replay(32), replay(13)] == first
        with pytest.raises(crypto.CryptoError):
            replay(8)


class TestVectorIo:
    def test_roundtrip_format(self):
        blocks = vectorio.load_packaged_vectors("aes_ccm.txt")
        text = vectorio.format_vector_blocks(blocks)
        assert vectorio.parse_vector_blocks(text) == blocks

    def test_verify_all(self):
        results = vectorio.verify_all()
        assert len(results) == 4
        assert all(r.ok for r in results)

    def test_bad_format(self):
        with pytest.raises(vectorio.VectorFormatError):
            vectorio.parse_vector_blocks("not a record")
        with pytest.raises(vectorio.VectorFormatError):
            vectorio.parse_vector_blocks("key=zz")
