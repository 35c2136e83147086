"""Test-vector file handling.

Format: line-oriented ``name=hexvalue`` records, one vector per
blank-line-separated block, ``#`` starts a comment line. The packaged
files pin the provider against its RFC vectors and can be dumped for
use by other implementations.
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass

from . import crypto

VECTOR_FILES = ("aes_ccm.txt", "hkdf_sha256.txt", "x25519.txt", "ed25519.txt")


class VectorFormatError(Exception):
    pass


def parse_vector_blocks(text: str) -> list[dict[str, bytes]]:
    """Parse vector file text into a list of field dicts."""
    blocks: list[dict[str, bytes]] = []
    current: dict[str, bytes] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            if current:
                blocks.append(current)
                current = {}
            continue
        if line.startswith("#"):
            continue
        if "=" not in line:
            raise VectorFormatError(f"line {lineno}: expected name=hexvalue")
        name, _, value = line.partition("=")
        try:
            current[name.strip()] = bytes.fromhex(value.strip())
        except ValueError:
            raise VectorFormatError(f"line {lineno}: bad hex for {name}") from None
    if current:
        blocks.append(current)
    return blocks


def format_vector_blocks(blocks: list[dict[str, bytes]]) -> str:
    out = []
    for block in blocks:
        for name, value in block.items():
            out.append(f"{name}={value.hex()}")
        out.append("")
    return "\n".join(out)


def load_packaged_vectors(name: str) -> list[dict[str, bytes]]:
    text = (
        importlib.resources.files("coapsec").joinpath("vectors", name).read_text()
    )
    return parse_vector_blocks(text)


def packaged_vector_text(name: str) -> str:
    return importlib.resources.files("coapsec").joinpath("vectors", name).read_text()


@dataclass
class VectorFileResult:
    name: str
    vectors: int
    ok: bool
    failures: list[int]


def _verify_block(name: str, vec: dict[str, bytes], provider: crypto.CryptoProvider) -> bool:
    if name == "aes_ccm.txt":
        sealed = provider.aead_seal(vec["key"], vec["nonce"], vec["aad"], vec["pt"])
        opened = provider.aead_open(vec["key"], vec["nonce"], vec["aad"], vec["ct"])
        return sealed == vec["ct"] and opened == vec["pt"]
    if name == "hkdf_sha256.txt":
        prk = provider.hkdf_extract(vec["salt"], vec["ikm"])
        okm = provider.hkdf_expand(prk, vec["info"], len(vec["okm"]))
        return prk == vec["prk"] and okm == vec["okm"]
    if name == "x25519.txt":
        return provider.dh_derive(vec["scalar"], vec["u"]) == vec["out"]
    if name == "ed25519.txt":
        sig = provider.sign(vec["sk"], vec["msg"])
        return sig == vec["sig"] and provider.verify(vec["pk"], vec["msg"], vec["sig"])
    raise VectorFormatError(f"unknown vector file {name}")


def verify_vector_file(
    name: str, provider: crypto.CryptoProvider | None = None
) -> VectorFileResult:
    """Run every vector in a packaged file against the provider."""
    provider = provider or crypto.default_provider()
    blocks = load_packaged_vectors(name)
    failures = [
        i for i, vec in enumerate(blocks) if not _verify_block(name, vec, provider)
    ]
    return VectorFileResult(name, len(blocks), not failures, failures)


def verify_all(provider: crypto.CryptoProvider | None = None) -> list[VectorFileResult]:
    return [verify_vector_file(name, provider) for name in VECTOR_FILES]
