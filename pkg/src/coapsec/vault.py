"""Software key vault modeling a trusted-execution boundary.

All secret key bytes live inside this module. The rest of the package
addresses keys only through ``KeyRef`` handles (context id, key id) and a
narrow call gateway: two operations for message protection contexts
(``tee_hkdf``, ``tee_aead``) and a small fixed set for handshakes
(``aead``, ``asymm_sign``, ``asymm_verify``, ``hkdf_extract``,
``hkdf_expand``, ``dh_secret_derive``, ``hash``, ``xor``, plus
``generate_ephemeral`` so ephemeral secrets never leave the vault).

Every gateway parameter and return value is a primitive: bytes, int,
enum or KeyRef. Key material is returned across the gateway only by the
exporter path (``hkdf_expand`` over a session-result key with public
output requested).

Failure semantics follow the two protection layers they serve:

* ``tee_aead`` verification failures are per-message and leave the
  context usable (protected messaging keeps running).
* ``aead`` open / ``asymm_verify`` failures during a handshake erase all
  intermediate and ephemeral secrets of the active session and mark the
  context wiped; every further gateway call for that session raises
  ``WipedState``. Long-term keys survive a wipe so the device can start
  a fresh handshake after an explicit ``session_reset``.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from enum import Enum

from . import crypto


class ContextKind(Enum):
    OWN = "own"
    PEER = "peer"
    OSCORE = "oscore"


class KeyKind(Enum):
    MASTER_SECRET = "master_secret"
    SENDER_KEY = "sender_key"
    RECIPIENT_KEY = "recipient_key"
    STATIC_DH_SECRET = "static_dh_secret"
    SIGNATURE_SECRET = "signature_secret"
    PEER_PUBLIC = "peer_public"
    CA_ROOT_PUBLIC = "ca_root_public"
    INTERMEDIATE_SECRET = "intermediate_secret"
    EPHEMERAL_SECRET = "ephemeral_secret"
    SESSION_RESULT = "session_result"


SESSION_KINDS = frozenset(
    {KeyKind.INTERMEDIATE_SECRET, KeyKind.EPHEMERAL_SECRET}
)

SECRET_KINDS = frozenset(
    {
        KeyKind.MASTER_SECRET,
        KeyKind.SENDER_KEY,
        KeyKind.RECIPIENT_KEY,
        KeyKind.STATIC_DH_SECRET,
        KeyKind.SIGNATURE_SECRET,
        KeyKind.INTERMEDIATE_SECRET,
        KeyKind.EPHEMERAL_SECRET,
        KeyKind.SESSION_RESULT,
    }
)


class AeadDirection(Enum):
    SEAL = "seal"
    OPEN = "open"


@dataclass(frozen=True)
class KeyRef:
    context_id: int
    key_id: int


class VaultError(Exception):
    """Base class for vault errors."""


class DuplicateContextId(VaultError):
    pass


class UnknownContext(VaultError):
    """Context id or key id cannot be resolved."""


class WipedState(VaultError):
    """The session context was wiped; no further protocol execution."""


class WrongKeyKind(VaultError):
    """Referenced key exists but has an incompatible kind."""


class AuthFailedWiped(VaultError):
    """In-session authentication failed; intermediate keys were erased."""


@dataclass
class _KeyRecord:
    kind: KeyKind
    material: bytes


@dataclass
class _Context:
    kind: ContextKind
    keys: dict[int, _KeyRecord] = field(default_factory=dict)
    wiped: bool = False


class Vault:
    """Key container with a serialized gateway.

    ``call_log`` records (operation name, returned bytes or None) for
    every gateway call; it never contains stored key material because
    gateway returns never do.
    """

    def __init__(self, provider: crypto.CryptoProvider | None = None):
        self._provider = provider or crypto.default_provider()
        self._contexts: dict[int, _Context] = {}
        self._next_context_id = 0
        self._session_ctx: int | None = None
        self._lock = threading.RLock()
        self.call_log: list[tuple[str, bytes | None]] = []

    # -- provisioning (setup phase) -------------------------------------

    def provision(
        self,
        kind: ContextKind,
        keys: list[tuple[int, KeyKind, bytes]],
        context_id: int | None = None,
    ) -> int:
        """Store keys under a new context and return its id.

        Intended for boot-time setup; material passed in here is never
        observable through the gateway again.
        """
        with self._lock:
            if context_id is None:
                while self._next_context_id in self._contexts:
                    self._next_context_id += 1
                context_id = self._next_context_id
                self._next_context_id += 1
            elif context_id in self._contexts:
                raise DuplicateContextId(f"context {context_id} already provisioned")
            ctx = _Context(kind)
            for key_id, key_kind, material in keys:
                ctx.keys[key_id] = _KeyRecord(key_kind, bytes(material))
            self._contexts[context_id] = ctx
            return context_id

    def session_begin(self, own_context_id: int) -> None:
        """Bind handshake-scoped operations to an own context."""
        with self._lock:
            ctx = self._get_context(own_context_id)
            if ctx.wiped:
                raise WipedState(f"context {own_context_id} is wiped")
            self._session_ctx = own_context_id

    def session_end(self) -> None:
        with self._lock:
            self._session_ctx = None

    def wipe_session(self) -> None:
        """Erase the active session's keys and block its gateway calls.

        The vault calls this itself on in-gateway authentication
        failures; protocol logic also calls it when a handshake dies
        before reaching an authenticity check (malformed message,
        unknown credential), so a compromised caller gains nothing by
        continuing. Idempotent.
        """
        with self._lock:
            self._wipe_session()

    def session_reset(self, context_id: int) -> None:
        """Clear a wipe and stale per-session keys (setup phase only)."""
        with self._lock:
            ctx = self._get_context(context_id)
            ctx.keys = {
                kid: rec
                for kid, rec in ctx.keys.items()
                if rec.kind not in SESSION_KINDS
            }
            ctx.wiped = False
            if self._session_ctx == context_id:
                self._session_ctx = None

    # -- introspection (metadata only, never material) -------------------

    def has_key(self, ref: KeyRef) -> bool:
        with self._lock:
            ctx = self._contexts.get(ref.context_id)
            return bool(ctx and ref.key_id in ctx.keys)

    def key_kind(self, ref: KeyRef) -> KeyKind:
        with self._lock:
            return self._resolve_record(ref).kind

    def is_wiped(self, context_id: int) -> bool:
        with self._lock:
            return self._get_context(context_id).wiped

    # -- internal helpers -------------------------------------------------

    def _get_context(self, context_id: int) -> _Context:
        ctx = self._contexts.get(context_id)
        if ctx is None:
            raise UnknownContext(f"unknown context {context_id}")
        return ctx

    def _resolve_record(self, ref: KeyRef) -> _KeyRecord:
        ctx = self._get_context(ref.context_id)
        record = ctx.keys.get(ref.key_id)
        if record is None:
            raise UnknownContext(f"unknown key {ref.key_id} in context {ref.context_id}")
        return record

    def _resolve(self, ref: KeyRef, allowed: frozenset[KeyKind] | set[KeyKind]) -> bytes:
        ctx = self._get_context(ref.context_id)
        if ctx.wiped:
            raise WipedState(f"context {ref.context_id} is wiped")
        record = ctx.keys.get(ref.key_id)
        if record is None:
            raise UnknownContext(f"unknown key {ref.key_id} in context {ref.context_id}")
        if record.kind not in allowed:
            raise WrongKeyKind(
                f"key {ref.key_id} is {record.kind.value}, expected one of "
                f"{sorted(k.value for k in allowed)}"
            )
        return record.material

    def _session_context(self) -> tuple[int, _Context]:
        if self._session_ctx is None:
            raise VaultError("no active session; call session_begin first")
        ctx = self._get_context(self._session_ctx)
        if ctx.wiped:
            raise WipedState(f"context {self._session_ctx} is wiped")
        return self._session_ctx, ctx

    def _check_session_alive(self) -> None:
        if self._session_ctx is not None:
            if self._get_context(self._session_ctx).wiped:
                raise WipedState(f"context {self._session_ctx} is wiped")

    def _wipe_session(self) -> None:
        """Erase per-session secrets and block further session calls."""
        if self._session_ctx is None:
            return
        ctx = self._get_context(self._session_ctx)
        ctx.keys = {
            kid: rec for kid, rec in ctx.keys.items() if rec.kind not in SESSION_KINDS
        }
        ctx.wiped = True

    def _store_session_key(self, key_id: int, kind: KeyKind, material: bytes) -> KeyRef:
        ctx_id, ctx = self._session_context()
        ctx.keys[key_id] = _KeyRecord(kind, material)
        return KeyRef(ctx_id, key_id)

    def _log(self, op: str, result: bytes | None = None) -> None:
        self.call_log.append((op, result))

    # -- message protection gateway (two operations) ----------------------

    def tee_hkdf(
        self,
        master_ref: KeyRef,
        salt: bytes,
        info: bytes,
        out_len: int,
        out_key_id: int | None = None,
        out_kind: KeyKind | None = None,
    ) -> bytes | None:
        """HKDF keyed by a stored master secret.

        With ``out_key_id`` the derived key is stored in the master's
        context under that id (sender or recipient key) and nothing is
        returned. Without it the derived bytes are returned, which is how
        the public common IV comes out.
        """
        with self._lock:
            self._log("tee_hkdf")
            master = self._resolve(master_ref, {KeyKind.MASTER_SECRET})
            prk = self._provider.hkdf_extract(salt, master)
            okm = self._provider.hkdf_expand(prk, info, out_len)
            if out_key_id is None:
                self.call_log[-1] = ("tee_hkdf", okm)
                return okm
            if out_kind not in (KeyKind.SENDER_KEY, KeyKind.RECIPIENT_KEY):
                raise WrongKeyKind("stored tee_hkdf output must be a sender or recipient key")
            ctx = self._get_context(master_ref.context_id)
            ctx.keys[out_key_id] = _KeyRecord(out_kind, okm)
            return None

    def tee_aead(
        self,
        ref: KeyRef,
        direction: AeadDirection,
        nonce: bytes,
        aad: bytes,
        data: bytes,
    ) -> bytes:
        """Seal with a sender key or open with a recipient key.

        An open failure raises ``crypto.AuthFailed`` and leaves the
        context untouched: message-level failures are not fatal here.
        """
        with self._lock:
            self._log("tee_aead")
            if direction == AeadDirection.SEAL:
                key = self._resolve(ref, {KeyKind.SENDER_KEY})
                out = self._provider.aead_seal(key, nonce, aad, data)
            else:
                key = self._resolve(ref, {KeyKind.RECIPIENT_KEY})
                out = self._provider.aead_open(key, nonce, aad, data)
            self.call_log[-1] = ("tee_aead", out)
            return out

    # -- handshake gateway -------------------------------------------------

    def generate_ephemeral(self, out_key_id: int) -> bytes:
        """Create an ephemeral DH secret inside the vault; returns the public key."""
        with self._lock:
            self._log("generate_ephemeral")
            self._check_session_alive()
            secret = self._provider.random_bytes(crypto.DH_KEY_LEN)
            self._store_session_key(out_key_id, KeyKind.EPHEMERAL_SECRET, secret)
            public = self._provider.dh_public(secret)
            self.call_log[-1] = ("generate_ephemeral", public)
            return public

    def aead(
        self,
        ref: KeyRef,
        direction: AeadDirection,
        nonce: bytes,
        aad: bytes,
        data: bytes,
    ) -> bytes:
        """Handshake AEAD over intermediate keys; open failure wipes the session."""
        with self._lock:
            self._log("aead")
            self._check_session_alive()
            key = self._resolve(ref, {KeyKind.INTERMEDIATE_SECRET})
            if direction == AeadDirection.SEAL:
                out = self._provider.aead_seal(key, nonce, aad, data)
            else:
                try:
                    out = self._provider.aead_open(key, nonce, aad, data)
                except crypto.AuthFailed:
                    self._wipe_session()
                    raise AuthFailedWiped(
                        "handshake AEAD verification failed; session keys erased"
                    ) from None
            self.call_log[-1] = ("aead", out)
            return out

    def asymm_sign(self, ref: KeyRef, message: bytes) -> bytes:
        with self._lock:
            self._log("asymm_sign")
            self._check_session_alive()
            secret = self._resolve(ref, {KeyKind.SIGNATURE_SECRET})
            signature = self._provider.sign(secret, message)
            self.call_log[-1] = ("asymm_sign", signature)
            return signature

    def asymm_verify(self, ref: KeyRef, message: bytes, signature: bytes) -> bool:
        """Verify with a pinned public key.

        A failed verdict during an active session erases the session keys
        before returning, so a compromised caller cannot keep the
        handshake going.
        """
        with self._lock:
            self._log("asymm_verify")
            self._check_session_alive()
            public = self._resolve(
                ref, {KeyKind.PEER_PUBLIC, KeyKind.CA_ROOT_PUBLIC}
            )
            try:
                verdict = self._provider.verify(public, message, signature)
            except crypto.MalformedSignature:
                verdict = False
            if not verdict and self._session_ctx is not None:
                self._wipe_session()
            return verdict

    def hkdf_extract(
        self, salt: bytes | KeyRef, ikm_ref: KeyRef, out_key_id: int
    ) -> KeyRef:
        """Extract step over stored secrets; result stays in the vault."""
        with self._lock:
            self._log("hkdf_extract")
            self._check_session_alive()
            if isinstance(salt, KeyRef):
                salt_bytes = self._resolve(salt, {KeyKind.INTERMEDIATE_SECRET})
            else:
                salt_bytes = salt
            ikm = self._resolve(ikm_ref, {KeyKind.INTERMEDIATE_SECRET})
            prk = self._provider.hkdf_extract(salt_bytes, ikm)
            return self._store_session_key(out_key_id, KeyKind.INTERMEDIATE_SECRET, prk)

    def hkdf_expand(
        self,
        prk_ref: KeyRef,
        info: bytes,
        out_len: int,
        out_key_id: int | None = None,
        out_kind: KeyKind = KeyKind.INTERMEDIATE_SECRET,
    ) -> KeyRef | bytes:
        """Expand step; stores the output or returns it as public bytes.

        Public output is the exporter path when ``prk_ref`` is a session
        result, and the way nonces and MAC bytes come out of the vault.
        """
        with self._lock:
            self._log("hkdf_expand")
            self._check_session_alive()
            prk = self._resolve(
                prk_ref, {KeyKind.INTERMEDIATE_SECRET, KeyKind.SESSION_RESULT}
            )
            okm = self._provider.hkdf_expand(prk, info, out_len)
            if out_key_id is None:
                self.call_log[-1] = ("hkdf_expand", okm)
                return okm
            if out_kind not in (KeyKind.INTERMEDIATE_SECRET, KeyKind.SESSION_RESULT):
                raise WrongKeyKind("expand output must be intermediate or session result")
            return self._store_session_key(out_key_id, out_kind, okm)

    def dh_secret_derive(
        self, own_secret_ref: KeyRef, peer_public: bytes, out_key_id: int
    ) -> KeyRef:
        """DH shared secret from a stored secret; stored, never returned."""
        with self._lock:
            self._log("dh_secret_derive")
            self._check_session_alive()
            secret = self._resolve(
                own_secret_ref,
                {KeyKind.EPHEMERAL_SECRET, KeyKind.STATIC_DH_SECRET},
            )
            shared = self._provider.dh_derive(secret, peer_public)
            return self._store_session_key(
                out_key_id, KeyKind.INTERMEDIATE_SECRET, shared
            )

    def hash(self, data: bytes) -> bytes:
        with self._lock:
            self._log("hash")
            self._check_session_alive()
            digest = self._provider.hash(data)
            self.call_log[-1] = ("hash", digest)
            return digest

    def xor(self, a: bytes, b: bytes) -> bytes:
        with self._lock:
            self._log("xor")
            self._check_session_alive()
            if len(a) != len(b):
                raise crypto.BadLength("xor operands must have equal length")
            out = bytes(x ^ y for x, y in zip(a, b))
            self.call_log[-1] = ("xor", out)
            return out
