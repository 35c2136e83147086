"""Byte transports behind the handshake tx/rx callbacks.

Both transports deliver whole messages unmodified and in order. The
in-memory link is a pair of queues for two endpoints in one process;
the UDP channel sends one datagram per message and can either connect
to a known peer or learn the peer address from the first datagram.
"""

from __future__ import annotations

import queue
import socket
from typing import Callable

from ..edhoc import TransportError

DEFAULT_TIMEOUT_MS = 2000


class Channel:
    """A tx/rx pair bound to one endpoint of a link."""

    def __init__(self, tx: Callable[[bytes], None], rx: Callable[[], bytes]):
        self.tx = tx
        self.rx = rx


class InMemoryLink:
    """Two endpoints connected by queues, usable from two threads."""

    def __init__(self, timeout_ms: int = DEFAULT_TIMEOUT_MS):
        self._a_to_b: queue.Queue[bytes] = queue.Queue()
        self._b_to_a: queue.Queue[bytes] = queue.Queue()
        self._timeout = timeout_ms / 1000.0

    def _receiver(self, q: queue.Queue[bytes]) -> Callable[[], bytes]:
        def rx() -> bytes:
            try:
                return q.get(timeout=self._timeout)
            except queue.Empty:
                raise TransportError("receive timed out") from None

        return rx

    def endpoint_a(self) -> Channel:
        return Channel(self._a_to_b.put, self._receiver(self._b_to_a))

    def endpoint_b(self) -> Channel:
        return Channel(self._b_to_a.put, self._receiver(self._a_to_b))


class UdpChannel(Channel):
    """Datagram-per-message endpoint over a UDP socket."""

    def __init__(
        self,
        bind: tuple[str, int],
        peer: tuple[str, int] | None = None,
        timeout_ms: int = DEFAULT_TIMEOUT_MS,
    ):
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self._sock.bind(bind)
        self._sock.settimeout(timeout_ms / 1000.0)
        self._peer = peer
        super().__init__(self._tx, self._rx)

    @property
    def address(self) -> tuple[str, int]:
        return self._sock.getsockname()

    def _tx(self, data: bytes) -> None:
        if self._peer is None:
            raise TransportError("peer address unknown; nothing received yet")
        self._sock.sendto(data, self._peer)

    def _rx(self) -> bytes:
        try:
            data, sender = self._sock.recvfrom(65535)
        except socket.timeout:
            raise TransportError("receive timed out") from None
        except OSError as exc:
            raise TransportError(f"socket error: {exc}") from exc
        if self._peer is None:
            self._peer = sender
        return data

    def close(self) -> None:
        self._sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class RecordingChannel(Channel):
    """Wraps a channel, logging sent and received messages.

    Optionally applies a tamper function to outgoing messages, keyed by
    the 1-based index of the message sent over this channel.
    """

    def __init__(
        self,
        inner: Channel,
        tamper: Callable[[int, bytes], bytes] | None = None,
    ):
        self.sent: list[bytes] = []
        self.received: list[bytes] = []
        self._inner = inner
        self._tamper = tamper
        super().__init__(self._tx, self._rx)

    def _tx(self, data: bytes) -> None:
        self.sent.append(data)
        if self._tamper is not None:
            data = self._tamper(len(self.sent), data)
        self._inner.tx(data)

    def _rx(self) -> bytes:
        data = self._inner.rx()
        self.received.append(data)
        return data
