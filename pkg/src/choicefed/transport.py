"""Transports carrying protocol frames between nodes.

Two implementations with identical frame semantics:

* in-process endpoint pairs backed by deques, optionally with a service
  hook so a single thread can drive a whole chief-plus-workers cluster
  without context switches (the fast desk-scale path);
* TCP over loopback, frames re-prefixed on the socket, for runs with
  realistic transport latency.
"""

from __future__ import annotations

import socket
import threading
from collections import deque
from typing import Callable, Optional

from .errors import ChannelClosedError, FramingError, WorkerTimeoutError

_LEN_BYTES = 4


class InProcEndpoint:
    """One end of an in-process frame pipe.

    `service_hook`, when set, is called whenever recv_frame finds the
    inbox empty; it is expected to advance the peer (e.g. make a worker
    consume its inbox and reply).  This turns the synchronous rendezvous
    of the distributed loop into a plain function call chain on one
    thread.  Without a hook, recv_frame blocks on a condition variable,
    so endpoint pairs also work across threads.
    """

    def __init__(self, timeout_s: float = 30.0):
        self.inbox: deque[bytes] = deque()
        self.peer: "InProcEndpoint" | None = None
        self.closed = False
        self.service_hook: Optional[Callable[[], None]] = None
        self.timeout_s = timeout_s
        self._cond = threading.Condition()

    @classmethod
    def pair(cls, timeout_s: float = 30.0) -> tuple["InProcEndpoint", "InProcEndpoint"]:
        a, b = cls(timeout_s), cls(timeout_s)
        a.peer, b.peer = b, a
        return a, b

    def send_frame(self, frame: bytes) -> None:
        if self.closed or self.peer is None or self.peer.closed:
            raise ChannelClosedError("peer endpoint is closed")
        with self.peer._cond:
            self.peer.inbox.append(frame)
            self.peer._cond.notify()

    def recv_frame(self) -> bytes:
        while True:
            if self.inbox:
                return self.inbox.popleft()
            if self.closed or (self.peer is not None and self.peer.closed):
                raise ChannelClosedError("endpoint closed")
            if self.service_hook is not None:
                self.service_hook()
                continue
            with self._cond:
                if self.inbox or self.closed:
                    continue
                if not self._cond.wait(self.timeout_s):
                    raise WorkerTimeoutError(-1, "peer")

    def close(self) -> None:
        with self._cond:
            self.closed = True
            self._cond.notify_all()
        if self.peer is not None:
            with self.peer._cond:
                self.peer._cond.notify_all()


class TcpEndpoint:
    """Frame pipe over a connected socket."""

    def __init__(self, sock: socket.socket, timeout_s: Optional[float] = None):
        self._sock = sock
        self._sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        if timeout_s is not None:
            self._sock.settimeout(timeout_s)

    def settimeout(self, timeout_s: Optional[float]) -> None:
        self._sock.settimeout(timeout_s)

    def send_frame(self, frame: bytes) -> None:
        try:
            self._sock.sendall(frame)
        except OSError as exc:
            raise ChannelClosedError(f"send failed: {exc}") from exc

    def _recv_exact(self, n: int) -> bytes:
        chunks = []
        remaining = n
        while remaining:
            try:
                chunk = self._sock.recv(remaining)
            except socket.timeout as exc:
                raise WorkerTimeoutError(-1, "peer") from exc
            except OSError as exc:
                raise ChannelClosedError(f"recv failed: {exc}") from exc
            if not chunk:
                raise ChannelClosedError("connection closed by peer")
            chunks.append(chunk)
            remaining -= len(chunk)
        return b"".join(chunks)

    def recv_frame(self) -> bytes:
        prefix = self._recv_exact(_LEN_BYTES)
        length = int.from_bytes(prefix, "big")
        if length > (1 << 21):
            raise FramingError(f"implausible frame length {length}")
        return prefix + self._recv_exact(length)

    def close(self) -> None:
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._sock.close()


def tcp_listen(host: str = "127.0.0.1", port: int = 0) -> socket.socket:
    srv = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    srv.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    srv.bind((host, port))
    srv.listen()
    return srv


def tcp_connect(host: str, port: int,
                timeout_s: Optional[float] = None) -> TcpEndpoint:
    sock = socket.create_connection((host, port), timeout=timeout_s)
    return TcpEndpoint(sock, timeout_s)
