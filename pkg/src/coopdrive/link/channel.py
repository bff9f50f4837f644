"""Duplex message channels: in-process queue pair and local TCP stream.

Messages are opaque byte strings. The TCP binding frames each message with a
little-endian u32 length prefix. Both bindings share the same two-method
surface (``send``, ``recv``) so the cooperative orchestration is transport
agnostic.
"""

from __future__ import annotations

import queue
import socket
import struct

from ..errors import PeerTimeout


class QueueChannel:
    """One side of an in-process duplex pair."""

    def __init__(self, inbox: queue.Queue, outbox: queue.Queue):
        self._inbox = inbox
        self._outbox = outbox

    @classmethod
    def pair(cls):
        a, b = queue.Queue(), queue.Queue()
        return cls(a, b), cls(b, a)

    def send(self, data: bytes) -> None:
        self._outbox.put(bytes(data))

    def recv(self, timeout: float | None = None) -> bytes:
        try:
            return self._inbox.get(timeout=timeout)
        except queue.Empty:
            raise PeerTimeout(f"no message within {timeout} s") from None

    def close(self) -> None:
        pass


class TcpChannel:
    """Length-prefixed messages over a connected socket."""

    def __init__(self, sock: socket.socket):
        self._sock = sock

    @classmethod
    def listen_one(cls, host: str = "127.0.0.1", port: int = 0,
                   accept_timeout: float = 10.0):
        """Bind, accept exactly one peer. Returns (channel factory, bound port).

        The factory is a zero-argument callable that blocks in accept(); the
        port is available immediately so the peer can connect first.
        """
        srv = socket.create_server((host, port))
        srv.settimeout(accept_timeout)
        bound_port = srv.getsockname()[1]

        def accept() -> "TcpChannel":
            try:
                conn, _ = srv.accept()
            except socket.timeout:
                raise PeerTimeout(f"no connection within {accept_timeout} s") from None
            finally:
                srv.close()
            return cls(conn)

        return accept, bound_port

    @classmethod
    def connect(cls, host: str, port: int, timeout: float = 10.0) -> "TcpChannel":
        try:
            sock = socket.create_connection((host, port), timeout=timeout)
        except socket.timeout:
            raise PeerTimeout(f"connect to {host}:{port} timed out") from None
        return cls(sock)

    def send(self, data: bytes) -> None:
        self._sock.sendall(struct.pack("<I", len(data)) + data)

    def _recv_exact(self, n: int) -> bytes:
        chunks = []
        got = 0
        while got < n:
            chunk = self._sock.recv(n - got)
            if not chunk:
                raise PeerTimeout("peer closed the connection mid-message")
            chunks.append(chunk)
            got += len(chunk)
        return b"".join(chunks)

    def recv(self, timeout: float | None = None) -> bytes:
        self._sock.settimeout(timeout)
        try:
            (n,) = struct.unpack("<I", self._recv_exact(4))
            return self._recv_exact(n)
        except socket.timeout:
            raise PeerTimeout(f"no message within {timeout} s") from None

    def close(self) -> None:
        try:
            self._sock.close()
        except OSError:
            pass
