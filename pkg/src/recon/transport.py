"""Classical-channel messages, their byte framing, and transports.

Frame layout: a 4-byte big-endian length covering everything after it,
one tag byte, then the payload. Syndromes travel as packed bits; shortened
bits as ``(u32 position, u8 bit)`` pairs.
"""

from __future__ import annotations

import queue
import socket
import struct
from dataclasses import dataclass

import numpy as np

from .errors import TransportError

TAG_SYNDROMES = 1
TAG_REVEAL = 2
TAG_VERDICT = 3
TAG_ABORT = 4

_LEN = struct.Struct("!I")
_SYN_HEAD = struct.Struct("!BI")
_PAIR = struct.Struct("!IB")


@dataclass(frozen=True, eq=False)
class SyndromeBundle:
    syndromes: tuple[np.ndarray, ...]

    def __eq__(self, other):
        return isinstance(other, SyndromeBundle) and len(self.syndromes) == len(other.syndromes) and all(
            np.array_equal(a, b) for a, b in zip(self.syndromes, other.syndromes)
        )


@dataclass(frozen=True)
class ShortenReveal:
    pairs: tuple[tuple[int, int], ...]


@dataclass(frozen=True)
class Verdict:
    success: bool


@dataclass(frozen=True)
class Abort:
    reason: str


Message = SyndromeBundle | ShortenReveal | Verdict | Abort


def encode(msg: Message) -> bytes:
    if isinstance(msg, SyndromeBundle):
        m = len(msg.syndromes[0]) if msg.syndromes else 0
        body = bytes([TAG_SYNDROMES]) + _SYN_HEAD.pack(len(msg.syndromes), m)
        body += b"".join(np.packbits(np.asarray(z, dtype=np.uint8)).tobytes() for z in msg.syndromes)
    elif isinstance(msg, ShortenReveal):
        body = bytes([TAG_REVEAL]) + b"".join(_PAIR.pack(int(p), int(b)) for p, b in msg.pairs)
    elif isinstance(msg, Verdict):
        body = bytes([TAG_VERDICT, 1 if msg.success else 0])
    elif isinstance(msg, Abort):
        body = bytes([TAG_ABORT]) + msg.reason.encode("utf-8")
    else:
        raise TypeError(f"not a protocol message: {msg!r}")
    return _LEN.pack(len(body)) + body


def decode(frame: bytes) -> Message:
    """Inverse of :func:`encode`; raises :class:`TransportError` on malformed input."""
    if len(frame) < _LEN.size + 1:
        raise TransportError(f"malformed frame: {len(frame)} bytes is shorter than a header")
    (length,) = _LEN.unpack_from(frame)
    if length != len(frame) - _LEN.size:
        raise TransportError(f"malformed frame: length field {length}, body {len(frame) - _LEN.size}")
    return decode_body(frame[_LEN.size:])


def decode_body(body: bytes) -> Message:
    if not body:
        raise TransportError("malformed frame: empty body")
    tag, payload = body[0], body[1:]
    if tag == TAG_SYNDROMES:
        if len(payload) < _SYN_HEAD.size:
            raise TransportError("malformed syndrome bundle header")
        count, m = _SYN_HEAD.unpack_from(payload)
        width = (m + 7) // 8
        data = payload[_SYN_HEAD.size:]
        if len(data) != count * width:
            raise TransportError(f"syndrome bundle: expected {count * width} bytes, got {len(data)}")
        raw = np.frombuffer(data, dtype=np.uint8)
        zs = tuple(np.unpackbits(raw[k * width:(k + 1) * width])[:m].copy() for k in range(count))
        return SyndromeBundle(zs)
    if tag == TAG_REVEAL:
        if len(payload) % _PAIR.size:
            raise TransportError("reveal payload is not a whole number of pairs")
        pairs = tuple(_PAIR.iter_unpack(payload))
        if any(b > 1 for _, b in pairs):
            raise TransportError("revealed bit value is not 0/1")
        return ShortenReveal(pairs)
    if tag == TAG_VERDICT:
        if len(payload) != 1 or payload[0] > 1:
            raise TransportError("malformed verdict")
        return Verdict(bool(payload[0]))
    if tag == TAG_ABORT:
        return Abort(payload.decode("utf-8", errors="replace"))
    raise TransportError(f"unknown message tag {tag}")


class QueueEndpoint:
    """One side of an in-process, thread-safe channel carrying encoded frames."""

    def __init__(self, inbox: queue.Queue, outbox: queue.Queue, timeout: float | None = 60.0):
        self._in = inbox
        self._out = outbox
        self.timeout = timeout

    def send(self, msg: Message) -> bytes:
        frame = encode(msg)
        self._out.put(frame)
        return frame

    def recv(self) -> tuple[Message, bytes]:
        try:
            frame = self._in.get(timeout=self.timeout)
        except queue.Empty:
            raise TransportError("peer did not answer in time") from None
        if frame is None:
            raise TransportError("peer closed the channel")
        return decode(frame), frame

    def close(self) -> None:
        self._out.put(None)


def queue_pair(timeout: float | None = 60.0) -> tuple[QueueEndpoint, QueueEndpoint]:
    a, b = queue.Queue(), queue.Queue()
    return QueueEndpoint(a, b, timeout), QueueEndpoint(b, a, timeout)


def _recv_exact(sock: socket.socket, size: int) -> bytes:
    chunks = []
    got = 0
    while got < size:
        try:
            chunk = sock.recv(size - got)
        except OSError as exc:
            raise TransportError(f"connection lost: {exc}") from exc
        if not chunk:
            raise TransportError(f"connection closed after {got} of {size} bytes")
        chunks.append(chunk)
        got += len(chunk)
    return b"".join(chunks)


class SocketEndpoint:
    """Framed messages over a connected stream socket."""

    max_frame = 1 << 28

    def __init__(self, sock: socket.socket):
        self.sock = sock

    def send(self, msg: Message) -> bytes:
        frame = encode(msg)
        try:
            self.sock.sendall(frame)
        except OSError as exc:
            raise TransportError(f"connection lost: {exc}") from exc
        return frame

    def recv(self) -> tuple[Message, bytes]:
        head = _recv_exact(self.sock, _LEN.size)
        (length,) = _LEN.unpack(head)
        if not 0 < length <= self.max_frame:
            raise TransportError(f"malformed frame: length {length}")
        body = _recv_exact(self.sock, length)
        return decode_body(body), head + body

    def close(self) -> None:
        self.sock.close()


def parse_addr(addr: str) -> tuple[str, int]:
    host, _, port = addr.rpartition(":")
    if not port.isdigit():
        raise ValueError(f"address must look like HOST:PORT, got {addr!r}")
    return host or "127.0.0.1", int(port)


def listen(addr: str, timeout: float | None = 60.0) -> SocketEndpoint:
    """Accept exactly one peer on ``addr``."""
    with socket.create_server(parse_addr(addr)) as srv:
        srv.settimeout(timeout)
        try:
            conn, _ = srv.accept()
        except OSError as exc:
            raise TransportError(f"no peer connected to {addr}: {exc}") from exc
    conn.settimeout(timeout)
    return SocketEndpoint(conn)


def connect(addr: str, timeout: float | None = 60.0) -> SocketEndpoint:
    try:
        sock = socket.create_connection(parse_addr(addr), timeout=timeout)
    except OSError as exc:
        raise TransportError(f"cannot reach {addr}: {exc}") from exc
    return SocketEndpoint(sock)
