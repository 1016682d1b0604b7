"""Binary frame codec and socket transport for the two-party protocol.

Every message travels as a length-prefixed frame:

    u32 length   -- byte count of everything after this prefix
    u8  tag      -- message kind
    u64 session  -- session identifier, echoed by responses
    payload      -- fixed fields per tag, declared order

All integers and IEEE-754 doubles are little-endian, so a frame's byte
image is bit-exactly testable across implementations.  Payloads per tag:

    SAMPLE_REQ  (1)  --
    SAMPLE_RESP (2)  u8 success, u64 index (0 when success = 0)
    QUERY_REQ   (3)  u64 index, f64 eps
    QUERY_RESP  (4)  f64 re, f64 im
    NORM_REQ    (5)  f64 eps
    NORM_RESP   (6)  f64 value
    ERROR       (7)  u8 code

A NORM_REQ carrying the sentinel precision -1.0 is the connection-setup
handshake: the serving party answers with its locally computed 1-norm
bound instead of a norm-oracle estimate.  A frame whose body arrives
intact but does not parse is *malformed*: the peer answers ERROR and the
session continues (framing is still synchronized).  Losing the stream
itself -- EOF mid-frame, a socket error, an impossible length prefix --
is unrecoverable and raises :class:`SessionAbort`.
"""

from __future__ import annotations

import socket
import struct
from dataclasses import dataclass
from typing import ClassVar, Optional, Union

__all__ = [
    "TAG_SAMPLE_REQ",
    "TAG_SAMPLE_RESP",
    "TAG_QUERY_REQ",
    "TAG_QUERY_RESP",
    "TAG_NORM_REQ",
    "TAG_NORM_RESP",
    "TAG_ERROR",
    "KAPPA_SENTINEL",
    "ERR_MALFORMED",
    "ERR_UNSUPPORTED",
    "ERR_INTERNAL",
    "MAX_FRAME_BYTES",
    "MalformedFrame",
    "ProtocolError",
    "SessionAbort",
    "SampleRequest",
    "SampleResponse",
    "QueryRequest",
    "QueryResponse",
    "NormRequest",
    "NormResponse",
    "ErrorMessage",
    "ProtocolMessage",
    "encode_body",
    "decode_body",
    "encode_frame",
    "SocketTransport",
    "connect_tcp",
]

TAG_SAMPLE_REQ = 1
TAG_SAMPLE_RESP = 2
TAG_QUERY_REQ = 3
TAG_QUERY_RESP = 4
TAG_NORM_REQ = 5
TAG_NORM_RESP = 6
TAG_ERROR = 7

#: NORM_REQ eps value that asks for the party's 1-norm bound (handshake).
KAPPA_SENTINEL = -1.0

ERR_MALFORMED = 1
ERR_UNSUPPORTED = 2
ERR_INTERNAL = 3

#: Frames above this are treated as stream corruption, not as content.
MAX_FRAME_BYTES = 1 << 20


class MalformedFrame(ValueError):
    """Frame body arrived intact but does not parse."""


class ProtocolError(RuntimeError):
    """Peer answered with ERROR, the wrong kind, or the wrong session."""


class SessionAbort(ConnectionError):
    """Transport-level failure; the session cannot continue."""


_HEADER = struct.Struct("<BQ")
_LENGTH = struct.Struct("<I")
_PAY_SAMPLE_RESP = struct.Struct("<BQ")
_PAY_QUERY_REQ = struct.Struct("<Qd")
_PAY_QUERY_RESP = struct.Struct("<dd")
_PAY_F64 = struct.Struct("<d")
_PAY_U8 = struct.Struct("<B")


@dataclass(frozen=True)
class SampleRequest:
    tag: ClassVar[int] = TAG_SAMPLE_REQ
    session_id: int

    def _payload(self) -> bytes:
        return b""


@dataclass(frozen=True)
class SampleResponse:
    tag: ClassVar[int] = TAG_SAMPLE_RESP
    session_id: int
    success: bool
    index: int

    def _payload(self) -> bytes:
        return _PAY_SAMPLE_RESP.pack(1 if self.success else 0, self.index)


@dataclass(frozen=True)
class QueryRequest:
    tag: ClassVar[int] = TAG_QUERY_REQ
    session_id: int
    index: int
    eps: float

    def _payload(self) -> bytes:
        return _PAY_QUERY_REQ.pack(self.index, self.eps)


@dataclass(frozen=True)
class QueryResponse:
    tag: ClassVar[int] = TAG_QUERY_RESP
    session_id: int
    re: float
    im: float

    def _payload(self) -> bytes:
        return _PAY_QUERY_RESP.pack(self.re, self.im)


@dataclass(frozen=True)
class NormRequest:
    tag: ClassVar[int] = TAG_NORM_REQ
    session_id: int
    eps: float

    def _payload(self) -> bytes:
        return _PAY_F64.pack(self.eps)


@dataclass(frozen=True)
class NormResponse:
    tag: ClassVar[int] = TAG_NORM_RESP
    session_id: int
    value: float

    def _payload(self) -> bytes:
        return _PAY_F64.pack(self.value)


@dataclass(frozen=True)
class ErrorMessage:
    tag: ClassVar[int] = TAG_ERROR
    session_id: int
    code: int

    def _payload(self) -> bytes:
        return _PAY_U8.pack(self.code)


ProtocolMessage = Union[
    SampleRequest,
    SampleResponse,
    QueryRequest,
    QueryResponse,
    NormRequest,
    NormResponse,
    ErrorMessage,
]


def encode_body(msg: ProtocolMessage) -> bytes:
    """Tag + session + payload (everything after the length prefix)."""
    return _HEADER.pack(msg.tag, msg.session_id) + msg._payload()


def encode_frame(msg: ProtocolMessage) -> bytes:
    """Complete frame bytes, including the length prefix."""
    body = encode_body(msg)
    return _LENGTH.pack(len(body)) + body


def decode_body(body: bytes) -> ProtocolMessage:
    """Parse a frame body; :class:`MalformedFrame` on any violation."""
    if len(body) < _HEADER.size:
        raise MalformedFrame(f"body of {len(body)} bytes is shorter than the header")
    tag, session_id = _HEADER.unpack_from(body)
    payload = body[_HEADER.size :]
    try:
        if tag == TAG_SAMPLE_REQ:
            if payload:
                raise MalformedFrame("SAMPLE_REQ carries no payload")
            return SampleRequest(session_id)
        if tag == TAG_SAMPLE_RESP:
            success, index = _PAY_SAMPLE_RESP.unpack(payload)
            if success not in (0, 1):
                raise MalformedFrame(f"success flag {success} is not 0/1")
            return SampleResponse(session_id, bool(success), index)
        if tag == TAG_QUERY_REQ:
            index, eps = _PAY_QUERY_REQ.unpack(payload)
            return QueryRequest(session_id, index, eps)
        if tag == TAG_QUERY_RESP:
            re, im = _PAY_QUERY_RESP.unpack(payload)
            return QueryResponse(session_id, re, im)
        if tag == TAG_NORM_REQ:
            (eps,) = _PAY_F64.unpack(payload)
            return NormRequest(session_id, eps)
        if tag == TAG_NORM_RESP:
            (value,) = _PAY_F64.unpack(payload)
            return NormResponse(session_id, value)
        if tag == TAG_ERROR:
            (code,) = _PAY_U8.unpack(payload)
            return ErrorMessage(session_id, code)
    except struct.error as exc:
        raise MalformedFrame(f"payload does not fit tag {tag}: {exc}") from exc
    raise MalformedFrame(f"unknown tag {tag}")


class SocketTransport:
    """Length-prefixed framing over a blocking stream socket.

    ``recv_body`` returns ``None`` on a clean close (EOF exactly at a frame
    boundary); every other shortfall raises :class:`SessionAbort`.
    """

    def __init__(self, sock: socket.socket):
        self.sock = sock

    def send_body(self, body: bytes) -> None:
        try:
            self.sock.sendall(_LENGTH.pack(len(body)) + bytes(body))
        except OSError as exc:
            raise SessionAbort(f"send failed: {exc}") from exc

    def recv_body(self) -> Optional[bytes]:
        head = self._recv_exact(_LENGTH.size, boundary=True)
        if head is None:
            return None
        (length,) = _LENGTH.unpack(head)
        if length > MAX_FRAME_BYTES:
            raise SessionAbort(f"frame length {length} exceeds {MAX_FRAME_BYTES}")
        return self._recv_exact(length, boundary=False)

    def _recv_exact(self, n: int, boundary: bool) -> Optional[bytes]:
        chunks = []
        got = 0
        while got < n:
            try:
                chunk = self.sock.recv(n - got)
            except OSError as exc:
                raise SessionAbort(f"recv failed: {exc}") from exc
            if not chunk:
                if boundary and got == 0:
                    return None
                raise SessionAbort("connection lost mid-frame")
            chunks.append(chunk)
            got += len(chunk)
        return b"".join(chunks)

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass


def connect_tcp(host: str, port: int, timeout: float = 10.0) -> SocketTransport:
    """Open a TCP connection to a serving party."""
    try:
        sock = socket.create_connection((host, port), timeout=timeout)
    except OSError as exc:
        raise SessionAbort(f"connect to {host}:{port} failed: {exc}") from exc
    sock.settimeout(timeout)
    return SocketTransport(sock)
