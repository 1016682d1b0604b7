"""Two-party overlap estimation where every oracle call is a message.

Alice and Bob each hold one pure state privately.  Each exposes exactly
the metered oracle surface of its Pauli sampler -- sample indices,
bounded-precision coefficient estimates, norm estimates -- over a
transport, plus one handshake value: its locally computed coefficient
1-norm.  A coordinator (a third logical process; co-locating it with a
party is allowed but never assumed) takes the max of the two handshake
values as ``kappa`` and runs the no-oversampling real inner-product
estimator with every oracle call routed as a request/response pair.

Raw amplitudes never cross the wire: the frame schema has no field that
could carry them, so the privacy surface is checkable by inspecting
transcripts.

Transport transparency: the estimator draws its coin flips from the
``"coordinator"`` stream and each party feeds its sampler from its role
stream, exactly as the in-process driver does, so for equal root seeds
the local and distributed runs produce bit-identical estimates.  The
coordinator-side handles meter one ledger event per oracle request, so
message counts equal the local run's ledger counts (plus the two
handshake exchanges, which are connection setup, not oracle calls).

The serve loop is strictly sequential request/response -- the estimation
loop is sequential by contract, and this estimator has no bulk histogram
phase that would benefit from pipelining.
"""

from __future__ import annotations

import socket
import threading
from collections import deque
from contextlib import contextmanager
from typing import Optional, Protocol

from .access import SAMPLE_FAILED, AccessHandle, EstimatorReport, SampleOutcome
from .core import CostLedger, DenseVector
from .estimators import DEFAULT_CONSTANTS, EstimatorConstants, inner_product_real_exact
from .pauli import CorollaryCost, exact_pauli_sampler, pauli_representation
from .rng import generator
from .wire import (
    ERR_INTERNAL,
    ERR_MALFORMED,
    ERR_UNSUPPORTED,
    KAPPA_SENTINEL,
    ErrorMessage,
    MalformedFrame,
    NormRequest,
    NormResponse,
    ProtocolError,
    ProtocolMessage,
    QueryRequest,
    QueryResponse,
    SampleRequest,
    SampleResponse,
    SessionAbort,
    SocketTransport,
    decode_body,
    encode_body,
)

__all__ = [
    "ROLES",
    "PartyEndpoint",
    "serve",
    "LoopbackTransport",
    "RemoteHandle",
    "coordinate_overlap",
    "tcp_party",
]

ROLES = ("alice", "bob")


class Transport(Protocol):
    """Frame-body transport: bytes in, bytes out, None on clean close."""

    def send_body(self, body: bytes) -> None: ...

    def recv_body(self) -> Optional[bytes]: ...

    def close(self) -> None: ...


class PartyEndpoint:
    """One party: a private state served through its Pauli oracle surface.

    The state itself never leaves this object; ``respond`` maps each
    request to the corresponding metered oracle call on the local sampler
    handle.  The party's rng stream is derived from ``(seed, role)`` so a
    distributed run can be replayed in process.
    """

    def __init__(
        self,
        role: str,
        state,
        n: int,
        *,
        seed: int = 0,
        cost: CorollaryCost | None = None,
        ledger: CostLedger | None = None,
    ):
        if role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}, got {role!r}")
        if isinstance(state, DenseVector):
            state = state.values
        self.role = role
        self.n = int(n)
        self.pi = pauli_representation(state, n)
        self.handle = exact_pauli_sampler(
            self.pi,
            cost if cost is not None else CorollaryCost(),
            generator(seed, role),
            ledger=ledger,
        )
        self.kappa = self.pi.one_norm()

    def respond(self, msg: ProtocolMessage) -> ProtocolMessage:
        """Answer one request; never raises for request-level problems."""
        sid = msg.session_id
        if isinstance(msg, SampleRequest):
            out = self.handle.sample()
            if out.failed:
                return SampleResponse(sid, success=False, index=0)
            return SampleResponse(sid, success=True, index=out.index)
        if isinstance(msg, QueryRequest):
            if not (0 <= msg.index < self.handle.dim) or not (0.0 < msg.eps <= 1.0):
                return ErrorMessage(sid, ERR_UNSUPPORTED)
            v = self.handle.query(msg.index, msg.eps)
            return QueryResponse(sid, v.real, v.imag)
        if isinstance(msg, NormRequest):
            if msg.eps == KAPPA_SENTINEL:
                return NormResponse(sid, self.kappa)
            if not (0.0 < msg.eps <= 1.0):
                return ErrorMessage(sid, ERR_UNSUPPORTED)
            return NormResponse(sid, self.handle.norm_sq(msg.eps))
        # a response tag sent at a server is well-formed but unanswerable
        return ErrorMessage(sid, ERR_UNSUPPORTED)

    def respond_bytes(self, body: bytes) -> bytes:
        """Decode, answer, encode; malformed input yields an ERROR frame."""
        try:
            msg = decode_body(body)
        except MalformedFrame:
            return encode_body(ErrorMessage(0, ERR_MALFORMED))
        try:
            return encode_body(self.respond(msg))
        except Exception:
            return encode_body(ErrorMessage(msg.session_id, ERR_INTERNAL))


def serve(party: PartyEndpoint, transport: Transport) -> None:
    """Answer requests until the peer closes the session.

    A malformed frame is answered with ERROR and the session continues;
    transport loss raises :class:`SessionAbort` out of this loop.
    """
    while True:
        body = transport.recv_body()
        if body is None:
            return
        transport.send_body(party.respond_bytes(body))


class LoopbackTransport:
    """Coordinator-side transport that dispatches to an in-process party.

    Request bytes are encoded, handed to the party's byte-level handler,
    and the encoded response queued -- the full codec path runs, with no
    sockets or threads involved.
    """

    def __init__(self, party: PartyEndpoint):
        self.party = party
        self._inbox: deque[bytes] = deque()

    def send_body(self, body: bytes) -> None:
        self._inbox.append(self.party.respond_bytes(bytes(body)))

    def recv_body(self) -> Optional[bytes]:
        if not self._inbox:
            raise SessionAbort("no pending response on loopback")
        return self._inbox.popleft()

    def close(self) -> None:
        self._inbox.clear()


class RemoteHandle(AccessHandle):
    """The coordinator's metered view of one serving party.

    Each oracle method is one request/response exchange; the local ledger
    records exactly one event per exchange (the party bills true oracle
    units on its own side -- the coordinator cannot know them, and counts
    are what transport transparency promises).  ``messages`` counts every
    frame sent, including the non-oracle handshake.
    """

    def __init__(
        self,
        transport: Transport,
        dim: int,
        session_id: int,
        *,
        ledger: CostLedger | None = None,
    ):
        super().__init__(dim, phi=1.0, ledger=ledger)
        self.transport = transport
        self.session_id = int(session_id) & (2**64 - 1)
        self.messages = 0

    def _exchange(self, msg: ProtocolMessage, want: type) -> ProtocolMessage:
        self.transport.send_body(encode_body(msg))
        self.messages += 1
        body = self.transport.recv_body()
        if body is None:
            raise SessionAbort("peer closed mid-session")
        try:
            resp = decode_body(body)
        except MalformedFrame as exc:
            raise ProtocolError(f"peer sent an unparseable frame: {exc}") from exc
        if isinstance(resp, ErrorMessage):
            raise ProtocolError(f"peer rejected request: error code {resp.code}")
        if not isinstance(resp, want):
            raise ProtocolError(f"expected {want.__name__}, got {type(resp).__name__}")
        if resp.session_id != self.session_id:
            raise ProtocolError(
                f"session mismatch: sent {self.session_id}, got {resp.session_id}"
            )
        return resp

    def sample(self) -> SampleOutcome:
        resp = self._exchange(SampleRequest(self.session_id), SampleResponse)
        if not resp.success:
            self.ledger.record_samples(1, failures=1)
            return SAMPLE_FAILED
        self.ledger.record_samples(1)
        return SampleOutcome.ok(resp.index)

    def query(self, i: int, eps: float) -> complex:
        resp = self._exchange(
            QueryRequest(self.session_id, int(i), float(eps)), QueryResponse
        )
        self.ledger.record_query(eps)
        return complex(resp.re, resp.im)

    def norm_sq(self, eps: float) -> float:
        resp = self._exchange(NormRequest(self.session_id, float(eps)), NormResponse)
        self.ledger.record_norm(eps)
        return resp.value

    def fetch_kappa(self) -> float:
        """Handshake: the party's 1-norm bound.  Setup, not an oracle call."""
        resp = self._exchange(
            NormRequest(self.session_id, KAPPA_SENTINEL), NormResponse
        )
        return resp.value


def coordinate_overlap(
    alice: Transport,
    bob: Transport,
    n: int,
    eps: float,
    *,
    seed: int = 0,
    constants: EstimatorConstants = DEFAULT_CONSTANTS,
    keep_trace: bool = False,
) -> EstimatorReport:
    """Estimate ``|<psi|phi>|^2`` across two serving parties.

    Handshakes ``kappa`` from both sides (each party computes its own
    1-norm; the coordinator takes the max), then runs the real
    inner-product estimator with both handles remote.  The report's ledger
    counts are exactly the oracle request/response pairs; with the same
    ``seed``, the estimate is bit-identical to the in-process driver's.
    """
    dim = 4**n
    ha = RemoteHandle(alice, dim, seed)
    hb = RemoteHandle(bob, dim, seed)
    kappa = max(ha.fetch_kappa(), hb.fetch_kappa())
    return inner_product_real_exact(
        ha,
        hb,
        eps,
        generator(seed, "coordinator"),
        kappa=kappa,
        delta_bound=0.0,
        constants=constants,
        keep_trace=keep_trace,
    )


@contextmanager
def tcp_party(party: PartyEndpoint, host: str = "127.0.0.1", port: int = 0):
    """Serve one party for one TCP session in a background thread.

    Yields ``(host, port)`` to connect to; on exit, waits for the serve
    loop to finish and closes the listener.
    """
    listener = socket.create_server((host, port))
    bound_port = listener.getsockname()[1]
    failure: list[BaseException] = []

    def run() -> None:
        try:
            conn, _ = listener.accept()
        except OSError:
            return  # listener closed before any connection arrived
        transport = SocketTransport(conn)
        try:
            serve(party, transport)
        except SessionAbort as exc:
            failure.append(exc)
        finally:
            transport.close()

    thread = threading.Thread(target=run, daemon=True)
    thread.start()
    try:
        yield host, bound_port
    finally:
        try:
            listener.close()
        except OSError:
            pass
        thread.join(timeout=10.0)


def _serve_tcp_once(party: PartyEndpoint, host: str, port: int) -> None:
    """Blocking single-session server (the party binary's main loop)."""
    with socket.create_server((host, port)) as listener:
        conn, _ = listener.accept()
        transport = SocketTransport(conn)
        try:
            serve(party, transport)
        finally:
            transport.close()
