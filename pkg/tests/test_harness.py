"""Wire codec, serving parties, and transport transparency.

The frame layout is pinned against hand-assembled byte strings so any
codec change that silently shifts the format fails here, not in an
interop session.  The end-to-end tests assert the strongest property the
design promises: with equal seeds, the in-process and distributed runs
produce bit-identical estimates and identical oracle counts.
"""

import math
import socket
import struct

import numpy as np
import pytest

from asqlab import (
    LoopbackTransport,
    PartyEndpoint,
    RemoteHandle,
    SocketTransport,
    connect_tcp,
    coordinate_overlap,
    distributed_overlap,
    generator,
    haar_random_state,
    serve,
    tcp_party,
    zero_state,
)
from asqlab.wire import (
    ERR_MALFORMED,
    ERR_UNSUPPORTED,
    KAPPA_SENTINEL,
    MAX_FRAME_BYTES,
    ErrorMessage,
    MalformedFrame,
    NormRequest,
    NormResponse,
    ProtocolError,
    QueryRequest,
    QueryResponse,
    SampleRequest,
    SampleResponse,
    SessionAbort,
    decode_body,
    encode_body,
    encode_frame,
)

T_STATE = np.array([1.0, np.exp(1j * np.pi / 4)]) / math.sqrt(2.0)


# ---------------------------------------------------------------------------
# frame codec


def test_query_request_golden_bytes():
    body = encode_body(QueryRequest(7, 3, 0.25))
    want = (
        bytes([3])
        + (7).to_bytes(8, "little")
        + (3).to_bytes(8, "little")
        + struct.pack("<d", 0.25)
    )
    assert body == want
    assert encode_frame(QueryRequest(7, 3, 0.25)) == struct.pack("<I", 25) + want


def test_more_golden_bodies():
    assert encode_body(SampleRequest(1)) == bytes([1]) + (1).to_bytes(8, "little")
    assert encode_body(SampleResponse(2, True, 5)) == (
        bytes([2]) + (2).to_bytes(8, "little") + bytes([1]) + (5).to_bytes(8, "little")
    )
    assert encode_body(ErrorMessage(0, ERR_MALFORMED)) == (
        bytes([7]) + bytes(8) + bytes([1])
    )
    assert encode_body(NormRequest(9, KAPPA_SENTINEL)) == (
        bytes([5]) + (9).to_bytes(8, "little") + struct.pack("<d", -1.0)
    )


def test_payload_sizes_are_tag_constant():
    # privacy check: no message has a variable-length field, so transcript
    # sizes reveal nothing about the served state
    sizes = {
        encode_body(SampleRequest(0)): 9,
        encode_body(SampleResponse(0, False, 0)): 18,
        encode_body(QueryRequest(0, 0, 0.1)): 25,
        encode_body(QueryResponse(0, 0.0, 0.0)): 25,
        encode_body(NormRequest(0, 0.1)): 17,
        encode_body(NormResponse(0, 1.0)): 17,
        encode_body(ErrorMessage(0, 1)): 10,
    }
    for body, want in sizes.items():
        assert len(body) == want


@pytest.mark.parametrize(
    "msg",
    [
        SampleRequest(0),
        SampleRequest(2**64 - 1),
        SampleResponse(7, True, 2**64 - 1),
        SampleResponse(7, False, 0),
        QueryRequest(1, 2**64 - 1, 5e-324),
        QueryResponse(1, -0.0, float("inf")),
        NormRequest(3, 1e-12),
        NormRequest(3, KAPPA_SENTINEL),
        NormResponse(3, 123.456),
        ErrorMessage(2**64 - 1, 255),
    ],
)
def test_round_trip(msg):
    assert decode_body(encode_body(msg)) == msg


def test_decode_rejects_malformed():
    with pytest.raises(MalformedFrame):
        decode_body(b"")
    with pytest.raises(MalformedFrame):
        decode_body(bytes([1]))  # shorter than the header
    with pytest.raises(MalformedFrame):
        decode_body(bytes([99]) + bytes(8))  # unknown tag
    with pytest.raises(MalformedFrame):
        decode_body(bytes([1]) + bytes(8) + b"x")  # SAMPLE_REQ with payload
    with pytest.raises(MalformedFrame):
        decode_body(bytes([3]) + bytes(8) + bytes(4))  # truncated QUERY_REQ
    with pytest.raises(MalformedFrame):
        # success flag out of range
        decode_body(bytes([2]) + bytes(8) + bytes([2]) + bytes(8))
    with pytest.raises(MalformedFrame):
        decode_body(bytes([7]) + bytes(8) + bytes(2))  # oversized ERROR payload


def test_exception_taxonomy():
    assert issubclass(MalformedFrame, ValueError)
    assert issubclass(SessionAbort, ConnectionError)
    assert issubclass(ProtocolError, RuntimeError)


# ---------------------------------------------------------------------------
# serving party


def test_party_role_validation():
    with pytest.raises(ValueError):
        PartyEndpoint("carol", zero_state(1), 1)


def test_party_samples_stay_in_support():
    party = PartyEndpoint("alice", zero_state(2), 2, seed=31)
    for _ in range(64):
        resp = party.respond(SampleRequest(5))
        assert isinstance(resp, SampleResponse)
        assert resp.session_id == 5
        assert resp.success
        assert resp.index in {0, 2, 8, 10}


def test_party_query_concentrates_on_truth():
    party = PartyEndpoint("bob", zero_state(2), 2, seed=32)
    vals = [party.respond(QueryRequest(9, 0, 0.5)) for _ in range(60)]
    assert all(isinstance(r, QueryResponse) and r.im == 0.0 for r in vals)
    assert np.mean([r.re for r in vals]) == pytest.approx(0.5, abs=0.08)


def test_party_norm_and_kappa_handshake():
    party = PartyEndpoint("alice", zero_state(2), 2, seed=33)
    norm = party.respond(NormRequest(3, 0.25))
    assert norm == NormResponse(3, 1.0)
    kappa = party.respond(NormRequest(3, KAPPA_SENTINEL))
    # |00> has 4 strings of coefficient 1/2, so the 1-norm is exactly 2
    assert kappa == NormResponse(3, 2.0)
    assert party.kappa == 2.0


def test_party_rejects_unanswerable_requests():
    party = PartyEndpoint("alice", zero_state(1), 1, seed=34)
    bad = [
        QueryRequest(1, 4, 0.5),  # index out of range
        QueryRequest(1, 0, 0.0),  # eps <= 0
        QueryRequest(1, 0, 1.5),  # eps > 1
        NormRequest(1, -0.5),  # negative but not the sentinel
        QueryResponse(1, 0.0, 0.0),  # response tag at a server
        NormResponse(1, 1.0),
        ErrorMessage(1, 2),
    ]
    for msg in bad:
        resp = party.respond(msg)
        assert resp == ErrorMessage(1, ERR_UNSUPPORTED)


def test_respond_bytes_answers_garbage_and_continues():
    party = PartyEndpoint("alice", zero_state(1), 1, seed=35)
    out = decode_body(party.respond_bytes(b"\xff garbage that is long enough"))
    assert out == ErrorMessage(0, ERR_MALFORMED)
    # the session survives: a well-formed request still gets answered
    ok = decode_body(party.respond_bytes(encode_body(NormRequest(8, 0.5))))
    assert ok == NormResponse(8, 1.0)


# ---------------------------------------------------------------------------
# coordinator-side handle


class _Scripted:
    """Transport stub that replays canned response bodies."""

    def __init__(self, bodies):
        self.bodies = list(bodies)
        self.sent = []

    def send_body(self, body):
        self.sent.append(bytes(body))

    def recv_body(self):
        return self.bodies.pop(0)

    def close(self):
        pass


def test_remote_handle_over_loopback():
    party = PartyEndpoint("bob", T_STATE, 1, seed=36)
    h = RemoteHandle(LoopbackTransport(party), 4, 42)
    assert h.norm_sq(0.5) == 1.0
    out = h.sample()
    assert out.index in range(4)
    v = h.query(1, 0.5)
    assert abs(v - 0.5) <= 0.5
    snap = h.ledger.snapshot()
    assert (snap.samples, snap.total_queries, snap.total_norms) == (1, 1, 1)
    assert h.messages == 3


def test_remote_handle_session_mismatch():
    t = _Scripted([encode_body(NormResponse(99, 1.0))])
    h = RemoteHandle(t, 4, 42)
    with pytest.raises(ProtocolError, match="session mismatch"):
        h.norm_sq(0.5)


def test_remote_handle_peer_error_surfaces():
    t = _Scripted([encode_body(ErrorMessage(42, ERR_UNSUPPORTED))])
    h = RemoteHandle(t, 4, 42)
    with pytest.raises(ProtocolError, match="rejected"):
        h.query(0, 0.5)


def test_remote_handle_wrong_response_type():
    t = _Scripted([encode_body(NormResponse(42, 1.0))])
    h = RemoteHandle(t, 4, 42)
    with pytest.raises(ProtocolError, match="expected SampleResponse"):
        h.sample()


def test_remote_handle_unparseable_peer_frame():
    t = _Scripted([b"\x00"])
    h = RemoteHandle(t, 4, 42)
    with pytest.raises(ProtocolError, match="unparseable"):
        h.norm_sq(0.5)


def test_remote_handle_peer_close_mid_session():
    t = _Scripted([None])
    h = RemoteHandle(t, 4, 42)
    with pytest.raises(SessionAbort):
        h.sample()


def test_remote_sample_failure_is_metered():
    t = _Scripted([encode_body(SampleResponse(42, False, 0))])
    h = RemoteHandle(t, 4, 42)
    out = h.sample()
    assert out.failed and out.index is None
    snap = h.ledger.snapshot()
    assert (snap.samples, snap.sample_failures) == (1, 1)


# ---------------------------------------------------------------------------
# socket transport


def _pair():
    a, b = socket.socketpair()
    return SocketTransport(a), SocketTransport(b)


def test_socket_round_trip_and_clean_close():
    left, right = _pair()
    left.send_body(b"hello")
    assert right.recv_body() == b"hello"
    right.send_body(b"")
    assert left.recv_body() == b""
    left.close()
    assert right.recv_body() is None  # EOF at a frame boundary
    right.close()


def test_socket_eof_mid_frame_aborts():
    a, b = socket.socketpair()
    a.sendall(struct.pack("<I", 10) + b"abc")  # promises 10, delivers 3
    a.close()
    with pytest.raises(SessionAbort, match="mid-frame"):
        SocketTransport(b).recv_body()
    b.close()


def test_socket_oversized_length_aborts():
    a, b = socket.socketpair()
    a.sendall(struct.pack("<I", MAX_FRAME_BYTES + 1))
    with pytest.raises(SessionAbort, match="exceeds"):
        SocketTransport(b).recv_body()
    a.close()
    b.close()


def test_serve_loop_over_sockets():
    party = PartyEndpoint("alice", zero_state(1), 1, seed=37)
    coord, served = _pair()
    import threading

    thread = threading.Thread(target=serve, args=(party, served))
    thread.start()
    try:
        coord.send_body(encode_body(NormRequest(4, 0.5)))
        assert decode_body(coord.recv_body()) == NormResponse(4, 1.0)
        coord.send_body(b"junk")
        assert decode_body(coord.recv_body()) == ErrorMessage(0, ERR_MALFORMED)
        coord.send_body(encode_body(SampleRequest(4)))
        resp = decode_body(coord.recv_body())
        assert isinstance(resp, SampleResponse) and resp.success
    finally:
        coord.close()
        thread.join(timeout=5.0)
        served.close()
    assert not thread.is_alive()


# ---------------------------------------------------------------------------
# transport transparency: local == loopback == tcp


def _states(seed):
    rng = generator(seed)
    return haar_random_state(4, rng), haar_random_state(4, rng)


def test_loopback_run_matches_local_bitwise():
    psi, phi = _states(400)
    seed, eps = 7, 0.3
    local = distributed_overlap(psi, phi, 2, eps, seed=seed)

    alice = PartyEndpoint("alice", psi, 2, seed=seed)
    bob = PartyEndpoint("bob", phi, 2, seed=seed)
    remote = coordinate_overlap(
        LoopbackTransport(alice), LoopbackTransport(bob), 2, eps, seed=seed
    )

    assert remote.estimate == local.estimate  # bitwise, not approx
    assert remote.error_bound == local.error_bound
    ls, rs = local.ledger, remote.ledger
    assert (ls.samples, ls.total_queries, ls.total_norms) == (
        rs.samples,
        rs.total_queries,
        rs.total_norms,
    )


def test_messages_count_oracle_calls_plus_handshake():
    psi, phi = _states(401)
    seed, eps = 11, 0.3
    alice = PartyEndpoint("alice", psi, 2, seed=seed)
    bob = PartyEndpoint("bob", phi, 2, seed=seed)
    ha = RemoteHandle(LoopbackTransport(alice), 16, seed)
    hb = RemoteHandle(LoopbackTransport(bob), 16, seed)
    kappa = max(ha.fetch_kappa(), hb.fetch_kappa())
    assert kappa == max(alice.kappa, bob.kappa)

    from asqlab import inner_product_real_exact

    inner_product_real_exact(
        ha, hb, eps, generator(seed, "coordinator"), kappa=kappa, delta_bound=0.0
    )
    for handle in (ha, hb):
        snap = handle.ledger.snapshot()
        events = snap.samples + snap.total_queries + snap.total_norms
        assert handle.messages == events + 1  # the kappa handshake


def test_tcp_run_matches_local_bitwise():
    psi, phi = _states(402)
    seed, eps = 13, 0.35
    local = distributed_overlap(psi, phi, 2, eps, seed=seed)

    alice = PartyEndpoint("alice", psi, 2, seed=seed)
    bob = PartyEndpoint("bob", phi, 2, seed=seed)
    with tcp_party(alice) as (ha_host, ha_port), tcp_party(bob) as (hb_host, hb_port):
        ta = connect_tcp(ha_host, ha_port)
        tb = connect_tcp(hb_host, hb_port)
        try:
            remote = coordinate_overlap(ta, tb, 2, eps, seed=seed)
        finally:
            ta.close()
            tb.close()

    assert remote.estimate == local.estimate
    truth = abs(np.vdot(psi, phi)) ** 2
    assert abs(remote.estimate.real - truth) <= remote.error_bound


def test_distributed_overlap_contract_and_determinism():
    psi, phi = _states(403)
    a = distributed_overlap(psi, phi, 2, 0.25, seed=5)
    b = distributed_overlap(psi, phi, 2, 0.25, seed=5)
    assert a.estimate == b.estimate
    assert a.estimate.imag == 0.0
    assert a.ledger.unit_cost > 0  # parties bill real copy costs
