"""Distributions, the TVD bound, cost ledgers, and vector serialization."""

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from asqlab import (
    CostLedger,
    DimensionMismatchError,
    ZeroVectorError,
    check_tvd_bound,
    dump_matrix_json,
    dump_vector_json,
    generator,
    l2_distribution,
    load_matrix_json,
    load_vector_json,
    norm2sq,
    one_norm,
    tvd,
)


def _finite_vectors(min_dim=1, max_dim=16):
    return st.lists(
        st.floats(min_value=-1e3, max_value=1e3, allow_nan=False),
        min_size=min_dim,
        max_size=max_dim,
    ).map(np.asarray)


# ---------------------------------------------------------------------------
# norms and distributions


def test_norm2sq_and_one_norm_frozen():
    x = np.array([3.0, 4.0])
    assert norm2sq(x) == 25.0
    assert one_norm(x) == 7.0
    # modulus, not real part: a unit complex entry has one-norm 1
    z = np.array([(3 + 4j) / 5, 0.0])
    assert one_norm(z) == pytest.approx(1.0)
    assert norm2sq(z) == pytest.approx(1.0)


def test_l2_distribution_frozen_values():
    d = l2_distribution(np.array([3.0, 4.0]))
    assert d.dim == 2
    assert d.prob(0) == pytest.approx(0.36)
    assert d.prob(1) == pytest.approx(0.64)
    np.testing.assert_allclose(d.probs.sum(), 1.0)


def test_l2_distribution_ignores_phases():
    a = l2_distribution(np.array([3.0, 4.0]))
    b = l2_distribution(np.array([-3.0, 4j]))
    np.testing.assert_allclose(a.probs, b.probs)


def test_l2_distribution_rejects_zero_vector():
    with pytest.raises(ZeroVectorError):
        l2_distribution(np.zeros(4))


def test_l2_distribution_sampling_matches_probs():
    d = l2_distribution(np.array([1.0, 2.0, 3.0]))
    counts = d.sample_counts(generator(0), 200_000)
    freq = counts / counts.sum()
    np.testing.assert_allclose(freq, d.probs, atol=5e-3)
    idx = d.sample_indices(generator(1), 1000)
    assert idx.min() >= 0 and idx.max() < 3


@given(_finite_vectors(min_dim=2, max_dim=12))
def test_l2_distribution_normalizes(x):
    if norm2sq(x) <= 0:
        with pytest.raises(ZeroVectorError):
            l2_distribution(x)
    else:
        d = l2_distribution(x)
        assert d.probs.min() >= 0
        assert d.probs.sum() == pytest.approx(1.0)


# ---------------------------------------------------------------------------
# TVD (the un-halved sum of absolute differences) and its perturbation bound


def test_tvd_frozen_value():
    # point mass vs (0.64, 0.36): sum of |p - q| = 0.36 + 0.36 = 0.72
    assert tvd(np.array([1.0, 0.0]), np.array([0.64, 0.36])) == pytest.approx(0.72)


def test_tvd_symmetric_and_zero_on_equal():
    p = np.array([0.2, 0.3, 0.5])
    q = np.array([0.5, 0.25, 0.25])
    assert tvd(p, q) == pytest.approx(tvd(q, p))
    assert tvd(p, p) == 0.0


def test_tvd_accepts_distribution_objects():
    a = l2_distribution(np.array([3.0, 4.0]))
    assert tvd(a, np.array([0.36, 0.64])) == pytest.approx(0.0, abs=1e-12)


def test_tvd_shape_mismatch():
    with pytest.raises(DimensionMismatchError):
        tvd(np.array([1.0, 0.0]), np.array([1.0, 0.0, 0.0]))


def test_check_tvd_bound_returns_triple():
    x = np.array([3.0, 4.0])
    y = np.array([3.0, 4.1])
    dist, bound, holds = check_tvd_bound(x, y)
    assert holds
    assert dist <= bound
    assert bound == pytest.approx(4.0 * np.linalg.norm(x - y) / np.linalg.norm(x))


@settings(max_examples=200)
@given(_finite_vectors(min_dim=2, max_dim=16), _finite_vectors(min_dim=2, max_dim=16))
def test_tvd_bound_holds_for_all_pairs(x, y):
    if len(x) != len(y) or norm2sq(x) <= 0 or norm2sq(y) <= 0:
        return
    dist, bound, holds = check_tvd_bound(x, y)
    assert holds
    assert dist <= bound + 1e-12


def test_tvd_bound_tight_direction():
    # nearly orthogonal pair: distance 2, bound 4*sqrt(2) -- still holds
    dist, bound, holds = check_tvd_bound(np.array([1.0, 0.0]), np.array([0.0, 1.0]))
    assert dist == pytest.approx(2.0)
    assert holds


# ---------------------------------------------------------------------------
# cost ledger


def test_ledger_accumulates_and_snapshots():
    led = CostLedger()
    led.record_samples(3, failures=1, units=2.5)
    led.record_query(0.1, count=4)
    led.record_query(0.2)
    led.record_norm(0.5, count=2, units=1.0)
    snap = led.snapshot()
    assert snap.samples == 3
    assert snap.sample_failures == 1
    assert snap.queries == {0.1: 4, 0.2: 1}
    assert snap.total_queries == 5
    assert snap.norms == {0.5: 2}
    assert snap.total_norms == 2
    assert snap.unit_cost == pytest.approx(3.5)


def test_snapshot_difference_isolates_a_window():
    led = CostLedger()
    led.record_query(0.1, count=2)
    before = led.snapshot()
    led.record_query(0.1, count=5)
    led.record_samples(7)
    delta = led.snapshot() - before
    assert delta.total_queries == 5
    assert delta.samples == 7
    combined = delta + before
    assert combined.total_queries == led.snapshot().total_queries


def test_snapshot_is_immutable_view():
    led = CostLedger()
    led.record_query(0.25)
    snap = led.snapshot()
    led.record_query(0.25)
    assert snap.queries == {0.25: 1}
    assert led.snapshot().queries == {0.25: 2}


def test_snapshot_json_dict_round_trips_through_json():
    led = CostLedger()
    led.record_samples(2, failures=1, units=3.0)
    led.record_query(0.125, count=9)
    doc = json.loads(json.dumps(led.snapshot().to_json_dict()))
    assert doc["samples"] == 2
    assert doc["sample_failures"] == 1
    assert doc["unit_cost"] == 3.0


# ---------------------------------------------------------------------------
# JSON vector / matrix files


def test_vector_json_round_trip_real(tmp_path):
    p = tmp_path / "v.json"
    x = np.array([1.0, -2.5, 0.0])
    dump_vector_json(x, p)
    np.testing.assert_array_equal(load_vector_json(p).values, x)


def test_vector_json_round_trip_complex(tmp_path):
    p = tmp_path / "v.json"
    x = np.array([1 + 2j, -0.5j, 3.0])
    dump_vector_json(x, p)
    out = load_vector_json(p)
    np.testing.assert_allclose(out.values, x)
    assert out.dim == 3


def test_matrix_json_round_trip(tmp_path):
    p = tmp_path / "m.json"
    m = np.array([[1.0, 2j], [0.0, -1.0]])
    dump_matrix_json(m, p)
    np.testing.assert_allclose(load_matrix_json(p), m)
