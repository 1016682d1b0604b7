"""Numeric core: vectors, sampling distributions, and the cost ledger.

The quantities here are the ground truth that everything else is measured
against: squared 2-norms, 1-norms, the length-squared sampling distribution
of a vector, and total variation distance between two such distributions.

Total variation distance is kept in its *unhalved* form

    tvd(p, q) = sum_i |p(i) - q(i)|

because the closeness bound it is checked against,

    tvd(D_x, D_y) <= 4 ||x - y|| / ||x||,

is stated for the unhalved quantity.

The :class:`CostLedger` meters oracle usage.  Sample calls count *attempts*
(a failed attempt is an attempt), and query/norm calls are tallied per
requested precision so tests can audit the exact call pattern an algorithm
makes.  ``unit_cost`` accumulates the abstract preparation/shot units of the
simulated cost model; it never affects results.
"""

from __future__ import annotations

import json
import math
import threading
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

__all__ = [
    "DenseVector",
    "L2Distribution",
    "CostLedger",
    "DimensionMismatchError",
    "ZeroVectorError",
    "norm2sq",
    "one_norm",
    "l2_distribution",
    "tvd",
    "check_tvd_bound",
    "load_vector_json",
    "dump_vector_json",
    "load_matrix_json",
    "dump_matrix_json",
]

#: Sampling distributions must sum to one within this tolerance.
DISTRIBUTION_SUM_TOL = 1e-12


class ZeroVectorError(ValueError):
    """The all-zeros vector has no length-squared sampling distribution."""


class DimensionMismatchError(ValueError):
    """Two objects that must share a dimension do not."""


def _as_complex_array(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.complex128)
    if arr.ndim != 1:
        raise ValueError(f"expected a 1-d vector, got shape {arr.shape}")
    if arr.size < 1:
        raise ValueError("vectors must have dimension >= 1")
    if not np.all(np.isfinite(arr.real)) or not np.all(np.isfinite(arr.imag)):
        raise ValueError("vector entries must be finite")
    return arr


class DenseVector:
    """A dense complex vector with the norms and distribution used everywhere.

    Entries are stored as complex128.  The class is deliberately thin; heavy
    lifting happens on the underlying numpy array.
    """

    __slots__ = ("values",)

    def __init__(self, values):
        self.values = _as_complex_array(values)

    @property
    def dim(self) -> int:
        return self.values.size

    def norm2sq(self) -> float:
        return norm2sq(self.values)

    def one_norm(self) -> float:
        return one_norm(self.values)

    def l2_distribution(self) -> "L2Distribution":
        return l2_distribution(self.values)

    def __len__(self) -> int:
        return self.dim

    def __getitem__(self, i: int) -> complex:
        return complex(self.values[i])

    def __repr__(self) -> str:
        return f"DenseVector(dim={self.dim})"

    def to_json_dict(self) -> dict:
        return {
            "dim": self.dim,
            "entries": [[float(v.real), float(v.imag)] for v in self.values],
        }

    @classmethod
    def from_json_dict(cls, obj: Mapping) -> "DenseVector":
        try:
            dim = int(obj["dim"])
            entries = obj["entries"]
        except (KeyError, TypeError) as exc:
            raise ValueError("vector JSON needs 'dim' and 'entries'") from exc
        if len(entries) != dim:
            raise DimensionMismatchError(
                f"vector JSON declares dim={dim} but has {len(entries)} entries"
            )
        return cls([complex(re, im) for re, im in entries])


def norm2sq(x) -> float:
    """Squared 2-norm ``||x||^2``."""
    arr = x.values if isinstance(x, DenseVector) else np.asarray(x, dtype=np.complex128)
    return float(np.sum(arr.real**2 + arr.imag**2))


def one_norm(x) -> float:
    """1-norm ``sum_i |x(i)|`` (entrywise modulus for complex vectors)."""
    arr = x.values if isinstance(x, DenseVector) else np.asarray(x, dtype=np.complex128)
    return float(np.sum(np.abs(arr)))


@dataclass(frozen=True)
class L2Distribution:
    """Length-squared sampling distribution ``D_x(i) = |x(i)|^2 / ||x||^2``.

    Carries the cumulative table once so repeated draws are a binary search.
    """

    probs: np.ndarray
    _cum: np.ndarray = field(repr=False, compare=False, default=None)

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        total = float(probs.sum())
        if abs(total - 1.0) > DISTRIBUTION_SUM_TOL:
            raise ValueError(f"distribution sums to {total!r}, not 1")
        if np.any(probs < 0.0):
            raise ValueError("distribution has negative mass")
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "_cum", np.cumsum(probs))

    @property
    def dim(self) -> int:
        return self.probs.size

    def prob(self, i: int) -> float:
        return float(self.probs[i])

    def sample(self, rng: np.random.Generator) -> int:
        return int(np.searchsorted(self._cum, rng.random(), side="right"))

    def sample_indices(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """``n`` iid draws, returned in draw order."""
        u = rng.random(n)
        return np.searchsorted(self._cum, u, side="right").astype(np.int64)

    def sample_counts(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Histogram of ``n`` iid draws (one multinomial draw)."""
        return rng.multinomial(int(n), self.probs)


def l2_distribution(x) -> L2Distribution:
    """Length-squared distribution of ``x``; raises on the zero vector."""
    arr = x.values if isinstance(x, DenseVector) else np.asarray(x, dtype=np.complex128)
    w = arr.real**2 + arr.imag**2
    total = float(w.sum())
    if total <= 0.0:
        raise ZeroVectorError("the zero vector has no l2 sampling distribution")
    return L2Distribution(w / total)


def tvd(p: L2Distribution | np.ndarray, q: L2Distribution | np.ndarray) -> float:
    """Unhalved total variation distance ``sum_i |p(i) - q(i)|``."""
    pa = p.probs if isinstance(p, L2Distribution) else np.asarray(p, dtype=np.float64)
    qa = q.probs if isinstance(q, L2Distribution) else np.asarray(q, dtype=np.float64)
    if pa.shape != qa.shape:
        raise DimensionMismatchError(f"tvd over shapes {pa.shape} and {qa.shape}")
    return float(np.abs(pa - qa).sum())


def check_tvd_bound(x, y) -> tuple[float, float, bool]:
    """Check ``tvd(D_x, D_y) <= 4 ||x-y|| / ||x||``.

    Returns ``(lhs, rhs, lhs <= rhs)``; the caller picks which vector plays
    the role of ``x`` (the bound's denominator uses that one).
    """
    xa = x.values if isinstance(x, DenseVector) else np.asarray(x, dtype=np.complex128)
    ya = y.values if isinstance(y, DenseVector) else np.asarray(y, dtype=np.complex128)
    if xa.shape != ya.shape:
        raise DimensionMismatchError("tvd bound needs equal dimensions")
    lhs = tvd(l2_distribution(xa), l2_distribution(ya))
    rhs = 4.0 * math.sqrt(norm2sq(xa - ya)) / math.sqrt(norm2sq(xa))
    return lhs, rhs, lhs <= rhs


class CostLedger:
    """Monotone counters for oracle usage.

    * ``sample_calls``    -- sampler attempts (failed attempts included)
    * ``sample_failures`` -- attempts that returned the failure symbol
    * ``query_calls``     -- {requested eps: count}
    * ``norm_calls``      -- {requested eps: count}
    * ``unit_cost``       -- abstract preparation/shot units (cost model only)

    All mutation goes through a lock so concurrent protocol sessions can
    share a ledger.
    """

    __slots__ = ("sample_calls", "sample_failures", "query_calls", "norm_calls", "unit_cost", "_lock")

    def __init__(self):
        self.sample_calls = 0
        self.sample_failures = 0
        self.query_calls: dict[float, int] = {}
        self.norm_calls: dict[float, int] = {}
        self.unit_cost = 0.0
        self._lock = threading.Lock()

    def record_samples(self, attempts: int = 1, failures: int = 0, units: float = 0.0) -> None:
        if attempts < 0 or failures < 0 or failures > attempts:
            raise ValueError("bad sample tally")
        with self._lock:
            self.sample_calls += int(attempts)
            self.sample_failures += int(failures)
            self.unit_cost += units

    def record_query(self, eps: float, count: int = 1, units: float = 0.0) -> None:
        if count < 0:
            raise ValueError("bad query tally")
        eps = float(eps)
        with self._lock:
            self.query_calls[eps] = self.query_calls.get(eps, 0) + int(count)
            self.unit_cost += units

    def record_norm(self, eps: float, count: int = 1, units: float = 0.0) -> None:
        if count < 0:
            raise ValueError("bad norm tally")
        eps = float(eps)
        with self._lock:
            self.norm_calls[eps] = self.norm_calls.get(eps, 0) + int(count)
            self.unit_cost += units

    # -- read side -----------------------------------------------------------

    @property
    def total_queries(self) -> int:
        return sum(self.query_calls.values())

    @property
    def total_norms(self) -> int:
        return sum(self.norm_calls.values())

    def snapshot(self) -> "LedgerSnapshot":
        with self._lock:
            return LedgerSnapshot(
                samples=self.sample_calls,
                sample_failures=self.sample_failures,
                queries=dict(self.query_calls),
                norms=dict(self.norm_calls),
                unit_cost=self.unit_cost,
            )


@dataclass(frozen=True)
class LedgerSnapshot:
    """Immutable view of a ledger, with subtraction for per-run deltas."""

    samples: int = 0
    sample_failures: int = 0
    queries: Mapping[float, int] = field(default_factory=dict)
    norms: Mapping[float, int] = field(default_factory=dict)
    unit_cost: float = 0.0

    def __sub__(self, earlier: "LedgerSnapshot") -> "LedgerSnapshot":
        return LedgerSnapshot(
            samples=self.samples - earlier.samples,
            sample_failures=self.sample_failures - earlier.sample_failures,
            queries=_map_diff(self.queries, earlier.queries),
            norms=_map_diff(self.norms, earlier.norms),
            unit_cost=self.unit_cost - earlier.unit_cost,
        )

    def __add__(self, other: "LedgerSnapshot") -> "LedgerSnapshot":
        return LedgerSnapshot(
            samples=self.samples + other.samples,
            sample_failures=self.sample_failures + other.sample_failures,
            queries=_map_sum(self.queries, other.queries),
            norms=_map_sum(self.norms, other.norms),
            unit_cost=self.unit_cost + other.unit_cost,
        )

    @property
    def total_queries(self) -> int:
        return sum(self.queries.values())

    @property
    def total_norms(self) -> int:
        return sum(self.norms.values())

    def to_json_dict(self) -> dict:
        return {
            "samples": self.samples,
            "sample_failures": self.sample_failures,
            "queries": [{"eps": e, "count": c} for e, c in sorted(self.queries.items())],
            "norms": [{"eps": e, "count": c} for e, c in sorted(self.norms.items())],
            "unit_cost": self.unit_cost,
        }


def _map_diff(a: Mapping[float, int], b: Mapping[float, int]) -> dict[float, int]:
    out = dict(a)
    for k, v in b.items():
        out[k] = out.get(k, 0) - v
        if out[k] == 0:
            del out[k]
    return out


def _map_sum(a: Mapping[float, int], b: Mapping[float, int]) -> dict[float, int]:
    out = dict(a)
    for k, v in b.items():
        out[k] = out.get(k, 0) + v
    return out


# -- file formats -------------------------------------------------------------
#
# Vector: {"dim": d, "entries": [[re, im], ...]}            (length d)
# Matrix: {"rows": d, "cols": d, "entries": [[re, im], ...]} (row-major, d*d)


def load_vector_json(path) -> DenseVector:
    with open(path, "r", encoding="utf-8") as fh:
        return DenseVector.from_json_dict(json.load(fh))


def dump_vector_json(vec, path) -> None:
    if not isinstance(vec, DenseVector):
        vec = DenseVector(vec)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(vec.to_json_dict(), fh)
        fh.write("\n")


def load_matrix_json(path) -> np.ndarray:
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    try:
        rows, cols = int(obj["rows"]), int(obj["cols"])
        entries = obj["entries"]
    except (KeyError, TypeError) as exc:
        raise ValueError("matrix JSON needs 'rows', 'cols', 'entries'") from exc
    if len(entries) != rows * cols:
        raise DimensionMismatchError(
            f"matrix JSON declares {rows}x{cols} but has {len(entries)} entries"
        )
    flat = np.array([complex(re, im) for re, im in entries], dtype=np.complex128)
    return flat.reshape(rows, cols)


def dump_matrix_json(matrix: np.ndarray, path) -> None:
    a = np.asarray(matrix, dtype=np.complex128)
    if a.ndim != 2:
        raise ValueError("expected a 2-d matrix")
    obj = {
        "rows": a.shape[0],
        "cols": a.shape[1],
        "entries": [[float(v.real), float(v.imag)] for v in a.reshape(-1)],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh)
        fh.write("\n")
