"""The metered access model: sample / query / norm oracles and their boosters.

An :class:`AccessHandle` is the interface every backend and wrapper exposes:

* ``sample()``      -- one draw from the handle's sampling distribution, with
  one-sided failure (at most 1/3): a failed attempt says so, a successful one
  is distributed correctly.
* ``query(i, eps)`` -- an estimate of the target amplitude ``x(i)`` within
  ``eps``, with *two-sided* error at most 1/3 (a bad answer is silent).
* ``norm_sq(eps)``  -- an estimate of the squared norm of the *sampling*
  vector within ``eps``, two-sided error at most 1/3.

Handles carry an oversampling factor ``phi >= 1``: the sampling vector
dominates the query target entrywise and its squared norm is at most ``phi``
times the target's.  ``phi == 1`` is plain sample-and-query access.

Because raw queries lie silently, estimators never trust one alone.
:func:`boosted_query` takes the median of ``ceil(18 ln(1/delta))`` raw
queries (real and imaginary parts medianed separately, each raw query made at
``eps/sqrt(2)``), driving the failure probability below ``delta``.
:func:`relative_estimate` turns absolute-precision queries into a
relative-precision estimate by geometric search; see its docstring.

Medians are always the *lower* median (element ``(n-1)//2`` of the sorted
list) so that even-length lists select an actually-observed value.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import CostLedger, LedgerSnapshot

__all__ = [
    "SampleOutcome",
    "QueryResult",
    "AccessHandle",
    "EstimatorReport",
    "NonterminationCap",
    "SamplerStarvation",
    "lower_median",
    "boosted_query",
    "relative_estimate",
    "sample_valid",
    "UniformNoiseQuery",
    "AdversarialQuery",
]

#: A raw query result is just a complex estimate.
QueryResult = complex

#: Consecutive sample failures tolerated before declaring starvation.
STARVATION_LIMIT = 100

#: Default cap on the precision-halving search depth of relative estimation.
DEFAULT_ITERATION_CAP = 64


class NonterminationCap(RuntimeError):
    """Relative estimation exceeded its iteration cap (target may be ~0)."""


class SamplerStarvation(RuntimeError):
    """The sampler failed too many times in a row to make progress."""


@dataclass(frozen=True)
class SampleOutcome:
    """Result of one sample attempt: an index, or the failure symbol."""

    index: Optional[int]

    @property
    def failed(self) -> bool:
        return self.index is None

    @classmethod
    def ok(cls, index: int) -> "SampleOutcome":
        return cls(int(index))


#: The distinguished failure outcome.
SAMPLE_FAILED = SampleOutcome(None)


class AccessHandle(ABC):
    """Base class for metered sample/query/norm access to a vector."""

    #: Set by backends whose queries are deterministic (exact within f64);
    #: boosting then short-circuits but still meters every raw call.
    exact_queries: bool = False

    def __init__(self, dim: int, phi: float = 1.0, ledger: CostLedger | None = None):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        if phi < 1.0:
            raise ValueError(f"oversampling factor phi={phi} must be >= 1")
        self.dim = int(dim)
        self.phi = float(phi)
        self.ledger = ledger if ledger is not None else CostLedger()

    @abstractmethod
    def sample(self) -> SampleOutcome:
        """One metered sample attempt."""

    @abstractmethod
    def query(self, i: int, eps: float) -> complex:
        """One metered raw query for the target amplitude at ``i``."""

    @abstractmethod
    def norm_sq(self, eps: float) -> float:
        """One metered raw query for the sampling vector's squared 2-norm."""

    # -- bulk paths ----------------------------------------------------------
    # The defaults below are call-for-call equivalent to looping the scalar
    # oracles; vector-backed handles override them with one-shot multinomial /
    # searchsorted simulations that have identical statistics and identical
    # ledger counts.

    def sample_indices(self, n: int) -> np.ndarray:
        """``n`` valid draws (failures retried), in draw order."""
        return np.array([sample_valid(self) for _ in range(int(n))], dtype=np.int64)

    def sample_counts(self, n: int) -> np.ndarray:
        """Histogram of ``n`` valid draws."""
        return np.bincount(self.sample_indices(n), minlength=self.dim)

    def query_batch(self, i: int, eps: float, n: int) -> np.ndarray:
        """``n`` independent raw queries at index ``i``."""
        n = int(n)
        if self.exact_queries and n > 1:
            v = self.query(i, eps)
            self.ledger.record_query(eps, n - 1)
            return np.full(n, v, dtype=np.complex128)
        return np.array([self.query(i, eps) for _ in range(n)], dtype=np.complex128)


def sample_valid(handle: AccessHandle, limit: int = STARVATION_LIMIT) -> int:
    """Draw until a sample attempt succeeds; every attempt is metered.

    Raises :class:`SamplerStarvation` after ``limit`` consecutive failures.
    """
    for _ in range(limit):
        out = handle.sample()
        if not out.failed:
            return out.index
    raise SamplerStarvation(f"{limit} consecutive sample failures")


def lower_median(values: np.ndarray) -> float:
    """Lower median: element ``(n-1)//2`` of the sorted array."""
    arr = np.asarray(values)
    if arr.size == 0:
        raise ValueError("median of empty list")
    k = (arr.size - 1) // 2
    return float(np.partition(arr, k)[k])


def boosted_query(handle: AccessHandle, i: int, eps: float, delta: float) -> complex:
    """Estimate the target amplitude at ``i`` within ``eps``, failure <= delta.

    Takes ``ceil(18 ln(1/delta))`` raw queries at precision ``eps/sqrt(2)``
    and medians the real and imaginary parts separately; each part is then
    within ``eps/sqrt(2)`` with the boosted confidence, so the combined
    complex estimate is within ``eps``.
    """
    if not (0.0 < delta < 1.0):
        raise ValueError("delta must be in (0, 1)")
    m = math.ceil(18.0 * math.log(1.0 / delta))
    vals = handle.query_batch(i, eps / math.sqrt(2.0), m)
    return complex(lower_median(vals.real), lower_median(vals.imag))


def _query_many(q: Callable[[float], complex], eps: float, n: int) -> np.ndarray:
    batch = getattr(q, "batch", None)
    if batch is not None:
        out = np.asarray(batch(eps, n), dtype=np.complex128)
        if out.shape != (n,):
            raise ValueError("batch query returned wrong shape")
        return out
    return np.array([q(eps) for _ in range(n)], dtype=np.complex128)


def relative_estimate(
    q: Callable[[float], complex],
    rho: float,
    delta: float,
    *,
    iteration_cap: int = DEFAULT_ITERATION_CAP,
) -> complex:
    """Estimate a scalar to *relative* error ``rho`` from absolute queries.

    ``q(eps)`` must return an estimate of a fixed scalar within ``eps`` with
    two-sided error at most 1/3 (if ``q`` has a ``batch(eps, n)`` attribute
    it is used to draw many raw queries at once; the statistics are
    unchanged).  With probability at least ``1 - delta`` the returned value
    is within ``rho * |x|`` of the target ``x``.

    The search halves a precision scale until the medianed magnitude
    estimate ``mu`` certifies a lower bound ``mu - eps`` on ``|x|``; it then
    queries both parts at precision ``rho * (mu - eps)``.  Each round ``k``
    medians ``ceil(18 ln(1e4 * 2^(k+1) / delta))`` magnitude estimates, which
    keeps the *total* failure probability across the unboundedly many
    potential rounds below ``delta/2``; the 1e4 constant is part of that
    union bound.  The final phase medians ``ceil(18 ln(8/delta))`` estimates
    of the real part and as many of the imaginary part, each raw query made
    independently.

    Raises :class:`NonterminationCap` if the loop exceeds ``iteration_cap``
    rounds (as it must when the target is exactly zero, which admits no
    relative-error estimate).
    """
    if not (0.0 < rho):
        raise ValueError("rho must be positive")
    if not (0.0 < delta < 1.0):
        raise ValueError("delta must be in (0, 1)")

    mu = 0.0
    eps_k = 0.0
    for k in range(1, iteration_cap + 1):
        eps_k = 2.0**-k / math.sqrt(2.0)
        count = math.ceil(18.0 * math.log(1e4 * 2.0 ** (k + 1) / delta))
        mags = np.abs(_query_many(q, eps_k, count))
        mu = lower_median(mags)
        if eps_k <= mu / 2.0:
            break
    else:
        raise NonterminationCap(
            f"no magnitude lower bound found in {iteration_cap} rounds"
        )

    floor = mu - eps_k
    count_final = math.ceil(18.0 * math.log(8.0 / delta))
    re = _query_many(q, rho * floor, count_final).real
    im = _query_many(q, rho * floor, count_final).imag
    return complex(lower_median(re), lower_median(im))


@dataclass(frozen=True)
class EstimatorReport:
    """Outcome of one estimator run plus the oracle usage it cost.

    ``success_prob`` is the contract's guaranteed probability that
    ``|estimate - truth| <= error_bound`` (always in ``[2/3, 1)`` here); the
    ledger is the delta attributable to this run.
    """

    estimate: complex
    error_bound: float
    success_prob: float
    ledger: LedgerSnapshot
    #: Optional per-draw trace (kept only on request; not serialized).
    trace: Optional[object] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if not (2.0 / 3.0 <= self.success_prob < 1.0):
            raise ValueError(f"success_prob {self.success_prob} outside [2/3, 1)")

    def to_json_dict(self) -> dict:
        return {
            "estimate_re": float(self.estimate.real),
            "estimate_im": float(self.estimate.imag),
            "error_bound": float(self.error_bound),
            "success_prob": float(self.success_prob),
            "ledger": self.ledger.to_json_dict(),
        }


# -- query-noise models for tests and worst-case experiments ------------------


class UniformNoiseQuery:
    """Oracle for a known scalar with uniform in-tolerance noise.

    ``q(eps) = truth + Uniform(-eps, eps)``: always within contract, never
    fails outright.  The benign end of the two-sided noise spectrum.
    """

    def __init__(self, truth: complex, rng: np.random.Generator):
        self.truth = complex(truth)
        self.rng = rng

    def __call__(self, eps: float) -> complex:
        return self.truth + self.rng.uniform(-eps, eps)

    def batch(self, eps: float, n: int) -> np.ndarray:
        return self.truth + self.rng.uniform(-eps, eps, size=int(n))


class AdversarialQuery:
    """Worst-case two-sided oracle for a known scalar.

    With probability ``p_fail`` the answer is ``truth + 3*eps*e^{i theta}``
    with a random phase -- guaranteed to lie *outside* the tolerance ball --
    and otherwise it is the truth exactly.  ``p_fail = 1/3`` saturates the
    two-sided error budget.
    """

    def __init__(self, truth: complex, rng: np.random.Generator, p_fail: float = 1.0 / 3.0):
        if not (0.0 <= p_fail <= 1.0 / 3.0):
            raise ValueError("p_fail must be in [0, 1/3]")
        self.truth = complex(truth)
        self.rng = rng
        self.p_fail = float(p_fail)

    def __call__(self, eps: float) -> complex:
        if self.rng.random() < self.p_fail:
            theta = self.rng.uniform(0.0, 2.0 * math.pi)
            return self.truth + 3.0 * eps * complex(math.cos(theta), math.sin(theta))
        return self.truth

    def batch(self, eps: float, n: int) -> np.ndarray:
        n = int(n)
        bad = self.rng.random(n) < self.p_fail
        theta = self.rng.uniform(0.0, 2.0 * math.pi, size=n)
        out = np.full(n, self.truth, dtype=np.complex128)
        out[bad] += 3.0 * eps * np.exp(1j * theta[bad])
        return out
