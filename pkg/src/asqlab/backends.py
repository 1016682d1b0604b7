"""Concrete access-model backends and wrappers.

Three families live here:

* :class:`VectorBackedHandle` -- classical handles over stored vectors with
  exact (within f64) queries and norms.  These model arbitrarily precise
  sample-and-query access and are the workhorse for estimator experiments.
  :func:`exact_handle`, :func:`wrap_oversampled` and :func:`wrap_perturbed`
  build the plain, oversampled, and perturbed-sampling variants.

* :class:`PrepMeasureBackend` -- a simulated prepare-and-measure device for a
  (possibly subnormalized) state.  Sampling is one preparation + measurement
  per attempt; queries go through computational-basis tomography
  (:func:`estimate_abs_amplitudes`) plus two-outcome interference circuits
  (:func:`query_amplitude`) that recover entry phases *relative to a fixed
  reference entry*, so all queries are consistent up to one global phase.
  Shot counts are tallied as abstract ``unit_cost`` (one unit = one state
  preparation).

* :class:`MatrixBlockEncoding` -- sample/query access to the columns of a
  matrix with spectral norm at most one, plus the column-norm sampler: each
  attempt prepares a uniformly random basis state, runs the encoding
  backwards and post-selects, succeeding with probability ``||A||_F^2 / d``
  and then emitting column ``k`` with probability ``||A(:,k)||^2/||A||_F^2``.
  (Expected attempts per success therefore come to ``d / ||A||_F^2``; note
  the source derivation chain prints the reciprocal form.)

Indices are 0-based everywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .access import SAMPLE_FAILED, AccessHandle, SampleOutcome
from .core import (
    CostLedger,
    DenseVector,
    DimensionMismatchError,
    ZeroVectorError,
    l2_distribution,
    norm2sq,
    tvd,
)

__all__ = [
    "DominanceViolation",
    "BudgetExceeded",
    "VectorBackedHandle",
    "exact_handle",
    "wrap_oversampled",
    "wrap_perturbed",
    "AmplitudeTable",
    "PrepMeasureBackend",
    "estimate_abs_amplitudes",
    "query_amplitude",
    "MatrixBlockEncoding",
]

#: Entrywise dominance tolerance for oversampling wrappers.
DOMINANCE_TOL = 1e-12

#: Interference shots per unitary for one phase-consistent query at eps.
PHASE_SHOT_CONST = 32.0


class DominanceViolation(ValueError):
    """Claimed oversampling vector fails |x~(i)| >= |x(i)| somewhere."""


class BudgetExceeded(ValueError):
    """A perturbation exceeds its total-variation budget."""


def _values_of(x) -> np.ndarray:
    if isinstance(x, DenseVector):
        return x.values
    return np.asarray(x, dtype=np.complex128)


class VectorBackedHandle(AccessHandle):
    """Classical handle over stored vectors; queries and norms are exact.

    Three vectors define a handle: ``target`` (what queries answer),
    ``oversample`` (whose squared norm the norm oracle answers, and whose
    ratio to the target defines ``phi``), and ``sampled`` (the distribution
    actual draws follow).  For plain access all three coincide; oversampled
    access sets ``oversample = sampled != target``; perturbed access lets
    ``sampled`` drift away from ``oversample``.
    """

    exact_queries = True

    def __init__(
        self,
        target,
        rng: np.random.Generator,
        *,
        oversample=None,
        sampled=None,
        ledger: CostLedger | None = None,
    ):
        target = _values_of(target)
        over = target if oversample is None else _values_of(oversample)
        samp = over if sampled is None else _values_of(sampled)
        if not (target.shape == over.shape == samp.shape):
            raise DimensionMismatchError("target/oversample/sampled dims differ")
        t_nsq = norm2sq(target)
        o_nsq = norm2sq(over)
        if t_nsq <= 0.0:
            raise ZeroVectorError("cannot build a handle over the zero vector")
        super().__init__(target.size, phi=max(1.0, o_nsq / t_nsq), ledger=ledger)
        self.target = target
        self.oversample = over
        self.sampled = samp
        self.rng = rng
        self._norm_sq_value = o_nsq
        self._dist = l2_distribution(samp)
        #: tvd(D_oversample, D_sampled); 0 unless perturbed.
        self.sampling_tvd = (
            0.0 if samp is over else tvd(l2_distribution(over), self._dist)
        )

    def sample(self) -> SampleOutcome:
        i = self._dist.sample(self.rng)
        self.ledger.record_samples(1)
        return SampleOutcome.ok(i)

    def sample_indices(self, n: int) -> np.ndarray:
        idx = self._dist.sample_indices(self.rng, int(n))
        self.ledger.record_samples(int(n))
        return idx

    def sample_counts(self, n: int) -> np.ndarray:
        counts = self._dist.sample_counts(self.rng, int(n))
        self.ledger.record_samples(int(n))
        return counts

    def query(self, i: int, eps: float) -> complex:
        self.ledger.record_query(eps)
        return complex(self.target[i])

    def norm_sq(self, eps: float) -> float:
        self.ledger.record_norm(eps)
        return self._norm_sq_value


def exact_handle(x, rng: np.random.Generator, ledger: CostLedger | None = None) -> VectorBackedHandle:
    """Plain (phi = 1) exact sample-and-query access to ``x``."""
    return VectorBackedHandle(x, rng, ledger=ledger)


def wrap_oversampled(handle: VectorBackedHandle, oversample_vector) -> VectorBackedHandle:
    """Oversampled access: draws follow the dominating vector's distribution.

    The wrapper validates entrywise dominance (within ``1e-12``) and realizes
    ``phi`` as the exact norm ratio.  It shares the wrapped handle's RNG and
    ledger is fresh.
    """
    over = _values_of(oversample_vector)
    target = handle.target
    if over.shape != target.shape:
        raise DimensionMismatchError("oversample vector dimension mismatch")
    short = np.abs(over) - np.abs(target)
    if np.any(short < -DOMINANCE_TOL):
        worst = int(np.argmin(short))
        raise DominanceViolation(
            f"|oversample({worst})| = {abs(over[worst]):.6g} < |target({worst})| = {abs(target[worst]):.6g}"
        )
    return VectorBackedHandle(target, handle.rng, oversample=over)


def wrap_perturbed(
    handle: VectorBackedHandle, sampled_vector, tvd_budget: float
) -> VectorBackedHandle:
    """Perturbed sampling: draws follow ``sampled_vector``'s distribution.

    The total variation distance between the handle's declared sampling
    distribution and the perturbed one is computed at construction and must
    not exceed ``tvd_budget``; queries and norms still answer for the
    original vectors.  Shares the wrapped handle's RNG so that a zero
    perturbation reproduces the unwrapped handle's draws stream-for-stream.
    """
    wrapped = VectorBackedHandle(
        handle.target,
        handle.rng,
        oversample=handle.oversample,
        sampled=_values_of(sampled_vector),
    )
    if wrapped.sampling_tvd > tvd_budget + 1e-12:
        raise BudgetExceeded(
            f"sampling tvd {wrapped.sampling_tvd:.6g} exceeds budget {tvd_budget:.6g}"
        )
    return wrapped


# -- prepare-and-measure ------------------------------------------------------


@dataclass(frozen=True)
class AmplitudeTable:
    """Sparse table of amplitude-magnitude estimates from basis measurements.

    ``entries`` maps index -> estimated ``|x(i)|`` for every entry that
    survived the ``eps/2`` rounding floor; everything absent reads as zero.
    ``reference`` is the largest surviving entry (ties broken toward the
    lowest index) and anchors the global phase for phase-consistent queries.
    """

    dim: int
    eps: float
    delta: float
    shots: int
    entries: dict[int, float]
    reference: Optional[int]

    def value(self, i: int) -> float:
        if not (0 <= i < self.dim):
            raise IndexError(f"index {i} outside [0, {self.dim})")
        return self.entries.get(int(i), 0.0)


def estimate_abs_amplitudes(backend: "PrepMeasureBackend", eps: float, delta: float) -> AmplitudeTable:
    """Learn all amplitude magnitudes to sup-norm error ``eps``.

    Simulates ``ceil(8 eps^-2 ln(2 d / delta))`` computational-basis
    measurements (each one preparation); entry ``i`` estimates come from the
    square root of the empirical frequency.  With probability at least
    ``1 - delta`` every entry is within ``eps``.  Estimates below ``eps/2``
    are rounded away, so the table stores at most ``O(eps^-2)`` entries.
    """
    if not (0.0 < eps <= 1.0):
        raise ValueError("eps must be in (0, 1]")
    if not (0.0 < delta < 1.0):
        raise ValueError("delta must be in (0, 1)")
    d = backend.dim
    shots = math.ceil(8.0 / eps**2 * math.log(2.0 * d / delta))
    counts = backend._measure_basis(shots)
    mags = np.sqrt(counts / shots)
    keep = mags >= eps / 2.0
    entries = {int(i): float(mags[i]) for i in np.nonzero(keep)[0]}
    reference = None
    if entries:
        best = max(entries.values())
        reference = min(i for i, v in entries.items() if v == best)
    return AmplitudeTable(
        dim=d, eps=eps, delta=delta, shots=shots, entries=entries, reference=reference
    )


def query_amplitude(backend: "PrepMeasureBackend", table: AmplitudeTable, i: int, eps: float) -> complex:
    """Phase-consistent amplitude estimate via simulated interference.

    Entries the table rounded to zero read as zero; the reference entry
    reads as its (real, non-negative) magnitude.  Any other entry ``i`` is
    recovered from two two-outcome interference experiments against the
    reference ``m``: one measuring ``|x(m) - x(i)|^2 / 2`` and one measuring
    ``|x(m) - i*x(i)|^2 / 2``, each simulated with ``ceil(32 eps^-2)`` shots.
    Writing ``a = x(m)`` and ``b = x(i)``, the observed statistics invert to

        Re(e^{-i arg a} b) =  (|a|^2 + |b|^2 - s^2) / (2 |a|)
        Im(e^{-i arg a} b) = -(|a|^2 + |b|^2 - t^2) / (2 |a|)

    i.e. every query answers for the state rotated so the reference entry is
    real non-negative -- one consistent global phase across all indices.
    """
    r_i = table.value(i)
    backend.ledger.record_query(eps)
    if r_i == 0.0 or table.reference is None:
        return 0.0 + 0.0j
    m = table.reference
    r_m = table.value(m)
    if i == m:
        return complex(r_m, 0.0)

    a = backend.state[m]
    b = backend.state[i]
    shots = math.ceil(PHASE_SHOT_CONST / eps**2)
    p_s = abs(a - b) ** 2 / 2.0
    p_t = abs(a - 1j * b) ** 2 / 2.0
    s2 = 2.0 * backend.rng.binomial(shots, min(p_s, 1.0)) / shots
    t2 = 2.0 * backend.rng.binomial(shots, min(p_t, 1.0)) / shots
    backend.ledger.record_query(eps, count=0, units=2.0 * shots * backend.prep_cost_T)

    re = (r_m**2 + r_i**2 - s2) / (2.0 * r_m)
    im = -(r_m**2 + r_i**2 - t2) / (2.0 * r_m)
    return complex(re, im)


class PrepMeasureBackend(AccessHandle):
    """Simulated prepare-and-measure access to a (sub)normalized state.

    Each sample attempt costs one preparation (``prep_cost_T`` units).  For a
    normalized state the norm oracle is free and exact; for a subnormalized
    one it estimates the post-selection success probability with
    ``ceil(ln(6) / (2 eps^2))`` Bernoulli preparations.

    Queries lazily build one amplitude table per requested precision (at
    table precision ``eps/16``, failure budget 1/9) and then run the
    interference read of :func:`query_amplitude`.  All queries at one
    precision share the table, which is what makes their phases consistent.
    """

    NORM_TOL = 1e-9

    def __init__(
        self,
        state,
        rng: np.random.Generator,
        *,
        prep_cost_T: float = 1.0,
        ledger: CostLedger | None = None,
    ):
        values = _values_of(state)
        nsq = norm2sq(values)
        if nsq > 1.0 + self.NORM_TOL:
            raise ValueError(f"state norm^2 = {nsq:.6g} exceeds 1")
        super().__init__(values.size, phi=1.0, ledger=ledger)
        self.state = values
        self.rng = rng
        self.prep_cost_T = float(prep_cost_T)
        self.norm_sq_true = nsq
        self.normalized = abs(nsq - 1.0) <= self.NORM_TOL
        self._weights = values.real**2 + values.imag**2
        self._cum = np.cumsum(self._weights)
        self._tables: dict[float, AmplitudeTable] = {}

    # internal: basis-measurement histogram over `shots` preparations; shots
    # that fail post-selection (subnormalized state) count toward no index.
    def _measure_basis(self, shots: int) -> np.ndarray:
        probs = np.append(self._weights, max(0.0, 1.0 - self.norm_sq_true))
        probs = probs / probs.sum()
        counts = self.rng.multinomial(int(shots), probs)[: self.dim]
        self.ledger.record_samples(0, units=shots * self.prep_cost_T)
        return counts

    def sample(self) -> SampleOutcome:
        u = self.rng.random()
        if u < self.norm_sq_true:
            i = int(np.searchsorted(self._cum, u, side="right"))
            self.ledger.record_samples(1, units=self.prep_cost_T)
            return SampleOutcome.ok(min(i, self.dim - 1))
        self.ledger.record_samples(1, failures=1, units=self.prep_cost_T)
        return SAMPLE_FAILED

    def sample_indices(self, n: int) -> np.ndarray:
        n = int(n)
        if self.normalized:
            u = self.rng.random(n)
            idx = np.searchsorted(self._cum, u, side="right").astype(np.int64)
            np.clip(idx, 0, self.dim - 1, out=idx)
            self.ledger.record_samples(n, units=n * self.prep_cost_T)
            return idx
        return super().sample_indices(n)

    def table_for(self, eps: float) -> AmplitudeTable:
        """The (cached) amplitude table backing queries at precision eps."""
        key = float(eps)
        if key not in self._tables:
            self._tables[key] = estimate_abs_amplitudes(self, eps / 16.0, 1.0 / 9.0)
        return self._tables[key]

    def query(self, i: int, eps: float) -> complex:
        return query_amplitude(self, self.table_for(eps), i, eps)

    def query_batch(self, i: int, eps: float, n: int) -> np.ndarray:
        n = int(n)
        table = self.table_for(eps)
        r_i = table.value(i)
        self.ledger.record_query(eps, count=n)
        if r_i == 0.0 or table.reference is None:
            return np.zeros(n, dtype=np.complex128)
        m = table.reference
        r_m = table.value(m)
        if i == m:
            return np.full(n, complex(r_m, 0.0), dtype=np.complex128)
        a, b = self.state[m], self.state[i]
        shots = math.ceil(PHASE_SHOT_CONST / eps**2)
        p_s = min(abs(a - b) ** 2 / 2.0, 1.0)
        p_t = min(abs(a - 1j * b) ** 2 / 2.0, 1.0)
        s2 = 2.0 * self.rng.binomial(shots, p_s, size=n) / shots
        t2 = 2.0 * self.rng.binomial(shots, p_t, size=n) / shots
        self.ledger.record_query(eps, count=0, units=2.0 * n * shots * self.prep_cost_T)
        re = (r_m**2 + r_i**2 - s2) / (2.0 * r_m)
        im = -(r_m**2 + r_i**2 - t2) / (2.0 * r_m)
        return re + 1j * im

    def norm_sq(self, eps: float) -> float:
        if self.normalized:
            self.ledger.record_norm(eps)
            return 1.0
        shots = math.ceil(math.log(6.0) / (2.0 * eps**2))
        hits = self.rng.binomial(shots, self.norm_sq_true)
        self.ledger.record_norm(eps, units=shots * self.prep_cost_T)
        return hits / shots


# -- matrix block encodings ---------------------------------------------------


class MatrixBlockEncoding:
    """Column access to a matrix with spectral norm at most one.

    ``column_handle(j)`` gives prepare-and-measure access to the
    (subnormalized) column ``A(:, j)``.  ``sample_column_index`` runs one
    round of the column-norm sampler described in the module docstring.
    """

    SPECTRAL_TOL = 1e-9

    def __init__(
        self,
        matrix,
        rng: np.random.Generator,
        *,
        prep_cost_T: float = 1.0,
        ledger: CostLedger | None = None,
    ):
        a = np.asarray(matrix, dtype=np.complex128)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {a.shape}")
        spectral = float(np.linalg.norm(a, 2)) if a.size else 0.0
        if spectral > 1.0 + self.SPECTRAL_TOL:
            raise ValueError(f"spectral norm {spectral:.6g} exceeds 1; not encodable")
        self.matrix = a
        self.dim = a.shape[0]
        self.rng = rng
        self.prep_cost_T = float(prep_cost_T)
        self.ledger = ledger if ledger is not None else CostLedger()
        self._row_weights = np.sum(a.real**2 + a.imag**2, axis=1)
        self._row_cum = np.cumsum(a.real**2 + a.imag**2, axis=1)
        self.frobenius_sq = float(self._row_weights.sum())

    @property
    def success_probability(self) -> float:
        """Per-attempt success probability ``||A||_F^2 / d``."""
        return self.frobenius_sq / self.dim

    @property
    def expected_rounds(self) -> float:
        """Expected attempts per success, ``d / ||A||_F^2``.

        (Directly derived from the per-attempt law; the source derivation
        chain prints the reciprocal form ``O(d ||A||_F^2)``.)
        """
        if self.frobenius_sq == 0.0:
            return math.inf
        return self.dim / self.frobenius_sq

    def sample_column_index(self) -> SampleOutcome:
        """One attempt: uniform basis row, post-select, emit a column index."""
        i = int(self.rng.integers(self.dim))
        u = self.rng.random()
        if u < self._row_weights[i]:
            k = int(np.searchsorted(self._row_cum[i], u, side="right"))
            self.ledger.record_samples(1, units=self.prep_cost_T)
            return SampleOutcome.ok(min(k, self.dim - 1))
        self.ledger.record_samples(1, failures=1, units=self.prep_cost_T)
        return SAMPLE_FAILED

    def sample_column_batch(self, attempts: int) -> np.ndarray:
        """Vectorized attempts; returns column indices with -1 for failures."""
        n = int(attempts)
        out = np.full(n, -1, dtype=np.int64)
        rows = self.rng.integers(self.dim, size=n)
        u = self.rng.random(n)
        succ = u < self._row_weights[rows]
        # chunk the gather so the (hits x dim) scratch stays small
        hit_idx = np.nonzero(succ)[0]
        chunk = max(1, (1 << 22) // max(1, self.dim))
        for start in range(0, hit_idx.size, chunk):
            sel = hit_idx[start : start + chunk]
            cums = self._row_cum[rows[sel]]
            ks = (u[sel, None] >= cums).sum(axis=1)
            out[sel] = np.minimum(ks, self.dim - 1)
        failures = int(n - hit_idx.size)
        self.ledger.record_samples(n, failures=failures, units=n * self.prep_cost_T)
        return out

    def column_handle(self, j: int, rng: np.random.Generator | None = None) -> PrepMeasureBackend:
        """Prepare-and-measure access to column ``j`` (subnormalized)."""
        if not (0 <= j < self.dim):
            raise IndexError(f"column {j} outside [0, {self.dim})")
        if rng is None:
            rng = self.rng.spawn(1)[0]
        return PrepMeasureBackend(
            self.matrix[:, j], rng, prep_cost_T=self.prep_cost_T, ledger=self.ledger
        )
