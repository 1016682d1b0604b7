"""Pauli-basis state representations and the overlap-estimation driver.

A pure state on ``n`` qubits has a real unit vector of Pauli coefficients

    pi(t) = Tr(rho P_t) / sqrt(d),    d = 2^n,

indexed by 2n-bit strings ``t`` in tableau order: bits ``(2q, 2q+1)`` of
``t`` hold the (x, z) pair of qubit ``q``, with ``(1, 1)`` meaning Y (the
Hermitian representative ``i XZ``; the encoding is modulo phase).  Index 0
is the identity string, so ``pi(0) = 1/sqrt(d)`` always.

On top of the representation:

* :func:`magic_report` -- the stabilizer Renyi measures ``M_alpha`` for
  ``alpha in {0, 1/2, 2}`` (natural logarithms) and the stabilizer norm
  ``D = ||pi||_1 / sqrt(d) = e^{M_{1/2}/2}``; all zero exactly on
  stabilizer states.

* :func:`pauli_cdf` -- the mass of Pauli strings with small normalized
  coefficient, ``F(tau) = sum_{t: d pi(t)^2 < tau} pi(t)^2``, which the
  magic measures bound: ``F(tau) <= sqrt(tau) e^{M_{1/2}/2}``.

* :func:`exact_pauli_sampler` -- a metered access handle over ``pi``:
  sampling draws exactly from ``D_pi`` but bills each draw the copy count
  of the Bell-sampling pipeline it stands in for,
  ``N = e^{4 chi} e^{2 M_{1/2}} Delta^-4 (ln d)^3 ln(1/delta)``
  (:class:`CorollaryCost`); queries simulate shot-noise estimation of
  ``<P_t>`` with ``ceil(4 / (eps^2 d))`` Bernoulli shots (the ``sqrt(d)``
  division is what makes the per-query shot count *fall* with dimension);
  the norm oracle answers 1 exactly at zero cost.

* :func:`distributed_overlap` -- the end-to-end driver: two parties'
  states never meet; the overlap identity ``pi_psi . pi_phi = |<psi|phi>|^2``
  turns overlap estimation into a real inner product over the two Pauli
  samplers, estimated by the no-oversampling real estimator with
  ``kappa = max(||pi_psi||_1, ||pi_phi||_1)``.

Statevector helpers (:func:`random_clifford_state` and friends) generate
test states with tunable magic: Clifford circuits are magic-free, and each
injected pi/4 phase rotation raises the stabilizer norm.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .access import AccessHandle, EstimatorReport, SampleOutcome
from .backends import BudgetExceeded
from .core import CostLedger, DenseVector, tvd
from .estimators import EstimatorConstants, DEFAULT_CONSTANTS, inner_product_real_exact
from .rng import generator

__all__ = [
    "DimensionNotPowerOfTwo",
    "NotNormalized",
    "PauliRepresentation",
    "MagicReport",
    "CorollaryCost",
    "pauli_representation",
    "magic_report",
    "pauli_cdf",
    "pauli_overlap",
    "exact_pauli_sampler",
    "PauliSampleHandle",
    "distributed_overlap",
    "zero_state",
    "haar_random_state",
    "random_clifford_state",
    "apply_h",
    "apply_s",
    "apply_phase",
    "apply_cx",
]


class DimensionNotPowerOfTwo(ValueError):
    """State length is not 2^n for the stated qubit count."""


class NotNormalized(ValueError):
    """State vector is not unit norm within tolerance."""


_ASQP_MAGIC = b"ASQP"


def _popcount(a: np.ndarray) -> np.ndarray:
    """Bit population count for nonnegative int64 arrays (SWAR)."""
    a = a.astype(np.int64)
    a = a - ((a >> 1) & 0x5555555555555555)
    a = (a & 0x3333333333333333) + ((a >> 2) & 0x3333333333333333)
    a = (a + (a >> 4)) & 0x0F0F0F0F0F0F0F0F
    return (a * 0x0101010101010101) >> 56


def _spread_even(m: int) -> int:
    """Scatter the bits of m onto the even bit positions."""
    out = 0
    q = 0
    while m:
        out |= (m & 1) << (2 * q)
        m >>= 1
        q += 1
    return out


@dataclass(frozen=True)
class PauliRepresentation:
    """Real Pauli coefficient vector of a pure n-qubit state."""

    n: int
    values: np.ndarray  # float64, length 4^n, tableau index order

    @property
    def dim(self) -> int:
        """Number of Pauli strings, 4^n."""
        return self.values.size

    @property
    def state_dim(self) -> int:
        return 1 << self.n

    def one_norm(self) -> float:
        return float(np.sum(np.abs(self.values)))

    def distribution(self) -> np.ndarray:
        """D_pi: the squared coefficients (sums to 1 for pure states)."""
        return self.values**2

    # -- binary serialization: b"ASQP", u32 n, then 4^n f64, all little-endian

    def to_bytes(self) -> bytes:
        head = _ASQP_MAGIC + struct.pack("<I", self.n)
        return head + self.values.astype("<f8").tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "PauliRepresentation":
        if blob[:4] != _ASQP_MAGIC:
            raise ValueError("not a Pauli representation blob (bad magic)")
        (n,) = struct.unpack("<I", blob[4:8])
        vals = np.frombuffer(blob[8:], dtype="<f8")
        if vals.size != 4**n:
            raise ValueError(f"expected {4 ** n} values for n={n}, got {vals.size}")
        return cls(n=n, values=vals.astype(np.float64))

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "PauliRepresentation":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def pauli_representation(psi, n: int) -> PauliRepresentation:
    """All 4^n Pauli coefficients of a pure state, exactly (within f64).

    Works entirely through bit-indexed sign/flip rules: for the string with
    flip mask ``x`` and phase mask ``z``,

        <psi| P |psi> = i^{|x & z|} sum_c conj(psi(c ^ x)) psi(c) (-1)^{|c & z|},

    and for fixed ``x`` the sum over ``c`` is a Walsh-Hadamard transform of
    ``conj(psi(c ^ x)) psi(c)``, giving all ``z`` at once.  No 2^n x 2^n
    operator is ever materialized.  Intended for desk scale (n <= 10).
    """
    if isinstance(psi, DenseVector):
        psi = psi.values
    psi = np.asarray(psi, dtype=np.complex128)
    if n < 1 or n > 12:
        raise ValueError(f"qubit count n={n} outside supported range [1, 12]")
    d = 1 << n
    if psi.shape != (d,):
        raise DimensionNotPowerOfTwo(f"state has length {psi.size}, expected 2^{n} = {d}")
    if abs(float(np.sum(psi.real**2 + psi.imag**2)) - 1.0) > 1e-9:
        raise NotNormalized("state vector is not unit norm within 1e-9")

    c = np.arange(d)
    # G[x, c] = conj(psi(c ^ x)) psi(c); rows are flip masks
    g = np.conj(psi[c[:, None] ^ c[None, :]]) * psi[None, :]
    # in-place Walsh-Hadamard along the c axis -> F[x, z]
    h = 1
    while h < d:
        g = g.reshape(d, d // (2 * h), 2, h)
        top = g[:, :, 0, :] + g[:, :, 1, :]
        bot = g[:, :, 0, :] - g[:, :, 1, :]
        g = np.concatenate((top[:, :, None, :], bot[:, :, None, :]), axis=2)
        h *= 2
    f = g.reshape(d, d)

    n_y = _popcount(c[:, None] & c[None, :])  # |x & z| per (x, z)
    phase = np.power(1j, n_y % 4)
    coeff = (phase * f).real / math.sqrt(d)

    spread = np.array([_spread_even(int(m)) for m in range(d)], dtype=np.int64)
    t_index = spread[:, None] | (spread[None, :] << 1)  # t(x, z)
    values = np.zeros(d * d, dtype=np.float64)
    values[t_index.ravel()] = coeff.ravel()
    return PauliRepresentation(n=n, values=values)


@dataclass(frozen=True)
class MagicReport:
    """Stabilizer Renyi measures (natural logs) and the stabilizer norm."""

    m0: float
    m_half: float
    m2: float
    stab_norm: float

    @property
    def exp_half(self) -> float:
        """e^{M_{1/2}/2}; identically the stabilizer norm."""
        return math.exp(self.m_half / 2.0)


def magic_report(pi: PauliRepresentation, support_tol: float = 1e-9) -> MagicReport:
    """M_0, M_{1/2}, M_2 and the stabilizer norm of a representation.

    ``M_alpha = (1 - alpha)^{-1} ln sum_t pi(t)^{2 alpha} - ln d``; the
    support measure ``M_0`` counts entries with ``|sqrt(d) pi| >`` a small
    cutoff (floating-point support needs one).  All vanish exactly on
    stabilizer states and are at most ``n ln 2``.
    """
    d = pi.state_dim
    vals = pi.values
    alpha = np.abs(vals) * math.sqrt(d)
    support = int(np.count_nonzero(alpha > support_tol))
    m0 = math.log(support) - math.log(d)
    one = float(np.sum(np.abs(vals)))
    m_half = 2.0 * math.log(one) - math.log(d)
    m2 = -math.log(float(np.sum(vals**4))) - math.log(d)
    return MagicReport(m0=m0, m_half=m_half, m2=m2, stab_norm=one / math.sqrt(d))


def pauli_cdf(pi: PauliRepresentation, tau: float) -> float:
    """Mass of Pauli strings with normalized coefficient below tau.

    ``F(tau) = P_{t ~ D_pi}[ d pi(t)^2 < tau ]`` (strict inequality).  The
    stabilizer norm bounds it: ``F(tau) <= sqrt(tau) e^{M_{1/2}/2}``.
    """
    if tau < 0.0:
        raise ValueError("tau must be >= 0")
    mass = pi.values**2
    alpha_sq = pi.state_dim * mass
    return float(mass[alpha_sq < tau].sum())


def pauli_overlap(pi_a: PauliRepresentation, pi_b: PauliRepresentation) -> float:
    """pi_a . pi_b, which equals |<psi_a|psi_b>|^2 for pure states."""
    if pi_a.n != pi_b.n:
        raise ValueError("representations are for different qubit counts")
    return float(pi_a.values @ pi_b.values)


# -- metered sampling oracle ---------------------------------------------------


@dataclass(frozen=True)
class CorollaryCost:
    """Copy-count model billed per Pauli sample.

    ``chi`` bounds the state's entanglement across any cut (a declared
    input, not something this module computes); ``tvd_budget`` and
    ``fail_prob`` are the sampling accuracy targets of the pipeline being
    modeled; ``prep_time`` converts query shots to time units.
    """

    chi: float = 1.0
    tvd_budget: float = 0.1
    fail_prob: float = 0.1
    prep_time: float = 1.0

    def copies_per_sample(self, m_half: float, n: int) -> float:
        """N = e^{4 chi} e^{2 M_half} Delta^-4 (ln d)^3 ln(1/delta)."""
        ln_d = n * math.log(2.0)
        return (
            math.exp(4.0 * self.chi)
            * math.exp(2.0 * m_half)
            * self.tvd_budget**-4
            * ln_d**3
            * math.log(1.0 / self.fail_prob)
        )


class PauliSampleHandle(AccessHandle):
    """Sample/query/norm access to a state's Pauli coefficient vector.

    Draws are exact (optionally from a deliberately drifted distribution
    for stress tests, validated against the cost model's TVD budget), but
    each is billed ``copies_per_sample`` ledger units.  Queries return
    ``<P_t>/sqrt(d)`` under simulated Bernoulli shot noise, two-sided error
    at most 1/4 at the requested precision.
    """

    def __init__(
        self,
        pi: PauliRepresentation,
        cost: CorollaryCost,
        rng: np.random.Generator,
        *,
        sample_dist: Optional[np.ndarray] = None,
        ledger: CostLedger | None = None,
    ):
        super().__init__(pi.dim, phi=1.0, ledger=ledger)
        self.pi = pi
        self.cost = cost
        self.rng = rng
        self.target = pi.values  # ground truth for test-mode checks
        self.oversample = pi.values
        dist = pi.distribution()
        self.sampling_tvd = 0.0
        if sample_dist is not None:
            sample_dist = np.asarray(sample_dist, dtype=np.float64)
            if sample_dist.shape != dist.shape:
                raise ValueError("drifted distribution has wrong length")
            self.sampling_tvd = tvd(dist, sample_dist)
            if self.sampling_tvd > cost.tvd_budget + 1e-12:
                raise BudgetExceeded(
                    f"drift {self.sampling_tvd:.6g} exceeds the model's "
                    f"TVD budget {cost.tvd_budget:.6g}"
                )
            dist = sample_dist
        self._cum = np.cumsum(dist)
        self.copies_per_sample = cost.copies_per_sample(
            magic_report(pi).m_half, pi.n
        )

    def sample(self) -> SampleOutcome:
        u = self.rng.random()
        i = int(np.searchsorted(self._cum, u, side="right"))
        self.ledger.record_samples(1, units=self.copies_per_sample)
        return SampleOutcome.ok(min(i, self.dim - 1))

    def sample_indices(self, n: int) -> np.ndarray:
        n = int(n)
        idx = np.searchsorted(self._cum, self.rng.random(n), side="right")
        np.clip(idx, 0, self.dim - 1, out=idx)
        self.ledger.record_samples(n, units=n * self.copies_per_sample)
        return idx.astype(np.int64)

    def sample_counts(self, n: int) -> np.ndarray:
        return np.bincount(self.sample_indices(int(n)), minlength=self.dim)

    def _shots_for(self, eps: float) -> int:
        return math.ceil(4.0 / (eps**2 * self.pi.state_dim))

    def query(self, i: int, eps: float) -> complex:
        d = self.pi.state_dim
        k = self._shots_for(eps)
        expect = min(1.0, max(-1.0, math.sqrt(d) * float(self.pi.values[i])))
        hits = int(self.rng.binomial(k, (1.0 + expect) / 2.0))
        self.ledger.record_query(eps, units=k * self.cost.prep_time)
        return complex((2.0 * hits / k - 1.0) / math.sqrt(d))

    def query_batch(self, i: int, eps: float, n: int) -> np.ndarray:
        n = int(n)
        d = self.pi.state_dim
        k = self._shots_for(eps)
        expect = min(1.0, max(-1.0, math.sqrt(d) * float(self.pi.values[i])))
        hits = self.rng.binomial(k, (1.0 + expect) / 2.0, size=n)
        self.ledger.record_query(eps, count=n, units=n * k * self.cost.prep_time)
        return ((2.0 * hits / k - 1.0) / math.sqrt(d)).astype(np.complex128)

    def norm_sq(self, eps: float) -> float:
        self.ledger.record_norm(eps)
        return 1.0


def exact_pauli_sampler(
    pi: PauliRepresentation,
    cost: CorollaryCost,
    rng: np.random.Generator,
    *,
    sample_dist: Optional[np.ndarray] = None,
    ledger: CostLedger | None = None,
) -> PauliSampleHandle:
    """Access handle over D_pi with the copy-cost model attached."""
    return PauliSampleHandle(pi, cost, rng, sample_dist=sample_dist, ledger=ledger)


def distributed_overlap(
    psi,
    phi,
    n: int,
    eps: float,
    *,
    seed: int = 0,
    cost: CorollaryCost | None = None,
    constants: EstimatorConstants = DEFAULT_CONSTANTS,
    keep_trace: bool = False,
) -> EstimatorReport:
    """Estimate ``|<psi|phi>|^2`` to error ``eps``, parties never sharing states.

    The in-process realization of the two-party protocol: each state is
    reduced to its Pauli sampler; the driver learns only ``kappa`` (the max
    of the two 1-norms, which each party computes locally) and the oracle
    answers.  The distributed harness runs this same estimator over a wire;
    with equal seeds the two agree bit for bit.
    """
    cost = cost if cost is not None else CorollaryCost()
    pi_a = pauli_representation(psi, n)
    pi_b = pauli_representation(phi, n)
    kappa = max(pi_a.one_norm(), pi_b.one_norm())
    ha = exact_pauli_sampler(pi_a, cost, generator(seed, "alice"))
    hb = exact_pauli_sampler(pi_b, cost, generator(seed, "bob"))
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


# -- statevector helpers --------------------------------------------------------


def zero_state(n: int) -> np.ndarray:
    """|0...0> on n qubits."""
    out = np.zeros(1 << n, dtype=np.complex128)
    out[0] = 1.0
    return out


def haar_random_state(dim: int, rng: np.random.Generator) -> np.ndarray:
    """A Haar-distributed pure state of the given dimension."""
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return v / np.linalg.norm(v)


def _split(state: np.ndarray, q: int) -> tuple[np.ndarray, np.ndarray]:
    idx = np.arange(state.size)
    lo = idx[(idx >> q) & 1 == 0]
    return lo, lo | (1 << q)


def apply_h(state: np.ndarray, q: int) -> None:
    lo, hi = _split(state, q)
    a, b = state[lo].copy(), state[hi].copy()
    inv_sqrt2 = 1.0 / math.sqrt(2.0)
    state[lo] = (a + b) * inv_sqrt2
    state[hi] = (a - b) * inv_sqrt2


def apply_s(state: np.ndarray, q: int) -> None:
    _, hi = _split(state, q)
    state[hi] *= 1j


def apply_phase(state: np.ndarray, q: int, angle: float) -> None:
    _, hi = _split(state, q)
    state[hi] *= complex(math.cos(angle), math.sin(angle))


def apply_cx(state: np.ndarray, control: int, target: int) -> None:
    idx = np.arange(state.size)
    on = idx[((idx >> control) & 1 == 1) & ((idx >> target) & 1 == 0)]
    flip = on | (1 << target)
    state[on], state[flip] = state[flip].copy(), state[on].copy()


def random_clifford_state(
    n: int, rng: np.random.Generator, *, depth: int = 20, t_count: int = 0
) -> np.ndarray:
    """A random Clifford-circuit state with ``t_count`` injected pi/4 phases.

    Clifford gates (H, S, CX) alone leave the state magic-free; each pi/4
    phase rotation injects magic, so ``t_count`` tunes the stabilizer norm.
    """
    state = zero_state(n)
    n_gates = depth * max(1, n)
    t_slots = set(rng.choice(n_gates, size=min(t_count, n_gates), replace=False).tolist()) if t_count else set()
    for step in range(n_gates):
        kind = int(rng.integers(3)) if n > 1 else int(rng.integers(2))
        if kind == 0:
            apply_h(state, int(rng.integers(n)))
        elif kind == 1:
            apply_s(state, int(rng.integers(n)))
        else:
            c, t = rng.choice(n, size=2, replace=False)
            apply_cx(state, int(c), int(t))
        if step in t_slots:
            apply_phase(state, int(rng.integers(n)), math.pi / 4.0)
    return state
