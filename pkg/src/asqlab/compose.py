"""Composing access handles into linear-combination handles.

Given metered access to vectors ``x_1 .. x_tau`` and nonzero coefficients
``lambda_1 .. lambda_tau``, both constructions here expose a handle for
``u = sum_j lambda_j x_j``:

* :func:`lincomb_deterministic` always succeeds.  It samples by picking term
  ``j`` with probability ``|lambda_j|^2 / ||lambda||^2`` and forwarding to
  that term's sampler, which realizes the oversampling vector

      u~(i) = sqrt( tau * (sum_j ||x~_j||^2)
                    * sum_k |lambda_k|^2 |x~_k(i)|^2 / ||x~_k||^2 )

  with oversampling factor ``phi' = phi tau^2 kappa^2``, ``kappa`` the
  spectral condition number of the column matrix ``[x_1 .. x_tau]``.  The
  factor is a *declaration*: nothing in the access model can measure it, so
  production callers must supply ``kappa`` (handles built over stored
  vectors compute it directly).

* :func:`lincomb_probabilistic` trades the condition-number dependence for a
  failure probability: a one-time preliminary phase estimates every
  ``||x~_j||^2`` to relative error 1/2 (failing with probability at most
  ``delta`` overall), after which sampling weights terms by
  ``|lambda_j|^2 n^_j^2`` and the norm oracle is a stored-constant lookup
  ``||u~||^2 = 2 tau sum_k |lambda_k|^2 n^_k^2``.  The declared factor is
  ``phi' = 4 tau phi (sum_k ||lambda_k x_k||^2) / ||u||^2``.

Queries are the same for both: each term is read with a boosted query at
per-term budget ``eps / |lambda_j|`` (raw queries at ``eps/(sqrt(2)
|lambda_j|)``), medianed over ``ceil(18 ln(6 tau))`` copies so all terms are
simultaneously trustworthy with probability 2/3.  Combinations that cancel
(``||u|| = 0``) are legal; they declare ``phi' = inf`` rather than raising.
"""

from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np

from .access import (
    SAMPLE_FAILED,
    AccessHandle,
    NonterminationCap,
    SampleOutcome,
    boosted_query,
    lower_median,
    relative_estimate,
)
from .core import CostLedger, DimensionMismatchError, norm2sq

__all__ = [
    "ConstructionFailed",
    "LinearCombinationSpec",
    "LinearCombinationHandle",
    "lincomb_deterministic",
    "lincomb_probabilistic",
]


class ConstructionFailed(RuntimeError):
    """The probabilistic construction's preliminary phase went wrong."""


def _ground_truth(handle: AccessHandle) -> tuple[Optional[np.ndarray], Optional[np.ndarray]]:
    """(target, oversample) arrays when the handle stores them, else Nones."""
    target = getattr(handle, "target", None)
    if target is None:
        target = getattr(handle, "state", None)
    over = getattr(handle, "oversample", None)
    if over is None and target is not None:
        over = target
    if target is None or over is None:
        return None, None
    return np.asarray(target, dtype=np.complex128), np.asarray(over, dtype=np.complex128)


class LinearCombinationSpec:
    """The terms of ``u = sum_j lambda_j x_j``: tau handles + coefficients."""

    def __init__(self, handles: Sequence[AccessHandle], coefficients):
        handles = tuple(handles)
        lam = np.asarray(coefficients, dtype=np.complex128)
        if len(handles) < 1:
            raise ValueError("need at least one term")
        if lam.shape != (len(handles),):
            raise ValueError("need exactly one coefficient per handle")
        if np.any(lam == 0):
            raise ValueError("zero coefficients are not allowed; drop the term")
        dims = {h.dim for h in handles}
        if len(dims) != 1:
            raise DimensionMismatchError(f"handles disagree on dimension: {sorted(dims)}")
        self.handles = handles
        self.coefficients = lam

    @property
    def tau(self) -> int:
        return len(self.handles)

    @property
    def dim(self) -> int:
        return self.handles[0].dim

    @property
    def phi(self) -> float:
        """Tightest common oversampling bound of the terms."""
        return max(h.phi for h in self.handles)


class LinearCombinationHandle(AccessHandle):
    """Metered access to ``u = sum_j lambda_j x_j`` (see module docstring).

    ``target`` / ``oversample`` hold the realized ground-truth vectors when
    every constituent handle stores its own (enabling nested composition and
    direct dominance checks); otherwise they are ``None``.
    """

    def __init__(
        self,
        spec: LinearCombinationSpec,
        rng: np.random.Generator,
        *,
        selection_probs: np.ndarray,
        phi_declared: float,
        stored_norm_sq: Optional[float],
        oversample: Optional[np.ndarray],
        ledger: CostLedger | None = None,
    ):
        super().__init__(spec.dim, phi=max(1.0, phi_declared), ledger=ledger)
        self.spec = spec
        self.rng = rng
        self._probs = selection_probs
        self._cum = np.cumsum(selection_probs)
        self._stored_norm_sq = stored_norm_sq
        self.oversample = oversample
        targets = [_ground_truth(h)[0] for h in spec.handles]
        if all(t is not None for t in targets):
            self.target = spec.coefficients @ np.stack(targets)  # sum_j lambda_j x_j
        else:
            self.target = None

    # -- oracles ---------------------------------------------------------

    def sample(self) -> SampleOutcome:
        u = self.rng.random()
        j = int(np.searchsorted(self._cum, u, side="right"))
        j = min(j, len(self.spec.handles) - 1)
        out = self.spec.handles[j].sample()
        self.ledger.record_samples(1, failures=1 if out.failed else 0)
        return out if not out.failed else SAMPLE_FAILED

    def query(self, i: int, eps: float) -> complex:
        tau = self.spec.tau
        delta = 1.0 / (6.0 * tau)
        total = 0.0 + 0.0j
        for lam, h in zip(self.spec.coefficients, self.spec.handles):
            total += lam * boosted_query(h, i, eps / abs(lam), delta)
        self.ledger.record_query(eps)
        return total

    def norm_sq(self, eps: float) -> float:
        self.ledger.record_norm(eps)
        if self._stored_norm_sq is not None:
            return self._stored_norm_sq
        tau = self.spec.tau
        lam_sq = float(np.sum(np.abs(self.spec.coefficients) ** 2))
        eps_term = eps / (tau**2 * lam_sq)
        copies = math.ceil(18.0 * math.log(3.0 * tau))
        total = 0.0
        for h in self.spec.handles:
            ests = np.array([h.norm_sq(eps_term) for _ in range(copies)])
            total += lower_median(ests)
        return tau * total * lam_sq


def _realized_oversample(
    spec: LinearCombinationSpec, term_norm_sq: np.ndarray, scale: float
) -> Optional[np.ndarray]:
    """u~ built from stored child vectors: sqrt(scale * sum_k w_k D_k)."""
    overs = [_ground_truth(h)[1] for h in spec.handles]
    if any(o is None for o in overs):
        return None
    nsqs = [norm2sq(o) for o in overs]
    if any(n == 0.0 for n in nsqs):
        return None
    stack = np.stack([np.abs(o) ** 2 / n for o, n in zip(overs, nsqs)])
    weights = np.abs(spec.coefficients) ** 2 * term_norm_sq
    return np.sqrt(scale * (weights @ stack))


def lincomb_deterministic(
    spec: LinearCombinationSpec,
    rng: np.random.Generator,
    *,
    kappa: float | None = None,
    ledger: CostLedger | None = None,
) -> LinearCombinationHandle:
    """Always-successful linear combination (condition-number overhead).

    ``kappa`` bounds the spectral condition number of the column matrix of
    the terms; when omitted it is computed from the stored ground-truth
    vectors, and a rank-deficient (or cancelling) system declares
    ``phi' = inf``.
    """
    lam = spec.coefficients
    probs = np.abs(lam) ** 2 / float(np.sum(np.abs(lam) ** 2))

    if kappa is None:
        targets = [_ground_truth(h)[0] for h in spec.handles]
        if any(t is None for t in targets):
            raise ValueError(
                "kappa is required when the constituent handles do not store "
                "their vectors; the access model cannot measure it"
            )
        sv = np.linalg.svd(np.stack(targets, axis=1), compute_uv=False)
        kappa = float(sv[0] / sv[-1]) if sv[-1] > 0 else math.inf

    phi_declared = spec.phi * spec.tau**2 * kappa**2

    overs = [_ground_truth(h)[1] for h in spec.handles]
    realized = None
    if all(o is not None for o in overs):
        # weights |lambda_k|^2 * 1, scale tau * sum_j ||x~_j||^2
        total_nsq = float(sum(norm2sq(o) for o in overs))
        realized = _realized_oversample(
            spec, np.ones(spec.tau), spec.tau * total_nsq
        )

    return LinearCombinationHandle(
        spec,
        rng,
        selection_probs=probs,
        phi_declared=phi_declared,
        stored_norm_sq=None,
        oversample=realized,
        ledger=ledger,
    )


def lincomb_probabilistic(
    spec: LinearCombinationSpec,
    delta: float,
    rng: np.random.Generator,
    *,
    ledger: CostLedger | None = None,
) -> LinearCombinationHandle:
    """Linear combination that may fail (probability <= delta) but whose
    oversampling overhead does not involve a condition number.

    The preliminary phase runs here, once: each term's sampling norm is
    estimated to relative error 1/2 via geometric search with failure budget
    ``delta/tau``.  A term whose search hits its iteration cap (as happens
    for a zero vector) raises :class:`ConstructionFailed`.
    """
    if not (0.0 < delta < 1.0):
        raise ValueError("delta must be in (0, 1)")
    tau = spec.tau
    n_hat_sq = np.empty(tau)
    for j, h in enumerate(spec.handles):
        try:
            est = relative_estimate(lambda eps: h.norm_sq(eps), 0.5, delta / tau)
        except NonterminationCap as exc:
            raise ConstructionFailed(
                f"norm search for term {j} did not terminate: {exc}"
            ) from exc
        n_hat_sq[j] = est.real

    lam_sq = np.abs(spec.coefficients) ** 2
    weights = lam_sq * n_hat_sq
    probs = weights / float(weights.sum())
    stored_norm_sq = 2.0 * tau * float(weights.sum())

    phi_declared = math.inf
    truths = [_ground_truth(h) for h in spec.handles]
    if all(t is not None for t, _ in truths):
        u = spec.coefficients @ np.stack([t for t, _ in truths])
        u_nsq = norm2sq(u)
        scaled = float(np.sum(lam_sq * np.array([norm2sq(t) for t, _ in truths])))
        phi_declared = (
            4.0 * tau * spec.phi * scaled / u_nsq if u_nsq > 0 else math.inf
        )

    realized = _realized_oversample(spec, n_hat_sq, 2.0 * tau)

    return LinearCombinationHandle(
        spec,
        rng,
        selection_probs=probs,
        phi_declared=phi_declared,
        stored_norm_sq=stored_norm_sq,
        oversample=realized,
        ledger=ledger,
    )
