"""Inner-product estimators over metered access handles.

Four estimators, one shape: draw indices from the handles' sampling
distributions, compare each draw's empirical frequency against a rejection
floor, and average (or median) importance-weighted point estimates.

* :func:`inner_product_asym` -- access to ``x``, a classical array ``y``.
  A geometric norm search fixes the scale, a large histogram learns the
  sampling frequencies, and each accepted draw contributes
  ``(p^ + gamma/2)^{-1} x^* y(i)``; the result is the mean over *all*
  draws (rejected draws contribute zero -- the analyzed point estimator;
  the pseudocode-style accepted-only average differs only by the rejected
  mass, which the rejection floor makes negligible).  Error at most
  ``eps * ||y||_1`` with probability at least 2/3.

* :func:`inner_product_sym` -- access to both vectors, a fair-coin mixture
  sampler, per-part medians instead of a mean.  Error at most
  ``eps * (1 + min(||x||_1/||x||, ||y||_1/||y||))``.

* :func:`inner_product_real_exact` -- real unit vectors, no oversampling,
  no histogram: each draw queries both entries once and rejects on
  ``sqrt(p^) <= (3/2) gamma`` where ``p^ = (x^2 + y^2)/2`` is *computed from
  the queries*, not estimated by counting.  Tolerates sampling from vectors
  an l2-distance ``Delta/2`` away, at ``+Delta`` absolute error.  This is
  the estimator the two-party driver runs, so its draw loop is strictly
  sequential: coin, sample, query x, query y -- one oracle call at a time.

* :func:`inner_product_asym_perturbed` / :func:`inner_product_sym_perturbed`
  -- the same engines, run on handles whose *sampling* distribution has
  drifted within a total-variation budget (``C1 eps / sqrt(phi)``
  asymmetric, ``C1 eps / phi`` each symmetric).  The default configuration
  reuses the exact-case schedule unchanged, so a zero-magnitude
  perturbation reproduces the unperturbed run draw-for-draw; fixed
  thresholds computed from the declared ``phi`` (``eps_P = C3 eps^2 /
  phi`` replacing the learned ``gamma``) are available behind
  ``InnerProductConfig.declared_phi_thresholds``.

All randomness flows through the handles' generators plus (for the mixture
estimators) one caller-supplied generator for the fair coin, so runs are
reproducible from seeds alone.  Histogram phases use the handles' bulk
sampling paths (single multinomial draws with identical statistics and
ledger counts); accepted-draw refinement batches per unique index when the
backend's queries are deterministic, which changes neither the values nor
the ledger arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .access import (
    AccessHandle,
    EstimatorReport,
    NonterminationCap,
    boosted_query,
    lower_median,
    relative_estimate,
    sample_valid,
)
from .backends import BudgetExceeded
from .core import DenseVector, one_norm

__all__ = [
    "RelativeEstimateFailed",
    "NonUnitNorm",
    "EstimatorConstants",
    "InnerProductConfig",
    "PointEstimatorTrace",
    "inner_product_asym",
    "inner_product_sym",
    "inner_product_real_exact",
    "inner_product_asym_perturbed",
    "inner_product_sym_perturbed",
]

SUCCESS_PROB = 2.0 / 3.0


class RelativeEstimateFailed(RuntimeError):
    """The preliminary norm search hit its iteration cap (norm ~ 0)."""


class NonUnitNorm(ValueError):
    """A ground-truth check found a vector that should be unit but is not."""


@dataclass(frozen=True)
class EstimatorConstants:
    """The tunable constants the analyses leave as "suitably chosen".

    ``c1`` scales the real-exact rejection floor ``gamma = c1 eps / kappa``
    and the perturbation budgets; ``c2`` the real-exact query precision
    ``eps_Q = c2 eps^2 / kappa`` (and the declared-phi symmetric floor);
    ``c3`` the declared-phi thresholds ``eps_P = c3 eps^2 / phi``.
    ``real_exact_draws`` is the Chebyshev draw budget ``ceil(K / eps^2)``
    for the real-exact estimator: its point estimator has variance at most
    1, so K = 24 leaves the sampling deviation below a third of the error
    budget with probability well above 5/6.
    """

    c1: float = 1.0 / 8.0
    c2: float = 1.0 / 16.0
    c3: float = 1.0 / 16.0
    real_exact_draws: float = 24.0


DEFAULT_CONSTANTS = EstimatorConstants()

_MODES = ("asymmetric", "symmetric", "real_exact")


@dataclass(frozen=True)
class InnerProductConfig:
    """One estimator invocation's knobs, bundled for drivers and CLIs."""

    eps: float
    mode: str = "asymmetric"
    perturbation: Optional[float] = None
    constants: EstimatorConstants = field(default_factory=EstimatorConstants)
    declared_phi_thresholds: bool = False

    def __post_init__(self):
        if not (0.0 < self.eps <= 1.0):
            raise ValueError(f"eps={self.eps} outside (0, 1]")
        if self.mode not in _MODES:
            raise ValueError(f"mode must be one of {_MODES}")
        if self.perturbation is not None and self.perturbation < 0.0:
            raise ValueError("perturbation budget must be >= 0")


@dataclass(frozen=True)
class PointEstimatorTrace:
    """Per-draw records of one estimation phase.

    Rejected draws keep zero placeholders in ``x_hat``/``y_hat`` and
    contribute exactly zero; ``check()`` asserts that consistency.
    """

    indices: np.ndarray
    p_hat: np.ndarray
    accepted: np.ndarray
    x_hat: np.ndarray
    y_hat: np.ndarray
    contributions: np.ndarray
    threshold: float
    strict: bool  # True when acceptance requires p_hat strictly above

    def __len__(self) -> int:
        return int(self.indices.size)

    def check(self) -> None:
        acc, rej = self.accepted, ~self.accepted
        if self.strict:
            assert np.all(self.p_hat[acc] > self.threshold)
        else:
            assert np.all(self.p_hat[acc] >= self.threshold)
        assert np.all(self.contributions[rej] == 0)


def _vector_values(y) -> np.ndarray:
    if isinstance(y, DenseVector):
        return y.values
    return np.asarray(y, dtype=np.complex128)


def _norm_search(handle: AccessHandle, rho: float, delta: float) -> float:
    """Relative-error estimate of the handle's sampling norm (squared)."""
    try:
        est = relative_estimate(lambda eps: handle.norm_sq(eps), rho, delta)
    except NonterminationCap as exc:
        raise RelativeEstimateFailed(str(exc)) from exc
    return abs(est.real)


def _improve_batch(
    handle: AccessHandle, indices: np.ndarray, eps: float, delta: float
) -> np.ndarray:
    """One boosted query per draw, batched by unique index when exact.

    For a backend with deterministic queries the boosted median of any
    number of copies equals the single raw answer, so one evaluation per
    *unique* index suffices; the remaining raw calls are metered in bulk,
    leaving the ledger identical to the draw-by-draw loop.
    """
    if indices.size == 0:
        return np.zeros(0, dtype=np.complex128)
    if not handle.exact_queries:
        return np.array(
            [boosted_query(handle, int(i), eps, delta) for i in indices],
            dtype=np.complex128,
        )
    copies = math.ceil(18.0 * math.log(1.0 / delta))
    raw_eps = eps / math.sqrt(2.0)
    uniq, inverse = np.unique(indices, return_inverse=True)
    vals = np.array([handle.query(int(i), raw_eps) for i in uniq], dtype=np.complex128)
    handle.ledger.record_query(raw_eps, indices.size * copies - uniq.size)
    return vals[inverse]


# -- asymmetric (one-sided access) --------------------------------------------


def _asym_engine(
    hx: AccessHandle,
    y,
    eps: float,
    *,
    gamma: float,
    n_hat_sq: float,
    strict_reject: bool,
    keep_trace: bool,
    before=None,
) -> EstimatorReport:
    y_vals = _vector_values(y)
    if y_vals.size != hx.dim:
        raise ValueError(f"y has dim {y_vals.size}, handle has {hx.dim}")
    if before is None:
        before = hx.ledger.snapshot()

    d = hx.dim
    n_hist = math.ceil(512.0 / gamma**2 * math.log(18.0 * d))
    counts = np.asarray(hx.sample_counts(n_hist), dtype=np.float64)

    m = math.ceil(7.0 * n_hat_sq / eps**2)
    idx = np.asarray(hx.sample_indices(m))
    p_hat = counts[idx] / n_hist
    threshold = 1.5 * gamma
    accepted = p_hat > threshold if strict_reject else p_hat >= threshold

    x_hat = np.zeros(m, dtype=np.complex128)
    x_hat[accepted] = _improve_batch(
        hx, idx[accepted], eps / 4.0, eps**2 / (127.0 * n_hat_sq)
    )
    contributions = np.zeros(m, dtype=np.complex128)
    contributions[accepted] = (
        np.conj(x_hat[accepted])
        * y_vals[idx[accepted]]
        / (p_hat[accepted] + gamma / 2.0)
    )

    trace = None
    if keep_trace:
        trace = PointEstimatorTrace(
            indices=idx,
            p_hat=p_hat,
            accepted=accepted,
            x_hat=x_hat,
            y_hat=y_vals[idx] * accepted,
            contributions=contributions,
            threshold=threshold,
            strict=strict_reject,
        )
    return EstimatorReport(
        estimate=complex(contributions.mean()),
        error_bound=eps * one_norm(y_vals),
        success_prob=SUCCESS_PROB,
        ledger=hx.ledger.snapshot() - before,
        trace=trace,
    )


def inner_product_asym(
    hx: AccessHandle, y, eps: float, *, keep_trace: bool = False
) -> EstimatorReport:
    """Estimate ``x^dag y`` from sampling access to ``x`` and the array ``y``.

    Contract: ``|estimate - x^dag y| <= eps * ||y||_1`` with probability at
    least 2/3.  Raises :class:`RelativeEstimateFailed` when the norm search
    cannot bound ``||x||`` away from zero.
    """
    if not (0.0 < eps <= 1.0):
        raise ValueError(f"eps={eps} outside (0, 1]")
    before = hx.ledger.snapshot()
    n_hat_sq = _norm_search(hx, 0.25, 1.0 / 9.0)
    gamma = eps**2 / (135.0 * n_hat_sq)
    return _asym_engine(
        hx,
        y,
        eps,
        gamma=gamma,
        n_hat_sq=n_hat_sq,
        strict_reject=False,
        keep_trace=keep_trace,
        before=before,
    )


def inner_product_asym_perturbed(
    hx,
    y,
    eps: float,
    phi_bound: float,
    *,
    constants: EstimatorConstants = DEFAULT_CONSTANTS,
    declared_phi_thresholds: bool = False,
    keep_trace: bool = False,
) -> EstimatorReport:
    """Asymmetric estimate when the sampler follows a drifted distribution.

    The handle's realized sampling drift (total variation) must fit inside
    ``c1 * eps / sqrt(phi_bound)``.  By default the exact-case engine runs
    unchanged -- the learned ``gamma`` is already of order
    ``eps^2 / phi`` -- so a drift of zero reproduces
    :func:`inner_product_asym` draw-for-draw.  With
    ``declared_phi_thresholds=True`` the rejection floor and contribution offset
    instead use the literal ``eps_P = c3 eps^2 / phi_bound`` (strict
    rejection at ``p^ <= (3/2) eps_P``).
    """
    if not (0.0 < eps <= 1.0):
        raise ValueError(f"eps={eps} outside (0, 1]")
    if phi_bound < 1.0:
        raise ValueError("phi_bound must be >= 1")
    drift = getattr(hx, "sampling_tvd", 0.0)
    budget = constants.c1 * eps / math.sqrt(phi_bound)
    if drift > budget + 1e-12:
        raise BudgetExceeded(
            f"sampling drift {drift:.6g} exceeds asymmetric budget {budget:.6g}"
        )
    before = hx.ledger.snapshot()
    n_hat_sq = _norm_search(hx, 0.25, 1.0 / 9.0)
    if declared_phi_thresholds:
        gamma = constants.c3 * eps**2 / phi_bound
        strict = True
    else:
        gamma = eps**2 / (135.0 * n_hat_sq)
        strict = False
    return _asym_engine(
        hx,
        y,
        eps,
        gamma=gamma,
        n_hat_sq=n_hat_sq,
        strict_reject=strict,
        keep_trace=keep_trace,
        before=before,
    )


# -- symmetric (two-sided access) ----------------------------------------------


def _mixture_counts(hx, hy, n: int, rng: np.random.Generator) -> np.ndarray:
    """Histogram of ``n`` fair-coin mixture draws (bulk-path equivalent)."""
    from_x = int(rng.binomial(n, 0.5))
    counts = np.asarray(hx.sample_counts(from_x), dtype=np.float64)
    counts += np.asarray(hy.sample_counts(n - from_x), dtype=np.float64)
    return counts


def _mixture_indices(hx, hy, m: int, rng: np.random.Generator) -> np.ndarray:
    """``m`` fair-coin mixture draws, in draw order."""
    coin_x = rng.random(m) < 0.5
    idx = np.empty(m, dtype=np.int64)
    n_x = int(coin_x.sum())
    idx[coin_x] = hx.sample_indices(n_x)
    idx[~coin_x] = hy.sample_indices(m - n_x)
    return idx


def _sym_engine(
    hx: AccessHandle,
    hy: AccessHandle,
    eps: float,
    rng: np.random.Generator,
    *,
    gamma: float,
    eps_x: float,
    eps_y: float,
    n_hat_x_sq: float,
    n_hat_y_sq: float,
    keep_trace: bool,
    before_x=None,
    before_y=None,
) -> EstimatorReport:
    if hx.dim != hy.dim:
        raise ValueError(f"handles disagree on dim: {hx.dim} vs {hy.dim}")
    d = hx.dim
    if before_x is None:
        before_x = hx.ledger.snapshot()
    if before_y is None:
        before_y = hy.ledger.snapshot()

    n_hist = math.ceil(32.0 / gamma**2 * math.log(18.0 * d))
    counts = _mixture_counts(hx, hy, n_hist, rng)

    m = math.ceil(864.0 * (1.0 + 2.0 * n_hat_x_sq) * (1.0 + 2.0 * n_hat_y_sq) / eps**2)
    idx = _mixture_indices(hx, hy, m, rng)
    p_hat = counts[idx] / n_hist
    threshold = 1.5 * gamma
    accepted = p_hat > threshold

    delta_q = 1.0 / (18.0 * m)
    x_hat = np.zeros(m, dtype=np.complex128)
    y_hat = np.zeros(m, dtype=np.complex128)
    x_hat[accepted] = _improve_batch(hx, idx[accepted], eps_x, delta_q)
    y_hat[accepted] = _improve_batch(hy, idx[accepted], eps_y, delta_q)
    contributions = np.zeros(m, dtype=np.complex128)
    contributions[accepted] = (
        np.conj(x_hat[accepted]) * y_hat[accepted] / (p_hat[accepted] + gamma / 2.0)
    )

    estimate = complex(
        lower_median(contributions.real), lower_median(contributions.imag)
    )
    trace = None
    if keep_trace:
        trace = PointEstimatorTrace(
            indices=idx,
            p_hat=p_hat,
            accepted=accepted,
            x_hat=x_hat,
            y_hat=y_hat,
            contributions=contributions,
            threshold=threshold,
            strict=True,
        )

    bound = eps  # refined by callers that know the 1-norms; see wrappers
    return EstimatorReport(
        estimate=estimate,
        error_bound=bound,
        success_prob=SUCCESS_PROB,
        ledger=(hx.ledger.snapshot() - before_x) + (hy.ledger.snapshot() - before_y),
        trace=trace,
    )


def _sym_error_bound(hx, hy, eps: float) -> float:
    """eps * (1 + min of the ground-truth 1-to-2-norm ratios), when known."""
    ratios = []
    for h in (hx, hy):
        t = getattr(h, "target", None)
        if t is None:
            t = getattr(h, "state", None)
        if t is not None:
            t = np.asarray(t)
            nrm = float(np.linalg.norm(t))
            if nrm > 0:
                ratios.append(one_norm(t) / nrm)
    return eps * (1.0 + min(ratios)) if ratios else 2.0 * eps


def inner_product_sym(
    hx: AccessHandle,
    hy: AccessHandle,
    eps: float,
    rng: np.random.Generator,
    *,
    keep_trace: bool = False,
) -> EstimatorReport:
    """Estimate ``x^dag y`` from sampling access to both vectors.

    Contract: error at most ``eps * (1 + min(||x||_1/||x||, ||y||_1/||y||))``
    with probability at least 2/3 -- only one of the two vectors needs a
    small 1-norm.  ``rng`` drives the fair mixture coin.
    """
    if not (0.0 < eps <= 1.0):
        raise ValueError(f"eps={eps} outside (0, 1]")
    before_x = hx.ledger.snapshot()
    before_y = hy.ledger.snapshot()
    n_x = _norm_search(hx, 0.5, 1.0 / 18.0)
    n_y = _norm_search(hy, 0.5, 1.0 / 18.0)
    gamma = min(1.0, 1.0 / n_x) * min(1.0, 1.0 / n_y) * eps**2 / 100.0
    eps_x = eps * math.sqrt(gamma) * min(1.0, 1.0 / math.sqrt(n_y)) / 100.0
    eps_y = eps * math.sqrt(gamma) * min(1.0, 1.0 / math.sqrt(n_x)) / 100.0
    report = _sym_engine(
        hx,
        hy,
        eps,
        rng,
        gamma=gamma,
        eps_x=eps_x,
        eps_y=eps_y,
        n_hat_x_sq=n_x,
        n_hat_y_sq=n_y,
        keep_trace=keep_trace,
        before_x=before_x,
        before_y=before_y,
    )
    return EstimatorReport(
        estimate=report.estimate,
        error_bound=_sym_error_bound(hx, hy, eps),
        success_prob=report.success_prob,
        ledger=report.ledger,
        trace=report.trace,
    )


def inner_product_sym_perturbed(
    hx,
    hy,
    eps: float,
    phi_bound: float,
    rng: np.random.Generator,
    *,
    constants: EstimatorConstants = DEFAULT_CONSTANTS,
    declared_phi_thresholds: bool = False,
    keep_trace: bool = False,
) -> EstimatorReport:
    """Symmetric estimate when both samplers follow drifted distributions.

    Each handle's drift must fit inside ``c1 * eps / phi_bound``.  Default:
    the exact-case schedule, unchanged (zero drift coincides with
    :func:`inner_product_sym`).  ``declared_phi_thresholds=True`` swaps in the
    literal floors ``gamma = c2 eps^2 / phi_bound`` and query precisions
    ``eps_x = eps_y = c3 eps^2 / phi_bound``.
    """
    if not (0.0 < eps <= 1.0):
        raise ValueError(f"eps={eps} outside (0, 1]")
    if phi_bound < 1.0:
        raise ValueError("phi_bound must be >= 1")
    budget = constants.c1 * eps / phi_bound
    for name, h in (("x", hx), ("y", hy)):
        drift = getattr(h, "sampling_tvd", 0.0)
        if drift > budget + 1e-12:
            raise BudgetExceeded(
                f"{name}-sampler drift {drift:.6g} exceeds symmetric budget {budget:.6g}"
            )
    before_x = hx.ledger.snapshot()
    before_y = hy.ledger.snapshot()
    n_x = _norm_search(hx, 0.5, 1.0 / 18.0)
    n_y = _norm_search(hy, 0.5, 1.0 / 18.0)
    if declared_phi_thresholds:
        gamma = constants.c2 * eps**2 / phi_bound
        eps_x = eps_y = constants.c3 * eps**2 / phi_bound
    else:
        gamma = min(1.0, 1.0 / n_x) * min(1.0, 1.0 / n_y) * eps**2 / 100.0
        eps_x = eps * math.sqrt(gamma) * min(1.0, 1.0 / math.sqrt(n_y)) / 100.0
        eps_y = eps * math.sqrt(gamma) * min(1.0, 1.0 / math.sqrt(n_x)) / 100.0
    report = _sym_engine(
        hx,
        hy,
        eps,
        rng,
        gamma=gamma,
        eps_x=eps_x,
        eps_y=eps_y,
        n_hat_x_sq=n_x,
        n_hat_y_sq=n_y,
        keep_trace=keep_trace,
        before_x=before_x,
        before_y=before_y,
    )
    return EstimatorReport(
        estimate=report.estimate,
        error_bound=_sym_error_bound(hx, hy, eps),
        success_prob=report.success_prob,
        ledger=report.ledger,
        trace=report.trace,
    )


# -- real vectors, exact sampling ----------------------------------------------


def inner_product_real_exact(
    hx: AccessHandle,
    hy: AccessHandle,
    eps: float,
    rng: np.random.Generator,
    *,
    kappa: float,
    delta_bound: float = 0.0,
    constants: EstimatorConstants = DEFAULT_CONSTANTS,
    keep_trace: bool = False,
) -> EstimatorReport:
    """Estimate ``x^T y`` for real unit vectors without oversampling slack.

    ``kappa`` must upper-bound ``min(||x||_1, ||y||_1)``; the handles may
    sample from vectors up to ``delta_bound/2`` away in l2, costing
    ``+delta_bound`` absolute error: the contract is
    ``|estimate - x^T y| <= eps + delta_bound`` with probability >= 2/3.

    Each draw makes exactly one raw query per side at
    ``eps_Q = c2 eps^2 / kappa``; the rejection floor compares
    ``sqrt((x^2 + y^2)/2)`` against ``(3/2) gamma`` with
    ``gamma = c1 eps / kappa``.  The loop is strictly sequential (coin,
    sample, query, query) so that a remote party answering the oracle calls
    sees them in a reproducible order.
    """
    if not (0.0 < eps <= 1.0):
        raise ValueError(f"eps={eps} outside (0, 1]")
    if kappa <= 0.0:
        raise ValueError("kappa must be positive")
    if hx.dim != hy.dim:
        raise ValueError(f"handles disagree on dim: {hx.dim} vs {hy.dim}")
    for h in (hx, hy):
        t = getattr(h, "target", None)
        if t is not None:
            nrm = float(np.linalg.norm(np.asarray(t)))
            if abs(nrm - 1.0) > 1e-9:
                raise NonUnitNorm(f"ground-truth norm {nrm!r} is not 1")

    gamma = constants.c1 * eps / kappa
    eps_q = constants.c2 * eps**2 / kappa
    floor = 1.5 * gamma
    draws = math.ceil(constants.real_exact_draws / eps**2)

    before_x = hx.ledger.snapshot()
    before_y = hy.ledger.snapshot()

    indices = np.empty(draws, dtype=np.int64)
    p_hat = np.empty(draws)
    accepted = np.zeros(draws, dtype=bool)
    x_hat = np.zeros(draws)
    y_hat = np.zeros(draws)
    contributions = np.zeros(draws)

    for t in range(draws):
        side = hx if rng.random() < 0.5 else hy
        i = sample_valid(side)
        xh = hx.query(i, eps_q).real
        yh = hy.query(i, eps_q).real
        p = (xh * xh + yh * yh) / 2.0
        indices[t] = i
        p_hat[t] = p
        x_hat[t] = xh
        y_hat[t] = yh
        if math.sqrt(p) > floor:
            accepted[t] = True
            contributions[t] = xh * yh / p

    trace = None
    if keep_trace:
        trace = PointEstimatorTrace(
            indices=indices,
            p_hat=p_hat,
            accepted=accepted,
            x_hat=x_hat.astype(np.complex128),
            y_hat=y_hat.astype(np.complex128),
            contributions=contributions.astype(np.complex128),
            threshold=floor**2,  # acceptance was sqrt(p) > floor
            strict=True,
        )
    return EstimatorReport(
        estimate=complex(contributions.mean()),
        error_bound=eps + delta_bound,
        success_prob=SUCCESS_PROB,
        ledger=(hx.ledger.snapshot() - before_x) + (hy.ledger.snapshot() - before_y),
        trace=trace,
    )
