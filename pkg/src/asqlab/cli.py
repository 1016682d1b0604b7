"""Experiment runner: every headline contract as a seeded command.

Each subcommand runs ``--trials`` independent experiments, writes one row
per trial, and prints a one-line summary.  Rows have fixed columns

    trial, estimate, truth, abs_error, within_bound (0/1),
    samples, sample_failures, queries, norms

where the last four are the trial's oracle ledger counts.  CSV output
starts with the version comment ``# asq-lab v1``; JSON output carries the
same rows under a ``rows`` key.  Identical config and seed produce
byte-identical output files: every trial derives its streams from
``(seed, trial, purpose)`` and never from the clock, so a worker pool
(``--workers``) changes wall time but not a single byte.

Exit codes: 0 success, 1 configuration error, 2 experiment failure (a
diagnostic goes to standard error).
"""

from __future__ import annotations

import argparse
import functools
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Optional

import numpy as np

from .access import (
    AdversarialQuery,
    NonterminationCap,
    SamplerStarvation,
    UniformNoiseQuery,
    relative_estimate,
)
from .backends import (
    BudgetExceeded,
    DominanceViolation,
    MatrixBlockEncoding,
    PrepMeasureBackend,
    estimate_abs_amplitudes,
    exact_handle,
    wrap_oversampled,
    wrap_perturbed,
)
from .compose import ConstructionFailed, LinearCombinationSpec, lincomb_deterministic, lincomb_probabilistic
from .core import (
    CostLedger,
    LedgerSnapshot,
    check_tvd_bound,
    load_vector_json,
    norm2sq,
    one_norm,
)
from .estimators import (
    DEFAULT_CONSTANTS,
    RelativeEstimateFailed,
    inner_product_asym,
    inner_product_asym_perturbed,
    inner_product_real_exact,
    inner_product_sym,
    inner_product_sym_perturbed,
)
from .harness import PartyEndpoint, _serve_tcp_once, coordinate_overlap, tcp_party
from .pauli import (
    DimensionNotPowerOfTwo,
    NotNormalized,
    distributed_overlap,
    haar_random_state,
    magic_report,
    pauli_cdf,
    pauli_overlap,
    pauli_representation,
    random_clifford_state,
)
from .rng import derive_seed, generator
from .wire import ProtocolError, SessionAbort, connect_tcp

__all__ = ["main"]

CSV_VERSION = "# asq-lab v1"
COLUMNS = (
    "trial",
    "estimate",
    "truth",
    "abs_error",
    "within_bound",
    "samples",
    "sample_failures",
    "queries",
    "norms",
)

#: tau values of the coefficient-mass CDF bound check (pauli-dist rows).
CDF_TAUS = (0.01, 0.1, 0.25, 0.5, 1.0)

_BOUND_SLACK = 1e-12


class ConfigError(ValueError):
    """Invalid flag combination (exit code 1)."""


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad flags by default; the contract here is 1 for
    # config problems and 2 for experiment failures.
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


# -- row plumbing ---------------------------------------------------------------


def _row(trial, estimate, truth, within, snap: Optional[LedgerSnapshot]) -> dict:
    est = complex(estimate)
    tru = complex(truth)
    if snap is None:
        snap = LedgerSnapshot()
    return {
        "trial": int(trial),
        "estimate": est,
        "truth": tru,
        "abs_error": abs(est - tru),
        "within_bound": 1 if within else 0,
        "samples": snap.samples,
        "sample_failures": snap.sample_failures,
        "queries": snap.total_queries,
        "norms": snap.total_norms,
    }


def _fmt_scalar(v) -> str:
    if isinstance(v, complex):
        if v.imag == 0.0:
            return repr(v.real)
        return repr(v)  # '(re+imj)': comma-free, round-trips via complex()
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _render_csv(rows: list[dict]) -> str:
    lines = [CSV_VERSION, ",".join(COLUMNS)]
    for r in rows:
        lines.append(",".join(_fmt_scalar(r[c]) for c in COLUMNS))
    return "\n".join(lines) + "\n"


def _jsonable(v):
    if isinstance(v, complex):
        if v.imag == 0.0:
            return v.real
        return {"re": v.real, "im": v.imag}
    return v


def _render_json(rows: list[dict], summary: dict) -> str:
    doc = {
        "version": "asq-lab v1",
        "rows": [{k: _jsonable(v) for k, v in r.items()} for r in rows],
        "summary": summary,
    }
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def _summarize(rows: list[dict]) -> dict:
    n = max(1, len(rows))
    return {
        "success_fraction": sum(r["within_bound"] for r in rows) / n,
        "mean_abs_error": sum(r["abs_error"] for r in rows) / n,
    }


def _emit(args, rows: list[dict]) -> None:
    summary = _summarize(rows)
    text = (
        _render_json(rows, summary)
        if args.format == "json"
        else _render_csv(rows)
    )
    if args.out:
        with open(args.out, "w", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    print(
        f"success_fraction={summary['success_fraction']:.6f} "
        f"mean_abs_error={summary['mean_abs_error']:.6e}"
    )


def _run_trials(args, trial_fn: Callable) -> list[dict]:
    trials = range(args.trials)
    if getattr(args, "workers", 1) > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            chunk = max(1, args.trials // (args.workers * 4))
            return list(pool.map(functools.partial(trial_fn, args), trials, chunksize=chunk))
    return [trial_fn(args, t) for t in trials]


# -- random instances -----------------------------------------------------------


def _gauss_complex(dim: int, rng: np.random.Generator) -> np.ndarray:
    return rng.normal(size=dim) + 1j * rng.normal(size=dim)


def _unit_complex(dim: int, rng: np.random.Generator) -> np.ndarray:
    v = _gauss_complex(dim, rng)
    return v / np.linalg.norm(v)


def _unit_real(dim: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=dim)
    return v / np.linalg.norm(v)


def _oversampled_vector(x: np.ndarray, phi: float, rng: np.random.Generator) -> np.ndarray:
    """A random dominating vector with ``||x~||^2 = phi ||x||^2`` exactly."""
    mass = x.real**2 + x.imag**2
    w = rng.random(x.size)
    w /= w.sum()
    return np.sqrt(mass + (phi - 1.0) * mass.sum() * w)


def _drifted_vector(base: np.ndarray, tvd_amount: float) -> np.ndarray:
    """A vector whose l2 distribution sits at the requested total variation
    (unhalved) from ``base``'s, mixing mass toward the lightest index."""
    mass = base.real**2 + base.imag**2
    dist = mass / mass.sum()
    if tvd_amount > 0.0:
        b = int(np.argmin(dist))
        theta = tvd_amount / (2.0 * (1.0 - dist[b]))
        dist = (1.0 - theta) * dist
        dist[b] += theta
    return np.sqrt(dist * mass.sum())


# -- experiments ----------------------------------------------------------------


_RELNORM_TARGETS = (1.0, 0.1, 0.01)


class _CountedOracle:
    """Wraps a scalar-query oracle, counting raw calls for the ledger row."""

    def __init__(self, inner):
        self.inner = inner
        self.calls = 0

    def __call__(self, eps: float) -> complex:
        self.calls += 1
        return self.inner(eps)

    def batch(self, eps: float, n: int) -> np.ndarray:
        self.calls += int(n)
        return self.inner.batch(eps, n)


def _trial_relnorm(args, t: int) -> dict:
    truth = _RELNORM_TARGETS[t % len(_RELNORM_TARGETS)]
    rng = generator(args.seed, t)
    oracle_cls = AdversarialQuery if args.noise == "adversarial" else UniformNoiseQuery
    oracle = _CountedOracle(oracle_cls(truth, rng))
    try:
        est = relative_estimate(oracle, args.rho, args.delta)
        within = abs(est - truth) <= args.rho * abs(truth) + _BOUND_SLACK
    except NonterminationCap:
        est = math.nan
        within = False
    ledger = CostLedger()
    ledger.record_query(args.rho, count=oracle.calls)
    return _row(t, est, truth, within, ledger.snapshot())


def _trial_inprod_asym(args, t: int) -> dict:
    rng_vec = generator(args.seed, t, "vectors")
    x = _unit_complex(args.dim, rng_vec)
    y = _unit_complex(args.dim, rng_vec)
    truth = complex(np.vdot(x, y))
    hx = exact_handle(x, generator(args.seed, t, "x"))
    if args.backend == "prep":
        hx = PrepMeasureBackend(x, generator(args.seed, t, "x"))
    if args.perturb is None:
        report = inner_product_asym(hx, y, args.epsilon)
    else:
        budget = DEFAULT_CONSTANTS.c1 * args.epsilon  # phi = 1
        hx = wrap_perturbed(hx, _drifted_vector(x, args.perturb * budget), budget)
        report = inner_product_asym_perturbed(
            hx, y, args.epsilon, 1.0, declared_phi_thresholds=args.declared_phi_thresholds
        )
    within = abs(report.estimate - truth) <= report.error_bound + _BOUND_SLACK
    return _row(t, report.estimate, truth, within, report.ledger)


def _sym_handle(args, x: np.ndarray, rng: np.random.Generator, side_rng):
    h = exact_handle(x, side_rng)
    if args.phi > 1.0:
        h = wrap_oversampled(h, _oversampled_vector(x, args.phi, rng))
    if args.perturb is not None:
        budget = DEFAULT_CONSTANTS.c1 * args.epsilon / args.phi
        drifted = _drifted_vector(h.oversample, args.perturb * budget)
        h = wrap_perturbed(h, drifted, budget)
    return h


def _trial_inprod_sym(args, t: int) -> dict:
    rng_vec = generator(args.seed, t, "vectors")
    x = _unit_complex(args.dim, rng_vec)
    y = _unit_complex(args.dim, rng_vec)
    truth = complex(np.vdot(x, y))
    if args.backend == "prep":
        hx = PrepMeasureBackend(x, generator(args.seed, t, "x"))
        hy = PrepMeasureBackend(y, generator(args.seed, t, "y"))
        report = inner_product_sym(hx, hy, args.epsilon, generator(args.seed, t, "mix"))
    else:
        hx = _sym_handle(args, x, rng_vec, generator(args.seed, t, "x"))
        hy = _sym_handle(args, y, rng_vec, generator(args.seed, t, "y"))
        if args.perturb is None:
            report = inner_product_sym(hx, hy, args.epsilon, generator(args.seed, t, "mix"))
        else:
            report = inner_product_sym_perturbed(
                hx,
                hy,
                args.epsilon,
                args.phi,
                generator(args.seed, t, "mix"),
                declared_phi_thresholds=args.declared_phi_thresholds,
            )
    within = abs(report.estimate - truth) <= report.error_bound + _BOUND_SLACK
    return _row(t, report.estimate, truth, within, report.ledger)


def _trial_inprod_real_vectors(args, t: int) -> dict:
    rng_vec = generator(args.seed, t, "vectors")
    x = _unit_real(args.dim, rng_vec)
    y = _unit_real(args.dim, rng_vec)
    truth = float(x @ y)
    kappa = min(one_norm(x), one_norm(y))

    def handle(vec, label):
        rng = generator(args.seed, t, label)
        if args.delta_l2 > 0.0:
            shift = rng_vec.normal(size=args.dim)
            shift *= (args.delta_l2 / 2.0) / np.linalg.norm(shift)
            base = exact_handle(vec, rng)
            return wrap_perturbed(base, vec + shift, tvd_budget=2.0)
        return exact_handle(vec, rng)

    hx = handle(x, "x")
    hy = handle(y, "y")
    report = inner_product_real_exact(
        hx,
        hy,
        args.epsilon,
        generator(args.seed, t, "coordinator"),
        kappa=kappa,
        delta_bound=args.delta_l2,
    )
    within = abs(report.estimate - truth) <= report.error_bound + _BOUND_SLACK
    return _row(t, report.estimate, truth, within, report.ledger)


def _trial_inprod_real_overlap(args, t: int) -> dict:
    n = args.qubits
    rng = generator(args.seed, t, "states")
    psi = random_clifford_state(n, rng, t_count=int(rng.integers(args.t_count + 1)))
    phi = random_clifford_state(n, rng, t_count=int(rng.integers(args.t_count + 1)))
    truth = float(abs(np.vdot(psi, phi)) ** 2)
    trial_seed = derive_seed(args.seed, t)
    if args.transport == "tcp":
        alice = PartyEndpoint("alice", psi, n, seed=trial_seed)
        bob = PartyEndpoint("bob", phi, n, seed=trial_seed)
        with tcp_party(alice) as (ah, ap), tcp_party(bob) as (bh, bp):
            ta = connect_tcp(ah, ap)
            tb = connect_tcp(bh, bp)
            try:
                report = coordinate_overlap(ta, tb, n, args.epsilon, seed=trial_seed)
            finally:
                ta.close()
                tb.close()
    else:
        report = distributed_overlap(psi, phi, n, args.epsilon, seed=trial_seed)
    within = abs(report.estimate - truth) <= report.error_bound + _BOUND_SLACK
    return _row(t, report.estimate, truth, within, report.ledger)


def _trial_inprod_real(args, t: int) -> dict:
    if args.qubits is not None:
        return _trial_inprod_real_overlap(args, t)
    return _trial_inprod_real_vectors(args, t)


def _trial_lincomb(args, t: int) -> dict:
    rng = generator(args.seed, t)
    tau = int(rng.integers(1, args.max_tau + 1))
    dim = int(rng.integers(2, args.max_dim + 1))
    terms = [_gauss_complex(dim, rng) / math.sqrt(dim) for _ in range(tau)]
    lam = _gauss_complex(tau, rng)
    while np.any(np.abs(lam) < 1e-6):
        lam = _gauss_complex(tau, rng)

    ledger = CostLedger()
    handles = [
        exact_handle(terms[j], generator(args.seed, t, "child", j), ledger=ledger)
        for j in range(tau)
    ]
    spec = LinearCombinationSpec(handles, lam)
    u = lam @ np.stack(terms)
    u_nsq = norm2sq(u)
    if u_nsq == 0.0:
        return _row(t, math.nan, math.nan, False, ledger.snapshot())

    det = lincomb_deterministic(spec, generator(args.seed, t, "det"), ledger=ledger)
    checks = [bool(np.all(np.abs(det.oversample) >= np.abs(u) - 1e-9))]
    ratio_det = norm2sq(det.oversample) / u_nsq
    checks.append(ratio_det <= det.phi * (1.0 + 1e-9) + _BOUND_SLACK)

    try:
        prob = lincomb_probabilistic(spec, 1.0 / 9.0, generator(args.seed, t, "prob"), ledger=ledger)
        checks.append(bool(np.all(np.abs(prob.oversample) >= np.abs(u) - 1e-9)))
        ratio_prob = norm2sq(prob.oversample) / u_nsq
        checks.append(ratio_prob <= prob.phi * (1.0 + 1e-9) + _BOUND_SLACK)
    except ConstructionFailed:
        checks.append(False)

    return _row(t, ratio_det, det.phi, all(checks), ledger.snapshot())


def _trial_tomography(args, t: int) -> dict:
    rng_vec = generator(args.seed, t, "vectors")
    x = _unit_complex(args.dim, rng_vec)
    backend = PrepMeasureBackend(x, generator(args.seed, t, "backend"))
    table = estimate_abs_amplitudes(backend, args.epsilon, args.delta)
    dense = np.zeros(args.dim)
    for i, v in table.entries.items():
        dense[i] = v
    sup_err = float(np.max(np.abs(dense - np.abs(x))))
    within = sup_err <= args.epsilon + _BOUND_SLACK
    return _row(t, sup_err, 0.0, within, backend.ledger.snapshot())


def _trial_pauli_dist(args, t: int) -> dict:
    n = (t % args.qubits) + 1
    rng = generator(args.seed, t)
    psi = haar_random_state(1 << n, rng)
    phi = haar_random_state(1 << n, rng)
    pa = pauli_representation(psi, n)
    pb = pauli_representation(phi, n)
    overlap_pi = pauli_overlap(pa, pb)
    truth = float(abs(np.vdot(psi, phi)) ** 2)

    rep = magic_report(pa)
    checks = [
        abs(float(np.linalg.norm(pa.values)) - 1.0) <= 1e-9,
        abs(overlap_pi - truth) <= 1e-9,
        abs(rep.m_half - 2.0 * math.log(rep.stab_norm)) <= 1e-9,
    ]
    for tau in CDF_TAUS:
        checks.append(pauli_cdf(pa, tau) <= math.sqrt(tau) * rep.exp_half + _BOUND_SLACK)
    return _row(t, overlap_pi, truth, all(checks), None)


def _chi2_critical(df: int, alpha: float = 0.01) -> float:
    """Upper chi-square quantile via the Wilson-Hilferty cube approximation."""
    z = {0.01: 2.3263478740408408, 0.05: 1.6448536269514722}[alpha]
    return df * (1.0 - 2.0 / (9.0 * df) + z * math.sqrt(2.0 / (9.0 * df))) ** 3


def _trial_colsample(args, t: int) -> dict:
    dims = args.dims
    dim = dims[t % len(dims)]
    rng = generator(args.seed, t, "matrix")
    g = _gauss_complex(dim * dim, rng).reshape(dim, dim)
    a = 0.9 * g / float(np.linalg.norm(g, 2))
    enc = MatrixBlockEncoding(a, generator(args.seed, t, "enc"))

    draws = enc.sample_column_batch(args.attempts)
    ok = draws >= 0
    p_hat = float(ok.mean())
    p = enc.success_probability
    sigma = math.sqrt(p * (1.0 - p) / args.attempts)
    within = abs(p_hat - p) <= 3.0 * sigma

    col_mass = np.sum(a.real**2 + a.imag**2, axis=0)
    expected = ok.sum() * col_mass / col_mass.sum()
    observed = np.bincount(draws[ok], minlength=dim)
    live = expected > 0.0
    chi2 = float(np.sum((observed[live] - expected[live]) ** 2 / expected[live]))
    within = within and chi2 <= _chi2_critical(dim - 1, 0.01)
    return _row(t, p_hat, p, within, enc.ledger.snapshot())


def _trial_tvd_sweep(args, t: int) -> dict:
    rng = generator(args.seed, t)
    dim = int(rng.integers(2, args.max_dim + 1))
    x = _gauss_complex(dim, rng)
    if t % 3 == 0:
        y = _gauss_complex(dim, rng)  # far pair: the bound saturates trivially
    else:
        shift = _gauss_complex(dim, rng)
        shift *= rng.uniform(0.0, 0.5) * np.linalg.norm(x) / np.linalg.norm(shift)
        y = x + shift
    dist, bound, holds = check_tvd_bound(x, y)
    return _row(t, dist, bound, holds, None)


def _trial_magic_report(args, t: int) -> dict:
    rng = generator(args.seed, t)
    state = random_clifford_state(args.qubits, rng, t_count=args.t_count)
    rep = magic_report(pauli_representation(state, args.qubits))
    within = abs(rep.stab_norm - rep.exp_half) <= 1e-9
    return _row(t, rep.stab_norm, rep.exp_half, within, None)


def _load_state(path) -> tuple[np.ndarray, int]:
    vec = load_vector_json(path)
    n = int(round(math.log2(vec.values.size)))
    if 1 << n != vec.values.size:
        raise ConfigError(f"state length {vec.values.size} is not a power of two")
    return vec.values, n


def _cmd_magic_report(args) -> list[dict]:
    if args.state:
        state, n = _load_state(args.state)
        rep = magic_report(pauli_representation(state, n))
        print(
            f"stab_norm={rep.stab_norm!r} m_half={rep.m_half!r} "
            f"m0={rep.m0!r} m2={rep.m2!r}"
        )
        within = abs(rep.stab_norm - rep.exp_half) <= 1e-9
        return [_row(0, rep.stab_norm, rep.exp_half, within, None)]
    if args.qubits is None:
        raise ConfigError("magic-report needs --state or --qubits")
    return _run_trials(args, _trial_magic_report)


def _cmd_serve_party(args) -> None:
    state, n = _load_state(args.state)
    host, _, port = args.listen.rpartition(":")
    if not host or not port.isdigit():
        raise ConfigError(f"--listen expects host:port, got {args.listen!r}")
    party = PartyEndpoint(args.role, state, n, seed=args.seed)
    _serve_tcp_once(party, host, int(port))


# -- argument surface -----------------------------------------------------------


def _add_common(p: argparse.ArgumentParser, *, trials: int) -> None:
    p.add_argument("--trials", type=int, default=trials, help="independent trials")
    p.add_argument("--seed", type=int, default=0, help="root seed (no clock seeding)")
    p.add_argument("--out", type=str, default=None, help="output file (default stdout)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--workers", type=int, default=1, help="worker processes")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="asqlab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("relnorm", help="relative-error scalar estimation vs worst-case noise")
    _add_common(p, trials=1000)
    p.add_argument("--rho", type=float, default=0.1, help="relative error target")
    p.add_argument("--delta", type=float, default=0.1, help="failure probability")
    p.add_argument("--noise", choices=("adversarial", "uniform"), default="adversarial")

    p = sub.add_parser("inprod-asym", help="inner product from one-sided sampling access")
    _add_common(p, trials=300)
    p.add_argument("--dim", type=int, default=1024)
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--backend", choices=("exact", "prep"), default="exact")
    p.add_argument("--perturb", type=float, default=None, metavar="FRAC",
                   help="drift the sampler by FRAC of the TVD budget")
    p.add_argument("--declared-phi-thresholds", action="store_true",
                   help="rejection floors from the declared oversampling factor "
                        "instead of preliminary norm estimates")

    p = sub.add_parser("inprod-sym", help="inner product from two-sided sampling access")
    _add_common(p, trials=300)
    p.add_argument("--dim", type=int, default=256)
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--phi", type=float, default=1.0, help="oversampling factor")
    p.add_argument("--backend", choices=("exact", "prep"), default="exact")
    p.add_argument("--perturb", type=float, default=None, metavar="FRAC")
    p.add_argument("--declared-phi-thresholds", action="store_true")

    p = sub.add_parser(
        "inprod-real",
        help="real inner product without oversampling slack; --qubits runs the state-overlap protocol",
    )
    _add_common(p, trials=300)
    p.add_argument("--dim", type=int, default=None, help="vector mode: dimension")
    p.add_argument("--qubits", type=int, default=None, help="overlap mode: qubit count")
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--delta-l2", type=float, default=0.0,
                   help="vector mode: l2 radius of the sampling perturbation")
    p.add_argument("--t-count", type=int, default=3,
                   help="overlap mode: max injected pi/4 rotations per state")
    p.add_argument("--transport", choices=("local", "tcp"), default="local",
                   help="overlap mode: run in process or over TCP")

    p = sub.add_parser("lincomb", help="linear-combination access bounds")
    _add_common(p, trials=1000)
    p.add_argument("--max-tau", type=int, default=8)
    p.add_argument("--max-dim", type=int, default=64)

    p = sub.add_parser("tomography", help="amplitude-magnitude table from basis shots")
    _add_common(p, trials=100)
    p.add_argument("--dim", type=int, default=1024)
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--delta", type=float, default=0.1)

    p = sub.add_parser("pauli-dist", help="Pauli representation identities and CDF bound")
    _add_common(p, trials=1000)
    p.add_argument("--qubits", type=int, default=6)

    p = sub.add_parser("colsample", help="matrix column sampler law checks")
    _add_common(p, trials=2)
    p.add_argument("--dims", type=str, default="4,16",
                   help="comma-separated matrix sizes, cycled across trials")
    p.add_argument("--attempts", type=int, default=100_000)

    p = sub.add_parser("tvd-sweep", help="sampling-distribution distance bound sweep")
    _add_common(p, trials=1000)
    p.add_argument("--max-dim", type=int, default=256)

    p = sub.add_parser("magic-report", help="stabilizer Renyi measures of a state")
    _add_common(p, trials=100)
    p.add_argument("--state", type=str, default=None, help="JSON state vector file")
    p.add_argument("--qubits", type=int, default=None)
    p.add_argument("--t-count", type=int, default=1)

    p = sub.add_parser("serve-party", help="serve one party of the overlap protocol over TCP")
    p.add_argument("--role", choices=("alice", "bob"), required=True)
    p.add_argument("--listen", type=str, required=True, metavar="HOST:PORT")
    p.add_argument("--state", type=str, required=True, help="JSON state vector file")
    p.add_argument("--seed", type=int, default=0)

    return parser


_EXPERIMENTS: dict[str, Callable] = {
    "relnorm": _trial_relnorm,
    "inprod-asym": _trial_inprod_asym,
    "inprod-sym": _trial_inprod_sym,
    "inprod-real": _trial_inprod_real,
    "lincomb": _trial_lincomb,
    "tomography": _trial_tomography,
    "pauli-dist": _trial_pauli_dist,
    "colsample": _trial_colsample,
    "tvd-sweep": _trial_tvd_sweep,
}

_FAILURES = (
    SamplerStarvation,
    NonterminationCap,
    RelativeEstimateFailed,
    ConstructionFailed,
    BudgetExceeded,
    DominanceViolation,
    SessionAbort,
    ProtocolError,
    OSError,
)


def _validate(args) -> None:
    if getattr(args, "trials", 1) < 1:
        raise ConfigError("--trials must be >= 1")
    if getattr(args, "workers", 1) < 1:
        raise ConfigError("--workers must be >= 1")
    eps = getattr(args, "epsilon", None)
    if eps is not None and not (0.0 < eps <= 1.0):
        raise ConfigError("--epsilon must be in (0, 1]")
    delta = getattr(args, "delta", None)
    if delta is not None and not (0.0 < delta < 1.0):
        raise ConfigError("--delta must be in (0, 1)")
    if getattr(args, "perturb", None) is not None and not (0.0 <= args.perturb <= 1.0):
        raise ConfigError("--perturb must be in [0, 1]")
    if getattr(args, "phi", 1.0) < 1.0:
        raise ConfigError("--phi must be >= 1")
    qubits = getattr(args, "qubits", None)
    if qubits is not None and not (1 <= qubits <= 10):
        raise ConfigError("--qubits must be in [1, 10]")
    if getattr(args, "t_count", 0) < 0:
        raise ConfigError("--t-count must be >= 0")
    if getattr(args, "backend", None) == "prep" and getattr(args, "perturb", None) is not None:
        raise ConfigError("--backend prep does not support --perturb")
    if args.command == "inprod-real":
        if (args.dim is None) == (args.qubits is None):
            raise ConfigError("inprod-real needs exactly one of --dim or --qubits")
        if args.delta_l2 < 0.0:
            raise ConfigError("--delta-l2 must be >= 0")
    if args.command == "inprod-sym" and args.backend == "prep" and args.phi != 1.0:
        raise ConfigError("--backend prep cannot oversample; use --phi 1")
    if args.command == "colsample":
        try:
            args.dims = tuple(int(s) for s in args.dims.split(","))
        except ValueError as exc:
            raise ConfigError(f"--dims expects comma-separated integers: {exc}") from None
        if not args.dims or any(d < 2 for d in args.dims):
            raise ConfigError("--dims entries must be >= 2")
        if args.attempts < 100:
            raise ConfigError("--attempts must be >= 100")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _validate(args)
    except ConfigError as exc:
        print(f"asqlab: error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:
        return int(exc.code or 0)

    try:
        if args.command == "serve-party":
            _cmd_serve_party(args)
            return 0
        if args.command == "magic-report":
            rows = _cmd_magic_report(args)
        else:
            rows = _run_trials(args, _EXPERIMENTS[args.command])
    except (ConfigError, FileNotFoundError, NotNormalized, DimensionNotPowerOfTwo, json.JSONDecodeError) as exc:
        print(f"asqlab: error: {exc}", file=sys.stderr)
        return 1
    except _FAILURES as exc:
        print(f"asqlab: experiment failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2

    _emit(args, rows)
    return 0


if __name__ == "__main__":
    sys.exit(main())
