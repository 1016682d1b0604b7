"""Acceptance gate: the eleven numbered contracts, one test each.

Each test drives the documented CLI invocation in process (the same
commands listed in the README runbook), parses the summary line, and
asserts the stated floor or tolerance; criteria whose substance is an
exact identity additionally assert it directly against the library.
Everything is seeded, so the whole module is deterministic; the stated
statistical floors hold with wide margin at these seeds (most sweeps run
at 100%).  Budget criteria carry wall-clock caps where stated.

Expected total runtime is seven to ten minutes on one core, dominated
by criteria 3, 4, 9, and 11.
"""

import contextlib
import io
import math
import re
import time

import numpy as np
import pytest

from asqlab import (
    CostLedger,
    LinearCombinationSpec,
    exact_handle,
    generator,
    lincomb_deterministic,
    magic_report,
    pauli_representation,
    zero_state,
)
from asqlab.cli import main

TWO_THIRDS = 0.667


def run_cli(argv):
    buf = io.StringIO()
    t0 = time.monotonic()
    with contextlib.redirect_stdout(buf):
        rc = main(argv)
    elapsed = time.monotonic() - t0
    out = buf.getvalue()
    assert rc == 0, f"exit {rc} for {argv}:\n{out}"
    m = re.search(r"success_fraction=([0-9.]+) mean_abs_error=(\S+)", out)
    assert m, f"no summary line in output of {argv}"
    return float(m.group(1)), float(m.group(2)), elapsed, out


def verdict(num, ok, detail):
    print(f"criterion {num:2d}: {'PASS' if ok else 'FAIL'} -- {detail}")
    assert ok, f"criterion {num}: {detail}"


def test_criterion_01_relative_error_vs_worst_case_noise():
    frac, _, dt, _ = run_cli(
        ["relnorm", "--trials", "1000", "--rho", "0.1", "--delta", "0.1", "--seed", "101"]
    )
    verdict(1, frac >= 0.90 and dt < 30.0, f"success {frac:.3f} (need >= 0.90), {dt:.1f}s (cap 30s)")


def test_criterion_02_one_sided_inner_product(tmp_path):
    dest = tmp_path / "c2.csv"
    frac, _, dt, _ = run_cli(
        ["inprod-asym", "--dim", "1024", "--epsilon", "0.1", "--trials", "300",
         "--seed", "102", "--out", str(dest)]
    )
    rows = [line.split(",") for line in dest.read_text().splitlines()[2:]]
    # the exact backend makes the preliminary norm estimate exactly 1, so the
    # scheduled budget is the formula at n_hat^2 = 1
    gamma = 0.1**2 / 135.0
    budget = 512 * gamma**-2 * math.log(18 * 1024) + 7 / 0.1**2
    worst = max(int(r[5]) for r in rows)
    verdict(
        2,
        frac >= TWO_THIRDS and worst <= 2 * budget and dt < 300.0,
        f"success {frac:.3f} (need >= {TWO_THIRDS}), worst samples {worst:.3e} "
        f"<= 2x budget {2 * budget:.3e}, {dt:.1f}s (cap 300s)",
    )


def test_criterion_03_two_sided_inner_product():
    details = []
    ok = True
    for phi in ("1", "2"):
        frac, _, dt, _ = run_cli(
            ["inprod-sym", "--dim", "1024", "--epsilon", "0.1", "--phi", phi,
             "--trials", "300", "--seed", "103"]
        )
        ok = ok and frac >= TWO_THIRDS
        details.append(f"phi={phi}: {frac:.3f} in {dt:.0f}s")
    verdict(3, ok, "; ".join(details) + f" (need >= {TWO_THIRDS})")


def test_criterion_04_supplied_kappa_real_inner_product():
    details = []
    ok = True
    for delta in ("0", "0.02"):
        frac, _, dt, _ = run_cli(
            ["inprod-real", "--dim", "4096", "--epsilon", "0.05", "--delta-l2", delta,
             "--trials", "300", "--seed", "104"]
        )
        ok = ok and frac >= TWO_THIRDS
        details.append(f"delta={delta}: {frac:.3f} in {dt:.0f}s")
    verdict(4, ok, "; ".join(details) + f" (need >= {TWO_THIRDS})")


def test_criterion_05_linear_combination_bounds():
    frac, _, _, _ = run_cli(
        ["lincomb", "--trials", "1000", "--max-tau", "8", "--max-dim", "64", "--seed", "105"]
    )
    # worked example: combining the first two basis vectors with weights (3, 4)
    # must declare a degradation factor of exactly 4
    ledger = CostLedger()
    handles = [
        exact_handle(np.array([1.0, 0.0]), generator(0, 0), ledger=ledger),
        exact_handle(np.array([0.0, 1.0]), generator(0, 1), ledger=ledger),
    ]
    combo = lincomb_deterministic(
        LinearCombinationSpec(handles, np.array([3.0, 4.0])), generator(0, "det"), ledger=ledger
    )
    verdict(
        5,
        frac == 1.0 and combo.phi == 4.0,
        f"bounds held in {frac:.3f} of 1000 instances (need 1.0); worked example phi={combo.phi} (need exactly 4.0)",
    )


def test_criterion_06_tvd_bound():
    frac, _, _, _ = run_cli(
        ["tvd-sweep", "--trials", "1000", "--max-dim", "256", "--seed", "106"]
    )
    verdict(6, frac == 1.0, f"bound held in {frac:.3f} of 1000 pairs (need 1.0)")


def test_criterion_07_pauli_identities():
    frac, _, _, _ = run_cli(
        ["pauli-dist", "--trials", "1000", "--qubits", "8", "--seed", "107"]
    )
    zero_ok = all(
        abs(magic_report(pauli_representation(zero_state(n), n)).m_half) <= 1e-9
        for n in range(1, 9)
    )
    t_state = np.array([1.0, np.exp(1j * np.pi / 4)]) / math.sqrt(2.0)
    stab = magic_report(pauli_representation(t_state, 1)).stab_norm
    t_ok = abs(stab - (1 + math.sqrt(2)) / 2) <= 1e-9
    verdict(
        7,
        frac == 1.0 and zero_ok and t_ok,
        f"identities held in {frac:.3f} of 1000 states (need 1.0); "
        f"all-zeros magic == 0: {zero_ok}; T-state stab norm {stab!r}",
    )


def test_criterion_08_cdf_bound():
    frac, _, _, _ = run_cli(
        ["pauli-dist", "--trials", "1000", "--qubits", "6", "--seed", "108"]
    )
    verdict(8, frac == 1.0, f"CDF bound held in {frac:.3f} of 1000 states, n <= 6 (need 1.0)")


def test_criterion_09_distributed_overlap(tmp_path):
    base = ["inprod-real", "--qubits", "6", "--epsilon", "0.1", "--t-count", "3",
            "--trials", "200", "--seed", "109"]
    local, tcp = tmp_path / "local.csv", tmp_path / "tcp.csv"
    frac_l, _, dt_l, _ = run_cli(base + ["--transport", "local", "--out", str(local)])
    frac_t, _, dt_t, _ = run_cli(base + ["--transport", "tcp", "--out", str(tcp)])
    identical = local.read_bytes() == tcp.read_bytes()
    total = dt_l + dt_t
    verdict(
        9,
        frac_l >= TWO_THIRDS and frac_t >= TWO_THIRDS and identical and total < 600.0,
        f"local {frac_l:.3f}, tcp {frac_t:.3f} (need >= {TWO_THIRDS}); "
        f"transports byte-identical: {identical}; {total:.0f}s (cap 600s)",
    )


def test_criterion_10_column_sampler():
    frac, _, _, _ = run_cli(
        ["colsample", "--dims", "4,16", "--attempts", "100000", "--trials", "2", "--seed", "110"]
    )
    verdict(10, frac == 1.0, f"success-rate and column-law checks held in {frac:.3f} of runs (need 1.0)")


def test_criterion_11_perturbed_floors(tmp_path):
    details = []
    ok = True
    frac, _, _, _ = run_cli(
        ["inprod-asym", "--dim", "1024", "--epsilon", "0.1", "--perturb", "0.5",
         "--trials", "300", "--seed", "111"]
    )
    ok = ok and frac >= TWO_THIRDS
    details.append(f"asym half-budget {frac:.3f}")
    for phi in ("1", "2"):
        frac, _, _, _ = run_cli(
            ["inprod-sym", "--dim", "1024", "--epsilon", "0.1", "--phi", phi,
             "--perturb", "0.5", "--trials", "300", "--seed", "112"]
        )
        ok = ok and frac >= TWO_THIRDS
        details.append(f"sym phi={phi} half-budget {frac:.3f}")

    # zero drift budget must reproduce the unperturbed runs byte for byte
    coincide = True
    for cmd, extra in (("inprod-asym", []), ("inprod-sym", ["--phi", "2"])):
        base = [cmd, "--dim", "1024", "--epsilon", "0.1", "--trials", "20", "--seed", "113"] + extra
        plain, zeroed = tmp_path / f"{cmd}-plain.csv", tmp_path / f"{cmd}-zero.csv"
        run_cli(base + ["--out", str(plain)])
        run_cli(base + ["--perturb", "0", "--out", str(zeroed)])
        coincide = coincide and plain.read_bytes() == zeroed.read_bytes()
    details.append(f"zero-budget coincidence: {coincide}")
    verdict(11, ok and coincide, "; ".join(details) + f" (floors >= {TWO_THIRDS})")
