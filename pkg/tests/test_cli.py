"""Command-line surface: formats, determinism, exit codes.

Most tests drive ``main`` in process (fast, and the exit-code contract is
the function's return value); one subprocess test pins the ``-m`` entry
point.  Statistical smokes run tiny configurations at seeds that pass --
everything is seeded, so these are deterministic regression checks, not
flaky coin flips.
"""

import json
import math
import subprocess
import sys

import numpy as np
import pytest

from asqlab import dump_vector_json
from asqlab.cli import COLUMNS, CSV_VERSION, main

T_STATE = np.array([1.0, np.exp(1j * np.pi / 4)]) / math.sqrt(2.0)


def run(capsys, argv):
    rc = main(argv)
    captured = capsys.readouterr()
    return rc, captured.out, captured.err


def data_rows(text):
    lines = [l for l in text.splitlines() if l]
    assert lines[0] == CSV_VERSION
    assert lines[1] == ",".join(COLUMNS)
    assert lines[-1].startswith("success_fraction=")
    return [l.split(",") for l in lines[2:-1]]


# ---------------------------------------------------------------------------
# output formats


def test_csv_layout_and_summary_line(capsys):
    rc, out, _ = run(capsys, ["tvd-sweep", "--trials", "5", "--seed", "1"])
    assert rc == 0
    rows = data_rows(out)
    assert len(rows) == 5
    assert [r[0] for r in rows] == ["0", "1", "2", "3", "4"]
    for r in rows:
        assert len(r) == len(COLUMNS)
        assert r[4] in ("0", "1")


def test_estimate_column_round_trips_through_complex(capsys):
    rc, out, _ = run(
        capsys,
        ["inprod-asym", "--dim", "16", "--epsilon", "0.2", "--trials", "2", "--seed", "7"],
    )
    assert rc == 0
    for r in data_rows(out):
        est = complex(r[1])
        truth = complex(r[2])
        assert abs(est - truth) == pytest.approx(float(r[3]), rel=1e-12)


def test_summary_printed_even_with_out_file(capsys, tmp_path):
    dest = tmp_path / "rows.csv"
    rc, out, _ = run(
        capsys, ["tvd-sweep", "--trials", "4", "--seed", "1", "--out", str(dest)]
    )
    assert rc == 0
    assert out.startswith("success_fraction=")
    assert len(out.strip().splitlines()) == 1  # rows went to the file only
    text = dest.read_text()
    assert text.startswith(CSV_VERSION + "\n")
    assert text.endswith("\n")


def test_json_document_shape(capsys):
    rc, out, _ = run(
        capsys, ["relnorm", "--trials", "3", "--seed", "0", "--format", "json"]
    )
    assert rc == 0
    doc = json.loads(out[: out.rindex("success_fraction")])
    assert doc["version"] == "asq-lab v1"
    assert len(doc["rows"]) == 3
    assert set(doc["rows"][0]) == set(COLUMNS)
    assert doc["summary"]["success_fraction"] == 1.0


# ---------------------------------------------------------------------------
# determinism


def test_same_seed_same_bytes(tmp_path, capsys):
    args = ["inprod-asym", "--dim", "16", "--epsilon", "0.2", "--trials", "4", "--seed", "7"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    capsys.readouterr()
    assert a.read_bytes() == b.read_bytes()


def test_worker_pool_does_not_change_bytes(tmp_path, capsys):
    args = ["inprod-asym", "--dim", "16", "--epsilon", "0.2", "--trials", "4", "--seed", "7"]
    serial, pooled = tmp_path / "serial.csv", tmp_path / "pooled.csv"
    assert main(args + ["--out", str(serial)]) == 0
    assert main(args + ["--workers", "2", "--out", str(pooled)]) == 0
    capsys.readouterr()
    assert serial.read_bytes() == pooled.read_bytes()


def test_local_and_tcp_transports_agree_rowwise(capsys):
    args = ["inprod-real", "--qubits", "2", "--epsilon", "0.3", "--trials", "2", "--seed", "12"]
    rc_l, out_l, _ = run(capsys, args + ["--transport", "local"])
    rc_t, out_t, _ = run(capsys, args + ["--transport", "tcp"])
    assert rc_l == rc_t == 0
    assert data_rows(out_l) == data_rows(out_t)


# ---------------------------------------------------------------------------
# exit codes


@pytest.mark.parametrize(
    "argv",
    [
        [],  # missing subcommand
        ["tvd-sweep", "--no-such-flag"],
        ["tvd-sweep", "--trials", "0"],
        ["inprod-real", "--dim", "8", "--qubits", "2"],  # modes are exclusive
        ["inprod-real"],  # and one is required
        ["inprod-asym", "--epsilon", "1.5"],
        ["inprod-asym", "--backend", "prep", "--perturb", "0.1"],
        ["inprod-sym", "--backend", "prep", "--phi", "2"],
        ["inprod-sym", "--phi", "0.5"],
        ["colsample", "--attempts", "50"],
        ["colsample", "--dims", "4,x"],
        ["magic-report"],  # needs --state or --qubits
        ["magic-report", "--state", "/no/such/file.json"],
    ],
)
def test_config_problems_exit_1(capsys, argv):
    rc, _, _ = run(capsys, argv)
    assert rc == 1


def test_serve_party_listen_validation(capsys, tmp_path):
    state = tmp_path / "t.json"
    dump_vector_json(T_STATE, state)
    rc, _, err = run(
        capsys, ["serve-party", "--role", "alice", "--listen", "nonsense", "--state", str(state)]
    )
    assert rc == 1
    assert "host:port" in err


def test_unbindable_address_exits_2(capsys, tmp_path):
    state = tmp_path / "t.json"
    dump_vector_json(T_STATE, state)
    # TEST-NET-3 address: guaranteed not assigned to a local interface
    rc, _, err = run(
        capsys,
        ["serve-party", "--role", "bob", "--listen", "203.0.113.1:9", "--state", str(state)],
    )
    assert rc == 2
    assert "experiment failed" in err


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "asqlab.cli", "tvd-sweep", "--trials", "3", "--seed", "1"],
        capture_output=True,
        text=True,
        timeout=60,
    )
    assert proc.returncode == 0
    assert "success_fraction=1.000000" in proc.stdout


# ---------------------------------------------------------------------------
# magic-report on a stored state


def test_magic_report_reads_state_file(capsys, tmp_path):
    state = tmp_path / "t.json"
    dump_vector_json(T_STATE, state)
    rc, out, _ = run(capsys, ["magic-report", "--state", str(state)])
    assert rc == 0
    fields = dict(kv.split("=") for kv in out.splitlines()[0].split())
    assert float(fields["stab_norm"]) == pytest.approx((1 + math.sqrt(2)) / 2, abs=1e-9)
    assert float(fields["m_half"]) == pytest.approx(2 * math.log((1 + math.sqrt(2)) / 2), abs=1e-9)


def test_magic_report_random_states(capsys):
    rc, out, _ = run(capsys, ["magic-report", "--qubits", "3", "--t-count", "1", "--trials", "4", "--seed", "2"])
    assert rc == 0
    assert "success_fraction=1.000000" in out


# ---------------------------------------------------------------------------
# per-subcommand smokes (seeded, hence deterministic)


@pytest.mark.parametrize(
    "argv",
    [
        ["relnorm", "--trials", "6", "--seed", "0"],
        ["relnorm", "--trials", "4", "--seed", "0", "--noise", "uniform"],
        ["tvd-sweep", "--trials", "20", "--seed", "1"],
        ["pauli-dist", "--trials", "8", "--qubits", "4", "--seed", "2"],
        ["lincomb", "--trials", "10", "--max-tau", "4", "--max-dim", "16", "--seed", "3"],
        ["tomography", "--dim", "64", "--epsilon", "0.3", "--trials", "3", "--seed", "4"],
        ["colsample", "--dims", "4", "--attempts", "20000", "--trials", "2", "--seed", "5"],
        ["inprod-sym", "--dim", "32", "--epsilon", "0.3", "--trials", "3", "--seed", "6"],
        ["inprod-sym", "--dim", "32", "--epsilon", "0.3", "--phi", "2", "--trials", "2", "--seed", "6"],
        ["inprod-asym", "--dim", "16", "--epsilon", "0.2", "--trials", "2", "--seed", "7"],
        ["inprod-asym", "--dim", "16", "--epsilon", "0.2", "--perturb", "0.5", "--trials", "2", "--seed", "7"],
        ["inprod-real", "--qubits", "2", "--epsilon", "0.25", "--trials", "3", "--seed", "8"],
        ["inprod-real", "--dim", "32", "--epsilon", "0.25", "--trials", "2", "--seed", "9"],
    ],
)
def test_experiment_smokes_succeed(capsys, argv):
    rc, out, _ = run(capsys, argv)
    assert rc == 0
    assert "success_fraction=1.000000" in out
