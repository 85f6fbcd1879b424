"""CLI behavior: flags, exit codes, file formats, reproducibility."""

import json
import math
import subprocess
import sys

import numpy as np
import pytest

from bifurcation_lab.cli import build_parser, config_from_echo, main, write_records_csv
from bifurcation_lab.mc import run_simulation


def run_cli(argv):
    return main(argv)


def read_csv(path):
    lines = path.read_text().strip().splitlines()
    header = lines[0].split(",")
    rows = [line.split(",") for line in lines[1:]]
    return header, rows


# ---------------------------------------------------------------------------
# simulate


def test_simulate_pure_plus_state(tmp_path):
    out = tmp_path / "run1"
    rc = run_cli(
        ["simulate", "--psi-plus-sq", "1.0", "--xi", "60", "--samples", "1000",
         "--seed", "7", "--out", str(out)]
    )
    assert rc == 0
    summary = json.loads((tmp_path / "run1.summary.json").read_text())
    assert summary["born_plus"] == 1.0
    assert summary["accepted_count"] == 1000
    manifest = json.loads((tmp_path / "run1.manifest.json").read_text())
    assert manifest["config_echo"]["xi"] == 60.0
    assert len(manifest["output_paths"]) == 2


def test_simulate_rerun_is_byte_identical(tmp_path):
    args = ["simulate", "--psi-plus-sq", "0.7", "--xi", "5", "--samples", "2000",
            "--seed", "3", "--out"]
    assert run_cli(args + [str(tmp_path / "a")]) == 0
    assert run_cli(args + [str(tmp_path / "b")]) == 0
    assert (tmp_path / "a.records.csv").read_bytes() == (tmp_path / "b.records.csv").read_bytes()
    assert (tmp_path / "a.summary.json").read_bytes() == (tmp_path / "b.summary.json").read_bytes()


def test_simulate_thread_count_does_not_change_outputs(tmp_path):
    blobs = []
    for threads in ("1", "2", "8"):
        out = tmp_path / f"t{threads}"
        rc = run_cli(
            ["simulate", "--psi-plus-sq", "0.7", "--xi", "60", "--samples", "20000",
             "--seed", "5", "--threads", threads, "--out", str(out)]
        )
        assert rc == 0
        blobs.append((tmp_path / f"t{threads}.records.csv").read_bytes())
    assert blobs[0] == blobs[1] == blobs[2]


def test_simulate_born_within_interval(tmp_path):
    out = tmp_path / "run2"
    rc = run_cli(
        ["simulate", "--psi-plus-sq", "0.7", "--xi", "60", "--kappa-dist", "gaussian",
         "--amp-form", "closed", "--samples", "100000", "--seed", "1", "--out", str(out)]
    )
    assert rc == 0
    summary = json.loads((tmp_path / "run2.summary.json").read_text())
    assert abs(summary["born_plus"] - 0.7) <= summary["born_ci"]
    assert summary["ks_stat"] < 0.02


def test_simulate_flag_conflicts(tmp_path, capsys):
    bad = [
        ["simulate", "--psi-plus-sq", "0.5", "--xi", "5", "--kappa", "0.1", "--out", "x"],
        ["simulate", "--psi-plus-sq", "0.5", "--out", "x"],
        ["simulate", "--psi-plus-sq", "0.5", "--n-steps", "10", "--out", "x"],
        ["simulate", "--psi-plus-sq", "0.5", "--xi", "5", "--amp-form", "exact", "--out", "x"],
        ["simulate", "--psi-plus-sq", "0.5", "--xi", "5", "--kappa-dist", "rademacher", "--out", "x"],
        ["simulate", "--psi-plus-sq", "1.5", "--xi", "5", "--out", "x"],
        ["simulate", "--psi-plus-sq", "0.5", "--xi", "-1", "--out", "x"],
        ["simulate", "--psi-plus-sq", "0.5", "--n-steps", "10", "--kappa", "0.9", "--out", "x"],
    ]
    for argv in bad:
        with pytest.raises(SystemExit) as exc:
            run_cli(argv)
        assert exc.value.code == 2
        capsys.readouterr()


def test_simulate_rejection_failure_leaves_no_files(tmp_path):
    out = tmp_path / "dead"
    rc = run_cli(
        ["simulate", "--psi-plus-sq", "0.5", "--xi", "60", "--samples", "300",
         "--selection", "rejection", "--seed", "2", "--out", str(out)]
    )
    assert rc == 1
    assert list(tmp_path.iterdir()) == []


def test_config_echo_round_trip(tmp_path):
    out = tmp_path / "orig"
    rc = run_cli(
        ["simulate", "--psi-plus-sq", "0.3", "--n-steps", "400", "--kappa", "0.05",
         "--samples", "3000", "--seed", "11", "--out", str(out)]
    )
    assert rc == 0
    echo = json.loads((tmp_path / "orig.manifest.json").read_text())["config_echo"]
    result = run_simulation(config_from_echo(echo))
    regen = tmp_path / "regen.records.csv"
    write_records_csv(regen, result)
    assert regen.read_bytes() == (tmp_path / "orig.records.csv").read_bytes()


def test_records_csv_format(tmp_path):
    out = tmp_path / "fmt"
    run_cli(["simulate", "--psi-plus-sq", "0.5", "--xi", "2", "--samples", "50",
             "--seed", "0", "--out", str(out), "--format", "csv"])
    header, rows = read_csv(tmp_path / "fmt.records.csv")
    assert header == ["y", "outcome", "weight", "p_plus", "log_w"]
    assert len(rows) == 50
    assert all(r[1] in ("+1", "-1") for r in rows)
    y = float(rows[0][0])
    assert rows[0][0] == format(y, ".17g")  # full precision round trip
    assert not (tmp_path / "fmt.summary.json").exists()


def test_simulate_phase_flag_leaves_records_unchanged(tmp_path):
    # every recorded observable depends only on the squared components
    base = ["simulate", "--psi-plus-sq", "0.7", "--xi", "5", "--samples", "2000",
            "--seed", "9"]
    run_cli(base + ["--out", str(tmp_path / "flat")])
    run_cli(base + ["--psi-plus-arg", "1.25", "--out", str(tmp_path / "turned")])
    assert (tmp_path / "flat.records.csv").read_bytes() == (
        tmp_path / "turned.records.csv"
    ).read_bytes()


def test_simulate_json_only_format(tmp_path):
    out = tmp_path / "jsononly"
    rc = run_cli(["simulate", "--psi-plus-sq", "0.5", "--xi", "2", "--samples", "100",
                  "--seed", "0", "--out", str(out), "--format", "json"])
    assert rc == 0
    assert (tmp_path / "jsononly.summary.json").exists()
    assert (tmp_path / "jsononly.manifest.json").exists()
    assert not (tmp_path / "jsononly.records.csv").exists()


def test_simulate_exact_form_with_steps(tmp_path):
    out = tmp_path / "exact"
    rc = run_cli(
        ["simulate", "--psi-plus-sq", "0.6", "--n-steps", "100", "--kappa", "0.1",
         "--amp-form", "exact", "--samples", "5000", "--seed", "4", "--out", str(out)]
    )
    assert rc == 0
    summary = json.loads((tmp_path / "exact.summary.json").read_text())
    assert "chi2_stat" in summary
    assert abs(summary["mean_w"] - 1.0) < 0.05


def test_simulate_asymmetric_mode(tmp_path):
    out = tmp_path / "asym"
    rc = run_cli(
        ["simulate", "--psi-plus-sq", "0.7", "--xi", "8", "--mode", "asymmetric",
         "--samples", "40000", "--seed", "6", "--out", str(out)]
    )
    assert rc == 0
    summary = json.loads((tmp_path / "asym.summary.json").read_text())
    assert abs(summary["born_plus"] - 0.7) <= 2 * summary["born_ci"]
    assert abs(summary["mean_w"] - 1.0) < 0.05


# ---------------------------------------------------------------------------
# analytic


def test_analytic_three_profiles(tmp_path):
    out = tmp_path / "fig2"
    rc = run_cli(
        ["analytic", "--xi", "1", "--xi", "5", "--xi", "60", "--psi-plus-sq", "0.5",
         "--out", str(out)]
    )
    assert rc == 0
    for xi in ("1", "5", "60"):
        assert (tmp_path / f"fig2_xi{xi}.csv").exists()
    header, rows = read_csv(tmp_path / "fig2_xi60.csv")
    assert header == ["y", "q", "Q", "Q_plus", "Q_minus"]
    data = np.array([[float(v) for v in row] for row in rows])
    q_col = data[:, 2]
    interior = q_col[1:-1]
    maxima = np.sum((interior > q_col[:-2]) & (interior > q_col[2:]))
    assert maxima == 2


def test_analytic_unit_peak_at_two_pi(tmp_path):
    # grid chosen to land exactly on y = 0, where q is exactly 1 at xi = 2 pi
    out = tmp_path / "tp"
    rc = run_cli(
        ["analytic", "--xi", repr(2 * math.pi), "--psi-plus-sq", "0.5",
         "--y-min", "-4", "--y-max", "4", "--step", "0.25", "--out", str(out)]
    )
    assert rc == 0
    path = next(tmp_path.glob("tp_xi*.csv"))
    _, rows = read_csv(path)
    data = np.array([[float(v) for v in row] for row in rows])
    nearest = np.argmin(np.abs(data[:, 0]))
    assert data[nearest, 0] == 0.0
    assert data[nearest, 1] == 1.0


def test_analytic_bad_grid(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        run_cli(["analytic", "--xi", "5", "--y-min", "2", "--y-max", "-2",
                 "--step", "0.1", "--out", str(tmp_path / "bad")])
    assert exc.value.code == 2


def test_analytic_deterministic(tmp_path):
    for name in ("p", "q"):
        run_cli(["analytic", "--xi", "5", "--psi-plus-sq", "0.7", "--out", str(tmp_path / name)])
    assert (tmp_path / "p_xi5.csv").read_bytes() == (tmp_path / "q_xi5.csv").read_bytes()


# ---------------------------------------------------------------------------
# diagram


def test_diagram_zero_coupling(capsys):
    rc = run_cli(["diagram", "--g", "0", "--xi", "5", "--y", "0.2", "--psi-plus-sq", "0.5"])
    assert rc == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["p_no_change"] == 1.0


def test_diagram_example_split(capsys):
    rc = run_cli(["diagram", "--g", "1", "--xi", "0", "--psi-plus-sq", "0.7", "--y", "0"])
    assert rc == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["p_no_change"] == pytest.approx(0.5, abs=1e-12)
    assert payload["p_plus"] == pytest.approx(0.35, abs=1e-12)
    assert payload["p_minus"] == pytest.approx(0.15, abs=1e-12)


def test_diagram_shares_sum_to_one(capsys):
    rng = np.random.default_rng(1)
    for _ in range(20):
        rc = run_cli(
            ["diagram", "--g", str(rng.uniform(0, 100)), "--xi", str(rng.uniform(0, 500)),
             "--y", str(rng.normal()), "--psi-plus-sq", str(rng.uniform())]
        )
        assert rc == 0
        payload = json.loads(capsys.readouterr().out)
        total = payload["p_no_change"] + payload["p_plus"] + payload["p_minus"]
        assert abs(total - 1.0) <= 1e-12


def test_diagram_truncated_comparator(capsys):
    rc = run_cli(["diagram", "--g", "0.5", "--xi", "0", "--psi-plus-sq", "0.5",
                  "--y", "0", "--kmax", "10"])
    assert rc == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["converged"] is True
    assert abs(payload["partial_sum"] - payload["p_no_change"]) <= payload["error_bound"]


# ---------------------------------------------------------------------------
# verify / misc


def test_verify_passes(capsys):
    rc = run_cli(["verify", "--seed", "1", "--trials", "400"])
    out = capsys.readouterr().out
    assert rc == 0
    assert "FAIL" not in out
    assert out.count("PASS") >= 7


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        run_cli(["--version"])
    assert exc.value.code == 0
    assert "bifurcation-lab" in capsys.readouterr().out


def test_console_entrypoint_runs():
    proc = subprocess.run(
        [sys.executable, "-m", "bifurcation_lab.cli"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 2  # missing subcommand reports usage


def test_parser_covers_all_subcommands():
    parser = build_parser()
    for cmd in ("simulate", "analytic", "diagram", "verify"):
        assert cmd in parser.format_help()
