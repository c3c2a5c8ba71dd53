import csv
import hashlib
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from copulapred import cli
from copulapred import estimator as est
from copulapred.estimator import EstimatorConfig, GridSpec, InitSpec

SIM_FLAGS = ["--grid", "-60,60,2401", "--coverage", "0.02"]


def run(argv):
    out, err = io.StringIO(), io.StringIO()
    code = cli.main([str(a) for a in argv], out, err)
    return code, out.getvalue(), err.getvalue()


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


@pytest.fixture
def data_file(tmp_path):
    ys = np.random.default_rng(0).normal(size=60)
    path = tmp_path / "data.txt"
    path.write_text("# header comment\n" + "\n".join(repr(float(y)) for y in ys) + "\n\n")
    return path, ys


def test_fit_single_observation_symmetric(tmp_path):
    src = tmp_path / "one.txt"
    src.write_text("0.0\n")
    snap = tmp_path / "snap.csv"
    code, out, _ = run(["fit", src, "--init", "normal:0,1", "--grid", "-8,8,1001", "-o", snap])
    assert code == 0
    state, header = cli.read_snapshot(snap)
    assert est.interp_cdf(state, 0.0) == pytest.approx(0.5, abs=1e-12)
    assert header["count"] == "1"
    summary = {r["statistic"]: r["value"] for r in rows(out) if r["statistic"] != "quantile"}
    assert summary["count"] == "1"


def test_snapshot_header_order_and_round_trip(tmp_path, data_file):
    path, ys = data_file
    snap = tmp_path / "s.csv"
    run(["fit", path, "--grid", "-8,8,501", "--rho", "0.9", "-o", snap])
    lines = snap.read_text().splitlines()
    keys = [ln[2:].split("=")[0] for ln in lines[1:8]]
    assert lines[0] == "# copulapred-snapshot 1"
    assert keys == ["rho", "weight_a", "count", "clamp_eps", "init", "tail_hits", "grid"]
    assert lines[8] == "grid_point,cdf,density"
    state, _ = cli.read_snapshot(snap)
    direct = est.fit_sequence(ys, GridSpec(-8, 8, 501), EstimatorConfig(rho=0.9))
    assert np.array_equal(state.cdf, direct.cdf)


def test_comments_and_blank_lines_ignored(tmp_path, data_file):
    path, ys = data_file
    plain = tmp_path / "plain.txt"
    plain.write_text("\n".join(repr(float(y)) for y in ys))
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    run(["fit", path, "--grid", "-8,8,501", "-o", a])
    run(["fit", plain, "--grid", "-8,8,501", "-o", b])
    assert a.read_text() == b.read_text()


def test_permutations_bit_identical(tmp_path, data_file):
    path, _ = data_file
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for dst in (a, b):
        assert run(["fit", path, "--permutations", 10, "--seed", 7, "-o", dst])[0] == 0
    assert a.read_bytes() == b.read_bytes()
    assert (tmp_path / "a.csv.manifest.json").read_bytes() == (tmp_path / "b.csv.manifest.json").read_bytes()


def test_manifest_contents(tmp_path, data_file):
    path, _ = data_file
    snap = tmp_path / "s.csv"
    run(["fit", path, "--init", "eb-normal", "--init-var", "9", "--seed", 3, "-o", snap])
    manifest = json.loads((tmp_path / "s.csv.manifest.json").read_text())
    assert manifest["command"] == "fit"
    assert manifest["seed"] == 3
    assert manifest["input_sha256"] == hashlib.sha256(path.read_bytes()).hexdigest()
    assert manifest["config"]["init"] == "eb-normal:9.0"
    assert manifest["config"]["rho"] == 0.95
    assert manifest["config"]["coverage"] == 1e-6
    assert "grid" in manifest["config"]
    assert "version" in manifest and "time" not in json.dumps(manifest)


def test_eb_normal_default_grid_counts_all(tmp_path):
    src = tmp_path / "v.txt"
    src.write_text("\n".join(str(v) for v in np.linspace(9.2, 34.3, 82)) + "\n")
    code, out, _ = run(["fit", src, "--init", "eb-normal", "--init-var", "9", "--rho", "0.95",
                        "-o", tmp_path / "g.csv"])
    assert code == 0
    assert {r["statistic"]: r["value"] for r in rows(out)}["count"] == "82"


def test_unparseable_line_names_line_number(tmp_path):
    src = tmp_path / "bad.txt"
    src.write_text("1.0\n# note\n2.0\nabc\n")
    code, _, err = run(["fit", src, "-o", tmp_path / "s.csv"])
    assert code == 1 and "line 4" in err
    code, _, err = run(["fit", src, "--grid", "-8,8,101", "-o", tmp_path / "s.csv"])
    assert code == 1 and "line 4" in err


def test_empty_input_is_usage_error(tmp_path):
    src = tmp_path / "empty.txt"
    src.write_text("# nothing\n\n")
    code, _, err = run(["fit", src, "-o", tmp_path / "s.csv"])
    assert code == 1 and "usage" in err
    code, _, err = run(["fit", src, "--grid", "-8,8,101", "-o", tmp_path / "s.csv"])
    assert code == 1 and "usage" in err


@pytest.mark.parametrize("argv", [
    ["fit", "x.txt"],
    ["fit", "x.txt", "-o", "s.csv", "--rho", "1.5"],
    ["fit", "x.txt", "-o", "s.csv", "--init", "gamma:1,1"],
    ["fit", "x.txt", "-o", "s.csv", "--init", "normal:0,1", "--init-var", "3"],
    ["simulate", "--mode", "other"],
    ["nonsense"],
])
def test_validation_errors_exit_one(tmp_path, argv):
    (tmp_path / "x.txt").write_text("1\n")
    argv = [str(tmp_path / a) if a in ("x.txt", "s.csv") else a for a in argv]
    assert run(argv)[0] == 1


def test_quantiles_command(tmp_path):
    src = tmp_path / "one.txt"
    src.write_text("0.0\n")
    snap = tmp_path / "snap.csv"
    _, fit_out, _ = run(["fit", src, "--init", "normal:0,1", "--grid", "-8,8,1001", "-o", snap])
    code, out, _ = run(["quantiles", snap])
    table = rows(out)
    assert code == 0 and len(table) == 9
    median = [r for r in table if float(r["q"]) == 0.5][0]
    assert abs(float(median["action"])) <= 16 / 1000
    fit_q = {r["q"]: r["value"] for r in rows(fit_out) if r["statistic"] == "quantile"}
    assert fit_q == {r["q"]: r["action"] for r in table}


def test_quantiles_out_of_range_row(tmp_path):
    src = tmp_path / "one.txt"
    src.write_text("0.0\n")
    snap = tmp_path / "snap.csv"
    run(["fit", src, "--grid", "-8,8,1001", "-o", snap])
    code, out, _ = run(["quantiles", snap, "--q", "0.5,0.99999999999999999"])
    table = rows(out)
    assert code == 1
    assert table[0]["error"] == "" and "outside the achievable range" in table[1]["error"]


def test_quantiles_rejects_bivariate_snapshot(tmp_path):
    src = tmp_path / "pairs.txt"
    src.write_text("0.1,0.2\n-0.3,0.5\n1.0,-1.0\n")
    snap = tmp_path / "b.csv"
    assert run(["fit", src, "--bivariate", "--init", "normal:0,1", "-o", snap])[0] == 0
    assert run(["quantiles", snap])[0] == 1


def test_bivariate_fit(tmp_path):
    src = tmp_path / "pairs.txt"
    src.write_text("0.1,0.2\n-0.3,0.5\n# c\n1.0,-1.0\n")
    snap = tmp_path / "b.csv"
    code, out, _ = run(["fit", src, "--bivariate", "--grid", "-6,6,41", "--grid-x", "-6,6,31", "-o", snap])
    assert code == 0
    summary = {r["statistic"]: r["value"] for r in rows(out)}
    assert summary["count"] == "3" and "monotonicity_violations" in summary
    body = [ln for ln in snap.read_text().splitlines() if not ln.startswith("#")]
    assert body[0] == "y,x,cdf,density" and len(body) == 1 + 41 * 31
    bad = tmp_path / "badpairs.txt"
    bad.write_text("0.1\n")
    code, _, err = run(["fit", bad, "--bivariate", "-o", snap])
    assert code == 1 and "line 1" in err


def test_simulate_sequential(tmp_path):
    out_csv = tmp_path / "seq.csv"
    code, out, _ = run(["simulate", "--mode", "sequential", "--trials", 4, "--n", 20, "--q", 0.1,
                        "--seed", 1, "-o", out_csv, *SIM_FLAGS])
    assert code == 0
    agg = rows(out)
    assert len(agg) == 1 and 0 <= float(agg[0]["pr_negative"]) <= 1
    assert np.isfinite(float(agg[0]["mean"]))
    per_trial = rows(out_csv.read_text())
    assert [r["trial"] for r in per_trial] == ["0", "1", "2", "3"]
    assert list(per_trial[0]) == ["trial", "q", "delta_q", "loss_rec", "loss_base", "loss_truth"]


def test_simulate_batch_default_qs(tmp_path):
    code, out, _ = run(["simulate", "--mode", "batch", "--trials", 2, "--n", 20, "--oracle-mc", 2000,
                        *SIM_FLAGS])
    assert code == 0 and len(rows(out)) == 9


def test_simulate_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for dst in (a, b):
        run(["simulate", "--mode", "batch", "--trials", 1, "--n", 15, "--oracle-mc", 1000,
             "--seed", 4, "-o", dst, *SIM_FLAGS])
    assert a.read_bytes() == b.read_bytes()


def test_simulate_prime_validation():
    assert run(["simulate", "--mode", "sequential", "--n", 4, "--prime", 4, *SIM_FLAGS])[0] == 1


def test_verify_exact_and_copulas():
    code, out, _ = run(["verify", "--suite", "exact"])
    assert code == 0
    report = rows(out)
    assert len(report) == 3 and all(r["status"] == "pass" for r in report)
    assert all(float(r["measured"]) <= 1e-8 for r in report)
    code, out, _ = run(["verify", "--suite", "copulas", "--seed", 1])
    assert code == 0 and all(float(r["measured"]) <= 1e-6 for r in rows(out))


def test_verify_consistency_seed_3():
    code, out, _ = run(["verify", "--suite", "consistency", "--seed", 3])
    assert code == 0
    assert all(r["status"] == "pass" for r in rows(out))


def test_verify_failure_exit_code(monkeypatch):
    from copulapred.verify import Check

    monkeypatch.setattr(cli, "run_suite", lambda name, seed: [Check("broken", 1.0, 0.5, False)])
    code, out, _ = run(["verify", "--suite", "exact"])
    assert code == 2 and "FAIL" in out


def test_help_lists_defaults():
    with pytest.raises(SystemExit):
        cli.main(["fit", "--help"])


def test_console_script_reads_stdin(tmp_path):
    snap = tmp_path / "s.csv"
    proc = subprocess.run([sys.executable, "-m", "copulapred.cli", "fit", "-", "--grid", "-8,8,401",
                           "-o", str(snap)], input=b"0.5\n-0.25\n", capture_output=True)
    assert proc.returncode == 0, proc.stderr
    assert "count,,2" in proc.stdout.decode()
    proc = subprocess.run([sys.executable, "-m", "copulapred.cli", "fit", "-", "-o", str(snap)],
                          input=b"", capture_output=True)
    assert proc.returncode == 1
