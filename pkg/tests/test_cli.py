import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest

from spinfermion.cli import RunConfig, InputError, main

MODELS = Path(__file__).resolve().parent.parent / "models"
SIMPLE = str(MODELS / "simplest.yaml")


def run(*args):
    return main([str(a) for a in args])


def files(d: Path) -> dict[str, bytes]:
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


def test_validate_ok(tmp_path, capsys):
    assert run("validate", "--model", SIMPLE, "--out", tmp_path) == 0
    data = json.loads((tmp_path / "validation.json").read_text())
    assert data["passed"] is True
    assert "ok" in capsys.readouterr().out


def test_validate_domain_failure(tmp_path):
    assert run("validate", "--model", MODELS / "identity_coupling.yaml", "--out", tmp_path) == 1
    data = json.loads((tmp_path / "validation.json").read_text())
    assert data["passed"] is False


def test_bad_model_file_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text((MODELS / "simplest.yaml").read_text().replace("beta: 0.5", "beta: -0.5"))
    assert run("validate", "--model", bad, "--out", tmp_path / "o") == 2
    err = capsys.readouterr().err
    assert "line 7" in err and "reservoirs[0].beta" in err


def test_missing_model_file_exit_2(tmp_path):
    assert run("analyze", "--model", tmp_path / "none.yaml", "--out", tmp_path) == 2


@pytest.mark.parametrize(
    "flags",
    [["--theta", "-1"], ["--alpha-points", "2"], ["--modes", "0"], ["--format", "csv", "--t-points", "1"], ["--window", "0.9,0.5"]],
)
def test_invalid_flags_exit_2(tmp_path, flags):
    assert run("analyze", "--model", SIMPLE, "--out", tmp_path, *flags) == 2


def test_unparseable_flag_exits_via_argparse(tmp_path):
    with pytest.raises(SystemExit) as info:
        run("compare", "--model", SIMPLE, "--modes", "4,x")
    assert info.value.code == 2


def test_analyze_outputs(tmp_path):
    assert run("analyze", "--model", SIMPLE, "--out", tmp_path, "--alpha-points", 11) == 0
    assert set(files(tmp_path)) == {"pressure.csv", "rate_function.csv", "report.json"}
    rows = list(csv.DictReader(open(tmp_path / "pressure.csv")))
    assert len(rows) == 11
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["config"]["alpha_points"] == 11
    assert rep["entropy_production"]["ep_flux"] > 0


def test_analyze_json_format(tmp_path):
    assert run("analyze", "--model", SIMPLE, "--out", tmp_path, "--alpha-points", 7, "--format", "json") == 0
    data = json.loads((tmp_path / "pressure.json").read_text())
    assert len(data["rows"]) == 7 and data["config"]["format"] == "json"


def test_analyze_is_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    run("analyze", "--model", SIMPLE, "--out", a, "--alpha-points", 9, "--threads", 1)
    run("analyze", "--model", SIMPLE, "--out", b, "--alpha-points", 9, "--threads", 4)
    assert files(a) == files(b)


def test_lambda_override(tmp_path):
    run("analyze", "--model", SIMPLE, "--out", tmp_path, "--alpha-points", 5, "--lambda", 0.05)
    assert json.loads((tmp_path / "report.json").read_text())["lambda"] == 0.05


def test_domain_error_writes_error_json(tmp_path):
    # a two-mode bath cannot reach the density window with the default cutoff lowered
    assert run("simulate", "--model", SIMPLE, "--out", tmp_path, "--smax", 2.0, "--modes", 2) == 1
    err = json.loads((tmp_path / "error.json").read_text())
    assert "density support exceeds cutoff" in err["message"]


def test_simulate_decoupled(tmp_path):
    m = MODELS / "decoupled.yaml"
    assert run("simulate", "--model", m, "--out", tmp_path, "--t-max", 3, "--t-points", 5, "--alpha-points", 3) == 0
    rows = list(csv.DictReader(open(tmp_path / "series.csv")))
    assert len(rows) == 15
    assert all(abs(float(r["f2tm_re"]) - 1.0) < 1e-12 for r in rows)
    meta = json.loads((tmp_path / "metadata.json").read_text())
    assert meta["simulator"]["mode_count"] == 4
    assert meta["warnings"] == []


def test_simulate_recurrence_warning(tmp_path, capsys):
    m = MODELS / "decoupled.yaml"
    assert run("simulate", "--model", m, "--out", tmp_path, "--t-max", 20, "--t-points", 3, "--alpha-points", 3) == 0
    assert "beyond recurrence" in capsys.readouterr().err
    assert json.loads((tmp_path / "metadata.json").read_text())["warnings"]


def test_simulate_identities(tmp_path):
    assert run("simulate", "--model", SIMPLE, "--out", tmp_path, "--modes", 2, "--t-max", 2, "--t-points", 3, "--alpha-points", 3) == 0
    ids = json.loads((tmp_path / "metadata.json").read_text())["identities"]
    assert ids["entropy_balance"]["residual"] < 1e-8
    assert ids["cocycle_generator"]["sign"] == -1
    assert ids["max_triple_gap"] < 1e-12
    sym = list(csv.DictReader(open(tmp_path / "symmetry.csv")))
    assert max(float(r["symmetry_residual"]) for r in sym) < 1e-12


def test_compare_small(tmp_path):
    assert run("compare", "--model", SIMPLE, "--out", tmp_path, "--modes", "2,3", "--t-points", 12) == 0
    rows = list(csv.DictReader(open(tmp_path / "comparison.csv")))
    assert len(rows) == 10
    zeros = [r for r in rows if float(r["alpha"]) in (0.0, 1.0)]
    assert all(r["rel_err"] == "" for r in zeros)
    conv = json.loads((tmp_path / "convergence.json").read_text())
    assert set(conv["by_modes"]) == {"2", "3"}
    assert isinstance(conv["median_decreasing"], bool)


def test_config_precedence():
    from spinfermion.cli import build_parser, make_config

    args = build_parser().parse_args(["simulate", "--model", "x", "--t-max", "3"])
    cfg = make_config(args, {"t_max": 7.0, "theta": 0.4, "modes": 5})
    assert cfg.t_max == 3.0 and cfg.theta == 0.4 and cfg.modes == [5]
    assert cfg.t_points == 11  # command default


def test_config_echo_drops_runtime_fields():
    e = RunConfig("analyze", "m.yaml", "out", threads=3).echo()
    assert "threads" not in e and "out" not in e


def test_config_check():
    with pytest.raises(InputError):
        RunConfig("analyze", "m", "o", format="xml").check()


def test_module_entry_point(tmp_path):
    r = subprocess.run(
        [sys.executable, "-m", "spinfermion", "validate", "--model", SIMPLE, "--out", str(tmp_path)],
        capture_output=True,
        text=True,
    )
    assert r.returncode == 0, r.stderr
