import json
import shutil
import subprocess
import sys
from pathlib import Path

import jsonschema
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ewlab.cli import CSV_COLUMNS, main, parse_domain, parse_grid, run
from ewlab.report import (
    EXIT_CONFIG,
    EXIT_FAIL,
    EXIT_GATE,
    EXIT_PASS,
    ConfigError,
    Report,
    RunConfig,
    gated,
    load_schema,
    measure,
    validate_report,
)

ROOT = Path(__file__).resolve().parents[1]


def cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def cli_json(capsys, *argv):
    code, out, _ = cli(capsys, *argv, "--format", "json")
    d = json.loads(out)
    validate_report(d)
    assert d["exit_code"] == code
    return code, d


def by_name(d):
    return {c["name"]: c for c in d["checks"]}


# -- verify ------------------------------------------------------------------------


def test_verify_ew_taubnut(capsys):
    code, d = cli_json(capsys, "verify", "ew", "--space", "taubnut", "--params", "a=1,b=1,c=1", "--probes", "100", "--tol", "1e-6")
    assert code == EXIT_PASS and d["passed"]
    assert by_name(d)["ew_residual"]["points"] == 100


def test_verify_toda_x_squared(capsys):
    code, d = cli_json(capsys, "verify", "toda", "--u", "x^2", "--probes", "10")
    assert code == EXIT_FAIL
    assert by_name(d)["toda_residual"]["max_abs"] == pytest.approx(2.0, abs=1e-6)


def test_verify_toda_harmonic_passes(capsys):
    code, _ = cli_json(capsys, "verify", "toda", "--u", "x+y", "--probes", "20")
    assert code == EXIT_PASS


def test_verify_harmonic_rho_fails(capsys):
    code, d = cli_json(capsys, "verify", "harmonic", "--V", "rho", "--probes", "10")
    assert code == EXIT_FAIL


def test_verify_harmonic_catalog(capsys):
    code, d = cli_json(capsys, "verify", "harmonic", "--space", "eguchi-hanson-2", "--probes", "30")
    assert code == EXIT_PASS


def test_verify_crosscheck(capsys):
    code, _ = cli_json(capsys, "verify", "crosscheck", "--space", "taubnut", "--probes", "20")
    assert code == EXIT_PASS


def test_verify_killing_gate(capsys):
    code, d = cli_json(capsys, "verify", "killing", "--space", "taubnut", "--probes", "10")
    assert code == EXIT_GATE
    assert any(c["status"] == "gated" for c in d["checks"])


def test_verify_killing_berger(capsys):
    code, d = cli_json(capsys, "verify", "killing", "--space", "berger", "--params", "a=0.7", "--probes", "10")
    assert code == EXIT_PASS
    assert by_name(d)["omega_dot_starF"]["max_abs"] > 0.1


def test_text_output(capsys):
    code, out, _ = cli(capsys, "verify", "ew", "--space", "flat", "--probes", "5")
    assert code == 0 and "PASS" in out and "exit 0" in out


# -- configuration errors -----------------------------------------------------------


@pytest.mark.parametrize(
    "argv",
    [
        ["verify", "ew", "--space", "nope"],
        ["verify", "ew", "--space", "taubnut", "--params", "q=1"],
        ["verify", "ew", "--space", "flat", "--u", "x"],
        ["verify", "toda", "--u", "x +* y"],
        ["verify", "toda", "--u", "a*log(z)"],
        ["verify", "ew", "--space", "flat", "--probes", "0"],
        ["verify", "ew", "--space", "flat", "--tol", "-1"],
        ["verify", "ew", "--space", "flat", "--tol-class", "bogus=1"],
        ["verify", "ew", "--space", "ward-logrho", "--domain", "rho=2:1"],
    ],
)
def test_config_errors_exit_2(capsys, argv):
    code, _, err = cli(capsys, *argv)
    assert code == EXIT_CONFIG
    assert "error" in err


def test_probes_avoid_singular_locus(capsys):
    # a domain reaching the axis is fine for sampled checks: probes keep the margin
    code, _, _ = cli(capsys, "verify", "ew", "--space", "ward-logrho", "--domain", "rho=0:2", "--probes", "20")
    assert code == EXIT_PASS


def test_parsers():
    assert parse_grid("10x10x1") == (10, 10, 1)
    assert parse_domain("rho=0.3:2,eta=-1:1") == {"rho": (0.3, 2.0), "eta": (-1.0, 1.0)}
    with pytest.raises(ConfigError):
        parse_grid("10x0x1")


# -- structures / obstruct ----------------------------------------------------------


def test_structures_flat(capsys):
    code, d = cli_json(capsys, "structures", "--space", "flat")
    sc = d["structure_count"]
    assert code == 0 and (sc["upper_bound"], sc["confirmed"]) == (4, 4)


def test_structures_gated_off_einstein_weyl(capsys):
    code, d = cli_json(capsys, "structures", "--space", "berger")
    assert code == EXIT_GATE and d["structure_count"] is None


def test_obstruct_explicit_congruence(capsys):
    code, d = cli_json(capsys, "obstruct", "--u", "log(1+z)", "--congruence", "0,0,1", "--probes", "10")
    assert code == 0
    assert by_name(d)["shear"]["max_abs"] < 1e-10


# -- export ---------------------------------------------------------------------------


def _export(capsys, out, *extra):
    return cli(capsys, "export", "--space", "ward-logrho", "--grid", "10x10x1", "--out", str(out), *extra)


def test_export_csv(tmp_path, capsys):
    out = tmp_path / "grid.csv"
    code, _, _ = _export(capsys, out)
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) == 101
    row = lines[1].split(",")
    assert len(row) == len(CSV_COLUMNS)
    assert row[CSV_COLUMNS.index("toda_residual")] == ""
    assert float(row[CSV_COLUMNS.index("g_33")]) == 1.0
    rep = json.loads(out.with_suffix(".json").read_text())
    validate_report(rep)


def test_export_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    _export(capsys, a)
    _export(capsys, b)
    assert a.read_bytes() == b.read_bytes()


def test_export_touching_axis(tmp_path, capsys):
    code, _, err = _export(capsys, tmp_path / "x.csv", "--domain", "rho=0:2")
    assert code == EXIT_CONFIG and "margin" in err
    assert not (tmp_path / "x.csv").exists()


def test_export_unwritable(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("")
    code, _, _ = _export(capsys, blocker / "sub" / "g.csv")
    assert code == EXIT_CONFIG


# -- report contract ------------------------------------------------------------------


def test_docs_schema_matches_package():
    assert json.loads((ROOT / "docs" / "report.schema.json").read_text()) == load_schema()


def test_report_determinism_modulo_wall_time():
    cfg = dict(space="eguchi-hanson-1", probes=30, seed=5)
    a = run("verify ew", RunConfig(**cfg)).to_json(wall_time=False)
    b = run("verify ew", RunConfig(**cfg)).to_json(wall_time=False)
    assert a == b


def test_schema_rejects_bad_status():
    d = run("verify ew", RunConfig(space="flat", probes=3)).as_dict()
    d["checks"][0]["status"] = "maybe"
    with pytest.raises(jsonschema.ValidationError):
        validate_report(d)


def test_exit_precedence():
    r = Report("verify x", RunConfig())
    r.add(gated("g", "precondition"))
    assert r.exit_code == EXIT_GATE
    r.add(measure("m", [1.0], 0.5))
    assert r.exit_code == EXIT_FAIL
    r.config_error = True
    assert r.exit_code == EXIT_CONFIG


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=20), st.floats(1e-12, 1e3))
def test_pass_iff_below_tolerance(values, tol):
    c = measure("x", values, tol)
    assert c.passed == (max(abs(v) for v in values) < tol)
    assert c.as_dict()["pass"] == c.passed


@given(st.integers(0, 10**6))
def test_same_config_same_report(seed):
    cfg = RunConfig(u="log(1+z)", probes=5, seed=seed)
    assert run("verify toda", cfg).to_json(False) == run("verify toda", cfg).to_json(False)


def test_catalog_list(capsys):
    code, out, _ = cli(capsys, "catalog", "list", "--format", "json")
    rows = json.loads(out)
    assert code == 0 and {r["label"] for r in rows} >= {"flat", "taubnut", "berger"}


@pytest.mark.skipif(shutil.which("ewlab") is None, reason="console script not installed")
def test_console_script():
    p = subprocess.run(["ewlab", "verify", "toda", "--u", "x^2", "--probes", "10"], capture_output=True, text=True)
    assert p.returncode == 1


def test_module_entry():
    p = subprocess.run([sys.executable, "-m", "ewlab.cli", "catalog", "list"], capture_output=True, text=True)
    assert p.returncode == 0 and "taubnut" in p.stdout
