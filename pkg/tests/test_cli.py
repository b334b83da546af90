import json
import subprocess
import sys

import jsonschema
import pytest

from peepgen.cli import summarize_reports

from conftest import DOCS, FIXTURES, REPO

BAD_RULE = """
rule "bad" {
  lhs fn(x: i8) -> i8 { %0 = xor i8 %x, 1; ret %0 }
  rhs fn(x: i8) -> i8 { %0 = and i8 %x, 1; ret %0 }
}
"""


def run_cli(*args, cwd=REPO):
    return subprocess.run([sys.executable, "-m", "peepgen.cli", *args],
                          capture_output=True, text=True, cwd=cwd)


def _schema(name):
    return json.loads((DOCS / name).read_text())


def test_verify_verified_rule():
    proc = run_cli("verify", str(FIXTURES / "rules" / "cttz_general.peep"))
    assert proc.returncode == 0, proc.stderr
    data = json.loads(proc.stdout)
    assert data["kind"] == "verified"
    assert data["mode"] == "exhaustive"
    assert data["space"] == "64 constants x 256 inputs"
    jsonschema.validate(data, _schema("verdict.schema.json"))


def test_verify_refuted_rule(tmp_path):
    path = tmp_path / "bad.peep"
    path.write_text(BAD_RULE)
    proc = run_cli("verify", str(path))
    assert proc.returncode == 1
    data = json.loads(proc.stdout)
    assert data["kind"] == "refuted"
    jsonschema.validate(data, _schema("verdict.schema.json"))


def test_verify_parse_error(tmp_path):
    path = tmp_path / "broken.peep"
    path.write_text("rule { nonsense")
    proc = run_cli("verify", str(path))
    assert proc.returncode == 65


def test_verify_bad_width_flag():
    proc = run_cli("verify", str(FIXTURES / "rules" / "cttz_general.peep"),
                   "--width", "W")
    assert proc.returncode == 64


def test_unknown_command():
    assert run_cli("frobnicate").returncode == 64


def test_missing_file():
    assert run_cli("verify", "no_such_file.peep").returncode == 64


def test_generalize_heuristic_succeeds(tmp_path):
    outs = []
    for i in range(2):
        out = tmp_path / f"report{i}.json"
        proc = run_cli("generalize",
                       str(FIXTURES / "int" / "strength_reduce_mul8.peep"),
                       "--backend", "heuristic", "--out", str(out))
        assert proc.returncode == 0, proc.stderr
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    report = json.loads(outs[0])
    assert report["final"] is not None
    jsonschema.validate(report, _schema("report.schema.json"))


def test_generalize_replay_backend():
    proc = run_cli("generalize",
                   str(FIXTURES / "int" / "strength_reduce_mul8.peep"),
                   "--backend", f"replay:{FIXTURES / 'replay'}")
    assert proc.returncode == 0, proc.stderr
    assert json.loads(proc.stdout)["final"] is not None


def test_generalize_unknown_backend():
    proc = run_cli("generalize",
                   str(FIXTURES / "int" / "strength_reduce_mul8.peep"),
                   "--backend", "psychic")
    assert proc.returncode == 64


def test_prune_output():
    proc = run_cli("prune", str(FIXTURES / "int" / "mod_div_zero.peep"))
    assert proc.returncode == 0
    data = json.loads(proc.stdout)
    assert "trunc" not in data["pruned"]
    assert data["log"]["sweeps"] >= 1


def test_cost_output():
    proc = run_cli("cost", str(FIXTURES / "int" / "xor_and_distribute.peep"))
    assert proc.returncode == 0
    assert json.loads(proc.stdout) == {"lhs": "3", "rhs": "2",
                                       "profitable": True}


def test_compare_output():
    proc = run_cli("compare", str(FIXTURES / "rules" / "cttz_general.peep"),
                   str(FIXTURES / "rules" / "cttz_fixed_rhs.peep"))
    assert proc.returncode == 0
    data = json.loads(proc.stdout)
    assert data["verdict"] == "AMoreGeneral"
    assert data["witness"]


@pytest.fixture(scope="module")
def bench_runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("bench")
    procs = []
    for i in range(2):
        rdir = root / f"reports{i}"
        procs.append((run_cli("bench", str(FIXTURES), "--seed", "0",
                              "--report-dir", str(rdir)), rdir))
    return procs


def test_bench_is_byte_identical(bench_runs):
    (p1, _), (p2, _) = bench_runs
    assert p1.returncode == 0, p1.stderr
    assert p1.stdout == p2.stdout


def test_bench_summary_shape(bench_runs):
    proc, _ = bench_runs[0]
    summary = json.loads(proc.stdout)
    jsonschema.validate(summary, _schema("bench.schema.json"))
    assert summary["total"]["instances"] == 12
    assert summary["total"]["success"] == 12
    assert summary["total"]["rejected"] == 0


def test_bench_reconciles_with_reports(bench_runs):
    proc, rdir = bench_runs[0]
    rows = []
    for path in rdir.glob("*.json"):
        domain, _, name = path.stem.partition("_")
        rows.append((name, domain, json.loads(path.read_text())))
    assert summarize_reports(rows) == json.loads(proc.stdout)


def test_bench_rejects_unsound_instance(tmp_path):
    ddir = tmp_path / "data" / "int"
    ddir.mkdir(parents=True)
    (ddir / "bad.peep").write_text(BAD_RULE)
    (ddir / "ok.peep").write_text(
        (FIXTURES / "int" / "xor_self.peep").read_text())
    proc = run_cli("bench", str(tmp_path / "data"))
    assert proc.returncode == 0, proc.stderr
    summary = json.loads(proc.stdout)
    assert summary["total"] == {"instances": 1, "success": 1, "rejected": 1}
    statuses = {i["name"]: i["status"] for i in summary["instances"]}
    assert statuses == {"bad": "rejected at ingestion", "ok": "success"}


def test_bench_parallel_matches_serial(bench_runs):
    proc, _ = bench_runs[0]
    par = run_cli("bench", str(FIXTURES), "--seed", "0", "--jobs", "4")
    assert par.returncode == 0
    assert par.stdout == proc.stdout
