import json
import shlex
import subprocess
import sys

import pytest

from ccsa import smt
from ccsa.cli import main

from conftest import needs_z3

PY = sys.executable


def solver(out):
    return f"fake={PY} -c {shlex.quote(f'print({out!r})')}"


@needs_z3
def test_verify_proves_basic_hash(capsys):
    assert main(["verify", "basic-hash.ptcl", "--level", "instances"]) == 0
    assert "result: proved" in capsys.readouterr().out


def test_emit_only_writes_two_files(tmp_path, capsys):
    assert main(["verify", "basic-hash", "--emit-only", "--out-dir", str(tmp_path)]) == 0
    assert sorted(p.name for p in tmp_path.iterdir()) == ["basic-hash.full.smt2", "basic-hash.heuristic.smt2"]
    assert "result: emitted" in capsys.readouterr().out


def test_emit_only_split(tmp_path):
    assert main(["verify", "basic-hash", "--emit-only", "--split-iff", "--out-dir", str(tmp_path)]) == 0
    names = sorted(p.name for p in tmp_path.iterdir())
    assert "basic-hash.full.part1.smt2" in names and "basic-hash.full.part2.smt2" in names


def test_malformed_file(tmp_path, capsys):
    bad = tmp_path / "bad.ptcl"
    bad.write_text("fun f(message: message\n")
    assert main(["verify", str(bad)]) == 2
    assert f"{bad}:1:14:" in capsys.readouterr().err


def test_missing_file(capsys):
    assert main(["verify", "/nonexistent/x.ptcl"]) == 2


def test_inconclusive_sat(capsys):
    assert main(["verify", "init-only", "--solver", solver("sat")]) == 1
    assert "result: inconclusive" in capsys.readouterr().out


def test_heuristic_incompleteness_is_reported(capsys):
    assert main(["verify", "init-only", "--level", "heuristic", "--solver", solver("sat")]) == 1
    assert "inconclusive (heuristic incomplete)" in capsys.readouterr().out


def test_solver_error_exit(capsys):
    assert main(["verify", "init-only", "--solver", solver("garbage")]) == 3


def test_no_solver_available(monkeypatch, capsys):
    monkeypatch.setattr(smt, "available_solvers", lambda timeout: [])
    assert main(["verify", "init-only"]) == 3
    assert "no SMT solver" in capsys.readouterr().err


def test_json_report(capsys):
    assert main(["verify", "toy-sig", "--json", "--split-iff", "--solver", solver("unsat")]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["result"] == "proved" and rep["exit_code"] == 0
    assert rep["problem"] == "toy-sig" and rep["mode"] == "full"
    assert rep["parts"][0][0]["solver"] == "fake"


def test_config_file(tmp_path, capsys):
    cfg = tmp_path / "ccsa.toml"
    cfg.write_text(f'timeout = 5\nlevel = "heuristic"\n[solvers]\nfake = {json.dumps(solver("unsat").split("=", 1)[1])}\n')
    assert main(["verify", "init-only", "--config", str(cfg)]) == 0
    assert "level heuristic" in capsys.readouterr().out


def test_bad_config(tmp_path):
    cfg = tmp_path / "bad.toml"
    cfg.write_text("timeout = = 5\n")
    assert main(["verify", "init-only", "--config", str(cfg)]) == 2


def test_dump_instances(tmp_path, capsys):
    main(["verify", "basic-hash", "--dump-instances", "--emit-only", "--out-dir", str(tmp_path)])
    out = capsys.readouterr().out
    assert out.count("[euf-cma @") == 2


def test_oracle_command(capsys):
    assert main(["oracle", "init-only"]) == 0
    assert main(["oracle", "basic-hash", "--indices", "1", "--steps", "3", "--disable-input"]) == 1
    assert "counterexample" in capsys.readouterr().out


def test_oracle_json(capsys):
    assert main(["oracle", "basic-hash", "--indices", "1", "--steps", "3", "--json"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["ok"] and rep["pairs"] == 52


def test_traces_listing(capsys):
    assert main(["traces", "basic-hash", "--indices", "1", "--steps", "1"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert "init < Tag[0,0]" in lines
    assert not any("R_s[0,0]" in x and "R_f[0]" in x for x in lines)
    assert main(["traces", "basic-hash", "--indices", "0", "--steps", "0"]) == 0
    assert capsys.readouterr().out.splitlines() == ["init"]
    assert main(["traces", "basic-hash", "--indices", "1", "--steps", "2", "--count"]) == 0
    assert capsys.readouterr().out.strip() == "8"


def test_module_entry_point(tmp_path):
    out = subprocess.run([PY, "-m", "ccsa", "traces", "init-only", "--count"], capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.strip() == "1"


def test_usage_error():
    with pytest.raises(SystemExit) as e:
        main(["verify", "basic-hash", "--level", "bogus"])
    assert e.value.code == 2
