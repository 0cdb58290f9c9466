import json
import shutil
import subprocess

import pytest

from etrnn.cli import dumps, main
from etrnn.compile import compile_system, preprocess
from etrnn.formula import parse
from etrnn.network import instance_to_json
from etrnn.normalize import ConstraintSystem, NameSupply, normalize


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture
def pipeline(tmp_path):
    (tmp_path / "f.txt").write_text("exists x (x = 1)\n")
    (tmp_path / "s.json").write_text(json.dumps({"x": "1"}))
    assert run("normalize", tmp_path / "f.txt", "-o", tmp_path / "sys.txt", "--schedule", tmp_path / "sched.json") == 0
    assert run("compile", tmp_path / "sys.txt", "-o", tmp_path / "inst.json", "--sidecar", tmp_path / "side.json") == 0
    return tmp_path


def test_pipeline_exit_codes(pipeline):
    p = pipeline
    assert run("witness", p / "inst.json", p / "side.json", p / "s.json", "--schedule", p / "sched.json",
               "-o", p / "w.json") == 0
    assert run("verify", p / "inst.json", p / "w.json", "-o", p / "v.txt") == 0
    assert (p / "v.txt").read_text().strip() == "CertifiedTrue"
    assert run("witness", p / "inst.json", p / "side.json", p / "w.json", "--dir", "backward", "-o", p / "b.json") == 0
    assert json.loads((p / "b.json").read_text())["x"] == "1"

    w = json.loads((p / "w.json").read_text())
    eid = "i:x->j:x"
    w["w"][eid] = "2"
    (p / "bad.json").write_text(json.dumps(w))
    assert run("verify", p / "inst.json", p / "bad.json", "-o", p / "v2.txt") == 1
    assert (p / "v2.txt").read_text().strip() == "CertifiedFalse"


def test_eval_command(pipeline):
    p = pipeline
    run("witness", p / "inst.json", p / "side.json", p / "s.json", "--schedule", p / "sched.json", "-o", p / "w.json")
    assert run("eval", p / "inst.json", p / "w.json", "0", "-o", p / "e.json") == 0
    assert json.loads((p / "e.json").read_text())
    assert run("eval", p / "inst.json", p / "w.json", "999") == 8


def test_instance_load_save_byte_identical(pipeline):
    p = pipeline
    from etrnn.network import instance_from_json
    text = (p / "inst.json").read_text()
    assert dumps(instance_to_json(instance_from_json(json.loads(text)))) == text


def test_library_equivalence(tmp_path):
    text = "exists y (y * y = 2 | relu(y) < 1/2)"
    (tmp_path / "f.txt").write_text(text)
    assert run("normalize", tmp_path / "f.txt", "-o", tmp_path / "sys.txt") == 0
    sys_lib = normalize(parse(text)).system
    assert (tmp_path / "sys.txt").read_text() == sys_lib.to_text()
    assert run("compile", tmp_path / "sys.txt", "-o", tmp_path / "inst.json") == 0
    system, _ = preprocess(sys_lib, NameSupply(sys_lib.variables))
    inst, _ = compile_system(system)
    assert (tmp_path / "inst.json").read_text() == dumps(instance_to_json(inst))


def test_parse_and_feas4(tmp_path, capsys):
    (tmp_path / "f.txt").write_text("x = 1")
    assert run("feas4", tmp_path / "f.txt") == 0
    assert capsys.readouterr().out == "(x - 1) * (x - 1)\n"
    assert run("parse", tmp_path / "f.txt") == 0
    assert json.loads(capsys.readouterr().out)


def test_solve_command(tmp_path, capsys):
    (tmp_path / "f.txt").write_text("exists x (1 < x & x*x < 2)")
    assert run("solve", tmp_path / "f.txt", "--budget", "1000") == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["result"] == "Sat"
    (tmp_path / "u.txt").write_text("exists x (x < 0 & 0 < x)")
    assert run("solve", tmp_path / "u.txt", "--budget", "200", "--depth", "10") == 2


def test_error_exit_codes(tmp_path):
    assert run("parse", tmp_path / "missing.txt") == 10
    (tmp_path / "bad.txt").write_text("x = = 1")
    assert run("parse", tmp_path / "bad.txt") == 4
    (tmp_path / "fn.txt").write_text("foo(x) = 1")
    assert run("parse", tmp_path / "fn.txt") == 4
    (tmp_path / "bad.json").write_text("{not json")
    assert run("verify", tmp_path / "bad.json", tmp_path / "bad.json") == 8


def test_polynomial_activation_flag(tmp_path, capsys):
    (tmp_path / "f.txt").write_text("sq(x) = 4")
    assert run("--activation", "sq=0,0,1", "parse", tmp_path / "f.txt") == 0
    assert run("parse", tmp_path / "f.txt") == 4


@pytest.mark.skipif(shutil.which("etrnn") is None, reason="console script not installed")
def test_console_script(tmp_path):
    (tmp_path / "f.txt").write_text("x = 1")
    out = subprocess.run(["etrnn", "feas4", str(tmp_path / "f.txt")], capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout == "(x - 1) * (x - 1)\n"
