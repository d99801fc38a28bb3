import json
import textwrap

import pytest

from cutkit.cli import main

ISING = textwrap.dedent("""\
    qubits 4
    partition A: 0,1
    0.5 Z@0 Z@1
    0.5 Z@2 Z@3
    0.5 X@0
    0.5 X@1
    0.5 X@2
    0.5 X@3
    0.2 Z@1 Z@2
""")


@pytest.fixture
def ising(tmp_path):
    p = tmp_path / "ising.ham"
    p.write_text(ISING)
    return p


def test_extent_cnot(capsys):
    assert main(["extent", "--gate", "cnot"]) == 0
    assert capsys.readouterr().out == "xi=3 Rc=3 certified=true\n"
    assert main(["extent", "swap", "--format", "json"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["xi"] == pytest.approx(7) and data["certified"] is True


def test_hamsim_byte_identical(ising, tmp_path):
    outs = []
    for k, threads in enumerate(("1", "3")):
        out = tmp_path / f"o{k}.csv"
        args = ["hamsim", str(ising), "--t", "1", "--eps", "0.05", "--seed", "7", "--trials", "3000",
                "--r", "20", "--threads", threads, "--out", str(out)]
        assert main(args) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    header, row = outs[0].decode().splitlines()
    assert header == "mean,variance,trials,phi,eta,r,t,epsilon,seed"
    assert row.split(",")[2] == "3000" and row.endswith(",7")


def test_hamsim_experiment_file_and_global_seed_position(ising, tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("kind = hamsim\nhamiltonian = ising.ham\nobservable = Z@1 Z@2\nr = 10\ntrials = 2000\n")
    assert main(["--seed", "3", "hamsim", str(cfg)]) == 0
    first = capsys.readouterr().out
    assert main(["hamsim", str(cfg), "--seed", "3"]) == 0
    assert capsys.readouterr().out == first
    assert first.splitlines()[1].endswith(",3")


def test_spacecut_and_dump(tmp_path, capsys):
    cfg = tmp_path / "s.cfg"
    cfg.write_text("kind = spacecut\ngate = cnot\nqubits = 3\nstate = +0+\nobservable = Z@0 Z@1\n"
                   "decomposition = pauli\ntrials = 5000\nseed = 2\n")
    dump = tmp_path / "c.txt"
    assert main(["spacecut", str(cfg), "--dump-circuits", str(dump)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "mean,variance,std_error,trials,phi,seed"
    assert float(lines[1].split(",")[4]) == pytest.approx(7.0)
    text = dump.read_text()
    assert text.count("# setting") == 28 and "MEASURE 0,1,2,3,4" in text


def test_timecut_flags_and_csv(tmp_path, capsys):
    args = ["timecut", "--qubits", "2", "--state", "00", "--cut-wires", "0", "--observable", "projector:1@0",
            "--trials", "2000", "--seed", "1", "--mode", "analytic"]
    assert main(args) == 0
    header, row = capsys.readouterr().out.splitlines()
    assert header == "mean,variance,trials,one_norm,dA,bound"
    vals = row.split(",")
    assert float(vals[1]) == pytest.approx(6.0) and vals[4] == "2"


def test_verify_exit_zero(tmp_path, capsys):
    junit = tmp_path / "v.xml"
    assert main(["verify", "--junit", str(junit), "--out", str(tmp_path / "v.csv")]) == 0
    assert junit.exists() and (tmp_path / "v.csv").exists()


def test_config_errors_exit_one(tmp_path, capsys):
    bad = tmp_path / "bad.ham"
    bad.write_text("qubits 4\npartition A: 0,1\n1.5 Z@0 Z@2\n")
    assert main(["hamsim", str(bad)]) == 1
    assert f"{bad}:3:" in capsys.readouterr().err
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("kind = spacecut\ngate = cnot\nobservable = 2 Z@0\n")
    assert main(["spacecut", str(cfg)]) == 1
    assert main(["extent", "--gate", "frobnicate"]) == 1
    assert main(["timecut", "--qubits", "2", "--cut-wires", "5", "--observable", "Z@0"]) == 1


def test_sampler_failure_exit_three(ising, capsys):
    assert main(["hamsim", str(ising), "--trials", "200", "--r", "40", "--retry-cap", "1"]) == 3
    assert "sampler" in capsys.readouterr().err
