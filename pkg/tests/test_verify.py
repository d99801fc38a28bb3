import csv
import xml.etree.ElementTree as ET
from fractions import Fraction

import numpy as np
import pytest

from cutkit.paulis import pauli_matrix
from cutkit.statesim import GateOp, circuit_unitary
from cutkit.tensor import random_unitary
from cutkit.verify import (
    OracleReport,
    chi_square_uniform,
    embed_operator,
    enumerate_distribution,
    pauli_operator,
    run_audit,
    setting_formula_law,
    setting_process_law,
    tv_distance,
    write_csv,
    write_junit,
)


def test_pauli_operator_matches_kron():
    for label in ("XYZ", "IZY", "YYI"):
        ops = {w: c for w, c in enumerate(label)}
        assert np.allclose(pauli_operator(ops, 3), pauli_matrix(label))


def test_embed_operator_matches_simulator(rng):
    u = random_unitary(4, rng)
    for targets in ([0, 2], [2, 0], [3, 1]):
        assert np.allclose(embed_operator(u, targets, 4), circuit_unitary([GateOp(u, targets)], 4))


def test_setting_law_m2_table():
    c = [Fraction(3, 4), Fraction(1, 4)]
    law = setting_formula_law(c)
    # phi = 2 - (9/16 + 1/16) = 11/8
    assert law[0, 0, 0] == Fraction(9, 16) / Fraction(11, 8)
    assert law[0, 1, 1] == Fraction(3, 16) / Fraction(11, 8)
    assert law[1, 1, 1] == 0
    assert sum(law.values()) == 1
    assert law == setting_process_law(c)


def test_enumerate_and_tv():
    pmf = enumerate_distribution(lambda s: 0.25, [(0,), (1,), (2,), (3,)])
    assert tv_distance([(0,), (1,), (2,), (3,)] * 10, pmf) == 0
    assert tv_distance([(0,)] * 4, pmf) == pytest.approx(0.75)
    stat, dof = chi_square_uniform([10, 10, 10])
    assert stat == 0 and dof == 2


def test_report_relations():
    assert OracleReport.equal("a", 1.0, 1.0 + 1e-10, 1e-9).passed
    assert not OracleReport.equal("a", 1.0, 1.1, 1e-9).passed
    assert OracleReport.at_least("b", 3.0, 3.0, 0).passed
    assert not OracleReport.at_least("b", 2.0, 3.0, 1e-9).passed
    assert OracleReport.at_most("c", 2.0, 3.0, 0).passed


def test_audit_passes_and_reports(tmp_path):
    reports = run_audit()
    assert reports and all(r.passed for r in reports), [r.name for r in reports if not r.passed]
    write_junit(reports, tmp_path / "r.xml")
    root = ET.parse(tmp_path / "r.xml").getroot()
    assert root.get("failures") == "0" and int(root.get("tests")) == len(reports)
    write_csv(reports, tmp_path / "r.csv")
    rows = list(csv.DictReader(open(tmp_path / "r.csv")))
    assert len(rows) == len(reports) and all(r["passed"] == "true" for r in rows)


def test_junit_records_failures(tmp_path):
    write_junit([OracleReport.equal("bad", 1.0, 2.0, 0.1)], tmp_path / "f.xml")
    root = ET.parse(tmp_path / "f.xml").getroot()
    assert root.get("failures") == "1"
    assert root.find("testcase/failure") is not None
