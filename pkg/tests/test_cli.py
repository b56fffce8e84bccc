import subprocess
import sys

import yaml

from cipmc.cli import main
from cipmc.fixtures import NS_PROPERTY, NS_PROTOCOL
from cipmc.scenario import load_scenario, scenario_from_dict
from cipmc.statespace import ScenarioError

import pytest


def test_check_builtin_ns_reports_attack(capsys):
    assert main(["check", "--builtin", "ns"]) == 1
    out = capsys.readouterr().out
    assert "attack found in context {A_1, A_2}" in out
    assert "1. A_1 → I : {na_1, A_1}_{I^+}" in out


def test_check_files_and_outputs(tmp_path, capsys):
    (tmp_path / "ns.cip").write_text(NS_PROTOCOL)
    (tmp_path / "ns.pl").write_text(NS_PROPERTY)
    dot, stats = tmp_path / "t.dot", tmp_path / "s.txt"
    code = main(["check", "--protocol", str(tmp_path / "ns.cip"), "--property", str(tmp_path / "ns.pl"),
                 "--max-instances", "2", "--emit-dot", str(dot), "--stats", str(stats)])
    assert code == 1
    assert dot.read_text().startswith("digraph")
    kv = dict(line.split(": ", 1) for line in stats.read_text().splitlines())
    assert kv["verdict"] == "attack" and kv["states_expanded"] == "9"


def test_check_ksl_no_attack(capsys):
    assert main(["check", "--builtin", "ksl", "--max-instances", "2"]) == 0


def test_check_bound_exhausted(capsys):
    assert main(["check", "--builtin", "ns", "--strategy", "bfs", "--max-states", "50"]) == 3


def test_input_errors(tmp_path, capsys):
    bad = tmp_path / "bad.cip"
    bad.write_text("A: (r)[ out({na}_{r+} ]")
    (tmp_path / "p.pl").write_text(NS_PROPERTY)
    assert main(["check", "--protocol", str(bad), "--property", str(tmp_path / "p.pl")]) == 2
    assert main(["check", "--protocol", str(tmp_path / "missing.cip"), "--property", str(tmp_path / "p.pl")]) == 2
    assert main(["check"]) == 2
    assert main(["parse", str(bad)]) == 2


def test_parse_and_knowledge(tmp_path, capsys):
    f = tmp_path / "ns.cip"
    f.write_text(NS_PROTOCOL)
    assert main(["parse", str(f)]) == 0
    assert capsys.readouterr().out == NS_PROTOCOL
    assert main(["knowledge", "{na_1, A_1}_{I^+}", "I^-"]) == 0
    assert "na_1" in capsys.readouterr().out.split()


def test_builtin_emit_and_scenario_roundtrip(tmp_path, capsys):
    assert main(["builtin", "ksl", "--emit", str(tmp_path)]) == 0
    sc, phi = load_scenario(tmp_path / "ksl.yaml")
    assert sc.join_rules and sc.max_instances == 2
    assert main(["check", "--scenario", str(tmp_path / "ksl.yaml")]) == 0


def test_scenario_inline_and_unknown_keys():
    sc, _ = scenario_from_dict({"protocol_text": NS_PROTOCOL, "property_text": NS_PROPERTY, "max_instances": 1})
    assert sc.max_instances == 1
    with pytest.raises(ScenarioError):
        scenario_from_dict({"protocol_text": NS_PROTOCOL, "property_text": NS_PROPERTY, "colour": "red"})
    assert yaml.safe_dump({"a": 1})


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "cipmc", "check", "--builtin", "ns"], capture_output=True, text=True)
    assert proc.returncode == 1 and "A_1 → I" in proc.stdout
