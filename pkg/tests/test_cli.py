import json
import math
import subprocess
import sys
from fractions import Fraction

import pytest

from conftest import two_term_doc
from lebesgue_classes import cli
from lebesgue_classes.errors import InvariantError, NumericError, ParseError


def run_main(args, doc, tmp_path):
    inp = tmp_path / "in.json"
    out = tmp_path / "out.json"
    inp.write_text(json.dumps(doc))
    code = cli.main([args, "--in", str(inp), "--out", str(out)])
    return code, (json.loads(out.read_text()) if out.exists() else None)


def test_parse_round_trip():
    inst = cli.parse_instance(json.dumps(two_term_doc()).encode())
    again = cli.parse_instance(json.dumps(inst.to_json()).encode())
    assert again.to_json() == inst.to_json()
    assert inst.q == 1


def test_missing_q_is_located():
    doc = two_term_doc()
    del doc["q"]
    with pytest.raises(ParseError) as exc:
        cli.parse_instance(json.dumps(doc).encode())
    assert exc.value.path == "$.q"


def test_fractional_exponent_parses_exactly():
    doc = two_term_doc()
    doc["pieces"][0]["f"]["groups"][0]["terms"][0]["r"] = ["1/3"]
    inst = cli.parse_instance(json.dumps(doc).encode())
    assert inst.pieces[0].f.groups[0].terms[0].r == (Fraction(1, 3),)


@pytest.mark.parametrize("text, path", [
    (b"\xff", "$"),
    (b"[1]", "$"),
    (b'{"q": "0", "f": {}}', "$.q"),
    (b'{"seed": "a"}', "$.seed"),
    (b'{"options": {"mode": "loose"}}', "$.options.mode"),
])
def test_schema_errors(text, path):
    with pytest.raises(ParseError) as exc:
        cli.parse_instance(text)
    assert exc.value.path == path


def test_diagram_command(tmp_path):
    code, rep = run_main("diagram", two_term_doc(), tmp_path)
    assert code == 0
    ivs = rep["report"]["intervals"]
    assert [iv["describe"] for iv in ivs] == ["(0, 1/2)", "(0, 1)", "(0, inf) ∪ {inf}"]


def test_reports_are_deterministic(tmp_path):
    doc = two_term_doc()
    doc["seed"] = 7
    outs = []
    for k in range(2):
        (tmp_path / str(k)).mkdir()
        run_main("diagram", doc, tmp_path / str(k))
        outs.append((tmp_path / str(k) / "out.json").read_bytes())
    assert outs[0] == outs[1]


def test_countex_command(tmp_path):
    code, rep = run_main("countex", {"x": [0.1]}, tmp_path)
    assert code == 0
    fiber = rep["report"]["fibers"][0]
    assert fiber["sups"]["log(y1/y2)"]["sup"] == pytest.approx(math.log(10), abs=1e-3)
    assert fiber["sups"]["log(y1/y2)"]["bounded"]
    assert not fiber["sups"]["log(y1)"]["bounded"]


def test_countex_candidates(tmp_path):
    doc = {"x": [0.1], "candidates": [
        {"name": "log x", "G": {"1": [{"exponents": [0, 0, 0], "coefficient": "1"}]}, "t": 0.3},
    ]}
    code, rep = run_main("countex", doc, tmp_path)
    cand = rep["report"]["candidates"][0]
    assert cand["leading"] == {"p": 0, "q": 0, "r": 1, "a": "1", "eps": "1"}
    assert cand["curve_limit"]["limit"] == pytest.approx(1.0, abs=1e-6)


def test_verify_command(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.THREADS_ENV, "2")
    _, prior = run_main("diagram", two_term_doc(), tmp_path)
    doc = {**two_term_doc(), "diagram": prior["report"], "options": {"samples": 100}}
    code, rep = run_main("verify", doc, tmp_path)
    assert code == 0
    assert rep["report"]["samples"] == 100
    assert rep["report"]["rate"] >= 0.99


def test_classify_command(tmp_path):
    doc = {"monomials": [{"alpha": "-1/2", "beta": 3}, {"alpha": ["-5", "-1/2"], "beta": [7, 0], "l": 1}]}
    code, rep = run_main("classify", doc, tmp_path)
    first, second = rep["report"]["monomials"]
    assert first["integrable"] and not first["bounded"]
    assert second["integrable"]


def test_split_and_dickson_commands(tmp_path):
    fam = {"k": 1, "nvars": 1, "coeffs": [
        {"index": [0], "poly": [{"exponents": [1], "coefficient": "1"}]},
        {"index": [1], "poly": [{"exponents": [0], "coefficient": "1"}]},
        {"index": [2], "poly": [{"exponents": [2], "coefficient": "1"}]},
        {"index": [3], "poly": [{"exponents": [0], "coefficient": "1"}]}]}
    code, rep = run_main("split", {"family": fam, "M_CR": [[0], [1]]}, tmp_path)
    assert code == 0 and rep["report"]["recombines"]
    assert [b["index"] for b in rep["report"]["M_NC"]] == [[2]]
    code, rep = run_main("dickson", {"M": [[1, 1]]}, tmp_path)
    assert sorted(p["base"] for p in rep["report"]["parts"]) == [[1, 2], [2, 1], [2, 2]]


def test_rectilinearize_command(tmp_path):
    code, rep = run_main("rectilinearize", {"check_x": [0.1], "options": {"samples": 1000}}, tmp_path)
    assert code == 0
    check = rep["report"]["checks"][0]
    assert check["coverage"] >= 0.999 and check["collisions"] == 0


def test_exit_code_for_resource_cap(tmp_path, capsys):
    doc = {**two_term_doc(), "options": {"cap": 2}}
    code, _ = run_main("diagram", doc, tmp_path)
    assert code == 3
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "ResourceError" and err["count"] == 4


def test_exit_code_for_bad_input(tmp_path, capsys):
    code, _ = run_main("diagram", {"pieces": []}, tmp_path)
    assert code == 2
    assert json.loads(capsys.readouterr().err)["path"] == "$.q"


@pytest.mark.parametrize("exc", [InvariantError("broken"), NumericError("nan")])
def test_exit_code_for_invariant_failure(tmp_path, monkeypatch, exc):
    def boom(inst, seed):
        raise exc
    monkeypatch.setitem(cli.HANDLERS, "dickson", boom)
    code, _ = run_main("dickson", {"M": [[0]]}, tmp_path)
    assert code == 4


def test_console_entry_point(tmp_path):
    (tmp_path / "in.json").write_text(json.dumps({"M": [[0, 0]]}))
    proc = subprocess.run([sys.executable, "-m", "lebesgue_classes", "dickson", "--in",
                           str(tmp_path / "in.json")], capture_output=True, text=True)
    assert proc.returncode == 0
    assert len(json.loads(proc.stdout)["report"]["parts"]) == 3
    proc = subprocess.run([sys.executable, "-m", "lebesgue_classes", "nonsense"],
                          capture_output=True, text=True)
    assert proc.returncode == 2
