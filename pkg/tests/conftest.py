import json
import pathlib
from fractions import Fraction

import pytest
import sympy as sp

from lebesgue_classes.lclass import Piece
from lebesgue_classes.prepared import PreparedSum, PreparedTerm, RectCell, simple_sum

DATA = pathlib.Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def reference():
    return json.loads((DATA / "reference.json").read_text())


def one_sum(cell):
    zero = [0] * cell.n
    return simple_sum(cell, [PreparedTerm(sp.Integer(1), zero, zero)], labels=["one"])


def two_term_doc():
    """f = x y^-1 + (x - 1/2) y^-2 on the unit interval, mu = 1, q = 1."""
    return {
        "q": "1",
        "pieces": [{
            "cell": {"m": 1, "n": 1, "l": 0},
            "f": {"groups": [
                {"label": "g1", "terms": [{"coeff": "x1", "r": ["-1"], "s": [0]}]},
                {"label": "g2", "terms": [{"coeff": "x1 - 1/2", "r": ["-2"], "s": [0]}]},
            ]},
        }],
    }


def two_term_piece():
    doc = two_term_doc()["pieces"][0]
    cell = RectCell.from_json(doc["cell"])
    f = PreparedSum.from_json(doc["f"], cell)
    return Piece(f, one_sum(cell), (Fraction(0),))


ACCEPTANCE: list[str] = []


def record_criterion(number, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
    ACCEPTANCE.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
