from __future__ import annotations

import math

import numpy as np
import pytest

from eigenzeros.models import aspect_torus, circle_eigenbasis, sphere2_eigenbasis, torus_eigenbasis


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def torus2():
    return torus_eigenbasis(aspect_torus(2.0), (1, 1))


@pytest.fixture
def torus1():
    return torus_eigenbasis(aspect_torus(1.0), (1, 1))


def all_bases():
    out = [circle_eigenbasis(l) for l in (1, 3, 5)]
    out += [sphere2_eigenbasis(l) for l in (1, 2, 3, 4)]
    out += [torus_eigenbasis(aspect_torus(a), (1, 1)) for a in (1.0, 2.0, 1.5)]
    out += [torus_eigenbasis(aspect_torus(2.0), (1, 0)), torus_eigenbasis(aspect_torus(2.0), (2, 1))]
    return out


BASES = all_bases()
BASIS_IDS = [b.label for b in BASES]


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE_LINES: dict[int, str] = {}


def record_criterion(number: int, ok: bool, detail: str):
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
