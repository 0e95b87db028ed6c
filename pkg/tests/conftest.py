from pathlib import Path

import numpy as np
import pytest

from infeasloc.network import load_case, parse_matpower, scale_loading

DATA = Path(__file__).parent / "data"
CASE14 = DATA / "case14.m"

# slack at bus 1 feeding a PQ load at bus 2 through a lossy line;
# the nose of this feeder sits near 0.9 pu of active load
TWO_BUS = """
function mpc = two_bus
mpc.baseMVA = 100;
mpc.bus = [
    1 3   0   0 0 0 1 1.0 0 100 1 1.1 0.9;
    2 1 {p} {q} 0 0 1 1.0 0 100 1 1.1 0.9;
];
mpc.gen = [
    1 0 0 100 -100 1.0 100 1 200 0;
];
mpc.branch = [
    1 2 0.05 0.5 0 0 0 0 0 0 1 -360 360;
];
"""

# slack, a PV bus with weak support, and a PQ load at the far end
THREE_BUS = """
function mpc = three_bus
mpc.baseMVA = 100;
mpc.bus = [
    1 3   0   0 0 0 1 1.0 0 100 1 1.1 0.9;
    2 2  20  10 0 0 1 1.0 0 100 1 1.1 0.9;
    3 1 {p} {q} 0 0 1 1.0 0 100 1 1.1 0.9;
];
mpc.gen = [
    1 0 0 100 -100 1.0 100 1 200 0;
    2 10 0 100 -100 1.0 100 1 200 0;
];
mpc.branch = [
    1 2 0.02 0.3 0.02 0 0 0 0 0 1 -360 360;
    2 3 0.03 0.4 0.02 0 0 0 0 0 1 -360 360;
    1 3 0.05 0.8 0.00 0 0 0 0 0 1 -360 360;
];
"""


def two_bus(p=50.0, q=20.0):
    return parse_matpower(TWO_BUS.format(p=p, q=q))


def three_bus(p=60.0, q=30.0):
    return parse_matpower(THREE_BUS.format(p=p, q=q))


@pytest.fixture(scope="session")
def case14():
    return load_case(CASE14)


@pytest.fixture(scope="session")
def case14_stressed(case14):
    return scale_loading(case14, 4.5)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record(number: int, passed: bool, detail: str) -> None:
    prev = ACCEPTANCE.get(number)
    if prev is not None:
        passed = passed and prev[0]
        detail = f"{prev[1]}; {detail}"
    ACCEPTANCE[number] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
