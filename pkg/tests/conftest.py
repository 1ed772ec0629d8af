import functools

import pytest

from greenlab.groups import build_ball, parse_group
from greenlab.measures import srw

F2 = parse_group("free(2)")
Z1 = parse_group("abelian(1)")
Z2 = parse_group("abelian(2)")
F1 = parse_group("free(1)")
Z2Z = parse_group("product(abelian(2), abelian(1))")


@functools.lru_cache(maxsize=None)
def ball(spec_text: str, R: int):
    return build_ball(parse_group(spec_text), R)


@pytest.fixture(scope="session")
def f2_10():
    return ball("free(2)", 10)


@pytest.fixture(scope="session")
def f2_12():
    return ball("free(2)", 12)


@pytest.fixture(scope="session")
def z2z_8():
    return ball("product(abelian(2), abelian(1))", 8)


@pytest.fixture(scope="session")
def srw_f2():
    return srw(F2)


@pytest.fixture(scope="session")
def srw_z2z():
    return srw(Z2Z)


CRITERIA = {}


def record(number: int, passed: bool, detail: str) -> None:
    line = f"{'PASS' if passed else 'FAIL'}  criterion {number:2d}: {detail}"
    CRITERIA[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        terminalreporter.write_line(CRITERIA[n])
