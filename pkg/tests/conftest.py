import numpy as np
import pytest

from nashnet.game_space import Game

# PASS/FAIL lines collected by the acceptance suite, printed after the run
ACCEPTANCE_LINES: dict[int, str] = {}


def record(criterion: int, name: str, ok: bool, detail: str):
    ACCEPTANCE_LINES[criterion] = f"[{'PASS' if ok else 'FAIL'}] criterion {criterion:>2} {name}: {detail}"


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])


@pytest.fixture
def matching_pennies():
    u1 = np.array([[1.0, -1.0], [-1.0, 1.0]])
    return Game(u1, -u1.T)


@pytest.fixture
def stag_hunt():
    # action 0 = stag, 1 = hare; symmetric, indexed own-action-first
    u = np.array([[4.0, 0.0], [3.0, 2.0]])
    return Game(u, u.copy())


@pytest.fixture
def prisoners_dilemma():
    # action 0 = cooperate, 1 = defect
    u = np.array([[3.0, 0.0], [5.0, 1.0]])
    return Game(u, u.copy())
