import numpy as np
import pytest
from hypothesis import strategies as st

from rfx.instances import random_mdp
from rfx.mdp import RewardTable, StochasticPolicy


def random_policy(S, A, H, rng):
    return StochasticPolicy(rng.dirichlet(np.ones(A), size=(H, S)))


def random_reward(S, A, H, rng):
    return RewardTable(rng.random((H, S, A)))


@st.composite
def small_problems(draw, max_s=3, max_a=2, max_h=3):
    """(mdp, reward, policy) with small dims and a hypothesis-chosen seed."""
    S = draw(st.integers(1, max_s))
    A = draw(st.integers(1, max_a))
    H = draw(st.integers(1, max_h))
    seed = draw(st.integers(0, 2**32 - 1))
    conc = draw(st.sampled_from([0.1, 1.0, 10.0]))
    rng = np.random.default_rng(seed)
    mdp = random_mdp(S, A, H, conc, rng)
    return mdp, random_reward(S, A, H, rng), random_policy(S, A, H, rng)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line per criterion and fail the test when it fails."""

    def report(number: int, ok: bool, detail: str) -> None:
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
