import dataclasses

import numpy as np
import pytest

from hybrid_isac.scenario import LinkBudget, OfdmConfig, paper_scenario


@pytest.fixture
def cfg():
    return OfdmConfig()


@pytest.fixture
def lb():
    return LinkBudget()


@pytest.fixture
def sc():
    return paper_scenario()


@pytest.fixture
def sc_mc():
    """Reference scenario with the UE used for the Monte-Carlo runs."""
    return dataclasses.replace(paper_scenario(), ue=np.array([0.0, 300.0]))


def random_geometries(n, seed=0, min_sin=0.05):
    """Random target / UE pairs in the BS half-plane, away from collinearity."""
    rng = np.random.default_rng(seed)
    out_q, out_u = [], []
    while sum(len(a) for a in out_q) < n:
        r = rng.uniform(20, 800, n)
        th = rng.uniform(-1.4, 1.4, n)
        q = np.stack([r * np.cos(th), r * np.sin(th)], -1)
        qu = rng.uniform([-200, -800], [1000, 800], (n, 2))
        d = qu - q
        cross = q[:, 0] * d[:, 1] - q[:, 1] * d[:, 0]
        sin_psi = np.abs(cross) / (np.linalg.norm(q, axis=1) * np.linalg.norm(d, axis=1))
        keep = sin_psi >= min_sin
        out_q.append(q[keep])
        out_u.append(qu[keep])
    return np.concatenate(out_q)[:n], np.concatenate(out_u)[:n]


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
