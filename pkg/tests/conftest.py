from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import strategies as st

from prta.analysis import job_sequence
from prta.pmf import Pmf
from prta.simulator import random_arrivals, sample_executions
from prta.taskset import TaskSet, make_taskset


def enumerate_failure(ts: TaskSet, target: int | None = None) -> float:
    """P[S >= D] by walking the full outcome product space of every job.

    Each job contributes its support points as separate outcomes; the state
    is the flat list of (demand, probability) over all combinations so far,
    never binned or truncated.
    """
    tk = ts.lowest_priority() if target is None else ts.task(target)
    demand = np.zeros(1, dtype=np.int64)
    prob = np.ones(1)
    for _, task in job_sequence(ts, tk):
        pts = task.exec_pmf.support()
        ps = task.exec_pmf.probs[pts]
        demand = (demand[:, None] + pts[None, :]).ravel()
        prob = (prob[:, None] * ps[None, :]).ravel()
    return math.fsum(prob[demand >= tk.deadline].tolist())


def outcome_space_size(ts: TaskSet, target: int | None = None) -> int:
    tk = ts.lowest_priority() if target is None else ts.task(target)
    size = 1
    for _, task in job_sequence(ts, tk):
        size *= task.exec_pmf.support().size
    return size


def random_pmf(rng: np.random.Generator, points: int, max_tick: int) -> Pmf:
    ticks = rng.choice(max_tick + 1, size=min(points, max_tick + 1), replace=False)
    w = rng.dirichlet(np.ones(ticks.size))
    arr = np.zeros(max_tick + 1)
    arr[ticks] = w
    arr /= arr.sum()
    return Pmf(arr)


def random_tiny_taskset(rng: np.random.Generator, max_outcomes: int = 1 << 18) -> TaskSet:
    """At most 4 tasks, at most 4 support points each, target deadline <= 32."""
    while True:
        n = int(rng.integers(1, 5))
        d_target = int(rng.integers(4, 33))
        specs = []
        for _ in range(n - 1):
            period = int(rng.integers(max(2, d_target // 2), 33))
            deadline = int(rng.integers(1, period + 1))
            specs.append(
                {"pmf": random_pmf(rng, int(rng.integers(1, 5)), max(1, d_target // 3)),
                 "period": period, "deadline": deadline}
            )
        specs.append(
            {"pmf": random_pmf(rng, int(rng.integers(1, 5)), max(1, d_target // 2)),
             "period": int(rng.integers(d_target, 40)), "deadline": d_target}
        )
        ts = make_taskset(specs)
        if outcome_space_size(ts) <= max_outcomes:
            return ts


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_scenario(seed: int, n_tasks: int = 5, horizon: int = 200):
    rng = np.random.default_rng(seed)
    specs = []
    for _ in range(n_tasks):
        period = int(rng.integers(8, 60))
        specs.append(
            {"pmf": random_pmf(rng, 3, int(rng.integers(1, max(2, period // 2)))),
             "period": period, "deadline": int(rng.integers(max(1, period // 2), period + 1))}
        )
    ts = make_taskset(specs)
    xi = random_arrivals(list(ts.tasks), horizon, rng)
    return ts, xi, sample_executions(list(ts.tasks), xi, rng)


@pytest.fixture
def two_task_075() -> TaskSet:
    # hi: C={1:.5, 2:.5}, T=D=4; target: C={1:1}, D=4
    return make_taskset(
        [
            {"pmf": [(1, 0.5), (2, 0.5)], "period": 4},
            {"pmf": [(1, 1.0)], "period": 4},
        ]
    )


@pytest.fixture
def single_task_01() -> TaskSet:
    return make_taskset([{"pmf": [(1, 0.9), (3, 0.1)], "period": 2, "deadline": 2, "wcet": 3}])


@st.composite
def pmfs(draw, max_len: int = 64, normalized: bool = True):
    n = draw(st.integers(1, max_len))
    w = draw(st.lists(st.floats(0.0, 1.0), min_size=n, max_size=n))
    w[-1] = max(w[-1], 1e-3)
    arr = np.asarray(w)
    arr = arr / arr.sum()
    if not normalized:
        arr = arr * draw(st.floats(0.1, 1.0))
    return Pmf(arr)
