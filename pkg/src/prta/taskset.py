"""Sporadic task model, synthetic task-set generator and JSON format.

Execution-time distributions are a two-component normal mixture in units of
the task's WCET, truncated to ``[0, WCET]`` and binned to whole ticks by CDF
differences (bin ``k`` holds the mass of ``[k - 1/2, k + 1/2)`` clipped to the
support), then renormalized.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.special import ndtr

from .errors import (
    EmptyRange,
    InfeasibleTotal,
    InvariantViolation,
    PrtaError,
    SchemaVersionMismatch,
    UnknownTask,
    WcetBelowResolution,
)
from .pmf import MASS_TOL, Pmf, pmf_from_pairs

SCHEMA_VERSION = 1

WCET_UTILIZATION = "wcet-utilization"
MEAN_UTILIZATION = "mean-utilization"
WCET_MODES = (WCET_UTILIZATION, MEAN_UTILIZATION)

# independent RNG stream indices under one root seed
STREAM_PERIODS = 0
STREAM_UTILIZATIONS = 1


@dataclass(frozen=True)
class Task:
    id: int
    period: int  # ticks
    deadline: int  # ticks, constrained: deadline <= period
    priority: int  # larger value = higher priority
    wcet: int  # ticks
    exec_pmf: Pmf

    def __post_init__(self):
        if self.period < 1:
            raise InvariantViolation(f"task {self.id}: period must be >= 1 tick")
        if not 1 <= self.deadline <= self.period:
            raise InvariantViolation(
                f"task {self.id}: deadline {self.deadline} outside [1, period={self.period}]"
            )
        if self.wcet < 0:
            raise InvariantViolation(f"task {self.id}: negative wcet")
        if self.exec_pmf.max_tick > self.wcet:
            raise InvariantViolation(f"task {self.id}: execution support exceeds wcet")
        if abs(self.exec_pmf.total_mass - 1.0) > MASS_TOL:
            raise InvariantViolation(
                f"task {self.id}: execution pmf mass {self.exec_pmf.total_mass!r} != 1"
            )

    @property
    def utilization(self) -> float:
        return self.wcet / self.period


@dataclass(frozen=True)
class TaskSet:
    """Tasks kept sorted by descending priority."""

    tasks: tuple[Task, ...]
    gamma: float = 1e-6  # seconds per tick
    seed: int | None = None
    config_hash: str | None = None

    def __post_init__(self):
        tasks = tuple(sorted(self.tasks, key=lambda t: -t.priority))
        object.__setattr__(self, "tasks", tasks)
        if not self.gamma > 0:
            raise InvariantViolation("gamma must be positive")
        if len({t.priority for t in tasks}) != len(tasks):
            raise InvariantViolation("task priorities must be unique")
        if len({t.id for t in tasks}) != len(tasks):
            raise InvariantViolation("task ids must be unique")

    def __len__(self):
        return len(self.tasks)

    def __iter__(self):
        return iter(self.tasks)

    def task(self, task_id: int) -> Task:
        for t in self.tasks:
            if t.id == task_id:
                return t
        raise UnknownTask(f"no task with id {task_id}")

    def higher_priority(self, task_id: int) -> list[Task]:
        """Tasks with strictly higher priority than ``task_id``, highest first."""
        pri = self.task(task_id).priority
        return [t for t in self.tasks if t.priority > pri]

    def lowest_priority(self) -> Task:
        return self.tasks[-1]

    @property
    def utilization(self) -> float:
        return sum(t.utilization for t in self.tasks)


@dataclass(frozen=True)
class GeneratorConfig:
    n_tasks: int
    total_utilization: float
    period_range: tuple[float, float] = (0.010, 1.0)  # seconds
    w_normal: float = 0.95
    w_abnormal: float = 0.05
    # component parameters as divisors of the WCET: mu = WCET / mu_div, ...
    mu_div: float = 3.0
    sigma_div: float = 6.0
    mu_abn_div: float = 1.2
    sigma_abn_div: float = 30.0
    gamma: float = 1e-6
    wcet_mode: str = WCET_UTILIZATION
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "period_range", tuple(float(x) for x in self.period_range))
        if self.n_tasks < 1:
            raise PrtaError("n_tasks must be >= 1")
        if not 0 < self.total_utilization < self.n_tasks:
            raise InfeasibleTotal(
                f"total utilization {self.total_utilization} outside (0, {self.n_tasks})"
            )
        if not self.gamma > 0:
            raise PrtaError("gamma must be positive")
        if self.period_range[0] < self.gamma:
            raise EmptyRange("minimum period shorter than one tick")
        if abs(self.w_normal + self.w_abnormal - 1.0) > 1e-12:
            raise PrtaError("mixture weights must sum to 1")
        if self.wcet_mode not in WCET_MODES:
            raise PrtaError(f"unknown wcet_mode {self.wcet_mode!r}")

    def components(self) -> list[tuple[float, float, float]]:
        """``(weight, mean, sd)`` of each mixture component for WCET = 1."""
        return [
            (self.w_normal, 1.0 / self.mu_div, 1.0 / self.sigma_div),
            (self.w_abnormal, 1.0 / self.mu_abn_div, 1.0 / self.sigma_abn_div),
        ]

    def config_hash(self) -> str:
        d = dataclasses.asdict(self)
        d.pop("seed")
        blob = json.dumps(d, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


DEFAULT_CONFIG_SHAPE = GeneratorConfig(n_tasks=1, total_utilization=0.5)


def rng_stream(seed: int, *key: int) -> np.random.Generator:
    """Generator for the stream ``(seed, *key)``; streams are independent."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=tuple(key)))


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def generate_periods(
    n: int, period_range: tuple[float, float], rng: np.random.Generator, gamma: float = 1e-6
) -> list[int]:
    """Log-uniform periods in ticks."""
    lo, hi = period_range
    if not (lo > 0 and hi > lo):
        raise EmptyRange(f"invalid period range {period_range!r}")
    lo_t = math.ceil(lo / gamma - 1e-9)
    hi_t = math.floor(hi / gamma + 1e-9)
    if hi_t < lo_t:
        raise EmptyRange("period range contains no whole tick")
    draws = np.exp(rng.uniform(math.log(lo), math.log(hi), size=n)) / gamma
    ticks = np.clip(np.floor(draws + 0.5), lo_t, hi_t).astype(np.int64)
    return [int(x) for x in ticks]


def generate_utilizations(
    n: int, total: float, rng: np.random.Generator, max_attempts: int = 100_000
) -> list[float]:
    """Flat-Dirichlet utilization split, redrawn until every share is <= 1."""
    if not 0 < total < n:
        raise InfeasibleTotal(f"total utilization {total} outside (0, {n})")
    alpha = np.ones(n)
    for _ in range(max_attempts):
        u = rng.dirichlet(alpha) * total
        if u.min() > 0 and u.max() <= 1.0:
            u *= total / u.sum()
            return [float(x) for x in u]
    raise InfeasibleTotal(f"no split with all shares <= 1 after {max_attempts} draws")


def _interval_mass(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Standard normal mass of [a, b], evaluated on the tail side for accuracy."""
    upper = a >= 0
    return np.where(upper, ndtr(-a) - ndtr(-b), ndtr(b) - ndtr(a))


def mixture_mean_ratio(cfg: GeneratorConfig = DEFAULT_CONFIG_SHAPE) -> float:
    """E[Z] for the truncated mixture on [0, 1] (WCET = 1), in closed form."""
    num = den = 0.0
    for w, mu, sd in cfg.components():
        alpha, beta = (0.0 - mu) / sd, (1.0 - mu) / sd
        z = float(_interval_mass(np.array(alpha), np.array(beta)))
        pdf_a = math.exp(-0.5 * alpha * alpha) / math.sqrt(2 * math.pi)
        pdf_b = math.exp(-0.5 * beta * beta) / math.sqrt(2 * math.pi)
        num += w * (mu * z + sd * (pdf_a - pdf_b))
        den += w * z
    return num / den


def derive_wcet(u: float, period: int, mode: str = WCET_UTILIZATION, kappa: float | None = None) -> int:
    """WCET in ticks for utilization ``u`` of a task with the given period.

    In mean-utilization mode the WCET is scaled so that the mean execution
    time, ``kappa * wcet``, is about ``u * period``.
    """
    if not 0 < u <= 1:
        raise PrtaError(f"utilization {u} outside (0, 1]")
    if mode == WCET_UTILIZATION:
        raw = u * period
    elif mode == MEAN_UTILIZATION:
        if kappa is None:
            kappa = mixture_mean_ratio()
        raw = u * period / kappa
    else:
        raise PrtaError(f"unknown wcet mode {mode!r}")
    wcet = _round_half_up(raw)
    if wcet < 1:
        raise WcetBelowResolution(f"wcet {raw:.3g} ticks rounds below one tick")
    return wcet


def build_execution_pmf(wcet: int, cfg: GeneratorConfig = DEFAULT_CONFIG_SHAPE) -> Pmf:
    if wcet < 1:
        raise WcetBelowResolution("wcet must be at least one tick")
    k = np.arange(wcet + 1, dtype=np.float64)
    lo = np.clip(k - 0.5, 0.0, wcet)
    hi = np.clip(k + 0.5, 0.0, wcet)
    mass = np.zeros(wcet + 1)
    for w, mu, sd in cfg.components():
        mu_t, sd_t = mu * wcet, sd * wcet
        mass += w * _interval_mass((lo - mu_t) / sd_t, (hi - mu_t) / sd_t)
    mass /= mass.sum()
    return Pmf(mass)


def assign_rm_priorities(
    tasks: Iterable[Task],
    *,
    gamma: float = 1e-6,
    explicit_deadlines: bool = False,
    seed: int | None = None,
    config_hash: str | None = None,
) -> TaskSet:
    """Rate-monotonic priorities: shorter period first, lower id on ties.

    Deadlines are reset to the period unless ``explicit_deadlines``.
    """
    tasks = list(tasks)
    order = sorted(tasks, key=lambda t: (t.period, t.id))
    n = len(order)
    out = []
    for rank, t in enumerate(order):
        out.append(
            dataclasses.replace(
                t,
                priority=n - rank,
                deadline=t.deadline if explicit_deadlines else t.period,
            )
        )
    return TaskSet(tuple(out), gamma=gamma, seed=seed, config_hash=config_hash)


def generate_taskset(cfg: GeneratorConfig) -> TaskSet:
    """Draw one task set; identical ``cfg`` gives an identical task set."""
    periods = generate_periods(
        cfg.n_tasks, cfg.period_range, rng_stream(cfg.seed, STREAM_PERIODS), cfg.gamma
    )
    utils = generate_utilizations(
        cfg.n_tasks, cfg.total_utilization, rng_stream(cfg.seed, STREAM_UTILIZATIONS)
    )
    kappa = mixture_mean_ratio(cfg)
    tasks = []
    for i, (period, u) in enumerate(zip(periods, utils)):
        try:
            wcet = derive_wcet(u, period, cfg.wcet_mode, kappa)
        except WcetBelowResolution:
            # shares this small are noise at the grid resolution
            wcet = 1
        tasks.append(Task(i, period, period, 0, wcet, build_execution_pmf(wcet, cfg)))
    return assign_rm_priorities(
        tasks, gamma=cfg.gamma, seed=cfg.seed, config_hash=cfg.config_hash()
    )


# -- JSON ------------------------------------------------------------------


def _fmt_prob(p: float) -> str:
    return f"{p:.17g}"


def taskset_to_dict(ts: TaskSet) -> dict:
    tasks = []
    for t in sorted(ts.tasks, key=lambda t: t.id):
        probs = t.exec_pmf.probs
        nz = np.flatnonzero(probs)
        start = int(nz[0]) if nz.size else 0
        tasks.append(
            {
                "id": t.id,
                "period_ticks": t.period,
                "deadline_ticks": t.deadline,
                "priority": t.priority,
                "wcet_ticks": t.wcet,
                "exec_pmf": {
                    "start_tick": start,
                    "probs": [_fmt_prob(float(p)) for p in probs[start:]],
                },
            }
        )
    return {
        "schema_version": SCHEMA_VERSION,
        "gamma_seconds": ts.gamma,
        "seed": ts.seed,
        "config_hash": ts.config_hash,
        "tasks": tasks,
    }


def taskset_from_dict(d: dict) -> TaskSet:
    if d.get("schema_version") != SCHEMA_VERSION:
        raise SchemaVersionMismatch(
            f"expected schema_version {SCHEMA_VERSION}, got {d.get('schema_version')!r}"
        )
    try:
        tasks = []
        for rec in d["tasks"]:
            pm = rec["exec_pmf"]
            probs = np.zeros(int(pm["start_tick"]) + len(pm["probs"]))
            probs[int(pm["start_tick"]) :] = [float(p) for p in pm["probs"]]
            tasks.append(
                Task(
                    int(rec["id"]),
                    int(rec["period_ticks"]),
                    int(rec["deadline_ticks"]),
                    int(rec["priority"]),
                    int(rec["wcet_ticks"]),
                    Pmf(probs),
                )
            )
        return TaskSet(
            tuple(tasks),
            gamma=float(d["gamma_seconds"]),
            seed=d.get("seed"),
            config_hash=d.get("config_hash"),
        )
    except InvariantViolation:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise InvariantViolation(f"malformed task set: {exc}") from exc


def dumps_taskset(ts: TaskSet) -> str:
    return json.dumps(taskset_to_dict(ts), indent=1) + "\n"


def save_taskset(ts: TaskSet, path: str | Path) -> None:
    Path(path).write_text(dumps_taskset(ts))


def load_taskset(path: str | Path) -> TaskSet:
    return taskset_from_dict(json.loads(Path(path).read_text()))


def make_taskset(specs: Sequence[dict], gamma: float = 1e-6) -> TaskSet:
    """Hand-built task set from dicts with keys ``pmf`` (pairs or Pmf), ``period``,
    optional ``deadline``, ``priority`` and ``wcet``.  Ids follow list order and,
    absent explicit priorities, earlier entries get higher priority."""
    tasks = []
    n = len(specs)
    for i, s in enumerate(specs):
        pmf = s["pmf"]
        if not isinstance(pmf, Pmf):
            pmf = pmf_from_pairs(pmf)
        tasks.append(
            Task(
                id=s.get("id", i),
                period=s["period"],
                deadline=s.get("deadline", s["period"]),
                priority=s.get("priority", n - i),
                wcet=s.get("wcet", pmf.max_tick),
                exec_pmf=pmf,
            )
        )
    return TaskSet(tuple(tasks), gamma=gamma)
