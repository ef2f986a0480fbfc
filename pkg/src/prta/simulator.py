"""Fully preemptive fixed-priority uniprocessor simulator with deadline aborts.

Time advances from event to event (release, completion, deadline); between
events the highest-priority ready job runs, which is the same schedule a
tick-by-tick loop would produce.  At a tick boundary ``t`` the order is:
completions at ``t``, releases at ``t``, aborts of unfinished jobs whose
absolute deadline is ``t``, then dispatch.  A job finishing exactly at its
deadline therefore meets it.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidArrivalSequence, MissingSample, SampleOutOfRange, ZeroScenarios
from .stats import clopper_pearson, halfwidth
from .taskset import Task, TaskSet, rng_stream


@dataclass
class ArrivalSequence:
    releases: dict[int, list[int]]  # task id -> sorted release ticks
    horizon: int

    def validate(self, ts: TaskSet) -> None:
        for task_id, rels in self.releases.items():
            task = ts.task(task_id)
            for r in rels:
                if not 0 <= r < self.horizon:
                    raise InvalidArrivalSequence(f"task {task_id}: release {r} outside [0, horizon)")
            for a, b in zip(rels, rels[1:]):
                if b - a < task.period:
                    raise InvalidArrivalSequence(
                        f"task {task_id}: releases {a} and {b} closer than period {task.period}"
                    )


@dataclass
class JobRecord:
    task_id: int
    index: int  # j-th job of its task, from 0
    priority: int
    release: int
    deadline: int  # absolute
    exec_time: int
    service: int = 0
    completion: int | None = None
    aborted: bool = False
    leftover: int = 0

    @property
    def response_time(self) -> int | None:
        return None if self.completion is None else self.completion - self.release


@dataclass
class ScheduleTrace:
    jobs: list[JobRecord]
    # maximal runs (start, end, job position in ``jobs``), end exclusive
    segments: list[tuple[int, int, int]] = field(default_factory=list)

    def jobs_of(self, task_id: int) -> list[JobRecord]:
        return [j for j in self.jobs if j.task_id == task_id]

    def service_until(self, pos: int, t: int) -> int:
        """Ticks job ``pos`` executed in ``[release, t)``."""
        rel = self.jobs[pos].release
        return sum(max(0, min(e, t) - max(s, rel)) for s, e, p in self.segments if p == pos)

    def dump_jsonl(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            for j in self.jobs:
                rec = asdict(j)
                rec["response_time"] = j.response_time
                fh.write(json.dumps(rec) + "\n")


def simulate(ts: TaskSet, xi: ArrivalSequence, exec_samples: dict[int, list[int]]) -> ScheduleTrace:
    """Run the schedule for ``xi`` with one sampled execution time per job."""
    xi.validate(ts)
    jobs: list[JobRecord] = []
    for task in ts.tasks:
        rels = xi.releases.get(task.id, [])
        samples = exec_samples.get(task.id, [])
        if len(samples) != len(rels):
            raise MissingSample(
                f"task {task.id}: {len(rels)} releases but {len(samples)} execution samples"
            )
        for j, (r, c) in enumerate(zip(rels, samples)):
            if not 0 <= c <= task.wcet:
                raise SampleOutOfRange(f"task {task.id} job {j}: sample {c} outside [0, {task.wcet}]")
            jobs.append(JobRecord(task.id, j, task.priority, r, r + task.deadline, int(c)))
    jobs.sort(key=lambda j: (j.release, -j.priority))

    segments: list[tuple[int, int, int]] = []
    # positions of released, unfinished jobs mapped to remaining work; a task can
    # briefly hold two entries when a release coincides with the previous deadline
    remaining: dict[int, int] = {}
    nxt = 0
    n = len(jobs)
    t = 0
    while nxt < n or remaining:
        while nxt < n and jobs[nxt].release <= t:
            job = jobs[nxt]
            if job.exec_time == 0:
                job.completion = job.release
            else:
                remaining[nxt] = job.exec_time
            nxt += 1
        for pos in [p for p in remaining if jobs[p].deadline <= t]:
            jobs[pos].aborted = True
            jobs[pos].leftover = remaining.pop(pos)
        if not remaining:
            if nxt < n:
                t = jobs[nxt].release
                continue
            break
        run = max(remaining, key=lambda p: jobs[p].priority)
        stop = t + remaining[run]
        if nxt < n:
            stop = min(stop, jobs[nxt].release)
        stop = min(stop, min(jobs[p].deadline for p in remaining))
        dt = stop - t
        job = jobs[run]
        job.service += dt
        remaining[run] -= dt
        if segments and segments[-1][2] == run and segments[-1][1] == t:
            segments[-1] = (segments[-1][0], stop, run)
        else:
            segments.append((t, stop, run))
        if remaining[run] == 0:
            job.completion = stop
            del remaining[run]
        t = stop
    return ScheduleTrace(jobs, segments)


def check_dispatch(trace: ScheduleTrace) -> bool:
    """Work conservation and priority order, checked segment by segment."""
    jobs = trace.jobs
    # ready intervals: [release, completion or abort)
    ends = [j.completion if j.completion is not None else j.deadline for j in jobs]
    busy: list[tuple[int, int]] = []
    for s, e, pos in trace.segments:
        if e <= s:
            return False
        for q, other in enumerate(jobs):
            if q == pos or other.exec_time == 0:
                continue
            # another ready job of higher priority overlapping the segment
            if other.priority > jobs[pos].priority and other.release < e and ends[q] > s:
                return False
        busy.append((s, e))
    busy.sort()
    for (s1, e1), (s2, e2) in zip(busy, busy[1:]):
        if s2 < e1:
            return False
    # every tick with a ready job must be covered
    for q, job in enumerate(jobs):
        if job.exec_time == 0:
            continue
        covered = 0
        for s, e in busy:
            covered += max(0, min(e, ends[q]) - max(s, job.release))
        if covered != ends[q] - job.release:
            return False
    return True


@dataclass
class RtCheck:
    ok: bool
    job: JobRecord | None = None
    expected: int | None = None  # response time from the demand formulation
    observed: int | None = None

    def __bool__(self) -> bool:
        return self.ok


def demand_response_time(trace: ScheduleTrace, ts: TaskSet, pos: int) -> int | None:
    """Earliest ``d > 0`` with processor demand over ``[a, a + d)`` at most ``d``.

    Demand is the carry-in of strictly higher-priority jobs at ``a`` plus the
    work released in the window by tasks of equal or higher priority, minus
    what those jobs lose to aborts inside the window.  Returns ``None`` when no
    ``d <= D_i`` qualifies.  Jobs released exactly at ``a`` count as workload
    only, not as carry-in.
    """
    jobs = trace.jobs
    job = jobs[pos]
    a = job.release
    horizon = ts.task(job.task_id).deadline
    delta = np.zeros(horizon + 2, dtype=np.int64)
    carry_in = 0
    for q, other in enumerate(jobs):
        if other.priority < job.priority:
            continue
        if other.release < a:
            if other.priority == job.priority or other.deadline <= a:
                continue
            carry_in += other.exec_time - trace.service_until(q, a)
        elif other.release < a + horizon:
            delta[other.release - a + 1] += other.exec_time
        else:
            continue
        off = other.deadline - a
        if off < horizon + 1:
            delta[off + 1] -= other.exec_time - trace.service_until(q, other.deadline)
    demand = carry_in + np.cumsum(delta)
    d = np.arange(horizon + 2)
    hits = np.flatnonzero((demand[1 : horizon + 1] <= d[1 : horizon + 1]))
    return int(hits[0]) + 1 if hits.size else None


def response_time_check(trace: ScheduleTrace, ts: TaskSet, xi: ArrivalSequence | None = None) -> RtCheck:
    """Compare every job's simulated outcome with the demand-based response time."""
    for pos, job in enumerate(trace.jobs):
        if job.exec_time == 0:
            continue
        expected = demand_response_time(trace, ts, pos)
        observed = job.response_time
        if job.aborted:
            observed = None
        if expected != observed:
            return RtCheck(False, job, expected, observed)
    return RtCheck(True)


# -- scenario generation ---------------------------------------------------


def random_arrivals(
    tasks: list[Task], horizon: int, rng: np.random.Generator, synchronous: bool = False
) -> ArrivalSequence:
    """Sporadic releases: period plus exponential slack with mean period/10."""
    releases = {}
    for task in tasks:
        t = 0 if synchronous else int(rng.integers(0, task.period))
        rels = []
        while t < horizon:
            rels.append(t)
            t += task.period + int(np.rint(rng.exponential(task.period / 10.0)))
        releases[task.id] = rels
    return ArrivalSequence(releases, horizon)


def sample_executions(
    tasks: list[Task], xi: ArrivalSequence, rng: np.random.Generator
) -> dict[int, list[int]]:
    out = {}
    for task in tasks:
        cdf = np.cumsum(task.exec_pmf.probs)
        cdf /= cdf[-1]
        k = len(xi.releases.get(task.id, []))
        idx = np.minimum(np.searchsorted(cdf, rng.random(k), side="right"), cdf.size - 1)
        out[task.id] = [int(x) for x in idx]
    return out


@dataclass
class DfpEstimate:
    rate: float
    ci_halfwidth: float
    interval: tuple[float, float]
    misses: int
    jobs: int


def empirical_dfp(
    ts: TaskSet,
    target: int | None = None,
    scenarios: int = 10_000,
    seed: int = 0,
    *,
    horizon: int | None = None,
    synchronous: bool = False,
) -> DfpEstimate:
    """Observed deadline-miss fraction of the target task over random scenarios.

    Lower-priority tasks cannot delay the target and are not simulated.
    """
    if scenarios < 1:
        raise ZeroScenarios("scenarios must be >= 1")
    tk = ts.lowest_priority() if target is None else ts.task(target)
    tasks = [t for t in ts.tasks if t.priority >= tk.priority]
    sub = TaskSet(tuple(tasks), gamma=ts.gamma)
    if horizon is None:
        horizon = 2 * max(t.period for t in tasks)
    misses = total = 0
    for s in range(scenarios):
        rng = rng_stream(seed, s)
        xi = random_arrivals(tasks, horizon, rng, synchronous)
        trace = simulate(sub, xi, sample_executions(tasks, xi, rng))
        for job in trace.jobs:
            if job.task_id == tk.id:
                total += 1
                misses += job.aborted
    interval = clopper_pearson(misses, total)
    return DfpEstimate(misses / total, halfwidth(interval), interval, misses, total)
