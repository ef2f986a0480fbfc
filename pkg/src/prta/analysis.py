"""WCDFP estimators under the revised critical instant.

Every estimator bounds ``P[S >= D]`` for the analyzed task, where ``S`` is the
execution time of one job of that task plus ``ceil((D + D_i) / T_i)`` jobs of
every higher-priority task ``i``.  Demand exactly equal to the deadline counts
as a failure, so all methods share the half-open truncation ``[0, D)``.

Methods:

* ``SC``      one job at a time, in release order of the dense release pattern.
* ``AC_ORIG`` per-task k-fold sums by repeated squaring, folded in priority order.
* ``AC_IMP``  same per-task binary pieces, merged smallest-first through a heap.
* ``MC``      direct sampling of ``S``.
* ``BE``      Berry-Esseen normal approximation with an additive error term,
  minimized over the evaluation horizon.
"""

from __future__ import annotations

import heapq
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.stats import norm

from .errors import EmptyTaskSet, ZeroSamples
from .pmf import Pmf, convolve_fft, moments, power_pieces, truncate_and_sum
from .stats import clopper_pearson, halfwidth
from .taskset import Task, TaskSet, rng_stream

# Shevtsova (2010) constant for sums of independent, non-identical summands.
BE_CONSTANT = 0.56

MC_BLOCK_SIZE = 10_000
# cap on uniforms drawn at once per block
_MC_CHUNK = 2_000_000


class Method(str, Enum):
    SC = "SC"
    AC_ORIG = "AC_ORIG"
    AC_IMP = "AC_IMP"
    MC = "MC"
    BE = "BE"

    def __str__(self):
        return self.value


@dataclass
class Diagnostics:
    merge_operand_sum: int = 0
    lost_mass: float = 0.0
    mc_halfwidth: float | None = None
    mc_interval: tuple[float, float] | None = None
    be_t_star: int | None = None
    removed_sum: float | None = None  # accumulated truncate-and-sum mass
    convolutions: int = 0
    final_pmf: Pmf | None = field(default=None, repr=False)


@dataclass
class AnalysisResult:
    wcdfp: float
    method: Method
    wall_time: float
    target: int
    diagnostics: Diagnostics = field(default_factory=Diagnostics)

    def to_dict(self) -> dict:
        d = self.diagnostics
        return {
            "target": self.target,
            "method": str(self.method),
            "wcdfp": self.wcdfp,
            "wall_time_s": self.wall_time,
            "diagnostics": {
                "merge_operand_sum": d.merge_operand_sum,
                "lost_mass": d.lost_mass,
                "mc_halfwidth": d.mc_halfwidth,
                "mc_interval": list(d.mc_interval) if d.mc_interval else None,
                "be_t_star": d.be_t_star,
                "removed_sum": d.removed_sum,
                "convolutions": d.convolutions,
            },
        }


@dataclass(frozen=True)
class ReleaseModel:
    target: int
    horizon: int
    counts: dict[int, int]  # task id -> jobs in S; 0 for lower priority


def release_count(deadline: int, period: int, t: int) -> int:
    """``ceil((t + D_i) / T_i)`` in exact integer arithmetic."""
    return -(-(t + deadline) // period)


def release_model(ts: TaskSet, target: int | None = None, t: int | None = None) -> ReleaseModel:
    tk = _target_task(ts, target)
    if t is None:
        t = tk.deadline
    counts = {}
    for task in ts.tasks:
        if task.id == tk.id:
            counts[task.id] = 1
        elif task.priority > tk.priority:
            counts[task.id] = release_count(task.deadline, task.period, t)
        else:
            counts[task.id] = 0
    return ReleaseModel(tk.id, t, counts)


def _target_task(ts: TaskSet, target: int | None) -> Task:
    if not ts.tasks:
        raise EmptyTaskSet("task set has no tasks")
    if target is None:
        return ts.lowest_priority()
    return ts.task(target)


def _interfering(ts: TaskSet, tk: Task) -> list[Task]:
    """Analyzed task and every higher-priority task, highest priority first."""
    return [t for t in ts.tasks if t.priority >= tk.priority]


def _failure_probability(final: Pmf) -> float:
    return min(1.0, max(0.0, 1.0 - final.total_mass))


# -- convolution methods ---------------------------------------------------


def wcdfp_ac_improved(
    ts: TaskSet, target: int | None = None, *, squaring_truncation: bool = True
) -> AnalysisResult:
    """Aggregate convolution with smallest-first (Huffman) merge order."""
    start = time.perf_counter()
    tk = _target_task(ts, target)
    model = release_model(ts, tk.id)
    dl = tk.deadline
    diag = Diagnostics()

    pdfs: list[Pmf | None] = []
    heap: list[tuple[int, int]] = []
    for task in _interfering(ts, tk):
        pp = power_pieces(task.exec_pmf, model.counts[task.id], dl if squaring_truncation else None)
        diag.lost_mass += pp.lost_mass
        diag.convolutions += pp.squarings
        for piece in pp.pieces:
            heap.append((len(piece), len(pdfs)))
            pdfs.append(piece)
    heapq.heapify(heap)

    removed_sum = 0.0
    while len(heap) > 1:
        size1, idx1 = heapq.heappop(heap)
        size2, idx2 = heapq.heappop(heap)
        merged = convolve_fft(pdfs[idx1], pdfs[idx2])
        diag.lost_mass += merged.lost_mass
        diag.convolutions += 1
        diag.merge_operand_sum += size1 + size2
        merged, removed = truncate_and_sum(merged, dl)
        removed_sum += removed
        pdfs[idx1], pdfs[idx2] = merged, None
        heapq.heappush(heap, (len(merged), idx1))

    # a lone piece never passes through a merge, so cut it here
    final, removed = truncate_and_sum(pdfs[heap[0][1]], dl)
    removed_sum += removed
    diag.removed_sum = removed_sum
    diag.final_pmf = final
    return AnalysisResult(
        _failure_probability(final), Method.AC_IMP, time.perf_counter() - start, tk.id, diag
    )


def wcdfp_ac_orig(
    ts: TaskSet, target: int | None = None, *, squaring_truncation: bool = True
) -> AnalysisResult:
    """Aggregate convolution folding per-task sums in priority order."""
    start = time.perf_counter()
    tk = _target_task(ts, target)
    model = release_model(ts, tk.id)
    dl = tk.deadline
    diag = Diagnostics()

    def fold(acc: Pmf, other: Pmf) -> Pmf:
        diag.merge_operand_sum += len(acc) + len(other)
        diag.convolutions += 1
        out = convolve_fft(acc, other)
        diag.lost_mass += out.lost_mass
        return truncate_and_sum(out, dl)[0]

    acc = None
    for task in _interfering(ts, tk):
        pp = power_pieces(task.exec_pmf, model.counts[task.id], dl if squaring_truncation else None)
        diag.lost_mass += pp.lost_mass
        diag.convolutions += pp.squarings
        task_pmf = pp.pieces[0]
        for piece in pp.pieces[1:]:
            task_pmf = fold(task_pmf, piece)
        acc = task_pmf if acc is None else fold(acc, task_pmf)

    final, _ = truncate_and_sum(acc, dl)
    diag.final_pmf = final
    return AnalysisResult(
        _failure_probability(final), Method.AC_ORIG, time.perf_counter() - start, tk.id, diag
    )


def job_sequence(ts: TaskSet, tk: Task) -> list[tuple[int, Task]]:
    """Jobs of the dense release pattern as ``(arrival, task)``, arrival order.

    Higher-priority task ``i`` releases at ``-D_i + j * T_i``; the analyzed job
    at 0.  Ties go to the higher priority.
    """
    model = release_model(ts, tk.id)
    jobs = [(0, tk)]
    for task in ts.higher_priority(tk.id):
        for j in range(model.counts[task.id]):
            jobs.append((-task.deadline + j * task.period, task))
    jobs.sort(key=lambda job: (job[0], -job[1].priority))
    return jobs


def wcdfp_sc(ts: TaskSet, target: int | None = None) -> AnalysisResult:
    """Sequential convolution, one job at a time with truncation after each step."""
    start = time.perf_counter()
    tk = _target_task(ts, target)
    dl = tk.deadline
    diag = Diagnostics()
    jobs = job_sequence(ts, tk)

    acc, removed_sum = truncate_and_sum(jobs[0][1].exec_pmf, dl)
    for _, task in jobs[1:]:
        diag.merge_operand_sum += len(acc) + len(task.exec_pmf)
        diag.convolutions += 1
        out = convolve_fft(acc, task.exec_pmf)
        diag.lost_mass += out.lost_mass
        acc, removed = truncate_and_sum(out, dl)
        removed_sum += removed
    diag.removed_sum = removed_sum
    diag.final_pmf = acc
    return AnalysisResult(
        _failure_probability(acc), Method.SC, time.perf_counter() - start, tk.id, diag
    )


# -- Monte Carlo -----------------------------------------------------------


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("PRTA_THREADS", "1")))
    except ValueError:
        return 1


def _sample_block(components, deadline: int, n: int, seed: int, block: int) -> int:
    rng = rng_stream(seed, block)
    total = np.zeros(n, dtype=np.int64)
    for cdf, count in components:
        top = cdf.size - 1
        per_chunk = max(1, _MC_CHUNK // n)
        remaining = count
        while remaining:
            k = min(remaining, per_chunk)
            u = rng.random((n, k))
            idx = np.searchsorted(cdf, u, side="right")
            np.minimum(idx, top, out=idx)
            total += idx.sum(axis=1)
            remaining -= k
    return int(np.count_nonzero(total >= deadline))


def wcdfp_mc(
    ts: TaskSet,
    target: int | None = None,
    samples: int = 100_000,
    seed: int = 0,
    *,
    block_size: int = MC_BLOCK_SIZE,
    workers: int | None = None,
) -> AnalysisResult:
    """Fraction of sampled demands ``S`` reaching the deadline.

    Samples are split into fixed blocks, each drawn from the stream
    ``(seed, block)``, so the estimate does not depend on ``workers``.
    """
    if samples < 1:
        raise ZeroSamples("samples must be >= 1")
    start = time.perf_counter()
    tk = _target_task(ts, target)
    model = release_model(ts, tk.id)
    components = []
    for task in _interfering(ts, tk):
        cdf = np.cumsum(task.exec_pmf.probs)
        cdf /= cdf[-1]
        components.append((cdf, model.counts[task.id]))

    nblocks = -(-samples // block_size)
    sizes = [min(block_size, samples - b * block_size) for b in range(nblocks)]
    workers = default_workers() if workers is None else max(1, workers)
    if workers == 1 or nblocks == 1:
        failures = sum(_sample_block(components, tk.deadline, n, seed, b) for b, n in enumerate(sizes))
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            failures = sum(
                pool.map(
                    lambda bn: _sample_block(components, tk.deadline, bn[1], seed, bn[0]),
                    enumerate(sizes),
                )
            )

    interval = clopper_pearson(failures, samples)
    diag = Diagnostics(mc_interval=interval, mc_halfwidth=halfwidth(interval))
    return AnalysisResult(failures / samples, Method.MC, time.perf_counter() - start, tk.id, diag)


# -- Berry-Esseen ----------------------------------------------------------


def be_grid(ts: TaskSet, tk: Task) -> np.ndarray:
    """Right edges of the constant-job-count segments of ``(0, D]``."""
    dl = tk.deadline
    points = [dl]
    for task in ts.higher_priority(tk.id):
        # ceil((t + D_i) / T_i) steps up at t' = j * T_i - D_i + 1
        j = np.arange(1, (dl + task.deadline - 1) // task.period + 1)
        steps = j * task.period - task.deadline + 1
        edges = steps[(steps > 1) & (steps <= dl)] - 1
        points.extend(edges.tolist())
    return np.unique(np.asarray(points, dtype=np.int64))


def be_bound(ts: TaskSet, target: int | None = None, t=None, *, constant: float = BE_CONSTANT):
    """Berry-Esseen bound on ``P[S_t >= t]`` for each horizon in ``t``."""
    tk = _target_task(ts, target)
    grid = np.atleast_1d(np.asarray(tk.deadline if t is None else t, dtype=np.int64))
    m = moments(tk.exec_pmf)
    mean = np.full(grid.shape, m.mean)
    var = np.full(grid.shape, m.variance)
    rho = np.full(grid.shape, m.rho3)
    for task in ts.higher_priority(tk.id):
        mi = moments(task.exec_pmf)
        counts = -(-(grid + task.deadline) // task.period)
        mean += counts * mi.mean
        var += counts * mi.variance
        rho += counts * mi.rho3
    bound = np.empty(grid.shape)
    degenerate = var <= 0.0
    bound[degenerate] = (mean[degenerate] >= grid[degenerate]).astype(float)
    ok = ~degenerate
    sd = np.sqrt(var[ok])
    # S >= t  <=>  S > t - 1 on the tick grid
    z = (grid[ok] - 1 - mean[ok]) / sd
    bound[ok] = norm.sf(z) + constant * rho[ok] / (var[ok] * sd)
    return grid, np.clip(bound, 0.0, 1.0)


def wcdfp_be(ts: TaskSet, target: int | None = None, *, constant: float = BE_CONSTANT) -> AnalysisResult:
    start = time.perf_counter()
    tk = _target_task(ts, target)
    grid, bound = be_bound(ts, tk.id, be_grid(ts, tk), constant=constant)
    best = int(np.argmin(bound))
    diag = Diagnostics(be_t_star=int(grid[best]))
    return AnalysisResult(float(bound[best]), Method.BE, time.perf_counter() - start, tk.id, diag)


ESTIMATORS = {
    Method.SC: wcdfp_sc,
    Method.AC_ORIG: wcdfp_ac_orig,
    Method.AC_IMP: wcdfp_ac_improved,
    Method.MC: wcdfp_mc,
    Method.BE: wcdfp_be,
}


def analyze(ts: TaskSet, method: Method | str, target: int | None = None, **kwargs) -> AnalysisResult:
    return ESTIMATORS[Method(method)](ts, target, **kwargs)
