"""Experiment matrix, result tables, ratio summaries and static plots."""

from __future__ import annotations

import csv
import json
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence
from xml.sax.saxutils import escape

import numpy as np

from .analysis import Method, analyze, default_workers
from .errors import MissingMethodRows, PrtaError
from .taskset import WCET_UTILIZATION, GeneratorConfig, TaskSet, generate_taskset

LOWEST = "lowest-priority"
ALL_TASKS = "all-tasks"

CSV_HEADER = [
    "taskset_id",
    "n",
    "utilization",
    "target",
    "method",
    "wcdfp",
    "wall_time_s",
    "merge_operand_sum",
    "lost_mass",
    "mc_halfwidth",
    "error",
]

PAPER_CARDINALITIES = tuple(range(10, 101, 10))
PAPER_UTILIZATIONS = (0.60, 0.65, 0.70)


@dataclass
class ExperimentConfig:
    cardinalities: Sequence[int] = PAPER_CARDINALITIES
    utilizations: Sequence[float] = PAPER_UTILIZATIONS
    sets_per_cell: int = 50
    methods: Sequence[Method] = tuple(Method)
    mc_samples: int = 100_000
    seed: int = 0
    gamma: float = 1e-6
    target_policy: str | int = LOWEST
    output_dir: Path | None = None
    period_range: tuple[float, float] = (0.010, 1.0)
    wcet_mode: str = WCET_UTILIZATION
    repeat: int = 1
    workers: int | None = None

    def __post_init__(self):
        self.methods = tuple(Method(m) for m in self.methods)
        if self.sets_per_cell < 1:
            raise PrtaError("sets_per_cell must be >= 1")
        if not self.methods:
            raise PrtaError("at least one method is required")
        if self.repeat < 1:
            raise PrtaError("repeat must be >= 1")


@dataclass
class ResultRow:
    taskset_id: str
    n: int
    utilization: float
    target: int
    method: str
    wcdfp: float
    wall_time_s: float
    merge_operand_sum: int = 0
    lost_mass: float = 0.0
    mc_halfwidth: float | None = None
    error: str = ""

    @property
    def failed(self) -> bool:
        return bool(self.error)


@dataclass
class ResultTable:
    rows: list[ResultRow] = field(default_factory=list)

    def __len__(self):
        return len(self.rows)

    def for_method(self, method: Method | str) -> list[ResultRow]:
        m = str(Method(method))
        return [r for r in self.rows if r.method == m]

    def methods(self) -> list[str]:
        return sorted({r.method for r in self.rows})


def derive_seed(*parts: int) -> int:
    """64-bit seed from a tuple of non-negative integers."""
    return int(np.random.SeedSequence(list(parts)).generate_state(1, np.uint64)[0])


def taskset_seed(root: int, n: int, utilization: float, index: int) -> int:
    return derive_seed(root, n, int(round(utilization * 1_000_000)), index)


def cell_taskset(cfg: ExperimentConfig, n: int, u: float, index: int) -> TaskSet:
    gen = GeneratorConfig(
        n_tasks=n,
        total_utilization=u,
        period_range=cfg.period_range,
        gamma=cfg.gamma,
        wcet_mode=cfg.wcet_mode,
        seed=taskset_seed(cfg.seed, n, u, index),
    )
    return generate_taskset(gen)


def select_targets(ts: TaskSet, policy: str | int) -> list[int]:
    if policy == LOWEST:
        return [ts.lowest_priority().id]
    if policy == ALL_TASKS:
        return [t.id for t in ts.tasks]
    return [ts.task(int(policy)).id]


def _run_method(ts: TaskSet, target: int, method: Method, cfg: ExperimentConfig):
    kwargs = {}
    if method is Method.MC:
        kwargs = {"samples": cfg.mc_samples, "seed": derive_seed(ts.seed or 0, target)}
    results = [analyze(ts, method, target, **kwargs) for _ in range(cfg.repeat)]
    res = results[0]
    res.wall_time = statistics.median(r.wall_time for r in results)
    return res


def _run_taskset(job: tuple[ExperimentConfig, int, float, int]) -> list[ResultRow]:
    cfg, n, u, index = job
    ts = cell_taskset(cfg, n, u, index)
    ts_id = f"n{n}-u{u:g}-s{index}"
    rows = []
    for target in select_targets(ts, cfg.target_policy):
        for method in cfg.methods:
            try:
                res = _run_method(ts, target, method, cfg)
            except Exception as exc:  # one bad row must not abort the batch
                rows.append(
                    ResultRow(ts_id, n, u, target, str(method), math.nan, math.nan,
                              error=f"{type(exc).__name__}: {exc}")
                )
                continue
            d = res.diagnostics
            rows.append(
                ResultRow(ts_id, n, u, target, str(method), res.wcdfp, res.wall_time,
                          d.merge_operand_sum, d.lost_mass, d.mc_halfwidth)
            )
    return rows


def run_experiment(cfg: ExperimentConfig) -> ResultTable:
    """Generate every task set of the matrix and run each method on it.

    Row order is fixed by (n, U, set index, target, method) whatever the
    worker count.
    """
    jobs = [
        (cfg, n, u, i)
        for n in cfg.cardinalities
        for u in cfg.utilizations
        for i in range(cfg.sets_per_cell)
    ]
    workers = cfg.workers or default_workers()
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_run_taskset, jobs))
    else:
        chunks = [_run_taskset(j) for j in jobs]
    table = ResultTable([row for chunk in chunks for row in chunk])
    if cfg.output_dir is not None:
        write_outputs(table, Path(cfg.output_dir))
    return table


# -- CSV -------------------------------------------------------------------


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return f"{x:.17g}"
    return str(x)


def emit_csv(table: ResultTable, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in table.rows:
            w.writerow([_fmt(getattr(r, col)) for col in CSV_HEADER])


def read_csv(path: str | Path) -> ResultTable:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_HEADER:
            raise PrtaError(f"unexpected CSV header {reader.fieldnames!r}")
        for rec in reader:
            rows.append(
                ResultRow(
                    taskset_id=rec["taskset_id"],
                    n=int(rec["n"]),
                    utilization=float(rec["utilization"]),
                    target=int(rec["target"]),
                    method=rec["method"],
                    wcdfp=float(rec["wcdfp"]),
                    wall_time_s=float(rec["wall_time_s"]),
                    merge_operand_sum=int(rec["merge_operand_sum"]),
                    lost_mass=float(rec["lost_mass"]),
                    mc_halfwidth=float(rec["mc_halfwidth"]) if rec["mc_halfwidth"] else None,
                    error=rec["error"],
                )
            )
    return ResultTable(rows)


# -- comparisons -----------------------------------------------------------


@dataclass
class RatioPoint:
    taskset_id: str
    target: int
    wcdfp_ratio: float  # contender / baseline
    time_ratio: float


@dataclass
class RatioSummary:
    baseline: str
    contender: str
    points: list[RatioPoint]
    quadrants: dict[str, int]
    flagged: list[tuple[str, int, str]]  # (taskset_id, target, reason)
    # time ratios of every non-failed pair, including wcdfp-flagged ones
    time_ratios: list[float] = field(default_factory=list)

    @property
    def faster(self) -> int:
        return sum(r < 1.0 for r in self.time_ratios)


QUADRANTS = ("x<1,y<1", "x>=1,y<1", "x<1,y>=1", "x>=1,y>=1")


def _paired(table: ResultTable, baseline: str, contender: str):
    by_key: dict[tuple[str, int], dict[str, ResultRow]] = {}
    for r in table.rows:
        if r.method in (baseline, contender):
            by_key.setdefault((r.taskset_id, r.target), {})[r.method] = r
    keys = sorted({(r.taskset_id, r.target) for r in table.rows})
    missing = [k for k in keys if len(by_key.get(k, {})) != len({baseline, contender})]
    if missing:
        raise MissingMethodRows(
            f"{len(missing)} task sets lack {baseline} or {contender} rows, e.g. {missing[0]}"
        )
    return [(k, by_key[k][baseline], by_key[k][contender]) for k in keys]


def compare_ratios(table: ResultTable, baseline: Method | str, contender: Method | str) -> RatioSummary:
    """Per task set (wcdfp ratio, time ratio) of contender over baseline, with
    quadrant counts around (1, 1).  Zero or failed denominators are flagged."""
    b, c = str(Method(baseline)), str(Method(contender))
    points, flagged, times = [], [], []
    quadrants = dict.fromkeys(QUADRANTS, 0)
    for (ts_id, target), rb, rc in _paired(table, b, c):
        if rb.failed or rc.failed:
            flagged.append((ts_id, target, "failed row"))
            continue
        if rb.wall_time_s == 0.0:
            flagged.append((ts_id, target, "zero baseline time"))
            continue
        y = rc.wall_time_s / rb.wall_time_s
        times.append(y)
        if rb.wcdfp == 0.0:
            flagged.append((ts_id, target, "zero baseline wcdfp"))
            continue
        x = rc.wcdfp / rb.wcdfp
        points.append(RatioPoint(ts_id, target, x, y))
        quadrants[f"x{'<1' if x < 1 else '>=1'},y{'<1' if y < 1 else '>=1'}"] += 1
    return RatioSummary(b, c, points, quadrants, flagged, times)


@dataclass
class ValueSummary:
    baseline: str
    contender: str
    points: list[tuple[float, float]]  # (baseline wcdfp, contender wcdfp)
    above: int  # contender > baseline
    below: int
    equal: int


def compare_values(table: ResultTable, baseline: Method | str, contender: Method | str) -> ValueSummary:
    b, c = str(Method(baseline)), str(Method(contender))
    pts = [
        (rb.wcdfp, rc.wcdfp)
        for _, rb, rc in _paired(table, b, c)
        if not (rb.failed or rc.failed)
    ]
    above = sum(y > x for x, y in pts)
    below = sum(y < x for x, y in pts)
    return ValueSummary(b, c, pts, above, below, len(pts) - above - below)


def runtime_summary(table: ResultTable) -> dict[str, dict[str, float]]:
    """Five-number summary of wall times per method (box-plot data)."""
    out = {}
    for m in table.methods():
        times = np.array([r.wall_time_s for r in table.rows if r.method == m and not r.failed])
        if not times.size:
            continue
        q = np.quantile(times, [0.0, 0.25, 0.5, 0.75, 1.0])
        out[m] = dict(zip(("min", "q1", "median", "q3", "max"), map(float, q)), count=int(times.size))
    return out


# -- SVG -------------------------------------------------------------------


@dataclass
class AxesSpec:
    x_label: str
    y_label: str
    title: str = ""
    reference: str = "ratio"  # "ratio": lines x=1, y=1; "identity": line y=x
    floor: float = 1e-18  # non-positive values are drawn at this floor
    width: int = 640
    height: int = 480
    margin: int = 70


def _log_range(values: Iterable[float]) -> tuple[float, float]:
    logs = [math.log10(v) for v in values]
    lo, hi = math.floor(min(logs)), math.ceil(max(logs))
    if hi - lo < 1:
        lo, hi = lo - 1, hi + 1
    return float(lo), float(hi)


def emit_scatter_svg(points: Sequence[tuple[float, float]], axes: AxesSpec, path: str | Path) -> None:
    """Log-log scatter plot written as standalone SVG."""
    pts = [(max(x, axes.floor), max(y, axes.floor)) for x, y in points]
    ref = [1.0] if axes.reference == "ratio" else []
    xs = [p[0] for p in pts] + ref
    ys = [p[1] for p in pts] + ref
    if not xs:
        xs = ys = [1.0]
    if axes.reference == "identity":
        xr = yr = _log_range(xs + ys)
    else:
        xr, yr = _log_range(xs), _log_range(ys)
    m, w, h = axes.margin, axes.width, axes.height
    pw, ph = w - 2 * m, h - 2 * m

    def px(x: float) -> float:
        return m + (math.log10(x) - xr[0]) / (xr[1] - xr[0]) * pw

    def py(y: float) -> float:
        return m + ph - (math.log10(y) - yr[0]) / (yr[1] - yr[0]) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">',
        '<style>.ax{stroke:#333;stroke-width:1}.ref{stroke:#c33;stroke-dasharray:4 3}'
        '.pt{fill:#1f77b4;fill-opacity:.6}text{font:11px sans-serif}</style>',
        f'<rect x="{m}" y="{m}" width="{pw}" height="{ph}" fill="none" class="ax"/>',
    ]
    for e in range(int(xr[0]), int(xr[1]) + 1):
        x = px(10.0**e)
        out.append(f'<text x="{x:.2f}" y="{m + ph + 16}" text-anchor="middle">1e{e}</text>')
    for e in range(int(yr[0]), int(yr[1]) + 1):
        y = py(10.0**e)
        out.append(f'<text x="{m - 6}" y="{y + 4:.2f}" text-anchor="end">1e{e}</text>')
    if axes.reference == "ratio":
        out.append(f'<line class="ref" x1="{px(1):.4f}" y1="{m}" x2="{px(1):.4f}" y2="{m + ph}"/>')
        out.append(f'<line class="ref" x1="{m}" y1="{py(1):.4f}" x2="{m + pw}" y2="{py(1):.4f}"/>')
    else:
        lo, hi = 10.0 ** xr[0], 10.0 ** xr[1]
        out.append(f'<line class="ref" x1="{px(lo):.4f}" y1="{py(lo):.4f}" x2="{px(hi):.4f}" y2="{py(hi):.4f}"/>')
    for x, y in pts:
        out.append(f'<circle class="pt" cx="{px(x):.4f}" cy="{py(y):.4f}" r="3"/>')
    out.append(f'<text x="{w / 2}" y="{h - 20}" text-anchor="middle">{escape(axes.x_label)}</text>')
    out.append(
        f'<text x="18" y="{h / 2}" text-anchor="middle" transform="rotate(-90 18 {h / 2})">'
        f"{escape(axes.y_label)}</text>"
    )
    if axes.title:
        out.append(f'<text x="{w / 2}" y="{m / 2}" text-anchor="middle">{escape(axes.title)}</text>')
    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n")


def write_outputs(table: ResultTable, out_dir: Path) -> list[Path]:
    """CSV, runtime summary and comparison plots for every available pair."""
    out_dir.mkdir(parents=True, exist_ok=True)
    written = [out_dir / "results.csv", out_dir / "runtime_summary.json"]
    emit_csv(table, written[0])
    written[1].write_text(json.dumps(runtime_summary(table), indent=2) + "\n")
    present = set(table.methods())
    for base, cont in [("SC", "AC_IMP"), ("AC_IMP", "MC"), ("AC_IMP", "BE"), ("SC", "MC"), ("SC", "BE"),
                       ("AC_ORIG", "AC_IMP")]:
        if not {base, cont} <= present:
            continue
        try:
            ratios = compare_ratios(table, base, cont)
        except MissingMethodRows:
            continue
        p = out_dir / f"ratio_{cont}_vs_{base}.svg"
        emit_scatter_svg(
            [(pt.wcdfp_ratio, pt.time_ratio) for pt in ratios.points],
            AxesSpec(f"WCDFP ratio {cont}/{base}", f"time ratio {cont}/{base}",
                     title=" ".join(f"{k}:{v}" for k, v in ratios.quadrants.items())),
            p,
        )
        written.append(p)
        values = compare_values(table, base, cont)
        p = out_dir / f"values_{cont}_vs_{base}.svg"
        emit_scatter_svg(
            values.points,
            AxesSpec(f"WCDFP {base}", f"WCDFP {cont}", reference="identity",
                     title=f"above y=x: {values.above}  below: {values.below}"),
            p,
        )
        written.append(p)
    return written
