"""Seeded Monte Carlo campaigns.

Replica ``i`` of a campaign with master seed ``s`` draws from
``make_rng(s, i)``, so per-replica values do not depend on the number of
worker threads or on scheduling.  Statistics are recomputed from the
stored values with compensated summation.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels as K
from .conditioned import ConditionedSampler, default_size_cap
from .lis import RemyTrajectory
from .rng import make_rng, stream_seed
from .sequences import q_table, solve_alpha
from .structures import permutation_lis, sample_uniform_separable

KINDS = ("lis-distribution", "trajectory", "lln-cap", "empirical-q", "calibrate-c")
THREADS_ENV = "PERMUTON_LAB_THREADS"
Q_CHUNK = 50_000


@dataclass
class ExperimentSpec:
    kind: str
    p: float = 0.5
    n: int = 1000
    samples: int = 100
    seed: int = 1
    size_cap: int | None = None
    checkpoints: list[int] | None = None
    out: str | None = None
    format: str = "json"
    k_max: int = 10
    threads: int | None = None
    bins: int = 60
    c_grid: list[float] | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        if self.samples < 1:
            raise ValueError("samples must be >= 1")
        if not 0.0 < self.p < 1.0:
            raise ValueError("p must lie in (0, 1)")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.format not in ("json", "csv"):
            raise ValueError("format must be json or csv")

    def to_dict(self) -> dict:
        return asdict(self)


def describe(values) -> dict:
    v = np.asarray(values, float)
    n = v.shape[0]
    if n == 0:
        return {"count": 0}
    mean = math.fsum(v) / n
    var = math.fsum((v - mean) ** 2) / (n - 1) if n > 1 else 0.0
    q = np.quantile(v, [0.05, 0.25, 0.5, 0.75, 0.95])
    return {"count": n, "mean": mean, "variance": var,
            "se": math.sqrt(var / n) if n > 1 else 0.0,
            "min": float(v.min()), "max": float(v.max()),
            "quantiles": dict(zip(("q05", "q25", "q50", "q75", "q95"), q.tolist()))}


@dataclass
class Report:
    spec: ExperimentSpec
    values: list = field(repr=False)
    stats: dict = field(default_factory=dict)
    discards: int = 0
    wall_time: float = 0.0
    extra: dict = field(default_factory=dict)
    columns: tuple[str, ...] = ("replica", "value")

    def manifest(self) -> dict:
        return {"spec": self.spec.to_dict(), "seed": self.spec.seed,
                "stats": self.stats, "discards": self.discards,
                "wall_time": self.wall_time, **self.extra}

    def to_json(self) -> str:
        return json.dumps(self.manifest(), indent=2, default=_jsonable)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for i, row in enumerate(self.values):
            row = row if isinstance(row, (list, tuple)) else (row,)
            w.writerow([i, *row])
        return buf.getvalue()

    def filename(self, ext: str) -> str:
        s = self.spec
        return f"{s.kind}-p{s.p:g}-n{s.n}-s{s.seed}.{ext}"

    def write(self, directory) -> list[Path]:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        paths = [d / self.filename("json"), d / self.filename("csv")]
        paths[0].write_text(self.to_json())
        paths[1].write_text(self.to_csv())
        return paths


def _jsonable(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(type(x))


def worker_count(spec: ExperimentSpec) -> int:
    if spec.threads:
        return max(1, int(spec.threads))
    env = os.environ.get(THREADS_ENV)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_replicas(fn, count: int, threads: int) -> list:
    """``[fn(0), ..., fn(count - 1)]`` on a bounded pool; order-independent."""
    out = [None] * count
    if threads <= 1 or count <= 1:
        for i in range(count):
            out[i] = fn(i)
        return out

    def task(i):
        out[i] = fn(i)

    with ThreadPoolExecutor(max_workers=threads) as pool:
        list(pool.map(task, range(count)))
    return out


def _histogram(values, bins: int) -> dict:
    counts, edges = np.histogram(values, bins=bins)
    return {"counts": counts.tolist(), "edges": edges.tolist(),
            "bin_width": float(edges[1] - edges[0])}


# -- campaigns ---------------------------------------------------------------

def run_lis_distribution(spec: ExperimentSpec) -> Report:
    """``LIS(T_n) / n^alpha`` over independent uniform trees."""
    _expect(spec, "lis-distribution")
    t0 = time.perf_counter()
    alpha = solve_alpha(spec.p).alpha
    norm = spec.n ** alpha

    def one(i):
        return int(K.uniform_lis(spec.n, spec.p, make_rng(spec.seed, i)))

    lis = run_replicas(one, spec.samples, worker_count(spec))
    vals = [x / norm for x in lis]
    rep = Report(spec, [(l, v) for l, v in zip(lis, vals)], describe(vals),
                 columns=("replica", "lis", "scaled"))
    rep.extra = {"alpha": alpha, "histogram": _histogram(vals, spec.bins)}
    rep.wall_time = time.perf_counter() - t0
    return rep


def power_checkpoints(n_max: int) -> list[int]:
    pts = []
    c = 1
    while c < n_max:
        pts.append(c)
        c *= 2
    pts.append(n_max)
    return pts


def run_trajectory(spec: ExperimentSpec) -> Report:
    """Remy trajectories to ``n``; ``X_m / m^alpha`` at power-of-two
    checkpoints.  Each replica also reports the relative oscillation
    ``(max - min) / mean`` of the ratio over checkpoints in ``[n/4, n]``."""
    _expect(spec, "trajectory")
    t0 = time.perf_counter()
    alpha = solve_alpha(spec.p).alpha
    cps = spec.checkpoints or power_checkpoints(spec.n)
    if cps[-1] != spec.n or any(b <= a for a, b in zip(cps, cps[1:])):
        raise ValueError("checkpoints must be increasing and end at n")

    def one(i):
        traj = RemyTrajectory(spec.p, make_rng(spec.seed, i), capacity=spec.n)
        traj.advance(spec.n - 1)
        x = np.asarray(traj.x, np.int64)
        d = np.diff(x)
        ok = bool(((d == 0) | (d == 1)).all() and x[0] == 1
                  and (x >= 1).all() and (x <= np.arange(1, spec.n + 1)).all())
        ratios = [x[c - 1] / c ** alpha for c in cps]
        late = [r for c, r in zip(cps, ratios) if c >= spec.n / 4]
        osc = (max(late) - min(late)) / (math.fsum(late) / len(late))
        return ratios, osc, ok

    res = run_replicas(one, spec.samples, worker_count(spec))
    osc = [r[1] for r in res]
    rep = Report(spec, [[*r[0], r[1]] for r in res], describe(osc),
                 columns=("replica", *[f"c{c}" for c in cps], "oscillation"))
    rep.extra = {"alpha": alpha, "checkpoints": cps,
                 "median_oscillation": float(np.median(osc)),
                 "contract_ok": all(r[2] for r in res),
                 "final_ratio": describe([r[0][-1] for r in res])}
    rep.wall_time = time.perf_counter() - t0
    return rep


def run_lln_cap(spec: ExperimentSpec, mode: str = "exact") -> Report:
    """``#L^max_cap(T^k) / k`` with ``k = spec.n``; overflowed replicas are
    excluded and counted."""
    _expect(spec, "lln-cap")
    t0 = time.perf_counter()
    k = spec.n
    table = q_table(spec.p, max(k, 2))
    sampler = ConditionedSampler(table, k, spec.size_cap, mode=mode)
    cap = sampler.cap_for(k)

    def one(i):
        return sampler.stats(k, 1, make_rng(spec.seed, i))[0].tolist()

    rows = run_replicas(one, spec.samples, worker_count(spec))
    kept = [r for r in rows if r[0] >= 0]
    if any(r[1] != k for r in kept):
        raise AssertionError("conditioned sample with wrong LIS")
    discards = len(rows) - len(kept)
    if discards:
        warnings.warn(f"{discards} replicas overflowed the size cap {cap}")
    vals = [r[2] / k for r in kept]
    alpha = solve_alpha(spec.p).alpha
    rep = Report(spec, [(r[0], r[2], r[2] / k if r[0] >= 0 else math.nan) for r in rows],
                 describe(vals), discards, columns=("replica", "leaves", "cap_count", "ratio"))
    rep.extra = {"alpha": alpha, "k": k, "size_cap": cap, "mode": mode}
    rep.wall_time = time.perf_counter() - t0
    return rep


def run_empirical_q(spec: ExperimentSpec) -> Report:
    """Empirical ``P(LIS(T) = k)`` for ``k <= k_max`` from ``samples`` capped
    BGW trees.  Overflowed draws stay in the denominator; the deficit
    ``1 - sum`` is reported next to the overflow mass."""
    _expect(spec, "empirical-q")
    t0 = time.perf_counter()
    cap = spec.size_cap or 10_000
    chunks = [(c, min(Q_CHUNK, spec.samples - c * Q_CHUNK))
              for c in range(math.ceil(spec.samples / Q_CHUNK))]

    def one(i):
        lis, size = K.bgw_lis_batch(spec.p, cap, chunks[i][1], make_rng(spec.seed, i))
        counts = np.bincount(lis[lis > 0], minlength=spec.k_max + 2)
        head = counts[:spec.k_max + 1].tolist()
        return head, int(counts[spec.k_max + 1:].sum()), int((lis < 0).sum())

    res = run_replicas(one, len(chunks), worker_count(spec))
    N = spec.samples
    counts = np.sum([r[0] for r in res], axis=0)
    above = sum(r[1] for r in res)
    over = sum(r[2] for r in res)
    table = q_table(spec.p, spec.k_max)
    rows = []
    for k in range(1, spec.k_max + 1):
        qh = counts[k] / N
        rows.append((k, int(counts[k]), qh, math.sqrt(qh * (1 - qh) / N), float(table.q[k])))
    rep = Report(spec, rows, {"total": N}, over,
                 columns=("row", "k", "count", "q_hat", "se", "q_table"))
    rep.extra = {"size_cap": cap, "deficit": 1 - math.fsum(r[2] for r in rows),
                 "above_k_max": above / N, "overflow_mass": over / N,
                 "q_hat": {r[0]: r[2] for r in rows}, "se": {r[0]: r[3] for r in rows}}
    rep.wall_time = time.perf_counter() - t0
    return rep


def histogram_l1(x, y, edges) -> float:
    """L1 distance between histogram densities on common bins."""
    hx, _ = np.histogram(x, bins=edges, density=True)
    hy, _ = np.histogram(y, bins=edges, density=True)
    return float(np.sum(np.abs(hx - hy) * np.diff(edges)))


def calibrate_separable_constant(spec: ExperimentSpec) -> Report:
    """Constant c minimising the L1 distance between the densities of
    ``LIS(sigma_n(1/2)) / n^alpha`` and ``LIS(uniform separable) / (c n^alpha)``."""
    _expect(spec, "calibrate-c")
    if spec.p != 0.5:
        raise ValueError("calibration is defined at p = 1/2")
    t0 = time.perf_counter()
    alpha = solve_alpha(0.5).alpha
    norm = spec.n ** alpha
    threads = worker_count(spec)
    x = np.array(run_replicas(
        lambda i: int(K.uniform_lis(spec.n, 0.5, make_rng(spec.seed, i))) / norm,
        spec.samples, threads))
    # separable replicas use stream indices samples .. 2 samples - 1
    y = np.array(run_replicas(
        lambda i: permutation_lis(sample_uniform_separable(
            spec.n, stream_seed(spec.seed, spec.samples + i))) / norm,
        spec.samples, threads))
    grid = spec.c_grid or np.round(np.arange(0.70, 1.1001, 0.005), 6).tolist()
    hi = max(x.max(), (y / min(grid)).max())
    edges = np.linspace(0.0, hi * 1.0001, spec.bins + 1)
    dist = [histogram_l1(x, y / c, edges) for c in grid]
    best = int(np.argmin(dist))
    rep = Report(spec, list(zip(grid, dist)), {"c_star": grid[best], "distance": dist[best]},
                 columns=("row", "c", "l1"))
    rep.extra = {"alpha": alpha, "bin_width": float(edges[1] - edges[0]),
                 "tree_scaled": describe(x), "separable_scaled": describe(y)}
    rep.wall_time = time.perf_counter() - t0
    return rep


RUNNERS = {
    "lis-distribution": run_lis_distribution,
    "trajectory": run_trajectory,
    "lln-cap": run_lln_cap,
    "empirical-q": run_empirical_q,
    "calibrate-c": calibrate_separable_constant,
}


def run(spec: ExperimentSpec) -> Report:
    return RUNNERS[spec.kind](spec)


def _expect(spec: ExperimentSpec, kind: str):
    if spec.kind != kind:
        raise ValueError(f"spec.kind must be {kind!r}, got {spec.kind!r}")
