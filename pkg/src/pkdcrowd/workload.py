"""Synthetic workers and tasks (UNIF, ONESPE, SUBVOLUME) and task matching.

Workers are plain ``(N, n)`` float arrays with one skill profile per row.
Tasks are :class:`TaskSpec` records holding closed per-dimension intervals.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

log = logging.getLogger(__name__)

DEFAULT_TASK_BITS = 8 * 64
MATCH_CHUNK = 1 << 22


@dataclass(frozen=True)
class TaskSpec:
    task_id: int
    lo: tuple[float, ...]
    hi: tuple[float, ...]
    weight_bits: int = DEFAULT_TASK_BITS

    def __post_init__(self):
        if len(self.lo) != len(self.hi):
            raise ValueError("lo/hi dimension mismatch")
        if any(a > b for a, b in zip(self.lo, self.hi)):
            raise ValueError(f"task {self.task_id}: interval with lo > hi")
        if self.weight_bits < 0:
            raise ValueError("weight_bits must be nonnegative")

    @property
    def n_dims(self) -> int:
        return len(self.lo)

    @property
    def weight_bytes(self) -> int:
        return (self.weight_bits + 7) // 8


class RetryBudgetExhausted(RuntimeError):
    pass


def task_arrays(tasks: Sequence[TaskSpec]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if not tasks:
        return np.zeros((0, 0)), np.zeros((0, 0)), np.zeros(0, dtype=np.int64)
    lo = np.array([t.lo for t in tasks], dtype=float)
    hi = np.array([t.hi for t in tasks], dtype=float)
    w = np.array([t.weight_bits for t in tasks], dtype=np.int64)
    return lo, hi, w


def matches(p, t: TaskSpec) -> bool:
    p = np.asarray(p, dtype=float)
    if p.shape != (t.n_dims,):
        raise ValueError(f"profile has shape {p.shape}, task has {t.n_dims} dims")
    return bool(np.all((p >= t.lo) & (p <= t.hi)))


def match_matrix(workers: np.ndarray, task_lo: np.ndarray, task_hi: np.ndarray) -> np.ndarray:
    """``(N, K)`` boolean matrix; chunked over workers to bound memory."""
    workers = np.atleast_2d(workers)
    n_w, n_dims = workers.shape
    if task_lo.shape[-1] != n_dims and len(task_lo):
        raise ValueError("dimension mismatch between workers and tasks")
    out = np.empty((n_w, len(task_lo)), dtype=bool)
    step = max(1, MATCH_CHUNK // max(1, len(task_lo) * n_dims))
    for s in range(0, n_w, step):
        w = workers[s : s + step, None, :]
        out[s : s + step] = np.all((w >= task_lo[None]) & (w <= task_hi[None]), axis=2)
    return out


def match_counts(workers: np.ndarray, task_lo: np.ndarray, task_hi: np.ndarray) -> np.ndarray:
    workers = np.atleast_2d(workers)
    counts = np.zeros(len(task_lo), dtype=np.int64)
    step = max(1, MATCH_CHUNK // max(1, len(task_lo) * workers.shape[1]))
    for s in range(0, len(workers), step):
        w = workers[s : s + step, None, :]
        counts += np.all((w >= task_lo[None]) & (w <= task_hi[None]), axis=2).sum(axis=0)
    return counts


def _make_tasks(lo, hi, weight_bits, first_id=0) -> list[TaskSpec]:
    return [
        TaskSpec(first_id + i, tuple(map(float, a)), tuple(map(float, b)), weight_bits)
        for i, (a, b) in enumerate(zip(lo, hi))
    ]


# -- UNIF --------------------------------------------------------------------


def gen_unif_workers(count: int, n: int, rng: np.random.Generator) -> np.ndarray:
    _check_counts(count, n)
    return rng.uniform(0.0, 1.0, size=(count, n))


def gen_unif_tasks(count, n, rng, weight_bits=DEFAULT_TASK_BITS, first_id=0) -> list[TaskSpec]:
    _check_counts(count, n)
    pairs = np.sort(rng.uniform(0.0, 1.0, size=(count, n, 2)), axis=2)
    return _make_tasks(pairs[..., 0], pairs[..., 1], weight_bits, first_id)


# -- ONESPE ------------------------------------------------------------------


def gen_onespe_workers(count: int, n: int, rng: np.random.Generator) -> np.ndarray:
    _check_counts(count, n)
    skills = rng.uniform(0.0, 0.5, size=(count, n))
    spec = rng.integers(n, size=count)
    skills[np.arange(count), spec] = rng.uniform(0.5, 1.0, size=count)
    return skills


def gen_onespe_tasks(count, n, rng, weight_bits=DEFAULT_TASK_BITS, first_id=0) -> list[TaskSpec]:
    _check_counts(count, n)
    lo = np.zeros((count, n))
    hi = rng.uniform(0.0, 0.5, size=(count, n))
    spec = rng.integers(n, size=count)
    rows = np.arange(count)
    lo[rows, spec] = rng.uniform(0.5, 1.0, size=count)
    hi[rows, spec] = 1.0
    return _make_tasks(lo, hi, weight_bits, first_id)


# -- SUBVOLUME ---------------------------------------------------------------


def gen_subvolume_tasks(tree, count, ratio_r, rng, weight_bits=DEFAULT_TASK_BITS, first_id=0):
    """Tasks placed inside uniformly chosen leaves, each ``ratio_r`` of its leaf's volume.

    The upper bound on an open leaf face is pulled one ulp inwards so that the
    closed task interval stays inside the half-open leaf.
    """
    if not 0 < ratio_r <= 1:
        raise ValueError(f"ratio_r must be in (0, 1], got {ratio_r}")
    leaves = tree.leaves()
    n = leaves[0].subspace.n_dims
    scale = ratio_r ** (1.0 / n)
    picks = rng.integers(len(leaves), size=count)
    tasks = []
    for i, leaf_idx in enumerate(picks):
        box = leaves[leaf_idx].subspace
        llo, lhi = np.asarray(box.lo), np.asarray(box.hi)
        side = (lhi - llo) * scale
        lo = llo + rng.uniform(0.0, 1.0, size=n) * (lhi - llo - side)
        hi = np.minimum(lo + side, lhi)
        open_face = (hi >= lhi) & ~np.asarray(box.hi_closed)
        hi = np.where(open_face, np.nextafter(lhi, -np.inf), hi)
        hi = np.maximum(hi, lo)
        tasks.append(TaskSpec(first_id + i, tuple(map(float, lo)), tuple(map(float, hi)), weight_bits))
    return tasks


# -- non-empty filter --------------------------------------------------------


def ensure_nonempty(
    tasks: Sequence[TaskSpec],
    workers: np.ndarray,
    resample: Callable[[int, np.random.Generator], Sequence[TaskSpec]] | None = None,
    rng: np.random.Generator | None = None,
    max_candidates: int = 2_000_000,
    batch: int = 512,
) -> list[TaskSpec]:
    """Replace tasks matching no worker with fresh draws from ``resample``.

    Task ids and weights are kept; only the intervals are redrawn.
    """
    tasks = list(tasks)
    if not tasks:
        return tasks
    lo, hi, _ = task_arrays(tasks)
    empty = np.flatnonzero(match_counts(workers, lo, hi) == 0)
    if len(empty) and resample is None:
        raise RetryBudgetExhausted(f"{len(empty)} tasks match no worker and no resampler given")
    drawn = 0
    while len(empty):
        if drawn >= max_candidates:
            raise RetryBudgetExhausted(
                f"{len(empty)} tasks still empty after {drawn} candidates "
                f"(workers={len(workers)}, dims={workers.shape[1]})"
            )
        k = max(batch, len(empty))
        cands = list(resample(k, rng))
        drawn += k
        clo, chi, _ = task_arrays(cands)
        ok = np.flatnonzero(match_counts(workers, clo, chi) > 0)
        for slot, c in zip(empty, ok):
            old = tasks[slot]
            tasks[slot] = TaskSpec(old.task_id, cands[c].lo, cands[c].hi, old.weight_bits)
        empty = empty[len(ok) :]
    return tasks


def _check_counts(count, n):
    if count < 1 or n < 1:
        raise ValueError(f"count and n must be >= 1, got count={count}, n={n}")


# -- columnar text format ----------------------------------------------------


def save_workers(path, workers: np.ndarray) -> None:
    workers = np.atleast_2d(workers)
    lines = [f"# pkdcrowd workers v1 dims={workers.shape[1]}"]
    lines += ["\t".join([str(i)] + [repr(float(x)) for x in row]) for i, row in enumerate(workers)]
    Path(path).write_text("\n".join(lines) + "\n")


def load_workers(path) -> np.ndarray:
    rows = []
    dims = None
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            dims = int(line.rsplit("dims=", 1)[1])
            continue
        if line.strip():
            rows.append([float(x) for x in line.split("\t")[1:]])
    return np.array(rows, dtype=float).reshape(len(rows), dims if dims is not None else -1)


def save_tasks(path, tasks: Sequence[TaskSpec]) -> None:
    dims = tasks[0].n_dims if tasks else 0
    lines = [f"# pkdcrowd tasks v1 dims={dims}"]
    for t in tasks:
        cols = [str(t.task_id), str(t.weight_bits)]
        for a, b in zip(t.lo, t.hi):
            cols += [repr(float(a)), repr(float(b))]
        lines.append("\t".join(cols))
    Path(path).write_text("\n".join(lines) + "\n")


def load_tasks(path) -> list[TaskSpec]:
    tasks = []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#") or not line.strip():
            continue
        cols = line.split("\t")
        vals = [float(x) for x in cols[2:]]
        tasks.append(TaskSpec(int(cols[0]), tuple(vals[0::2]), tuple(vals[1::2]), int(cols[1])))
    return tasks
