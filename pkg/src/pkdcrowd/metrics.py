"""Evaluation quantities: quality, precision, bucket load, message and capacity formulas."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

from .pkd_tree import estimate_matching_many
from .workload import TaskSpec, match_counts, match_matrix, task_arrays

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AssignmentRecord:
    worker_index: int
    bucket_index: int
    downloaded_task_ids: frozenset[int]
    matching_task_ids: frozenset[int]


def quality(tree, workers: np.ndarray, tasks: Sequence[TaskSpec]) -> float:
    """Mean relative error between estimated and exact matching counts."""
    lo, hi, _ = task_arrays(tasks)
    exact = match_counts(workers, lo, hi)
    if np.any(exact == 0):
        bad = [tasks[i].task_id for i in np.flatnonzero(exact == 0)[:5]]
        raise ValueError(f"tasks without matching workers: {bad}")
    approx = estimate_matching_many(tree, lo, hi)
    return relative_error(exact, approx)


def relative_error(exact, approx) -> float:
    exact = np.asarray(exact, dtype=float)
    return float(np.mean(np.abs(exact - np.asarray(approx, dtype=float)) / exact))


def precision(assignments: Iterable[AssignmentRecord], tasks: Sequence[TaskSpec]) -> float:
    """Per task, the share of its downloaders that match it; averaged over tasks.

    Tasks nobody downloads are skipped.
    """
    downloads = {t.task_id: 0 for t in tasks}
    useful = dict(downloads)
    for rec in assignments:
        for tid in rec.downloaded_task_ids:
            if tid in downloads:
                downloads[tid] += 1
                useful[tid] += tid in rec.matching_task_ids
    ratios = [useful[tid] / n for tid, n in downloads.items() if n > 0]
    skipped = len(downloads) - len(ratios)
    if skipped:
        log.info("precision: %d tasks downloaded by nobody were excluded", skipped)
    return float(np.mean(ratios)) if ratios else float("nan")


def packing_download_matrix(packing, bucket_of: np.ndarray, tasks: Sequence[TaskSpec]) -> np.ndarray:
    ids = {t.task_id: k for k, t in enumerate(tasks)}
    member = np.zeros((len(packing.buckets), len(tasks)), dtype=bool)
    for b, bucket in enumerate(packing.buckets):
        member[b, [ids[t] for t in bucket.task_ids]] = True
    return member[bucket_of]


def precision_from_matrices(matched: np.ndarray, downloaded: np.ndarray) -> float:
    n_down = downloaded.sum(axis=0)
    n_useful = (matched & downloaded).sum(axis=0)
    keep = n_down > 0
    if not np.all(keep):
        log.info("precision: %d tasks downloaded by nobody were excluded", int((~keep).sum()))
    if not np.any(keep):
        return float("nan")
    return float(np.mean(n_useful[keep] / n_down[keep]))


def packing_precision(packing, bucket_of: np.ndarray, workers: np.ndarray, tasks: Sequence[TaskSpec]) -> float:
    lo, hi, _ = task_arrays(tasks)
    matched = match_matrix(workers, lo, hi)
    return precision_from_matrices(matched, packing_download_matrix(packing, bucket_of, tasks))


def spam_precision(workers: np.ndarray, tasks: Sequence[TaskSpec]) -> float:
    """Everyone downloads everything: each task scores ``t_match / |P|``."""
    lo, hi, _ = task_arrays(tasks)
    return float(np.mean(match_counts(workers, lo, hi) / len(workers)))


def max_tasks(packing) -> int:
    return max((len(b) for b in packing.buckets), default=0)


def message_counts(P: int, T: int, h: int, l: int) -> dict:
    """Closed-form encrypted message totals of one tree construction."""
    sums = l * (2**h - 1) + (2 ** (h + 1) - 1)
    return {
        "to_platform": (P + T) * sums,
        "per_worker_avg": (1 + T / P) * sums,
        "by_platform": T * sums,
    }


MB = 1e6


def capacity(s: float, t: float, f: float, k: float, depth: int, task_bytes: float, scan_rate: float) -> dict:
    """Largest task count deliverable within download size ``s`` and wait ``t``.

    ``scan_rate`` is server seconds per megabyte of PIR library.
    """
    if min(s, t, f, k, task_bytes, scan_rate) <= 0 or k > 1:
        raise ValueError("capacity parameters must be positive with k in (0, 1]")
    task_mb = task_bytes / MB
    size_bound = s / (f * task_bytes * k)
    time_bound = t / (2**depth * scan_rate * task_mb * k)
    return {
        "n_max_spam": s / task_bytes,
        "n_max_pir": min(size_bound, time_bound),
        "pir_size_bound": size_bound,
        "pir_time_bound": time_bound,
    }


def mean_ci(values: Sequence[float], level: float = 0.95) -> tuple[float, float]:
    """Mean and half-width of a Student-t confidence interval."""
    x = np.asarray(values, dtype=float)
    if len(x) < 2:
        return float(x.mean()), 0.0
    half = stats.t.ppf(0.5 + level / 2, len(x) - 1) * x.std(ddof=1) / math.sqrt(len(x))
    return float(x.mean()), float(half)


def write_csv(path, rows: Sequence[dict], columns: Sequence[str] | None = None) -> None:
    columns = list(columns or (rows[0].keys() if rows else []))
    with Path(path).open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({c: row.get(c, "") for c in columns})
