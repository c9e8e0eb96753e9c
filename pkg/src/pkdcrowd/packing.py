"""Task packings for PIR delivery.

A packing is a PIR library in which every worker finds all of its matching
tasks in a single, uniformly padded bucket.  The partitioned packings built
here attach each bucket to a region of the skill space (one tree leaf, or a
union of arrangement cells for the brute-force optimum) and fill it with
exactly the tasks that share at least one point with that region.
"""
from __future__ import annotations

import itertools
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .space import Subspace, intersect_mask, stack_subspaces
from .workload import TaskSpec, task_arrays

BRUTE_FORCE_MAX_TASKS = 8
BRUTE_FORCE_MAX_GROUPS = 10


class InstanceTooLarge(ValueError):
    pass


@dataclass
class Bucket:
    regions: tuple[Subspace, ...]
    task_ids: frozenset[int]
    raw_size_bits: int
    padded_size_bits: int = 0

    @property
    def subspace(self) -> Subspace:
        if len(self.regions) != 1:
            raise ValueError("bucket spans several regions")
        return self.regions[0]

    def __len__(self) -> int:
        return len(self.task_ids)


@dataclass
class Packing:
    buckets: list[Bucket]
    weight: int = 0

    def pad(self) -> "Packing":
        self.weight = max((b.raw_size_bits for b in self.buckets), default=0)
        for b in self.buckets:
            b.padded_size_bits = self.weight
        return self

    def region_index(self) -> tuple[list[Subspace], np.ndarray]:
        regions, owner = [], []
        for i, b in enumerate(self.buckets):
            regions += b.regions
            owner += [i] * len(b.regions)
        return regions, np.array(owner, dtype=np.int64)


def _tasks_in_regions(regions: Sequence[Subspace], tasks: Sequence[TaskSpec]) -> np.ndarray:
    """``(R, K)`` intersection mask."""
    if not tasks or not regions:
        return np.zeros((len(regions), len(tasks)), dtype=bool)
    blo, bhi, bcl = stack_subspaces(regions)
    tlo, thi, _ = task_arrays(tasks)
    return intersect_mask(blo, bhi, bcl, tlo, thi)


def _make_bucket(regions, mask_rows, tasks) -> Bucket:
    members = np.any(mask_rows, axis=0) if len(mask_rows) else np.zeros(len(tasks), dtype=bool)
    ids = frozenset(tasks[k].task_id for k in np.flatnonzero(members))
    size = int(sum(tasks[k].weight_bits for k in np.flatnonzero(members)))
    return Bucket(tuple(regions), ids, size)


def pkd_pir_packing(tree, tasks: Sequence[TaskSpec]) -> Packing:
    """One bucket per tree leaf holding every task that intersects the leaf."""
    leaves = [leaf.subspace for leaf in tree.leaves()]
    mask = _tasks_in_regions(leaves, tasks)
    buckets = [_make_bucket([box], mask[i : i + 1], tasks) for i, box in enumerate(leaves)]
    return Packing(buckets).pad()


def assign_buckets(packing: Packing, workers: np.ndarray) -> np.ndarray:
    """Bucket index for every worker row; -1 where no region contains the point."""
    workers = np.atleast_2d(workers)
    regions, owner = packing.region_index()
    out = np.full(len(workers), -1, dtype=np.int64)
    for region, b in zip(regions, owner):
        hit = region.contains(workers) & (out < 0)
        out[hit] = b
    return out


def assign_bucket(packing: Packing, profile) -> int:
    return int(assign_buckets(packing, np.asarray(profile, dtype=float)[None])[0])


# -- validity ----------------------------------------------------------------


@dataclass
class PackingVerdict:
    violations: list[tuple[str, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    @property
    def first(self) -> str | None:
        return self.violations[0][0] if self.violations else None

    def conditions(self) -> set[str]:
        return {name for name, _ in self.violations}

    def add(self, name: str, detail: str) -> None:
        self.violations.append((name, detail))


def _first_overlap(regions: Sequence[Subspace]) -> tuple[int, int] | None:
    """First pair of regions sharing a point, honouring closed upper faces."""
    if len(regions) < 2:
        return None
    lo, hi, closed = stack_subspaces(regions)
    for i in range(len(regions) - 1):
        olo, ohi, ocl = lo[i + 1 :], hi[i + 1 :], closed[i + 1 :]
        # i's upper face above the other's lower face, and the converse
        a_ok = np.where(closed[i], hi[i] >= olo, hi[i] > olo)
        b_ok = np.where(ocl, ohi >= lo[i], ohi > lo[i])
        hit = np.flatnonzero(np.all(a_ok & b_ok, axis=1))
        if len(hit):
            return i, i + 1 + int(hit[0])
    return None


def check_packing(packing: Packing, tasks: Sequence[TaskSpec], space: Subspace, vol_tol: float = 1e-9) -> PackingVerdict:
    """Check the packing and partitioned-packing conditions.

    Condition names: ``uniform_size`` (all items padded to one width, never
    below their content), ``has_subspace`` (every bucket owns a region inside
    the space), ``exact_tasks`` (a bucket holds exactly the tasks meeting its
    regions), ``covers_space`` and ``disjoint`` (the regions partition the
    space).  The availability condition follows from ``exact_tasks`` and
    ``covers_space``.
    """
    verdict = PackingVerdict()
    sizes = {b.padded_size_bits for b in packing.buckets}
    if len(sizes) > 1 or (sizes and sizes != {packing.weight}):
        verdict.add("uniform_size", f"padded sizes {sorted(sizes)} vs weight {packing.weight}")
    for i, b in enumerate(packing.buckets):
        if b.raw_size_bits > b.padded_size_bits:
            verdict.add("uniform_size", f"bucket {i} content exceeds its padded size")
    regions, owner = packing.region_index()
    for i, b in enumerate(packing.buckets):
        if not b.regions:
            verdict.add("has_subspace", f"bucket {i} has no region")
        for r in b.regions:
            if np.any(np.less(r.lo, space.lo)) or np.any(np.greater(r.hi, space.hi)):
                verdict.add("has_subspace", f"bucket {i} region {r} leaves the space")
    mask = _tasks_in_regions(regions, tasks)
    for i, b in enumerate(packing.buckets):
        rows = mask[owner == i]
        want = frozenset(tasks[k].task_id for k in np.flatnonzero(np.any(rows, axis=0))) if len(rows) else frozenset()
        if want != b.task_ids:
            missing, extra = sorted(want - b.task_ids), sorted(b.task_ids - want)
            verdict.add("exact_tasks", f"bucket {i}: missing {missing}, extra {extra}")
        expect_size = sum(t.weight_bits for t in tasks if t.task_id in b.task_ids)
        if expect_size != b.raw_size_bits:
            verdict.add("exact_tasks", f"bucket {i}: raw size {b.raw_size_bits} != {expect_size}")
    overlap = _first_overlap(regions)
    if overlap is not None:
        i, j = overlap
        verdict.add("disjoint", f"regions of buckets {owner[i]} and {owner[j]} overlap")
    covered = sum(r.volume for r in regions)
    if abs(covered - space.volume) > vol_tol * max(1.0, space.volume):
        verdict.add("covers_space", f"regions cover volume {covered}, space has {space.volume}")
    return verdict


def is_consistent(packing: Packing, tasks: Sequence[TaskSpec], space: Subspace) -> bool:
    """Every task of every bucket has a point whose whole task set lies in that bucket."""
    points = arrangement_points(tasks, space)
    tlo, thi, _ = task_arrays(tasks)
    covering = np.all((points[:, None, :] >= tlo[None]) & (points[:, None, :] <= thi[None]), axis=2)
    ids = np.array([t.task_id for t in tasks])
    for b in packing.buckets:
        in_b = np.isin(ids, list(b.task_ids))
        # points whose full task set is inside b
        ok_points = ~np.any(covering & ~in_b[None], axis=1)
        for k in np.flatnonzero(in_b):
            if not np.any(covering[:, k] & ok_points):
                return False
    return True


# -- minimal weight ----------------------------------------------------------


def min_weight(tasks: Sequence[TaskSpec]) -> int:
    """Largest total task weight covering a single point of the space.

    Boxes have the Helly property, so the heaviest point can be taken at a
    corner whose coordinates are task lower bounds; sweep that grid.
    """
    if not tasks:
        return 0
    tlo, thi, w = task_arrays(tasks)
    axes = [np.unique(tlo[:, d]) for d in range(tlo.shape[1])]
    best = 0
    for point in _grid_chunks(axes):
        cover = np.all((point[:, None, :] >= tlo[None]) & (point[:, None, :] <= thi[None]), axis=2)
        best = max(best, int((cover * w[None]).sum(axis=1).max()))
    return best


def _grid_chunks(axes, chunk: int = 4096):
    it = itertools.product(*axes)
    while True:
        block = list(itertools.islice(it, chunk))
        if not block:
            return
        yield np.array(block, dtype=float)


def is_acceptable(packing: Packing, tasks: Sequence[TaskSpec]) -> bool:
    return packing.weight == min_weight(tasks)


# -- brute-force optimum -----------------------------------------------------


def arrangement_cells(tasks: Sequence[TaskSpec], space: Subspace) -> list[Subspace]:
    """Grid cells cut at every task lower bound; each cell's task set is that of its lower corner."""
    tlo = task_arrays(tasks)[0] if tasks else np.zeros((0, space.n_dims))
    per_dim = []
    for d in range(space.n_dims):
        cuts = sorted({space.lo[d], space.hi[d]} | {float(x) for x in tlo[:, d] if space.lo[d] < x < space.hi[d]})
        per_dim.append([(a, b, b == space.hi[d] and space.hi_closed[d]) for a, b in zip(cuts, cuts[1:])])
    return [
        Subspace(tuple(s[0] for s in combo), tuple(s[1] for s in combo), tuple(s[2] for s in combo))
        for combo in itertools.product(*per_dim)
    ]


def arrangement_points(tasks: Sequence[TaskSpec], space: Subspace) -> np.ndarray:
    """Representative points: every breakpoint and every gap midpoint per dimension."""
    tlo, thi, _ = task_arrays(tasks)
    axes = []
    for d in range(space.n_dims):
        cuts = sorted({space.lo[d], space.hi[d]} | {float(x) for x in np.r_[tlo[:, d], thi[:, d]] if space.lo[d] <= x <= space.hi[d]})
        mids = [(a + b) / 2 for a, b in zip(cuts, cuts[1:])]
        axes.append(sorted(set(cuts) | set(mids)))
    return np.array(list(itertools.product(*axes)), dtype=float)


def _set_partitions(items: list, k_max: int):
    """Set partitions of ``items`` with at most ``k_max`` blocks."""
    n = len(items)

    def rec(i, blocks):
        if i == n:
            yield [list(b) for b in blocks]
            return
        for b in blocks:
            b.append(items[i])
            yield from rec(i + 1, blocks)
            b.pop()
        if len(blocks) < k_max:
            blocks.append([items[i]])
            yield from rec(i + 1, blocks)
            blocks.pop()

    yield from rec(0, [])


def brute_force_optimal(tasks: Sequence[TaskSpec], space: Subspace, max_buckets: int | None = None) -> Packing | None:
    """Acceptable partitioned packing with the fewest buckets, or ``None`` under the cap.

    Cells whose task set is contained in another cell's set can join that
    cell's bucket for free, so only the maximal task sets are partitioned.
    """
    if len(tasks) > BRUTE_FORCE_MAX_TASKS:
        raise InstanceTooLarge(f"{len(tasks)} tasks; brute force is limited to {BRUTE_FORCE_MAX_TASKS}")
    cells = arrangement_cells(tasks, space)
    mask = _tasks_in_regions(cells, tasks)
    sigs = [frozenset(np.flatnonzero(row)) for row in mask]
    maximal = sorted({s for s in sigs if s and not any(s < o for o in sigs)}, key=sorted)
    if len(maximal) > BRUTE_FORCE_MAX_GROUPS:
        raise InstanceTooLarge(f"{len(maximal)} maximal cell task sets")
    weights = [t.weight_bits for t in tasks]
    target = min_weight(tasks)
    cap = len(maximal) if max_buckets is None else min(max_buckets, max(1, len(maximal)))
    if not maximal:
        return Packing([Bucket(tuple(cells), frozenset(), 0)]).pad() if cap >= 1 else None
    for k in range(1, cap + 1):
        for groups in _set_partitions(maximal, k):
            if len(groups) != k:
                continue
            unions = [frozenset().union(*g) for g in groups]
            if max(sum(weights[i] for i in u) for u in unions) == target:
                return _packing_from_groups(cells, sigs, unions, tasks, mask)
    return None


def _packing_from_groups(cells, sigs, unions, tasks, mask) -> Packing:
    regions: list[list[Subspace]] = [[] for _ in unions]
    rows: list[list[int]] = [[] for _ in unions]
    for c, (cell, sig) in enumerate(zip(cells, sigs)):
        g = next(i for i, u in enumerate(unions) if sig <= u)
        regions[g].append(cell)
        rows[g].append(c)
    buckets = [_make_bucket(regions[g], mask[rows[g]], tasks) for g in range(len(unions))]
    return Packing(buckets).pad()


def partition_instance(values: Sequence[int], weight_bits_scale: int = 1) -> tuple[list[TaskSpec], Subspace]:
    """Tasks of the partition-problem reduction: one unit interval per value plus a sentinel.

    Task ``i`` covers ``[i, i+1)`` (stored closed with the upper end pulled in
    by one ulp) and weighs ``values[i]``; the sentinel weighs half the total.
    ``weight_bits_scale`` keeps weights integral when the total is odd.
    """
    n = len(values)
    total = sum(values) * weight_bits_scale
    if total % 2:
        raise ValueError("scale the values so that half the total is an integer")
    weights = [v * weight_bits_scale for v in values] + [total // 2]
    tasks = [
        TaskSpec(i, (float(i),), (float(np.nextafter(i + 1.0, -np.inf)),), w)
        for i, w in enumerate(weights)
    ]
    return tasks, Subspace((0.0,), (float(n + 1),), (True,))


# -- wire layout and manifest ------------------------------------------------


def task_payload(task: TaskSpec, seed: int = 0) -> bytes:
    return np.random.default_rng([seed, task.task_id]).bytes(task.weight_bytes)


def encode_bucket(bucket: Bucket, tasks_by_id: dict[int, TaskSpec], seed: int = 0) -> bytes:
    parts = [struct.pack(">I", len(bucket.task_ids))]
    for tid in sorted(bucket.task_ids):
        payload = task_payload(tasks_by_id[tid], seed)
        parts += [struct.pack(">II", tid, len(payload)), payload]
    return b"".join(parts)


def decode_bucket(buf: bytes) -> list[tuple[int, bytes]]:
    (count,) = struct.unpack_from(">I", buf, 0)
    off, out = 4, []
    for _ in range(count):
        tid, ln = struct.unpack_from(">II", buf, off)
        off += 8
        out.append((tid, buf[off : off + ln]))
        off += ln
    return out


def encode_packing(packing: Packing, tasks: Sequence[TaskSpec], seed: int = 0) -> list[bytes]:
    """Wire form of every bucket, zero-padded to a common length."""
    by_id = {t.task_id: t for t in tasks}
    raw = [encode_bucket(b, by_id, seed) for b in packing.buckets]
    width = max(len(r) for r in raw)
    return [r + bytes(width - len(r)) for r in raw]


def packing_manifest(packing: Packing) -> dict:
    return {
        "format": "pkdcrowd-packing",
        "version": 1,
        "weight_bits": packing.weight,
        "buckets": [
            {
                "index": i,
                "regions": [r.to_dict() for r in b.regions],
                "task_ids": sorted(b.task_ids),
                "raw_size_bits": b.raw_size_bits,
                "padded_size_bits": b.padded_size_bits,
            }
            for i, b in enumerate(packing.buckets)
        ],
    }


def save_packing(path, packing: Packing) -> None:
    Path(path).write_text(json.dumps(packing_manifest(packing), indent=1) + "\n")


def load_packing(path) -> Packing:
    doc = json.loads(Path(path).read_text())
    buckets = [
        Bucket(
            tuple(Subspace.from_dict(r) for r in b["regions"]),
            frozenset(b["task_ids"]),
            b["raw_size_bits"],
            b["padded_size_bits"],
        )
        for b in doc["buckets"]
    ]
    return Packing(buckets, doc["weight_bits"])
