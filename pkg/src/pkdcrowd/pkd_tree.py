"""Privacy-preserving KD-tree over worker skill profiles.

Levels are numbered from ``h`` at the root down to ``0`` at the leaves.  A
node at level ``i`` gets a perturbed count with budget ``eps_c[i]``; an
internal node at level ``i`` is split at a private median computed with
``eps_m[i]`` (``i = h .. 1``).  Leaves at the same level hold disjoint sets of
workers, so their budgets compose in parallel and only levels add up.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .dp_noise import NoiseParams, summed_share_variance
from .protocol_sum import MessageLog, perturbed_sums, run_priv_med
from .space import Subspace, overlap_volume, stack_subspaces

TREE_FORMAT_VERSION = 1
ZERO_WIDTH = 1e-9
COUNT_SHARE = 0.7
MEDIAN_SHARE = 0.3


@dataclass(frozen=True)
class BudgetPlan:
    epsilon_total: float
    h: int
    # indexed by level i (0 = leaves .. h = root)
    epsilon_c: tuple[float, ...]
    # indexed by level i; entry 0 is unused (leaves are never split)
    epsilon_m: tuple[float, ...]

    @property
    def epsilon_c_per_level(self) -> list[float]:
        """Count budgets for levels ``h, h-1, ..., 0``."""
        return list(reversed(self.epsilon_c))

    @property
    def epsilon_m_per_level(self) -> list[float]:
        """Median budgets for levels ``h, h-1, ..., 1``."""
        return list(reversed(self.epsilon_m[1:]))

    def spent(self) -> float:
        return sum(self.epsilon_c) + sum(self.epsilon_m[1:])


def allocate_budget(epsilon: float, h: int) -> BudgetPlan:
    """Geometric count budgets growing by 2^(1/3) per level towards the leaves; uniform median budgets."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if h < 0:
        raise ValueError("h must be nonnegative")
    eps_c_total = COUNT_SHARE * epsilon
    eps_m_total = MEDIAN_SHARE * epsilon
    cbrt2 = 2.0 ** (1.0 / 3.0)
    norm = (cbrt2 - 1.0) / (2.0 ** ((h + 1) / 3.0) - 1.0)
    eps_c = tuple(2.0 ** ((h - i) / 3.0) * eps_c_total * norm for i in range(h + 1))
    eps_m = (0.0,) + tuple(eps_m_total / h for _ in range(h)) if h else (0.0,)
    return BudgetPlan(epsilon, h, eps_c, eps_m)


@dataclass
class PkdNode:
    subspace: Subspace
    level: int
    raw_count: float
    count: float | None = None
    split_dim: int | None = None
    split_value: float | None = None
    children: list["PkdNode"] = field(default_factory=list)

    @property
    def is_leaf(self) -> bool:
        return not self.children

    @property
    def estimate(self) -> float:
        return self.raw_count if self.count is None else self.count


@dataclass
class PkdTree:
    root: PkdNode
    budget: BudgetPlan
    n_workers: int
    tau: int
    l: int
    dim_order: tuple[int, ...]
    n_count_sums: int = 0
    n_histograms: int = 0
    post_processed: bool = False

    @property
    def h(self) -> int:
        return self.budget.h

    def nodes(self) -> Iterator[PkdNode]:
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))

    def leaves(self) -> list[PkdNode]:
        return [n for n in self.nodes() if n.is_leaf]

    def count_variance(self, level: int) -> float:
        """Variance of the noise on a count computed at ``level``."""
        params = NoiseParams(self.budget.epsilon_c[level], self.n_workers, self.tau)
        return summed_share_variance(params)

    def leaf_arrays(self):
        leaves = self.leaves()
        lo, hi, closed = stack_subspaces([leaf.subspace for leaf in leaves])
        counts = np.array([leaf.estimate for leaf in leaves], dtype=float)
        return lo, hi, closed, counts


def _level_dim(dim_order: Sequence[int], depth: int) -> int:
    return dim_order[depth % len(dim_order)]


def build_pkd(
    workers: np.ndarray,
    dim_order: Sequence[int] | None,
    h: int,
    l: int,
    epsilon: float,
    tau: int,
    T: int,
    keys,
    rng: np.random.Generator,
    log: MessageLog | None = None,
    aggregate_noise: bool = False,
) -> PkdTree:
    """Build the perturbed KD-tree; ``keys=None`` runs the plaintext (mock) protocol."""
    workers = np.atleast_2d(np.asarray(workers, dtype=float))
    n_workers, n_dims = workers.shape
    dim_order = tuple(range(n_dims)) if dim_order is None else tuple(dim_order)
    if not dim_order:
        raise ValueError("dim_order must be nonempty")
    if T <= tau:
        raise ValueError(f"T={T} must exceed tau={tau}")
    if n_workers <= tau:
        raise ValueError("need more workers than tau")
    if l < 1:
        raise ValueError("l must be >= 1")
    budget = allocate_budget(epsilon, h)

    def count_sums(masks, level):
        params = NoiseParams(budget.epsilon_c[level], n_workers, tau)
        bits = np.stack(masks, axis=1).astype(np.int64)
        return perturbed_sums(bits, params, keys, T, rng, log, aggregate_noise=aggregate_noise)

    everyone = np.ones(n_workers, dtype=bool)
    root = PkdNode(Subspace.full(n_dims), h, float(count_sums([everyone], h)[0]))
    tree = PkdTree(root, budget, n_workers, tau, l, dim_order, n_count_sums=1)

    frontier = [(root, everyone)]
    for depth in range(h):
        level = h - depth
        dim = _level_dim(dim_order, depth)
        med_params = NoiseParams(budget.epsilon_m[level], n_workers, tau)
        next_frontier = []
        for node, inside in frontier:
            lo, hi = node.subspace.lo[dim], node.subspace.hi[dim]
            if hi - lo < ZERO_WIDTH:
                # degenerate side: the histogram round still runs so that every
                # node sends the same messages, but its output is not needed
                perturbed_sums(
                    np.zeros((n_workers, l), dtype=np.int64), med_params, keys, T, rng, log,
                    aggregate_noise=aggregate_noise,
                )
                split = (lo + hi) / 2
            else:
                split, _ = run_priv_med(
                    workers[:, dim], (lo, hi), l, med_params, keys, T, rng, log,
                    active=inside, aggregate_noise=aggregate_noise,
                )
            tree.n_histograms += 1
            split = min(max(split, lo), hi)
            left_box, right_box = node.subspace.split(dim, split)
            # boundary points go right
            go_right = workers[:, dim] >= split
            left_in, right_in = inside & ~go_right, inside & go_right
            c_left, c_right = count_sums([left_in, right_in], level - 1)
            tree.n_count_sums += 2
            node.split_dim, node.split_value = dim, float(split)
            node.children = [
                PkdNode(left_box, level - 1, float(c_left)),
                PkdNode(right_box, level - 1, float(c_right)),
            ]
            next_frontier += [(node.children[0], left_in), (node.children[1], right_in)]
        frontier = next_frontier
    return tree


def post_process(tree: PkdTree, level_variance=None) -> PkdTree:
    """Variance-weighted least-squares consistency (in place; also returned).

    Bottom-up, each node's subtree estimate combines its own count with the
    sum of its children's subtree estimates by inverse variance.  Top-down,
    the residual between a parent's final value and its children's estimates
    is split in proportion to the children's variances.  ``level_variance``
    overrides the noise variance per level (defaults to the tree's own).
    """
    variance = tree.count_variance if level_variance is None else level_variance
    est: dict[int, tuple[float, float]] = {}

    def up(node: PkdNode) -> tuple[float, float]:
        own = (node.raw_count, variance(node.level))
        if node.is_leaf:
            est[id(node)] = own
            return own
        (zl, vl), (zr, vr) = up(node.children[0]), up(node.children[1])
        combined = _inverse_variance(own, (zl + zr, vl + vr))
        est[id(node)] = combined
        return combined

    def down(node: PkdNode, value: float) -> None:
        node.count = value
        if node.is_leaf:
            return
        (zl, vl), (zr, vr) = est[id(node.children[0])], est[id(node.children[1])]
        resid = value - zl - zr
        share = 0.5 if vl + vr == 0 else vl / (vl + vr)
        left = zl + resid * share
        down(node.children[0], left)
        down(node.children[1], value - left)

    root_value, _ = up(tree.root)
    down(tree.root, root_value)
    tree.post_processed = True
    return tree


def _inverse_variance(a: tuple[float, float], b: tuple[float, float]) -> tuple[float, float]:
    (xa, va), (xb, vb) = a, b
    if va + vb == 0:
        return (xa + xb) / 2, 0.0
    if math.isinf(va):
        return xb, vb
    if math.isinf(vb):
        return xa, va
    return (xa * vb + xb * va) / (va + vb), va * vb / (va + vb)


def estimate_matching_many(tree: PkdTree, task_lo: np.ndarray, task_hi: np.ndarray, chunk: int = 64):
    """Estimated matching workers per task assuming uniformity inside leaves."""
    lo, hi, _, counts = tree.leaf_arrays()
    vol = np.prod(hi - lo, axis=1)
    weights = np.divide(counts, vol, out=np.zeros_like(counts), where=vol > 0)
    out = np.empty(len(task_lo))
    for s in range(0, len(task_lo), chunk):
        ov = overlap_volume(lo, hi, task_lo[s : s + chunk], task_hi[s : s + chunk])
        out[s : s + chunk] = weights @ ov
    return out


def estimate_matching(tree: PkdTree, task) -> float:
    lo = np.asarray(task.lo, dtype=float)[None]
    hi = np.asarray(task.hi, dtype=float)[None]
    return float(estimate_matching_many(tree, lo, hi)[0])


def true_leaf_counts(tree: PkdTree, workers: np.ndarray) -> list[int]:
    return [int(leaf.subspace.contains(workers).sum()) for leaf in tree.leaves()]


# -- serialization -----------------------------------------------------------


def _node_to_dict(node: PkdNode) -> dict:
    d = {
        "subspace": node.subspace.to_dict(),
        "level": node.level,
        "raw_count": node.raw_count,
        "count": node.count,
    }
    if node.children:
        d["split_dim"] = node.split_dim
        d["split_value"] = node.split_value
        d["children"] = [_node_to_dict(c) for c in node.children]
    return d


def _node_from_dict(d: dict) -> PkdNode:
    return PkdNode(
        Subspace.from_dict(d["subspace"]),
        d["level"],
        d["raw_count"],
        d.get("count"),
        d.get("split_dim"),
        d.get("split_value"),
        [_node_from_dict(c) for c in d.get("children", [])],
    )


def dumps_tree(tree: PkdTree) -> str:
    doc = {
        "format": "pkdcrowd-tree",
        "version": TREE_FORMAT_VERSION,
        "epsilon": tree.budget.epsilon_total,
        "h": tree.h,
        "epsilon_c": list(tree.budget.epsilon_c),
        "epsilon_m": list(tree.budget.epsilon_m),
        "n_workers": tree.n_workers,
        "tau": tree.tau,
        "l": tree.l,
        "dim_order": list(tree.dim_order),
        "n_count_sums": tree.n_count_sums,
        "n_histograms": tree.n_histograms,
        "post_processed": tree.post_processed,
        "root": _node_to_dict(tree.root),
    }
    return json.dumps(doc, indent=1)


def loads_tree(text: str) -> PkdTree:
    doc = json.loads(text)
    if doc.get("format") != "pkdcrowd-tree" or doc.get("version") != TREE_FORMAT_VERSION:
        raise ValueError("unsupported tree file")
    budget = BudgetPlan(doc["epsilon"], doc["h"], tuple(doc["epsilon_c"]), tuple(doc["epsilon_m"]))
    return PkdTree(
        _node_from_dict(doc["root"]),
        budget,
        doc["n_workers"],
        doc["tau"],
        doc["l"],
        tuple(doc["dim_order"]),
        doc["n_count_sums"],
        doc["n_histograms"],
        doc["post_processed"],
    )


def save_tree(path, tree: PkdTree) -> None:
    Path(path).write_text(dumps_tree(tree))


def load_tree(path) -> PkdTree:
    return loads_tree(Path(path).read_text())
