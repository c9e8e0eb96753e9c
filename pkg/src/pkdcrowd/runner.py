"""End-to-end experiment pipeline, parameter sweeps and the PIR benchmark.

One run: generate workers, build and post-process the PKD tree through the
(private or mock) sum protocol, generate tasks, pack them per leaf, have every
worker fetch its bucket, then score quality and precision and reconcile the
message counters against the closed-form counts.
"""
from __future__ import annotations

import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import crypto_he as he
from . import ingest_stack, metrics, packing as pk, pir_engine as pir, pkd_tree, workload
from .config import ExperimentConfig
from .protocol_sum import MessageLog
from .space import Subspace

log = logging.getLogger(__name__)

RUN_COLUMNS = (
    "seed", "generator", "task_generator", "n_dims", "n_workers", "n_tasks", "epsilon", "tau", "T",
    "l_bins", "depth_h", "subvolume_ratio", "mock_crypto", "quality", "precision_pir",
    "precision_spam", "max_tasks", "n_buckets", "bucket_bits", "recall",
    "msgs_to_platform", "msgs_by_platform", "msgs_per_worker_avg",
    "formula_to_platform", "formula_by_platform", "formula_per_worker_avg",
)
TIMING_COLUMNS = ("seed", "data", "keygen", "build", "post_process", "tasks", "quality", "pack", "pir", "metrics")
SWEEP_AXES = {
    "depth": "depth_h",
    "epsilon": "epsilon",
    "bins": "l_bins",
    "workers": "n_workers",
    "ratio": "subvolume_ratio",
}
SUMMARY_METRICS = ("quality", "precision_pir", "precision_spam", "max_tasks")


class InvariantViolation(RuntimeError):
    pass


@dataclass
class RunReport:
    config: ExperimentConfig
    seed: int
    quality: float
    precision_pir: float
    precision_spam: float
    max_tasks: int
    n_buckets: int
    bucket_bits: int
    recall: float
    measured: dict
    formula: dict
    timings: dict = field(default_factory=dict)

    def row(self) -> dict:
        c = self.config
        return {
            "seed": self.seed, "generator": c.generator, "task_generator": c.task_generator,
            "n_dims": c.n_dims, "n_workers": c.n_workers, "n_tasks": c.n_tasks,
            "epsilon": c.epsilon, "tau": c.tau, "T": c.T, "l_bins": c.l_bins,
            "depth_h": c.depth_h, "subvolume_ratio": c.subvolume_ratio, "mock_crypto": c.mock_crypto,
            "quality": self.quality, "precision_pir": self.precision_pir,
            "precision_spam": self.precision_spam, "max_tasks": self.max_tasks,
            "n_buckets": self.n_buckets, "bucket_bits": self.bucket_bits, "recall": self.recall,
            "msgs_to_platform": self.measured["to_platform"],
            "msgs_by_platform": self.measured["by_platform"],
            "msgs_per_worker_avg": self.measured["per_worker_avg"],
            "formula_to_platform": self.formula["to_platform"],
            "formula_by_platform": self.formula["by_platform"],
            "formula_per_worker_avg": self.formula["per_worker_avg"],
        }

    def timing_row(self) -> dict:
        return {"seed": self.seed, **{k: round(v, 6) for k, v in self.timings.items()}}


class _Clock:
    def __init__(self):
        self.times: dict[str, float] = {}

    @contextmanager
    def phase(self, name):
        t0 = time.perf_counter()
        yield
        self.times[name] = self.times.get(name, 0.0) + time.perf_counter() - t0


def _streams(seed: int, k: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(k)]


def make_workers(cfg: ExperimentConfig, rng) -> np.ndarray:
    if cfg.generator == "unif":
        return workload.gen_unif_workers(cfg.n_workers, cfg.n_dims, rng)
    if cfg.generator == "onespe":
        return workload.gen_onespe_workers(cfg.n_workers, cfg.n_dims, rng)
    path = Path(cfg.stack_profiles)
    tags = ingest_stack.load_tag_manifest(path.with_name(path.name + ".tags.json"))
    table = workload.load_workers(path)
    if table.shape[1] != len(tags):
        raise InvariantViolation("profile file and tag manifest disagree on dimensions")
    return table[rng.integers(len(table), size=cfg.n_workers)]


def make_tasks(cfg: ExperimentConfig, tree, workers, rng) -> list[workload.TaskSpec]:
    n_dims = workers.shape[1]
    if cfg.task_generator == "subvolume":
        def gen(k, r):
            return workload.gen_subvolume_tasks(tree, k, cfg.subvolume_ratio, r, cfg.task_bits)
    elif cfg.task_generator == "onespe":
        def gen(k, r):
            return workload.gen_onespe_tasks(k, n_dims, r, cfg.task_bits)
    else:
        def gen(k, r):
            return workload.gen_unif_tasks(k, n_dims, r, cfg.task_bits)
    return workload.ensure_nonempty(gen(cfg.n_tasks, rng), workers, gen, rng)


def check_tree_consistency(tree, tol: float = 1e-6) -> None:
    for node in tree.nodes():
        if node.children:
            gap = node.estimate - sum(c.estimate for c in node.children)
            if abs(gap) > tol * max(1.0, abs(node.estimate)):
                raise InvariantViolation(f"post-processed node at level {node.level} off by {gap}")


def reconcile_messages(msg_log: MessageLog, cfg: ExperimentConfig, n_workers: int) -> tuple[dict, dict]:
    formula = metrics.message_counts(n_workers, cfg.T, cfg.depth_h, cfg.l_bins)
    measured = {
        "to_platform": msg_log.enc_msgs_to_platform,
        "by_platform": msg_log.enc_msgs_by_platform,
        "per_worker_avg": msg_log.per_worker_avg,
    }
    exact = (
        measured["to_platform"] == formula["to_platform"]
        and measured["by_platform"] == formula["by_platform"]
        and abs(measured["per_worker_avg"] - formula["per_worker_avg"]) <= 1e-9 * formula["per_worker_avg"]
    )
    if not exact:
        raise InvariantViolation(f"message counts {measured} differ from closed form {formula}")
    return measured, formula


def fetch_buckets(packing, tasks, bucket_of, cfg, rng, keypair=None) -> list[list[tuple[int, bytes]]]:
    """Every worker downloads its own bucket; through real PIR unless mock crypto."""
    items = pk.encode_packing(packing, tasks, cfg.seed)
    # decoding is deterministic, so each distinct bucket is parsed once
    decoded = {}
    if cfg.mock_crypto or keypair is None:
        for b in np.unique(bucket_of):
            decoded[int(b)] = pk.decode_bucket(items[b])
        return [decoded[int(b)] for b in bucket_of]
    pk_c, sk_c = keypair
    lib = pir.build_library(items, plaintext_bits=pk_c.plaintext_bits)
    out = []
    for b in bucket_of:
        b = int(b)
        got = pir.retrieve(pk_c, sk_c, lib, b, rng)
        if got != lib.items[b]:
            raise InvariantViolation(f"PIR returned wrong bytes for bucket {b}")
        if b not in decoded:
            decoded[b] = pk.decode_bucket(got)
        out.append(decoded[b])
    return out


def run_once(cfg: ExperimentConfig, seed: int) -> RunReport:
    clock = _Clock()
    r_data, r_keys, r_tree, r_tasks, r_pir = _streams(seed, 5)
    with clock.phase("data"):
        workers = make_workers(cfg, r_data)
    n_workers, n_dims = workers.shape
    keys = client_keys = None
    with clock.phase("keygen"):
        if not cfg.mock_crypto:
            keys = he.keygen(cfg.key_bits, cfg.n_key_shares, cfg.T, r_keys)
            if cfg.pir_fetch:
                client_keys = he.generate_keypair(cfg.key_bits, r_keys)
    msg_log = MessageLog(n_workers)
    with clock.phase("build"):
        tree = pkd_tree.build_pkd(
            workers, None, cfg.depth_h, cfg.l_bins, cfg.epsilon, cfg.tau, cfg.T, keys, r_tree,
            msg_log, aggregate_noise=cfg.mock_crypto and cfg.aggregate_noise,
        )
    with clock.phase("post_process"):
        pkd_tree.post_process(tree)
        check_tree_consistency(tree)
    measured, formula = reconcile_messages(msg_log, cfg, n_workers)
    with clock.phase("tasks"):
        tasks = make_tasks(cfg, tree, workers, r_tasks)
    with clock.phase("quality"):
        q = metrics.quality(tree, workers, tasks)
    with clock.phase("pack"):
        packing = pk.pkd_pir_packing(tree, tasks)
        verdict = pk.check_packing(packing, tasks, Subspace.full(n_dims))
        if not verdict.ok:
            raise InvariantViolation(f"packing condition {verdict.first} violated: {verdict.violations[0][1]}")
        bucket_of = pk.assign_buckets(packing, workers)
        if np.any(bucket_of < 0):
            raise InvariantViolation(f"{int((bucket_of < 0).sum())} workers fall in no bucket")
    lo, hi, _ = workload.task_arrays(tasks)
    matched = workload.match_matrix(workers, lo, hi)
    ids = np.array([t.task_id for t in tasks])
    with clock.phase("pir"):
        if cfg.pir_fetch:
            downloads = fetch_buckets(packing, tasks, bucket_of, cfg, r_pir, client_keys)
            down_ids = [frozenset(tid for tid, _ in d) for d in downloads]
        else:
            down_ids = [packing.buckets[b].task_ids for b in bucket_of]
    with clock.phase("metrics"):
        records = [
            metrics.AssignmentRecord(w, int(bucket_of[w]), down_ids[w], frozenset(ids[matched[w]].tolist()))
            for w in range(n_workers)
        ]
        n_match = sum(len(r.matching_task_ids) for r in records)
        n_found = sum(len(r.matching_task_ids & r.downloaded_task_ids) for r in records)
        recall = n_found / n_match if n_match else 1.0
        if recall != 1.0:
            raise InvariantViolation(f"recall {recall} below 1: some matching tasks were not delivered")
        prec = metrics.precision(records, tasks)
        spam = metrics.spam_precision(workers, tasks)
    return RunReport(
        cfg, seed, q, prec, spam, metrics.max_tasks(packing), len(packing.buckets),
        packing.weight, recall, measured, formula, clock.times,
    )


def run_experiment(cfg: ExperimentConfig) -> list[RunReport]:
    """``cfg.repetitions`` runs seeded ``cfg.seed, cfg.seed + 1, ...``."""
    reports = []
    for rep in range(cfg.repetitions):
        seed = cfg.seed + rep
        log.info("run seed=%d", seed)
        reports.append(run_once(cfg, seed))
    return reports


def summarize(rows: Sequence[dict], keys: Sequence[str] = SUMMARY_METRICS) -> dict:
    out = {}
    for k in keys:
        mean, half = metrics.mean_ci([r[k] for r in rows])
        out[f"{k}_mean"], out[f"{k}_ci95"] = mean, half
    return out


def write_run(reports: Sequence[RunReport], csv_path) -> None:
    csv_path = Path(csv_path)
    metrics.write_csv(csv_path, [r.row() for r in reports], RUN_COLUMNS)
    metrics.write_csv(
        csv_path.with_name(csv_path.stem + ".timings.csv"), [r.timing_row() for r in reports], TIMING_COLUMNS
    )


# -- sweeps --------------------------------------------------------------------


def sweep(cfg: ExperimentConfig, axis: str, values: Sequence[float]) -> list[dict]:
    if axis not in SWEEP_AXES:
        raise ValueError(f"axis must be one of {sorted(SWEEP_AXES)}")
    name = SWEEP_AXES[axis]
    rows = []
    for value in values:
        changes = {name: type(getattr(cfg, name))(value)}
        if axis == "ratio":
            changes["task_generator"] = "subvolume"
        point = cfg.replace(**changes)
        for rep in run_experiment(point):
            rows.append({"axis": axis, "value": value, **rep.row()})
    return rows


def plot_sweep(rows: Sequence[dict], axis: str, path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    series = ("precision_pir", "precision_spam") if axis == "ratio" else ("quality",)
    values = sorted({r["value"] for r in rows})
    # fixed salt keeps the generated clip-path ids, and so the file, reproducible
    plt.rcParams["svg.hashsalt"] = "pkdcrowd"
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for key in series:
        stats = [metrics.mean_ci([r[key] for r in rows if r["value"] == v]) for v in values]
        ax.errorbar(values, [m for m, _ in stats], yerr=[h for _, h in stats], marker="o", capsize=3, label=key)
    if axis in ("epsilon", "workers"):
        ax.set_xscale("log")
    if axis == "ratio":
        ax.set_yscale("log")
    ax.set_xlabel(axis)
    ax.set_ylabel("mean (95% CI)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


# -- PIR benchmark -------------------------------------------------------------


def bench_pir(sizes: Sequence[int], trials: int = 3, key_bits: int = 1024, seed: int = 0, n_items: int = 16):
    rng = np.random.default_rng(seed)
    points = pir.bench_answer(sizes, trials=trials, n_items=n_items, key_bits=key_bits, rng=rng)
    rows = [{"size_bytes": s, "seconds": t} for s, t in points]
    return rows, pir.linear_fit(points)
