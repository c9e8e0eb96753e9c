"""Command line entry point: ``pkdcrowd <subcommand> ...``.

Exit status is 0 on success, 2 when an invariant check fails and 1 on any
other error; the diagnostic goes to stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import crypto_he as he
from . import ingest_stack, metrics, packing as pk, pkd_tree, runner, workload
from .config import ConfigError, dumps_config, load_config
from .space import Subspace

log = logging.getLogger("pkdcrowd")


def _overrides(args) -> dict:
    out = {}
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v
    if getattr(args, "mock_crypto", False):
        out["mock_crypto"] = "true"
    if getattr(args, "seed", None) is not None:
        out["seed"] = str(args.seed)
    return out


def cmd_keygen(args) -> None:
    rng = np.random.default_rng(args.seed)
    keys = he.keygen(args.bits, args.shares, args.threshold, rng)
    Path(args.out).write_text(he.dumps_keys(keys, include_private=args.include_private))
    print(f"wrote {args.bits}-bit keys, {args.threshold}-of-{args.shares}, to {args.out}")


def cmd_gen_data(args) -> None:
    rng_w, rng_t = (np.random.default_rng(s) for s in np.random.SeedSequence(args.seed).spawn(2))
    if args.generator == "onespe":
        workers = workload.gen_onespe_workers(args.n_workers, args.n_dims, rng_w)
    else:
        workers = workload.gen_unif_workers(args.n_workers, args.n_dims, rng_w)
    workload.save_workers(args.workers_out, workers)
    if args.tasks_out:
        def gen(k, r):
            if args.task_generator == "onespe":
                return workload.gen_onespe_tasks(k, args.n_dims, r, args.task_bits)
            return workload.gen_unif_tasks(k, args.n_dims, r, args.task_bits)
        tasks = workload.ensure_nonempty(gen(args.n_tasks, rng_t), workers, gen, rng_t)
        workload.save_tasks(args.tasks_out, tasks)
    print(f"wrote {len(workers)} workers" + (f" and {args.n_tasks} tasks" if args.tasks_out else ""))


def cmd_ingest(args) -> None:
    if args.whitelist == "common":
        whitelist = list(ingest_stack.COMMON_TAGS)
    elif args.whitelist:
        whitelist = [t.strip() for t in args.whitelist.split(",") if t.strip()]
    else:
        whitelist = None
    table = ingest_stack.ingest(args.posts, args.votes, args.tags, args.out, whitelist)
    if args.freq_out:
        ingest_stack.save_tag_frequency(args.freq_out, table)
    print(f"wrote {len(table)} profiles to {args.out}")


def cmd_build_pkd(args) -> None:
    workers = workload.load_workers(args.workers)
    rng = np.random.default_rng(args.seed)
    keys = None
    if not args.mock_crypto:
        if not args.keys:
            raise ConfigError("build-pkd needs --keys unless --mock-crypto is given")
        keys = he.loads_keys(Path(args.keys).read_text())
    msg_log = runner.MessageLog(len(workers))
    tree = pkd_tree.build_pkd(
        workers, None, args.h, args.l, args.epsilon, args.tau, args.T, keys, rng, msg_log,
        aggregate_noise=args.mock_crypto,
    )
    if not args.raw:
        pkd_tree.post_process(tree)
        runner.check_tree_consistency(tree)
    cfg = load_config(overrides={"depth_h": args.h, "l_bins": args.l, "T": args.T, "tau": args.tau,
                                 "n_workers": len(workers), "mock_crypto": True})
    runner.reconcile_messages(msg_log, cfg, len(workers))
    pkd_tree.save_tree(args.out, tree)
    print(f"wrote tree with {len(tree.leaves())} leaves; {msg_log.enc_msgs_to_platform} messages to the platform")


def cmd_pack(args) -> None:
    tree = pkd_tree.load_tree(args.tree)
    tasks = workload.load_tasks(args.tasks)
    packing = pk.pkd_pir_packing(tree, tasks)
    verdict = pk.check_packing(packing, tasks, Subspace.full(tree.root.subspace.n_dims))
    if not verdict.ok:
        raise runner.InvariantViolation(f"packing condition {verdict.first} violated: {verdict.violations[0][1]}")
    pk.save_packing(args.out, packing)
    print(f"wrote {len(packing.buckets)} buckets of {packing.weight} bits; max tasks {metrics.max_tasks(packing)}")


def cmd_run(args) -> None:
    cfg = load_config(args.config, _overrides(args))
    reports = runner.run_experiment(cfg)
    runner.write_run(reports, args.out)
    summary = runner.summarize([r.row() for r in reports])
    for k, v in summary.items():
        print(f"{k}\t{v:.6g}")


def cmd_sweep(args) -> None:
    cfg = load_config(args.config, _overrides(args))
    values = [float(v) for v in args.values.split(",")]
    rows = runner.sweep(cfg, args.axis, values)
    metrics.write_csv(args.out, rows, ("axis", "value") + runner.RUN_COLUMNS)
    plot = args.plot or str(Path(args.out).with_suffix(".svg"))
    runner.plot_sweep(rows, args.axis, plot)
    print(f"wrote {len(rows)} rows to {args.out} and plot {plot}")


def cmd_bench_pir(args) -> None:
    sizes = [int(float(s)) for s in args.sizes.split(",")]
    rows, fit = runner.bench_pir(sizes, args.trials, args.key_bits, args.seed)
    metrics.write_csv(args.out, rows, ("size_bytes", "seconds"))
    Path(args.out).with_suffix(".fit.json").write_text(json.dumps(fit, indent=1) + "\n")
    print(f"slope {fit['slope_s_per_mb']:.4g} s/MB, intercept {fit['intercept_s']:.4g} s, r2 {fit['r2']:.4f}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pkdcrowd", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("keygen", help="deal threshold encryption keys")
    s.add_argument("--bits", type=int, default=1024)
    s.add_argument("--shares", type=int, default=5)
    s.add_argument("--threshold", type=int, default=2)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--include-private", action="store_true", help="also store the factorization")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_keygen)

    s = sub.add_parser("gen-data", help="synthetic workers and tasks")
    s.add_argument("--generator", choices=("unif", "onespe"), default="unif")
    s.add_argument("--task-generator", choices=("unif", "onespe"), default="unif")
    s.add_argument("--n-workers", type=int, default=10_000)
    s.add_argument("--n-dims", type=int, default=10)
    s.add_argument("--n-tasks", type=int, default=1_000)
    s.add_argument("--task-bits", type=int, default=workload.DEFAULT_TASK_BITS)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--workers-out", required=True)
    s.add_argument("--tasks-out")
    s.set_defaults(func=cmd_gen_data)

    s = sub.add_parser("ingest", help="profiles from StackExchange dumps")
    s.add_argument("--posts", required=True)
    s.add_argument("--votes", required=True)
    s.add_argument("--tags")
    s.add_argument("--whitelist", help="comma separated tags, or 'common' for the ten common skills")
    s.add_argument("--freq-out", help="optional tag frequency CSV")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("build-pkd", help="build a PKD tree from a worker file")
    s.add_argument("--workers", required=True)
    s.add_argument("--keys")
    s.add_argument("--h", type=int, default=10)
    s.add_argument("--l", type=int, default=10)
    s.add_argument("--epsilon", type=float, default=0.1)
    s.add_argument("--tau", type=int, default=1)
    s.add_argument("--T", type=int, default=2)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--mock-crypto", action="store_true")
    s.add_argument("--raw", action="store_true", help="skip constrained inference")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_build_pkd)

    s = sub.add_parser("pack", help="PKD PIR packing of a task file")
    s.add_argument("--tree", required=True)
    s.add_argument("--tasks", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_pack)

    for name, func, help_ in (("run", cmd_run, "full pipeline"), ("sweep", cmd_sweep, "parameter sweep")):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config")
        s.add_argument("--set", action="append", metavar="KEY=VALUE")
        s.add_argument("--seed", type=int)
        s.add_argument("--mock-crypto", action="store_true")
        s.add_argument("--out", required=True)
        if name == "sweep":
            s.add_argument("--axis", required=True, choices=sorted(runner.SWEEP_AXES))
            s.add_argument("--values", required=True, help="comma separated")
            s.add_argument("--plot")
        s.set_defaults(func=func)

    s = sub.add_parser("bench-pir", help="PIR answer time against library size")
    s.add_argument("--sizes", default="16384,32768,65536,131072,262144")
    s.add_argument("--trials", type=int, default=3)
    s.add_argument("--key-bits", type=int, default=1024)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_bench_pir)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (runner.InvariantViolation, he.InsufficientSharesError, workload.RetryBudgetExhausted) as exc:
        print(f"pkdcrowd {args.command}: invariant violated: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, ValueError, OSError, he.CryptoError) as exc:
        print(f"pkdcrowd {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
