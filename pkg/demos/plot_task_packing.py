"""
Delivering tasks with one PIR download
======================================

Each leaf of the tree becomes a bucket holding every task that intersects
it. A worker fetches the bucket of its own leaf and is guaranteed to get
all of its matching tasks. Spamming, by contrast, sends everything to
everyone.
"""

import numpy as np

from pkdcrowd import metrics, packing, pkd_tree, workload

rng = np.random.default_rng(2)
workers = workload.gen_unif_workers(5000, 4, rng)
tree = pkd_tree.build_pkd(workers, None, 8, 10, 0.1, 1, 2, None, rng, aggregate_noise=True)
pkd_tree.post_process(tree)

for ratio in (0.1, 0.5, 1.0):
    tasks = workload.gen_subvolume_tasks(tree, 500, ratio, rng)
    pack = packing.pkd_pir_packing(tree, tasks)
    assert packing.check_packing(pack, tasks, tree.root.subspace).ok
    bucket_of = packing.assign_buckets(pack, workers)
    pir_p = metrics.packing_precision(pack, bucket_of, workers, tasks)
    spam_p = metrics.spam_precision(workers, tasks)
    print(f"r={ratio}: precision {pir_p:.3f} vs spam {spam_p:.5f}, max tasks per bucket {metrics.max_tasks(pack)}")

# %%
# The smallest possible bucket size is the heaviest point of the task
# arrangement. Brute force finds the fewest buckets that reach it.
tasks, space = packing.partition_instance([1, 2, 3])
best = packing.brute_force_optimal(tasks, space)
print("m_T =", packing.min_weight(tasks), "buckets:", [sorted(b.task_ids) for b in best.buckets])
