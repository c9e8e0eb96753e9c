"""
A private KD-tree over worker skills
====================================

The tree is grown with private medians and private counts only. After
construction, constrained inference makes every parent equal to the sum of
its children.
"""

import numpy as np
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
from matplotlib.patches import Rectangle

from pkdcrowd import pkd_tree, workload

rng = np.random.default_rng(1)
workers = workload.gen_unif_workers(3000, 2, rng)

# mock crypto: the same noise, no ciphertexts
tree = pkd_tree.build_pkd(workers, None, 5, 10, 1.0, 1, 2, None, rng, aggregate_noise=True)
pkd_tree.post_process(tree)

fig, ax = plt.subplots(figsize=(5, 5))
ax.plot(*workers.T, ",", color="0.6")
for leaf in tree.leaves():
    (x0, y0), (x1, y1) = leaf.subspace.lo, leaf.subspace.hi
    ax.add_patch(Rectangle((x0, y0), x1 - x0, y1 - y0, fill=False, lw=0.8))
    ax.text((x0 + x1) / 2, (y0 + y1) / 2, f"{leaf.count:.0f}", ha="center", va="center", fontsize=6)
fig.savefig("pkd_tree_leaves.svg")

# %%
# Estimated against exact matching counts for a few random tasks
tasks = workload.gen_unif_tasks(5, 2, rng)
lo, hi, _ = workload.task_arrays(tasks)
print("exact    ", workload.match_counts(workers, lo, hi))
print("estimated", np.round(pkd_tree.estimate_matching_many(tree, lo, hi), 1))
