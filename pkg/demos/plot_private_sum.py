"""
Summing bits under encryption
=============================

Every worker encrypts its bit plus a small noise share. The platform only
ever sees the product of the ciphertexts, and T workers jointly decrypt
it. The noise shares add up to two-sided geometric noise.
"""

import numpy as np
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from pkdcrowd import crypto_he as he
from pkdcrowd.dp_noise import NoiseParams, noise_share, two_sided_geometric_pmf
from pkdcrowd.protocol_sum import MessageLog, run_private_sum

rng = np.random.default_rng(0)

# 3-of-5 threshold keys; 512 bits keeps the demo quick
keys = he.keygen(512, 5, 3, rng)

bits = rng.integers(0, 2, 40)
log = MessageLog(len(bits))
noisy = run_private_sum(bits, NoiseParams(0.5, len(bits), 1), keys, 3, rng, log)
print("true sum", bits.sum(), "released", noisy)
print("ciphertexts sent to the platform:", log.enc_msgs_to_platform)

# %%
# The shares of 39 honest workers sum to the geometric mechanism.
params = NoiseParams(0.5, 40, 1)
z = noise_share(params, rng, (50_000, 39)).sum(axis=1)
support = np.arange(-12, 13)
freq = np.array([(z == k).mean() for k in support])

fig, ax = plt.subplots()
ax.bar(support, freq, color="0.7", label="summed shares")
ax.plot(support, two_sided_geometric_pmf(support, 0.5), "k.", label="closed form")
ax.legend()
fig.savefig("private_sum_noise.svg")
