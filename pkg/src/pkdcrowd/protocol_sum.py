"""Distributed private sums and private median estimation.

Every worker adds a noise share to its private bit, encrypts the result and
sends it to the platform, which folds the ciphertexts homomorphically, ships
the aggregate to ``T`` decryptors and recombines their partial decryptions.
A histogram is ``l`` such sums run side by side, one per bin.

Passing ``keys=None`` runs the same protocol on plaintexts (mock crypto):
identical noise, identical message accounting, no ciphertexts.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import crypto_he as he
from .dp_noise import NoiseParams, noise_share, sample_negative_binomial


@dataclass
class MessageLog:
    n_workers: int
    enc_msgs_to_platform: int = 0
    enc_msgs_by_platform: int = 0
    enc_msgs_per_worker: np.ndarray = field(default=None)
    sum_protocols: int = 0

    def __post_init__(self):
        if self.enc_msgs_per_worker is None:
            self.enc_msgs_per_worker = np.zeros(self.n_workers, dtype=np.int64)

    def record(self, n_sums: int, decryptors: Sequence[int]) -> None:
        t = len(decryptors)
        self.enc_msgs_to_platform += (self.n_workers + t) * n_sums
        self.enc_msgs_by_platform += t * n_sums
        self.enc_msgs_per_worker += n_sums
        self.enc_msgs_per_worker[np.asarray(decryptors, dtype=np.int64)] += n_sums
        self.sum_protocols += n_sums

    @property
    def per_worker_avg(self) -> float:
        return float(self.enc_msgs_per_worker.sum()) / self.n_workers

    def merge(self, other: "MessageLog") -> None:
        self.enc_msgs_to_platform += other.enc_msgs_to_platform
        self.enc_msgs_by_platform += other.enc_msgs_by_platform
        self.enc_msgs_per_worker += other.enc_msgs_per_worker
        self.sum_protocols += other.sum_protocols


@dataclass
class PerturbedHistogram:
    bins: np.ndarray
    edges: np.ndarray
    epsilon_spent: float = 0.0

    def __post_init__(self):
        self.bins = np.asarray(self.bins)
        self.edges = np.asarray(self.edges, dtype=float)
        if len(self.edges) != len(self.bins) + 1:
            raise ValueError("edges must have one more entry than bins")
        if np.any(np.diff(self.edges) <= 0):
            raise ValueError("bin ranges must be contiguous and increasing")

    @property
    def l(self) -> int:
        return len(self.bins)

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.edges[0]), float(self.edges[-1])


def share_index_of(worker: int, n_shares: int) -> int:
    """Key-share index held by ``worker`` (shares dealt round-robin)."""
    return worker % n_shares + 1


def choose_decryptors(n_workers: int, threshold: int, rng, n_shares: int | None = None) -> list[int]:
    """First ``threshold`` workers of a seeded shuffle holding distinct key shares."""
    n_shares = n_workers if n_shares is None else n_shares
    picked, seen = [], set()
    for w in rng.permutation(n_workers):
        s = share_index_of(int(w), n_shares)
        if s not in seen:
            seen.add(s)
            picked.append(int(w))
            if len(picked) == threshold:
                return picked
    raise he.InsufficientSharesError(
        f"cannot find {threshold} workers with distinct key shares among {n_workers}"
    )


def perturbed_sums(
    bits: np.ndarray,
    params: NoiseParams,
    keys: he.KeyMaterial | None,
    threshold: int,
    rng: np.random.Generator,
    log: MessageLog | None = None,
    decryptors: Sequence[int] | None = None,
    aggregate_noise: bool = False,
) -> np.ndarray:
    """Run ``k`` parallel private sums over the columns of an ``(|P|, k)`` bit matrix.

    ``aggregate_noise`` (mock crypto only) draws each column's total noise
    directly: a sum of ``|P|`` i.i.d. ``NB(r)`` variables is ``NB(|P| r)``,
    so the result has exactly the per-worker distribution at a fraction of
    the cost.
    """
    bits = np.asarray(bits, dtype=np.int64)
    if bits.ndim == 1:
        bits = bits[:, None]
    n_workers, k = bits.shape
    if n_workers != params.num_workers:
        raise ValueError(f"expected {params.num_workers} workers, got {n_workers}")
    if threshold <= params.collusion_tau:
        raise ValueError(f"threshold T={threshold} must exceed tau={params.collusion_tau}")
    n_shares = keys.public_key.n_shares if keys is not None else n_workers
    if decryptors is None:
        decryptors = choose_decryptors(n_workers, threshold, rng, n_shares)
    decryptors = list(decryptors)

    if aggregate_noise:
        if keys is not None:
            raise ValueError("aggregate_noise is only available with mock crypto")
        result = bits.sum(axis=0) + aggregated_noise(params, rng, k)
    else:
        values = bits + noise_share(params, rng, size=(n_workers, k))
        if keys is None:
            result = values.sum(axis=0)
        else:
            result = _encrypted_sums(values, keys, decryptors, rng)
    if log is not None:
        log.record(k, decryptors)
    return result


def aggregated_noise(params: NoiseParams, rng, k: int) -> np.ndarray:
    """Sum of ``|P|`` noise shares, drawn in one step per column."""
    r = params.num_workers * params.share_exponent
    return sample_negative_binomial(r, params.alpha, rng, k) - sample_negative_binomial(
        r, params.alpha, rng, k
    )


def _encrypted_sums(values, keys, decryptors, rng) -> np.ndarray:
    pk = keys.public_key
    n_workers, k = values.shape
    # worker side: one ciphertext per (worker, bin)
    cts = [[he.encrypt(pk, pk.encode(int(v)), rng) for v in row] for row in values]
    # platform side: fold each bin
    folded = [he.add_many(pk, (cts[w][j] for w in range(n_workers))) for j in range(k)]
    # decryptors: partial decryption of every folded bin
    partials = [[] for _ in range(k)]
    for w in decryptors:
        share = keys.share(share_index_of(w, pk.n_shares))
        for j in range(k):
            partials[j].append(he.partial_decrypt(pk, share, folded[j]))
    return np.array([pk.decode(he.combine(pk, partials[j])) for j in range(k)], dtype=np.int64)


def run_private_sum(worker_bits, params, keys, threshold, rng, log=None, decryptors=None) -> int:
    return int(perturbed_sums(np.asarray(worker_bits)[:, None], params, keys, threshold, rng, log, decryptors)[0])


# -- histograms and medians ----------------------------------------------------


def bin_edges(domain: tuple[float, float], l: int) -> np.ndarray:
    lo, hi = domain
    return np.linspace(lo, hi, l + 1)


def histogram_bits(values, domain, l, active=None) -> np.ndarray:
    """One-hot ``(|P|, l)`` matrix; inactive workers contribute all zeros."""
    values = np.asarray(values, dtype=float)
    lo, hi = domain
    idx = np.floor((values - lo) / (hi - lo) * l).astype(np.int64)
    idx = np.clip(idx, 0, l - 1)
    bits = np.zeros((len(values), l), dtype=np.int64)
    rows = np.arange(len(values))
    if active is None:
        active = (values >= lo) & (values <= hi)
    bits[rows[active], idx[active]] = 1
    return bits


def estimate_median(hist: PerturbedHistogram) -> float:
    """Median under within-bin uniformity.

    ``D_min + w * (k + 1/2 + (theta_gt - theta_lt) / (2 * b_k))`` with ``w`` the
    bin width and ``k`` the bin where the cumulative mass reaches one half.
    Negative perturbed bins are clamped to zero before scanning.
    """
    d_min, d_max = hist.domain
    b = np.clip(np.asarray(hist.bins, dtype=float), 0.0, None)
    total = b.sum()
    if total <= 0:
        return (d_min + d_max) / 2
    cum = np.cumsum(b)
    k = int(np.searchsorted(cum, total / 2.0))
    k = min(k, hist.l - 1)
    width = (d_max - d_min) / hist.l
    if b[k] == 0:
        return d_min + width * (k + 0.5)
    theta_lt = cum[k] - b[k]
    theta_gt = total - cum[k]
    return d_min + width * (k + 0.5 + (theta_gt - theta_lt) / (2.0 * b[k]))


def run_priv_med(
    worker_values,
    domain: tuple[float, float],
    l: int,
    params: NoiseParams,
    keys,
    threshold: int,
    rng,
    log=None,
    decryptors=None,
    active=None,
    aggregate_noise: bool = False,
) -> tuple[float, PerturbedHistogram]:
    if l < 1:
        raise ValueError("l must be >= 1")
    bits = histogram_bits(worker_values, domain, l, active)
    sums = perturbed_sums(bits, params, keys, threshold, rng, log, decryptors, aggregate_noise)
    hist = PerturbedHistogram(sums, bin_edges(domain, l), params.epsilon_portion)
    return estimate_median(hist), hist
