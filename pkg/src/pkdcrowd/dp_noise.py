"""Infinitely divisible two-sided geometric noise.

A two-sided geometric variable with parameter ``alpha`` is the difference of
two i.i.d. geometric variables, and a geometric variable is the sum of ``n``
i.i.d. negative binomial variables with shape ``1/n``.  Each of the
``|P| - tau`` honest workers therefore draws a share ``R1 - R2`` with
``R1, R2 ~ NB(1/(|P| - tau), alpha)`` and the shares add up to the
geometric mechanism's noise.

Negative binomial pmf used throughout (``r`` real, ``k >= 0``)::

    g(k) = C(k - 1 + r, k) * alpha**k * (1 - alpha)**r
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special


@dataclass(frozen=True)
class NoiseParams:
    epsilon_portion: float
    num_workers: int
    collusion_tau: int = 0

    def __post_init__(self):
        if not self.epsilon_portion > 0:
            raise ValueError(f"epsilon_portion must be positive, got {self.epsilon_portion}")
        if self.num_workers < 1:
            raise ValueError("num_workers must be >= 1")
        if not 0 <= self.collusion_tau < self.num_workers:
            raise ValueError(
                f"collusion_tau must be in [0, num_workers), got {self.collusion_tau}"
            )

    @property
    def alpha(self) -> float:
        return math.exp(-self.epsilon_portion)

    @property
    def share_exponent(self) -> float:
        return 1.0 / (self.num_workers - self.collusion_tau)


def _check_nb(r, alpha):
    if not r > 0:
        raise ValueError(f"r must be positive, got {r}")
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")


def sample_negative_binomial(r: float, alpha: float, rng: np.random.Generator, size=None):
    """Negative binomial draw via the gamma-Poisson mixture.

    ``lambda ~ Gamma(shape=r, scale=alpha/(1-alpha))`` then ``Poisson(lambda)``;
    exact for every real ``r > 0``.
    """
    _check_nb(r, alpha)
    lam = rng.gamma(shape=r, scale=alpha / (1.0 - alpha), size=size)
    out = rng.poisson(lam)
    if size is None:
        return int(out)
    return out.astype(np.int64)


def negative_binomial_pmf(k, r: float, alpha: float):
    k = np.asarray(k, dtype=float)
    logp = (
        special.gammaln(k + r)
        - special.gammaln(r)
        - special.gammaln(k + 1)
        + k * math.log(alpha)
        + r * math.log1p(-alpha)
    )
    return np.where(k >= 0, np.exp(logp), 0.0)


def noise_share(params: NoiseParams, rng: np.random.Generator, size=None):
    """One worker's noise share ``R1 - R2``."""
    r, alpha = params.share_exponent, params.alpha
    r1 = sample_negative_binomial(r, alpha, rng, size)
    r2 = sample_negative_binomial(r, alpha, rng, size)
    return r1 - r2


def two_sided_geometric(epsilon: float, rng: np.random.Generator, size=None):
    """Centralized geometric-mechanism noise (sensitivity 1)."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    p = -math.expm1(-epsilon)  # 1 - alpha
    # numpy's geometric counts trials (support >= 1)
    x = rng.geometric(p, size=size) - rng.geometric(p, size=size)
    return int(x) if size is None else x.astype(np.int64)


def two_sided_geometric_pmf(z, epsilon: float):
    alpha = math.exp(-epsilon)
    z = np.abs(np.asarray(z, dtype=float))
    return (1 - alpha) / (1 + alpha) * alpha**z


def two_sided_geometric_variance(epsilon: float) -> float:
    alpha = math.exp(-epsilon)
    return 2 * alpha / (1 - alpha) ** 2


def summed_share_variance(params: NoiseParams, n_shares: int | None = None) -> float:
    """Variance of the sum of ``n_shares`` shares (defaults to ``|P|``)."""
    n_shares = params.num_workers if n_shares is None else n_shares
    alpha = params.alpha
    return n_shares * params.share_exponent * 2 * alpha / (1 - alpha) ** 2
