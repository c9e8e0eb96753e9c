"""Paillier cryptosystem with dealer-based threshold decryption.

The threshold variant follows Shoup / Damgard-Jurik (s = 1): the modulus is
built from safe primes, the decryption exponent ``d`` (``d = 0 mod m``,
``d = 1 mod n``) is Shamir-shared over ``Z_{nm}`` and partial decryptions are
raised to ``2 * Delta * s_i`` where ``Delta = n_shares!`` clears the Lagrange
denominators.

All randomness comes from an explicit :class:`numpy.random.Generator` so that
key generation and encryption are reproducible under a seed.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import gmpy2
import numpy as np
from gmpy2 import mpz

KEY_MAGIC = "PKDCROWD-KEYS"
KEY_FORMAT_VERSION = 1
SUPPORTED_KEY_BITS = (512, 1024, 2048)


class CryptoError(Exception):
    pass


class InsufficientSharesError(CryptoError):
    pass


def random_below(rng: np.random.Generator, bound: int) -> int:
    """Uniform integer in ``[0, bound)`` drawn from ``rng`` by rejection."""
    if bound <= 0:
        raise ValueError("bound must be positive")
    nbits = int(bound - 1).bit_length()
    nbytes = max(1, (nbits + 7) // 8)
    excess = 8 * nbytes - nbits
    while True:
        candidate = int.from_bytes(rng.bytes(nbytes), "big") >> excess
        if candidate < bound:
            return candidate


def _random_bits(rng: np.random.Generator, bits: int) -> mpz:
    nbytes = (bits + 7) // 8
    value = int.from_bytes(rng.bytes(nbytes), "big")
    return mpz(value >> (8 * nbytes - bits))


def _safe_prime(bits: int, rng: np.random.Generator) -> mpz:
    # p = 2p' + 1 with both prime; top two bits set so p*q has the full length.
    while True:
        pp = _random_bits(rng, bits - 1) | (mpz(3) << (bits - 3)) | 1
        if pp % 3 == 1:
            # then p = 2p'+1 is divisible by 3
            continue
        if not gmpy2.is_prime(pp, 2):
            continue
        p = 2 * pp + 1
        if gmpy2.is_prime(p, 25) and gmpy2.is_prime(pp, 25):
            return p


def _prime(bits: int, rng: np.random.Generator) -> mpz:
    while True:
        p = _random_bits(rng, bits) | (mpz(3) << (bits - 2)) | 1
        if gmpy2.is_prime(p, 25):
            return p


# --------------------------------------------------------------------------
# key material


@dataclass(frozen=True)
class PublicKey:
    n: int
    g: int
    n_shares: int = 1
    threshold: int = 1
    # Delta = n_shares!, the combining constant of threshold recombination
    delta: int = 1

    @property
    def nsquare(self) -> int:
        return self.n * self.n

    @property
    def plaintext_bits(self) -> int:
        """Bits of a plaintext guaranteed to be below the modulus."""
        return self.n.bit_length() - 1

    def encode(self, m: int) -> int:
        """Map a signed integer onto ``Z_n``."""
        return m % self.n

    def decode(self, x: int) -> int:
        """Inverse of :meth:`encode` on ``(-n/2, n/2]``."""
        x %= self.n
        return x - self.n if x > self.n // 2 else x


@dataclass(frozen=True)
class KeyShare:
    index: int
    share_value: int
    verification_data: tuple[int, ...] | None = None


@dataclass(frozen=True)
class Ciphertext:
    value: int


@dataclass(frozen=True)
class PartialDecryption:
    share_index: int
    value: int


@dataclass(frozen=True)
class PrivateKey:
    """Full decryption key, kept for test oracles and PIR clients."""

    public_key: PublicKey
    p: int
    q: int

    @property
    def lam(self) -> int:
        return math.lcm(self.p - 1, self.q - 1)

    @property
    def mu(self) -> int:
        return int(gmpy2.invert(self.lam, self.public_key.n))


@dataclass
class KeyMaterial:
    """Dealer output: public key, shares and (test-only) full key."""

    public_key: PublicKey
    shares: list[KeyShare]
    private_key: PrivateKey | None = field(default=None, repr=False)

    def share(self, index: int) -> KeyShare:
        return self.shares[index - 1]


# --------------------------------------------------------------------------
# key generation


def _check_bits(security_bits: int) -> None:
    if security_bits not in SUPPORTED_KEY_BITS:
        raise ValueError(f"security_bits must be one of {SUPPORTED_KEY_BITS}, got {security_bits}")


def generate_keypair(security_bits: int, rng: np.random.Generator) -> tuple[PublicKey, PrivateKey]:
    """Plain (non-threshold) Paillier keypair, as used by a PIR client."""
    _check_bits(security_bits)
    half = security_bits // 2
    while True:
        p, q = _prime(half, rng), _prime(half, rng)
        if p != q and (p * q).bit_length() == security_bits:
            break
    n = int(p * q)
    pk = PublicKey(n=n, g=n + 1)
    return pk, PrivateKey(pk, int(p), int(q))


def keygen(
    security_bits: int,
    n_shares: int,
    threshold_T: int,
    rng: np.random.Generator,
) -> KeyMaterial:
    """Dealer key generation for a ``threshold_T``-of-``n_shares`` Paillier key."""
    _check_bits(security_bits)
    if n_shares < 1 or threshold_T < 1 or threshold_T > n_shares:
        raise ValueError(
            f"invalid threshold parameters: T={threshold_T}, n_shares={n_shares}"
        )
    half = security_bits // 2
    while True:
        p, q = _safe_prime(half, rng), _safe_prime(half, rng)
        if p != q and (p * q).bit_length() == security_bits:
            break
    n = p * q
    m = ((p - 1) // 2) * ((q - 1) // 2)
    nm = n * m
    # d = 0 mod m, d = 1 mod n
    d = m * gmpy2.invert(m, n) % nm
    coeffs = [d] + [mpz(random_below(rng, int(nm))) for _ in range(threshold_T - 1)]
    shares = []
    for i in range(1, n_shares + 1):
        s = mpz(0)
        for c in reversed(coeffs):
            s = (s * i + c) % nm
        shares.append(KeyShare(index=i, share_value=int(s)))
    pk = PublicKey(
        n=int(n),
        g=int(n + 1),
        n_shares=n_shares,
        threshold=threshold_T,
        delta=math.factorial(n_shares),
    )
    return KeyMaterial(pk, shares, PrivateKey(pk, int(p), int(q)))


# --------------------------------------------------------------------------
# homomorphic operations


def encrypt(pk: PublicKey, m: int, rng: np.random.Generator) -> Ciphertext:
    n, n2 = mpz(pk.n), mpz(pk.nsquare)
    while True:
        r = mpz(random_below(rng, pk.n))
        if r > 0 and gmpy2.gcd(r, n) == 1:
            break
    # (1+n)^m = 1 + m*n mod n^2
    gm = (1 + (mpz(m) % n) * n) % n2
    return Ciphertext(int(gm * gmpy2.powmod(r, n, n2) % n2))


def add(pk: PublicKey, c1: Ciphertext, c2: Ciphertext) -> Ciphertext:
    return Ciphertext(int(mpz(c1.value) * c2.value % pk.nsquare))


def add_many(pk: PublicKey, cts: Iterable[Ciphertext]) -> Ciphertext:
    n2 = mpz(pk.nsquare)
    acc = mpz(1)
    for c in cts:
        acc = acc * c.value % n2
    return Ciphertext(int(acc))


def scalar_mul(pk: PublicKey, c: Ciphertext, k: int) -> Ciphertext:
    if k < 0:
        raise ValueError("scalar must be nonnegative")
    return Ciphertext(int(gmpy2.powmod(c.value, k, pk.nsquare)))


def decrypt(sk: PrivateKey, c: Ciphertext) -> int:
    """Full-key decryption to ``Z_n``; oracle path only."""
    pk = sk.public_key
    n, n2 = mpz(pk.n), mpz(pk.nsquare)
    u = gmpy2.powmod(c.value, sk.lam, n2)
    return int((u - 1) // n * sk.mu % n)


def partial_decrypt(pk: PublicKey, share: KeyShare, c: Ciphertext) -> PartialDecryption:
    exp = 2 * pk.delta * share.share_value
    return PartialDecryption(share.index, int(gmpy2.powmod(c.value, exp, pk.nsquare)))


def _lagrange_at_zero(delta: int, i: int, indices: Sequence[int]) -> int:
    num, den = delta, 1
    for j in indices:
        if j != i:
            num *= -j
            den *= i - j
    # Delta * prod(-j)/(i-j) is an integer for indices <= n_shares
    assert num % den == 0
    return num // den


def combine(pk: PublicKey, partials: Sequence[PartialDecryption]) -> int:
    """Recombine partial decryptions into the plaintext in ``Z_n``."""
    by_index = {}
    for part in partials:
        by_index.setdefault(part.share_index, part.value)
    if len(by_index) < pk.threshold:
        raise InsufficientSharesError(
            f"need {pk.threshold} distinct partial decryptions, got {len(by_index)}"
        )
    indices = sorted(by_index)[: pk.threshold]
    n, n2 = mpz(pk.n), mpz(pk.nsquare)
    acc = mpz(1)
    for i in indices:
        lam = 2 * _lagrange_at_zero(pk.delta, i, indices)
        base = mpz(by_index[i])
        if lam < 0:
            base = gmpy2.invert(base, n2)
            lam = -lam
        acc = acc * gmpy2.powmod(base, lam, n2) % n2
    # acc = (1+n)^(4 Delta^2 M)
    scale = gmpy2.invert(4 * mpz(pk.delta) ** 2, n)
    return int((acc - 1) // n * scale % n)


def threshold_decrypt(keys: KeyMaterial, c: Ciphertext, indices: Sequence[int]) -> int:
    pk = keys.public_key
    return combine(pk, [partial_decrypt(pk, keys.share(i), c) for i in indices])


# --------------------------------------------------------------------------
# serialization


def dumps_keys(keys: KeyMaterial, include_private: bool = False) -> str:
    pk = keys.public_key
    doc = {
        "version": KEY_FORMAT_VERSION,
        "public_key": {
            "n": hex(pk.n),
            "g": hex(pk.g),
            "n_shares": pk.n_shares,
            "threshold": pk.threshold,
            "delta": hex(pk.delta),
        },
        "shares": [{"index": s.index, "share_value": hex(s.share_value)} for s in keys.shares],
    }
    if include_private and keys.private_key is not None:
        doc["private_key"] = {"p": hex(keys.private_key.p), "q": hex(keys.private_key.q)}
    return f"{KEY_MAGIC} v{KEY_FORMAT_VERSION}\n" + json.dumps(doc, indent=1) + "\n"


def loads_keys(text: str) -> KeyMaterial:
    header, _, body = text.partition("\n")
    if header != f"{KEY_MAGIC} v{KEY_FORMAT_VERSION}":
        raise CryptoError(f"not a key file (header {header!r})")
    doc = json.loads(body)
    raw = doc["public_key"]
    pk = PublicKey(
        n=int(raw["n"], 16),
        g=int(raw["g"], 16),
        n_shares=raw["n_shares"],
        threshold=raw["threshold"],
        delta=int(raw["delta"], 16),
    )
    shares = [KeyShare(s["index"], int(s["share_value"], 16)) for s in doc["shares"]]
    sk = None
    if "private_key" in doc:
        sk = PrivateKey(pk, int(doc["private_key"]["p"], 16), int(doc["private_key"]["q"], 16))
    return KeyMaterial(pk, shares, sk)
