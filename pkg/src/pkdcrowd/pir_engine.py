"""Single-server computational PIR over an additively homomorphic scheme.

The library is an ``n x c`` matrix of ``y``-bit chunks (items are padded to a
common length and cut big-endian).  A query is ``n`` encryptions of a unit
vector; the answer to column ``j`` is ``prod_i q_i ** L[i][j]``, i.e. the
homomorphic dot product, which decrypts to the chunk of the selected row.
"""
from __future__ import annotations

import json
import math
import struct
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import gmpy2
import numpy as np
from gmpy2 import mpz
from scipy import stats

from . import crypto_he as he

QUERY_MAGIC = b"PKDQ"
RESPONSE_MAGIC = b"PKDR"


class PirError(Exception):
    pass


@dataclass(frozen=True)
class PirLibrary:
    items: tuple[bytes, ...]
    chunk_bits: int
    matrix: tuple[tuple[int, ...], ...]

    @property
    def n(self) -> int:
        return len(self.items)

    @property
    def item_bytes(self) -> int:
        return len(self.items[0])

    @property
    def n_chunks(self) -> int:
        return len(self.matrix[0])

    @property
    def size_bytes(self) -> int:
        return self.n * self.item_bytes

    def manifest(self) -> dict:
        return {
            "n_items": self.n,
            "item_bytes": self.item_bytes,
            "chunk_bits": self.chunk_bits,
            "n_chunks": self.n_chunks,
        }


@dataclass(frozen=True)
class PirQuery:
    ciphertexts: tuple[he.Ciphertext, ...]
    client_pk: he.PublicKey


@dataclass(frozen=True)
class PirResponse:
    ciphertexts: tuple[he.Ciphertext, ...]
    # modular exponentiations spent by the server; depends on (n, l, y) only
    server_ops: int = 0


def default_chunk_bits(plaintext_bits: int, n_items: int) -> int:
    return plaintext_bits - math.ceil(math.log2(max(n_items, 1))) - 1


def n_chunks_for(item_bytes: int, chunk_bits: int) -> int:
    return max(1, -(-8 * item_bytes // chunk_bits))


def chunk_item(item: bytes, chunk_bits: int) -> list[int]:
    """Big-endian ``chunk_bits`` slices; the tail is zero-filled on the right."""
    c = n_chunks_for(len(item), chunk_bits)
    pad = c * chunk_bits - 8 * len(item)
    value = int.from_bytes(item, "big") << pad
    mask = (1 << chunk_bits) - 1
    return [(value >> (chunk_bits * (c - 1 - j))) & mask for j in range(c)]


def dechunk_item(chunks: Sequence[int], chunk_bits: int, item_bytes: int) -> bytes:
    value = 0
    for ch in chunks:
        value = (value << chunk_bits) | int(ch)
    pad = len(chunks) * chunk_bits - 8 * item_bytes
    return (value >> pad).to_bytes(item_bytes, "big")


def build_library(buckets: Sequence[bytes], chunk_bits: int | None = None, plaintext_bits: int | None = None) -> PirLibrary:
    """Pad buckets to the longest one and chunk them.

    With ``plaintext_bits`` given, ``chunk_bits`` defaults to the largest width
    whose n-term dot products cannot wrap the plaintext space, and any explicit
    width is checked against that bound.
    """
    if not buckets:
        raise PirError("cannot build a PIR library from an empty bucket list")
    n = len(buckets)
    if chunk_bits is None:
        if plaintext_bits is None:
            raise PirError("need chunk_bits or plaintext_bits")
        chunk_bits = default_chunk_bits(plaintext_bits, n)
    if chunk_bits < 1:
        raise PirError("chunk_bits must be positive")
    if plaintext_bits is not None:
        if chunk_bits >= plaintext_bits:
            raise PirError(f"chunk_bits={chunk_bits} must be below plaintext width {plaintext_bits}")
        if n >= 2 ** (plaintext_bits - chunk_bits):
            raise PirError(f"{n} items of {chunk_bits}-bit chunks may overflow the plaintext space")
    width = max(1, max(len(b) for b in buckets))
    items = tuple(bytes(b) + bytes(width - len(b)) for b in buckets)
    matrix = tuple(tuple(chunk_item(it, chunk_bits)) for it in items)
    return PirLibrary(items, chunk_bits, matrix)


def make_query(client_pk: he.PublicKey, index: int, n: int, rng: np.random.Generator) -> PirQuery:
    if not 0 <= index < n:
        raise PirError(f"index {index} out of range for {n} items")
    cts = tuple(he.encrypt(client_pk, int(i == index), rng) for i in range(n))
    return PirQuery(cts, client_pk)


def answer(query: PirQuery, lib: PirLibrary) -> PirResponse:
    if len(query.ciphertexts) != lib.n:
        raise PirError(f"query has {len(query.ciphertexts)} entries, library has {lib.n}")
    n2 = mpz(query.client_pk.nsquare)
    qs = [mpz(c.value) for c in query.ciphertexts]
    out, ops = [], 0
    for j in range(lib.n_chunks):
        acc = mpz(1)
        for i in range(lib.n):
            acc = acc * gmpy2.powmod(qs[i], lib.matrix[i][j], n2) % n2
            ops += 1
        out.append(he.Ciphertext(int(acc)))
    return PirResponse(tuple(out), ops)


def decode(client_key: he.PrivateKey, response: PirResponse, item_len_bytes: int, chunk_bits: int) -> bytes:
    chunks = [he.decrypt(client_key, c) for c in response.ciphertexts]
    if any(ch >> chunk_bits for ch in chunks):
        raise PirError("decrypted chunk wider than chunk_bits; wrong key or corrupted response")
    return dechunk_item(chunks, chunk_bits, item_len_bytes)


def retrieve(client_pk, client_key, lib: PirLibrary, index: int, rng) -> bytes:
    """Client round trip: query, server answer, decode."""
    resp = answer(make_query(client_pk, index, lib.n, rng), lib)
    return decode(client_key, resp, lib.item_bytes, lib.chunk_bits)


# -- wire format -------------------------------------------------------------


def _pack_ints(values: Sequence[int]) -> bytes:
    parts = [struct.pack(">I", len(values))]
    for v in values:
        raw = int(v).to_bytes(max(1, (int(v).bit_length() + 7) // 8), "big")
        parts += [struct.pack(">I", len(raw)), raw]
    return b"".join(parts)


def _unpack_ints(buf: bytes, offset: int) -> tuple[list[int], int]:
    (count,) = struct.unpack_from(">I", buf, offset)
    offset += 4
    out = []
    for _ in range(count):
        (ln,) = struct.unpack_from(">I", buf, offset)
        offset += 4
        out.append(int.from_bytes(buf[offset : offset + ln], "big"))
        offset += ln
    return out, offset


def serialize_query(q: PirQuery) -> bytes:
    return QUERY_MAGIC + _pack_ints([q.client_pk.n]) + _pack_ints([c.value for c in q.ciphertexts])


def deserialize_query(buf: bytes) -> PirQuery:
    if buf[:4] != QUERY_MAGIC:
        raise PirError("not a PIR query")
    (n,), off = _unpack_ints(buf, 4)
    values, _ = _unpack_ints(buf, off)
    return PirQuery(tuple(he.Ciphertext(v) for v in values), he.PublicKey(n=n, g=n + 1))


def serialize_response(r: PirResponse) -> bytes:
    return RESPONSE_MAGIC + _pack_ints([c.value for c in r.ciphertexts])


def deserialize_response(buf: bytes) -> PirResponse:
    if buf[:4] != RESPONSE_MAGIC:
        raise PirError("not a PIR response")
    values, _ = _unpack_ints(buf, 4)
    return PirResponse(tuple(he.Ciphertext(v) for v in values))


def save_library(directory, lib: PirLibrary) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    (d / "manifest.json").write_text(json.dumps(lib.manifest(), indent=1) + "\n")
    (d / "items.bin").write_bytes(b"".join(lib.items))


def load_library(directory) -> PirLibrary:
    d = Path(directory)
    man = json.loads((d / "manifest.json").read_text())
    raw = (d / "items.bin").read_bytes()
    size = man["item_bytes"]
    items = [raw[i * size : (i + 1) * size] for i in range(man["n_items"])]
    return build_library(items, man["chunk_bits"])


# -- benchmarking ------------------------------------------------------------


def bench_answer(
    lib_sizes: Sequence[int],
    trials: int = 3,
    n_items: int = 16,
    key_bits: int = 1024,
    rng: np.random.Generator | None = None,
    keypair=None,
) -> list[tuple[int, float]]:
    """Best-of-``trials`` server answer time per library size (bytes).

    Trials are interleaved across sizes so that slow drifts of the machine
    (frequency scaling, neighbours) hit every size alike.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    pk, sk = keypair if keypair is not None else he.generate_keypair(key_bits, rng)
    libs = []
    for size in lib_sizes:
        item_bytes = max(1, size // n_items)
        libs.append(build_library([rng.bytes(item_bytes) for _ in range(n_items)], plaintext_bits=pk.plaintext_bits))
    queries = [make_query(pk, int(rng.integers(n_items)), n_items, rng) for _ in range(trials)]
    best = [math.inf] * len(libs)
    for q in queries:
        for k, lib in enumerate(libs):
            t0 = time.perf_counter()
            answer(q, lib)
            best[k] = min(best[k], time.perf_counter() - t0)
    return [(lib.size_bytes, t) for lib, t in zip(libs, best)]


def linear_fit(points: Sequence[tuple[float, float]]) -> dict:
    x = np.array([p[0] for p in points], dtype=float)
    y = np.array([p[1] for p in points], dtype=float)
    fit = stats.linregress(x, y)
    return {
        "slope_s_per_byte": fit.slope,
        "slope_s_per_mb": fit.slope * 1e6,
        "intercept_s": fit.intercept,
        "r2": fit.rvalue**2,
    }
