import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pkdcrowd import crypto_he as he


def test_keygen_1024_two_of_three_matches_full_key(keys1024):
    rng = np.random.default_rng(5)
    c = he.encrypt(keys1024.public_key, 7, rng)
    assert he.threshold_decrypt(keys1024, c, [1, 2]) == 7
    assert he.decrypt(keys1024.private_key, c) == 7


def test_single_share_equals_full_decryption():
    rng = np.random.default_rng(2)
    keys = he.keygen(512, 1, 1, rng)
    pk = keys.public_key
    for m in rng.integers(0, 2**62, size=100):
        c = he.encrypt(pk, int(m), rng)
        assert he.threshold_decrypt(keys, c, [1]) == he.decrypt(keys.private_key, c) == int(m)


def test_recombination_set_independence():
    rng = np.random.default_rng(3)
    keys = he.keygen(1024, 5, 3, rng)
    c = he.encrypt(keys.public_key, 123456789, rng)
    assert he.threshold_decrypt(keys, c, [2, 4, 5]) == he.threshold_decrypt(keys, c, [1, 2, 3]) == 123456789


def test_encrypt_zero_and_probabilistic(keys512):
    pk = keys512.public_key
    assert he.decrypt(keys512.private_key, he.encrypt(pk, 0, np.random.default_rng(0))) == 0
    a = he.encrypt(pk, 5, np.random.default_rng(1))
    b = he.encrypt(pk, 5, np.random.default_rng(2))
    assert a.value != b.value


def test_additive_homomorphism(keys512, rng):
    pk, sk = keys512.public_key, keys512.private_key
    assert he.decrypt(sk, he.add(pk, he.encrypt(pk, 2, rng), he.encrypt(pk, 3, rng))) == 5
    m = 987654321
    assert he.decrypt(sk, he.add(pk, he.encrypt(pk, m, rng), he.encrypt(pk, 0, rng))) == m
    xs = [int(x) for x in rng.integers(0, 2**40, size=100)]
    folded = he.add_many(pk, (he.encrypt(pk, x, rng) for x in xs))
    assert he.decrypt(sk, folded) == sum(xs)


def test_scalar_homomorphism(keys512, rng):
    pk, sk = keys512.public_key, keys512.private_key
    assert he.decrypt(sk, he.scalar_mul(pk, he.encrypt(pk, 3, rng), 0)) == 0
    assert he.decrypt(sk, he.scalar_mul(pk, he.encrypt(pk, 1, rng), 17)) == 17
    for _ in range(100):
        m, k = (int(v) for v in rng.integers(0, 2**31, size=2))
        assert he.decrypt(sk, he.scalar_mul(pk, he.encrypt(pk, m, rng), k)) == k * m
    with pytest.raises(ValueError):
        he.scalar_mul(pk, he.encrypt(pk, 1, rng), -1)


def test_homomorphism_wraps_modulo_n(keys512, rng):
    pk, sk = keys512.public_key, keys512.private_key
    a, b = pk.n - 1, 5
    assert he.decrypt(sk, he.add(pk, he.encrypt(pk, a, rng), he.encrypt(pk, b, rng))) == (a + b) % pk.n


def test_threshold_one_partial():
    rng = np.random.default_rng(9)
    keys = he.keygen(512, 1, 1, rng)
    pk = keys.public_key
    c = he.encrypt(pk, 9, rng)
    assert he.combine(pk, [he.partial_decrypt(pk, keys.share(1), c)]) == 9


def test_any_three_partials_and_too_few(keys512, rng):
    pk = keys512.public_key
    m = int(rng.integers(0, 2**60))
    c = he.encrypt(pk, m, rng)
    parts = {i: he.partial_decrypt(pk, keys512.share(i), c) for i in range(1, 6)}
    for subset in ([1, 2, 3], [3, 4, 5], [1, 3, 5], [2, 4, 5]):
        assert he.combine(pk, [parts[i] for i in subset]) == m
    with pytest.raises(he.InsufficientSharesError):
        he.combine(pk, [parts[1], parts[2]])
    # duplicates do not count towards the threshold
    with pytest.raises(he.InsufficientSharesError):
        he.combine(pk, [parts[1], parts[1], parts[2]])


@settings(max_examples=40, deadline=None)
@given(st.integers())
def test_signed_encoding_roundtrip(keys512, m):
    pk = keys512.public_key
    m = (m % pk.n) - pk.n // 2 + (1 if pk.n % 2 == 0 else 0)
    # m now spans (-n/2, n/2]
    c = he.encrypt(pk, pk.encode(m), np.random.default_rng(abs(m) % 2**32))
    assert pk.decode(he.threshold_decrypt(keys512, c, [1, 2, 3])) == m


def test_negative_sum_through_threshold(keys512, rng):
    pk = keys512.public_key
    values = [-5, 3, -10, 4]
    folded = he.add_many(pk, (he.encrypt(pk, pk.encode(v), rng) for v in values))
    assert pk.decode(he.threshold_decrypt(keys512, folded, [1, 4, 5])) == sum(values)


def test_key_serialization_roundtrip(keys512, rng):
    text = he.dumps_keys(keys512, include_private=True)
    assert text.startswith(he.KEY_MAGIC)
    back = he.loads_keys(text)
    assert back.public_key == keys512.public_key
    assert back.shares == keys512.shares
    c = he.encrypt(back.public_key, 42, rng)
    assert he.threshold_decrypt(keys512, c, [1, 2, 3]) == 42
    assert he.decrypt(back.private_key, c) == 42
    public_only = he.loads_keys(he.dumps_keys(keys512))
    assert public_only.private_key is None


def test_bad_key_file_and_sizes():
    with pytest.raises(he.CryptoError):
        he.loads_keys("not a key\n{}")
    with pytest.raises(ValueError):
        he.keygen(768, 3, 2, np.random.default_rng(0))
    with pytest.raises(ValueError):
        he.keygen(512, 2, 3, np.random.default_rng(0))


def test_keygen_is_deterministic():
    a = he.keygen(512, 3, 2, np.random.default_rng(77))
    b = he.keygen(512, 3, 2, np.random.default_rng(77))
    assert a.public_key == b.public_key and a.shares == b.shares
