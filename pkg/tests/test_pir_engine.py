import numpy as np
import pytest

from pkdcrowd import crypto_he as he
from pkdcrowd import pir_engine as pir


def test_padding_rule():
    lib = pir.build_library([b"abc", b"1234567", b"7654321"], chunk_bits=16)
    assert {len(x) for x in lib.items} == {7}
    assert lib.items[0][3:] == bytes(4)


def test_big_endian_chunking():
    assert pir.chunk_item(bytes([1, 2, 3, 4]), 16) == [0x0102, 0x0304]
    # the tail is zero-filled on the right
    assert pir.chunk_item(bytes([0xAB]), 12) == [0xAB0]


@pytest.mark.parametrize("bits", [7, 8, 13, 64, 500])
def test_chunk_roundtrip(bits):
    item = np.random.default_rng(bits).bytes(97)
    assert pir.dechunk_item(pir.chunk_item(item, bits), bits, 97) == item


def test_chunk_width_guard():
    with pytest.raises(pir.PirError):
        pir.build_library([b"x"] * 4, chunk_bits=510, plaintext_bits=511)
    with pytest.raises(pir.PirError):
        pir.build_library([], chunk_bits=8)
    lib = pir.build_library([b"x"] * 4, plaintext_bits=511)
    assert lib.chunk_bits == 511 - 2 - 1


def test_query_is_selection_vector(client512):
    pk, sk = client512
    rng = np.random.default_rng(0)
    q = pir.make_query(pk, 2, 5, rng)
    assert [he.decrypt(sk, c) for c in q.ciphertexts] == [0, 0, 1, 0, 0]
    single = pir.make_query(pk, 0, 1, rng)
    assert len(single.ciphertexts) == 1 and he.decrypt(sk, single.ciphertexts[0]) == 1
    again = pir.make_query(pk, 2, 5, rng)
    assert again.ciphertexts[2] != q.ciphertexts[2]
    with pytest.raises(pir.PirError):
        pir.make_query(pk, 5, 5, rng)


def test_retrieve_every_index(client512):
    pk, sk = client512
    rng = np.random.default_rng(1)
    items = [rng.bytes(64) for _ in range(4)]
    lib = pir.build_library(items, plaintext_bits=pk.plaintext_bits)
    for i in range(4):
        assert pir.retrieve(pk, sk, lib, i, rng) == items[i]


def test_zero_library_and_singleton(client512):
    pk, sk = client512
    rng = np.random.default_rng(2)
    zero = pir.build_library([bytes(40)] * 3, plaintext_bits=pk.plaintext_bits)
    resp = pir.answer(pir.make_query(pk, 1, 3, rng), zero)
    assert all(he.decrypt(sk, c) == 0 for c in resp.ciphertexts)
    one = pir.build_library([b"hello"], plaintext_bits=pk.plaintext_bits)
    assert pir.retrieve(pk, sk, one, 0, rng) == b"hello"


def test_server_work_is_index_independent(client512):
    pk, _ = client512
    rng = np.random.default_rng(3)
    lib = pir.build_library([rng.bytes(100) for _ in range(6)], plaintext_bits=pk.plaintext_bits)
    ops = {pir.answer(pir.make_query(pk, i, 6, rng), lib).server_ops for i in range(6)}
    assert ops == {lib.n * lib.n_chunks}


def test_size_mismatch(client512):
    pk, _ = client512
    lib = pir.build_library([b"a", b"b"], plaintext_bits=pk.plaintext_bits)
    with pytest.raises(pir.PirError):
        pir.answer(pir.make_query(pk, 0, 3, np.random.default_rng(0)), lib)


def test_wire_format_roundtrip(client512):
    pk, sk = client512
    rng = np.random.default_rng(4)
    items = [rng.bytes(30) for _ in range(3)]
    lib = pir.build_library(items, plaintext_bits=pk.plaintext_bits)
    q = pir.deserialize_query(pir.serialize_query(pir.make_query(pk, 1, 3, rng)))
    assert q.client_pk.n == pk.n
    r = pir.deserialize_response(pir.serialize_response(pir.answer(q, lib)))
    assert pir.decode(sk, r, lib.item_bytes, lib.chunk_bits) == items[1]
    with pytest.raises(pir.PirError):
        pir.deserialize_query(b"XXXX")


def test_library_files(tmp_path):
    rng = np.random.default_rng(5)
    lib = pir.build_library([rng.bytes(20), rng.bytes(11)], chunk_bits=40)
    pir.save_library(tmp_path / "lib", lib)
    back = pir.load_library(tmp_path / "lib")
    assert back == lib


def test_wrong_key_detected(client512):
    pk, _ = client512
    _, other_sk = he.generate_keypair(512, np.random.default_rng(99))
    rng = np.random.default_rng(6)
    lib = pir.build_library([rng.bytes(50) for _ in range(2)], plaintext_bits=pk.plaintext_bits)
    resp = pir.answer(pir.make_query(pk, 0, 2, rng), lib)
    with pytest.raises(pir.PirError):
        pir.decode(other_sk, resp, lib.item_bytes, lib.chunk_bits)


def test_answer_time_doubles_with_library(client512):
    points = pir.bench_answer([4096, 8192, 16384], trials=5, n_items=8, keypair=client512,
                              rng=np.random.default_rng(7))
    t = [s for _, s in points]
    assert t[0] < t[1] < t[2]
    assert 1.5 <= t[2] / t[1] <= 2.5


def test_linear_fit_exact_line():
    fit = pir.linear_fit([(1e6, 0.5), (2e6, 0.64), (3e6, 0.78)])
    assert fit["slope_s_per_mb"] == pytest.approx(0.14)
    assert fit["intercept_s"] == pytest.approx(0.36)
    assert fit["r2"] == pytest.approx(1.0)
