"""
Private retrieval of one bucket
===============================

The server multiplies the encrypted selection vector into its library and
learns nothing about which bucket was asked for.
"""

import numpy as np

from pkdcrowd import crypto_he as he, pir_engine as pir

rng = np.random.default_rng(3)
pk, sk = he.generate_keypair(512, rng)

items = [f"bucket {i}: ".encode() + rng.bytes(200) for i in range(8)]
lib = pir.build_library(items, plaintext_bits=pk.plaintext_bits)
print(lib.manifest())

query = pir.make_query(pk, 5, lib.n, rng)
response = pir.answer(query, lib)
got = pir.decode(sk, response, lib.item_bytes, lib.chunk_bits)
print(got[:9], got == lib.items[5])
print("query bytes", len(pir.serialize_query(query)), "response bytes", len(pir.serialize_response(response)))

# %%
# Answer time grows linearly with the library
for size, secs in pir.bench_answer([4096, 8192, 16384], trials=2, keypair=(pk, sk), rng=rng):
    print(f"{size:6d} B  {secs * 1e3:7.1f} ms")
