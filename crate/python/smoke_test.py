"""Smoke test for the batscast_py extension.

Build first, either with `maturin develop -m crates/python/Cargo.toml` or
`cargo build --release -p batscast-py` and put the shared library on
PYTHONPATH as batscast_py.so.
"""

import os
import random

import batscast_py as b


def main():
    assert b.gf_mul(2, 0x80) == 0x1D
    assert all(b.gf_mul(a, b.gf_inv(a)) == 1 for a in range(1, 256))
    assert b.gf_rank([[1, 2], [2, 4]]) == 1

    ex3 = b.NetworkParams(k=5, file_packets=5000)
    n_l, n_u, n_opt, curve = ex3.plan()
    print(f"example 3: n_l={n_l} n_u={n_u} n*={n_opt}")
    assert n_l <= n_opt <= n_u and n_u == 673
    assert abs(sum(ex3.delta_distribution()) - 1.0) < 1e-9

    counts = [16, 3, 9, 16]
    q = b.transmit_queue(counts, 16, 0.5, 0.1)
    # one entry per usefulness row, fullest batches first
    assert [q.count(i + 1) for i in range(4)] == [16] * 4, q
    assert q[0] in (1, 4) and q[-1] == 2, q

    rng = random.Random(7)
    packets = [bytes(rng.randrange(256) for _ in range(32)) for _ in range(40)]
    codec = b.Codec(packets, batch_size=4, seed=11)
    buffers = []
    for batch_id in range(1, 25):
        buf = b.BatchBuffer(batch_id, 4, 32)
        for p in codec.encode_batch(batch_id):
            buf.absorb(p)
        buffers.append(buf)
    assert codec.decode(buffers) == packets

    small = b.NetworkParams(k=3, file_packets=400)
    r = b.simulate(small, 40, seed=1)
    print(f"simulate: phase1={r.phase1_tx} phase2={r.phase2_tx} overhead={r.mean_overhead():.4f}")
    assert r.phase1_tx == 40 * 16 and r.total_tx == r.phase1_tx + r.phase2_tx
    assert r.total_tx == b.simulate(small, 40, seed=1).total_tx

    try:
        b.NetworkParams(p1=0.1, p2=0.5)
    except ValueError:
        pass
    else:
        raise AssertionError("p2 > p1 accepted")
    print("ok")


if __name__ == "__main__":
    os.environ.setdefault("PYTHONHASHSEED", "0")
    main()
