"""Benchmark the channel kernel: numba JIT versus the pure-numpy fallback.

Both paths consume identical pre-drawn uniforms and must produce identical
outputs; this script asserts that before timing.  Run directly::

    python benchmarks/bench_channel.py [pulses]
"""

import sys
import time

import numpy as np

from fsqkd import _kernels
from fsqkd.params import ProtocolParams


def build_inputs(n, nbar, seed=0):
    rng = np.random.default_rng(seed)
    params = ProtocolParams(mean_photon_number=nbar)
    bits = rng.integers(0, 2, n).astype(np.uint8)
    counts = rng.poisson(nbar, n).astype(np.int64)
    offsets = np.zeros(n, dtype=np.int64)
    np.cumsum(counts[:-1], out=offsets[1:])
    total = int(counts.sum())
    u = rng.random((4, total))
    noise = rng.random((2, n))
    return (bits, counts, offsets,
            np.ascontiguousarray(u[0]), np.ascontiguousarray(u[1]),
            np.ascontiguousarray(u[2]), np.ascontiguousarray(u[3]),
            np.ascontiguousarray(noise[0]), np.ascontiguousarray(noise[1]),
            0.13, params.background_prob_per_gate / 2,
            params.dark_prob_per_gate, params.optical_error_prob)


def time_backend(fn, args, repeats=5):
    fn(*args)  # warm up (JIT compile / cache touch)
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    n = int(sys.argv[1]) if len(sys.argv) > 1 else 2_000_000
    args = build_inputs(n, nbar=0.5)

    out_np = _kernels.channel_outcomes_numpy(*args)
    rows = [("numpy", time_backend(_kernels.channel_outcomes_numpy, args))]
    if _kernels._channel_outcomes_jit is not None:
        out_nb = _kernels.channel_outcomes_numba(*args)
        assert np.array_equal(out_np[0], out_nb[0]) and np.array_equal(out_np[1], out_nb[1]), \
            "backends disagree"
        rows.append(("numba", time_backend(_kernels.channel_outcomes_numba, args)))
        print(f"backends produce identical outputs over {n} pulses")
    else:
        print("numba unavailable; timing the numpy fallback only")

    print(f"{'backend':<8} {'best time':>12} {'pulses/s':>14}")
    for name, seconds in rows:
        print(f"{name:<8} {seconds:>10.4f} s {n / seconds:>14.3g}")
    if len(rows) == 2:
        print(f"speedup: {rows[0][1] / rows[1][1]:.1f}x")


if __name__ == "__main__":
    main()
