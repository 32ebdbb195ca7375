"""Compare the compiled and pure-numpy LSTM gate kernels.

Times the fused gate forward/backward pair at a few batch/width points and
prints a small table plus the max elementwise deviation between backends.

Usage: python benchmarks/bench_kernels.py [--repeats 50]
"""

import argparse
import time

import numpy as np

from msnmt import kernels


def bench(fn, args, repeats):
    fn(*args)  # warm-up (and numba compilation)
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn(*args)
    return (time.perf_counter() - t0) / repeats


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeats", type=int, default=50)
    args = ap.parse_args()

    if kernels.backend() != "numba":
        print("numba backend unavailable (MSNMT_BACKEND or import failure); "
              "nothing to compare")
        return

    rng = np.random.default_rng(0)
    print(f"{'B':>5} {'d':>5} {'numpy fwd':>11} {'numba fwd':>11} "
          f"{'numpy bwd':>11} {'numba bwd':>11} {'speedup':>8}")
    for B, d in [(16, 64), (64, 128), (128, 256), (128, 512)]:
        z = rng.uniform(-1, 1, (B, 4 * d))
        c_prev = rng.uniform(-1, 1, (B, d))
        f_np = bench(kernels._gates_forward_np, (z, c_prev), args.repeats)
        f_nb = bench(kernels._gates_forward_nb, (z, c_prev), args.repeats)

        gates, c, tc, h = kernels._gates_forward_np(z, c_prev)
        gates_nb, c_nb, tc_nb, h_nb = kernels._gates_forward_nb(z, c_prev)
        dev = max(np.max(np.abs(c - c_nb)), np.max(np.abs(h - h_nb)))

        dh = rng.uniform(-1, 1, (B, d))
        dc = rng.uniform(-1, 1, (B, d))
        b_np = bench(kernels._gates_backward_np, (gates, c_prev, tc, dh, dc),
                     args.repeats)
        b_nb = bench(kernels._gates_backward_nb, (gates, c_prev, tc, dh, dc),
                     args.repeats)
        dz_np, dcp_np = kernels._gates_backward_np(gates, c_prev, tc, dh, dc)
        dz_nb, dcp_nb = kernels._gates_backward_nb(gates, c_prev, tc, dh, dc)
        dev = max(dev, np.max(np.abs(dz_np - dz_nb)),
                  np.max(np.abs(dcp_np - dcp_nb)))

        # the dispatcher pairs the numpy forward with the numba backward,
        # so the effective speedup compares that mix against pure numpy
        speed = (f_np + b_np) / (f_np + b_nb)
        print(f"{B:>5} {d:>5} {f_np * 1e6:>9.1f}us {f_nb * 1e6:>9.1f}us "
              f"{b_np * 1e6:>9.1f}us {b_nb * 1e6:>9.1f}us {speed:>7.2f}x"
              f"   (max dev {dev:.1e})")


if __name__ == "__main__":
    main()
