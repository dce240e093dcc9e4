"""Time the numba kernels against their pure-numpy twins.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--quick]

JIT compilation is triggered once before timing. Prints a table of best-of-N
wall times and the speedup, and checks that both variants agree.
"""
import argparse
import time

import numpy as np

from sast_snn import _accel, kernels


def best_of(fn, args, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(quick):
    rng = np.random.default_rng(0)
    scale = 4 if quick else 1
    n_ev = 200_000 // scale
    yield ("bin_counts", kernels.bin_counts_numpy, kernels.bin_counts_numba,
           (rng.integers(0, 10, n_ev), rng.integers(0, 2, n_ev), rng.integers(0, 34, n_ev),
            rng.integers(0, 34, n_ev), 10, 34, 34))
    cur = rng.normal(0.8, 1.0, size=(10, 256 // scale, 168))
    theta = np.ones(168)
    yield ("lif_forward", kernels.lif_forward_numpy, kernels.lif_forward_numba, (cur, 0.5, theta, 25.0, False))
    u, _ = kernels.lif_forward_numpy(cur, 0.5, theta, 25.0, False)
    yield ("lif_backward", kernels.lif_backward_numpy, kernels.lif_backward_numba,
           (rng.normal(size=u.shape), u, 0.5, theta, 25.0))
    icur = rng.integers(-200, 400, size=(10, 256 // scale, 168)).astype(np.int64)
    yield ("fixed_point_lif", kernels.fixed_point_lif_numpy, kernels.fixed_point_lif_numba,
           (icur, np.zeros(168, np.int64), np.full(168, 256, np.int64), 128, 8, -32768, 32767, False))


def same(a, b):
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    return np.allclose(a, b, rtol=1e-12, atol=1e-12)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--quick", action="store_true")
    args = ap.parse_args()
    if not _accel.NUMBA_INSTALLED:
        print("numba is not installed; nothing to compare")
        return
    print(f"{'kernel':<16}{'numpy ms':>10}{'numba ms':>10}{'speedup':>9}  agree")
    for name, np_fn, nb_fn, fn_args in cases(args.quick):
        agree = same(np_fn(*fn_args), nb_fn(*fn_args))  # also warms the JIT
        t_np = best_of(np_fn, fn_args, args.repeat)
        t_nb = best_of(nb_fn, fn_args, args.repeat)
        print(f"{name:<16}{1e3 * t_np:>10.2f}{1e3 * t_nb:>10.2f}{t_np / t_nb:>8.1f}x  {agree}")


if __name__ == "__main__":
    main()
