"""Compare the numba and numpy kernel backends on long sequences.

Usage: python benchmarks/bench_kernels.py [--length 20000] [--states 6] [--repeat 5]
"""

import argparse
import time

import numpy as np

from markerhmm import kernels


def _best_of(fn, args, repeat):
    fn(*args)  # warm-up (and JIT compile)
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - start)
    return min(times)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--length", type=int, default=20000)
    parser.add_argument("--states", type=int, default=6)
    parser.add_argument("--symbols", type=int, default=6)
    parser.add_argument("--sequences", type=int, default=200)
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    N, M, T = args.states, args.symbols, args.length
    A = rng.dirichlet(np.ones(N), size=N)
    B = rng.dirichlet(np.ones(M), size=N)
    pi = rng.dirichlet(np.ones(N))
    obs = rng.integers(0, M, size=T)
    emis = np.ascontiguousarray(B[:, obs].T)
    alphas, scalers = kernels.forward_numpy(pi, A, emis)
    betas = kernels.backward_numpy(A, emis, scalers)
    lengths = rng.integers(2, 9, size=args.sequences)
    symbols = rng.integers(0, M, size=int(lengths.sum())).astype(np.int64)
    offsets = np.concatenate([[0], np.cumsum(lengths)]).astype(np.int64)

    cases = {
        "forward": (pi, A, emis),
        "backward": (A, emis, scalers),
        "viterbi": (np.log(pi), np.log(A), np.log(emis)),
        "expected_transitions": (alphas, betas, A, emis),
        "corpus_estep": (pi, A, B, symbols, offsets),
    }
    print(f"N={N} M={M} T={T} corpus={args.sequences} sequences; best of {args.repeat}")
    print(f"{'kernel':<22}{'numpy [ms]':>12}{'numba [ms]':>12}{'speed-up':>10}")
    for name, call_args in cases.items():
        t_np = _best_of(getattr(kernels, f"{name}_numpy"), call_args, args.repeat)
        t_nb = _best_of(getattr(kernels, f"{name}_numba"), call_args, args.repeat)
        print(f"{name:<22}{t_np * 1e3:>12.2f}{t_nb * 1e3:>12.2f}{t_np / t_nb:>10.1f}x")


if __name__ == "__main__":
    main()
