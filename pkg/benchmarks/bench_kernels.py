#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-numpy fallbacks.

Every kernel registered in ``rhetseg.kernels.IMPLEMENTATIONS`` is timed on
identical inputs through each available path, and the outputs are compared.
When numba is disabled (``RHETSEG_NO_NUMBA=1``) only the numpy column prints.

    python3 benchmarks/bench_kernels.py --doc-len 2000 --hidden 32
"""

import argparse
import time

import numpy as np

from rhetseg.kernels import ACTIVE_PATH, IMPLEMENTATIONS

K = 7


def build_cases(doc_len: int, hidden: int, rng) -> dict[str, tuple]:
    E = rng.standard_normal((doc_len, K))
    T = rng.standard_normal((K, K))
    start = rng.standard_normal(K)
    end = rng.standard_normal(K)
    XW = rng.standard_normal((doc_len, 4 * hidden))
    Wh = rng.standard_normal((4 * hidden, hidden)) * 0.1
    b = rng.standard_normal(4 * hidden)
    G, C, H = IMPLEMENTATIONS["numpy"]["lstm_recurrence"](XW, Wh, b)
    dH = rng.standard_normal(H.shape)
    return {
        "crf_forward": (E, T, start, end),
        "crf_backward": (E, T, end),
        "crf_viterbi": (E, T, start, end),
        "lstm_recurrence": (XW, Wh, b),
        "lstm_recurrence_backward": (G, C, Wh.T.copy(), dH),
    }


def best_of(fn, args: tuple, repeats: int) -> float:
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def max_diff(a, b) -> float:
    if isinstance(a, tuple):
        return max(max_diff(x, y) for x, y in zip(a, b))
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(np.max(np.abs(a - b))) if a.size else 0.0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--doc-len", type=int, default=2000,
                        help="sentences per document (default 2000)")
    parser.add_argument("--hidden", type=int, default=32,
                        help="LSTM hidden size (default 32)")
    parser.add_argument("--repeats", type=int, default=5,
                        help="repeats per kernel, best run reported (default 5)")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    paths = sorted(IMPLEMENTATIONS)
    both = len(paths) == 2
    print(f"active path: {ACTIVE_PATH}; registered: {', '.join(paths)}")
    print(f"doc_len={args.doc_len} hidden={args.hidden} repeats={args.repeats}")

    rng = np.random.default_rng(args.seed)
    cases = build_cases(args.doc_len, args.hidden, rng)

    if "numba" in IMPLEMENTATIONS:
        for name, inputs in cases.items():
            IMPLEMENTATIONS["numba"][name](*inputs)  # JIT compile before timing

    header = f"{'kernel':<26}" + "".join(f"{p + ' (ms)':>14}" for p in paths)
    if both:
        header += f"{'speedup':>10}{'max diff':>12}"
    print(header)
    for name, inputs in cases.items():
        times = {}
        outs = {}
        for p in paths:
            times[p] = best_of(IMPLEMENTATIONS[p][name], inputs, args.repeats)
            outs[p] = IMPLEMENTATIONS[p][name](*inputs)
        row = f"{name:<26}" + "".join(f"{1000 * times[p]:>14.3f}" for p in paths)
        if both:
            row += f"{times['numpy'] / times['numba']:>9.1f}x"
            row += f"{max_diff(outs['numpy'], outs['numba']):>12.2e}"
        print(row)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
