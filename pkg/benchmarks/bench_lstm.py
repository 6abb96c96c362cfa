"""Time the LSTM forward and backward passes on both recurrence backends.

    python benchmarks/bench_lstm.py [--repeat 5] [--dtype float32]
"""

import argparse
import time

import numpy as np

from focuscode.numcore import LstmCellParams, lstm_backward, lstm_forward
from focuscode.numcore import lstm as lstm_mod

SHAPES = [(10, 32, 64, 64), (40, 32, 64, 256), (128, 32, 300, 256)]  # T, B, input, hidden


def _case(T, B, d, H, dtype, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(T, B, d)).astype(dtype)
    mask = (np.arange(T)[:, None] < rng.integers(T // 2, T + 1, B)[None, :]).astype(dtype)
    p = LstmCellParams(rng.normal(0, 0.1, (4 * H, d)).astype(dtype),
                       rng.normal(0, 0.1, (4 * H, H)).astype(dtype), np.zeros(4 * H, dtype))
    return x, mask, p, rng.normal(size=(T, B, H)).astype(dtype)


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--dtype", default="float32", choices=("float32", "float64"))
    args = ap.parse_args()
    dtype = np.dtype(args.dtype).type
    backends = ["python"] + (["compiled"] if lstm_mod.compiled_available() else [])
    if len(backends) == 1:
        print("compiled backend not built; timing the python backend only")
    print(f"{'T':>4} {'B':>3} {'in':>4} {'H':>4}  {'backend':<9} {'forward ms':>11} {'backward ms':>12}")
    for T, B, d, H in SHAPES:
        x, mask, p, dh = _case(T, B, d, H, dtype)
        results = {}
        for name in backends:
            lstm_mod.set_backend(name)
            _, cache = lstm_forward(x, mask, p)
            fwd = _best(lambda: lstm_forward(x, mask, p), args.repeat)
            bwd = _best(lambda: lstm_backward(dh, cache), args.repeat)
            results[name] = (fwd, bwd)
            print(f"{T:>4} {B:>3} {d:>4} {H:>4}  {name:<9} {1e3 * fwd:>11.2f} {1e3 * bwd:>12.2f}")
        if len(results) == 2:
            (pf, pb), (cf, cb) = results["python"], results["compiled"]
            print(f"{'':>18} speedup   {pf / cf:>10.1f}x {pb / cb:>11.1f}x")
    lstm_mod.set_backend(backends[-1])


if __name__ == "__main__":
    main()
