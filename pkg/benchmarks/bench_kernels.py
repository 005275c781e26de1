"""Compare the compiled and numpy kernel backends.

    python3 benchmarks/bench_kernels.py [--n 200000] [--repeat 5]
"""

import argparse
import time

import numpy as np

from calibench import kernels
from calibench.dataset import EPS, SplitView
from calibench.detectors import fit_isolation_forest
from calibench.synthetic import latent_telemetry


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(n):
    rng = np.random.default_rng(0)
    errors = rng.gamma(2.0, size=n)
    flags = rng.random(n) < 0.01
    starts = np.arange(1000, n - 200, 5000, dtype=np.int64)
    ends = starts + 150
    f = latent_telemetry(0, n=4000, dim=8, windows=((500, 520),))
    m = fit_isolation_forest(f, SplitView((0, 2500), (2500, 2800), (2800, 4000)), seed=0)
    X = np.ascontiguousarray(np.tile(f.values, (max(1, n // 4000 // 4), 1)))
    trials = [(int(w), int(s)) for w, s in zip(rng.integers(64, 513, 100), rng.integers(3, 33, 100))]

    def sweep(mod):
        for w, s in trials:
            mod.rolling_likelihood(errors[: n // 10], w, min(s, w - 1), EPS)

    return {
        f"rolling_likelihood n={n} W=256": lambda mod: mod.rolling_likelihood(errors, 256, 8, EPS),
        f"calibration sweep 100 trials n={n // 10}": sweep,
        f"nab_window_scores n={n}": lambda mod: mod.nab_window_scores(flags, starts, ends, 1.0, 0.11, 5.0),
        f"iforest_path_lengths rows={len(X)} trees=100": lambda mod: mod.iforest_path_lengths(
            X, m.feature, m.threshold, m.left, m.right, m.leaf_value, m.roots),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = kernels.backends()
    names = sorted(backends)
    print(f"{'kernel':<46}" + "".join(f"{b:>12}" for b in names) + "     speedup")
    for label, fn in cases(args.n).items():
        t = {b: best_of(lambda: fn(backends[b]), args.repeat) for b in names}
        speed = f"{t['python'] / t['compiled']:>10.1f}x" if "compiled" in t else "       n/a"
        print(f"{label:<46}" + "".join(f"{t[b] * 1e3:>10.2f}ms" for b in names) + speed)


if __name__ == "__main__":
    main()
