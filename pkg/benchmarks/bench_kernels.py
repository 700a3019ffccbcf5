"""Time the per-sample clip-and-sum kernel on both backends.

Usage: python3 benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import timeit

import numpy as np

from adaptive_dpfl.kernels import BACKENDS, clipped_grad_sum
from adaptive_dpfl.model import MLP, SOFTMAX, ModelSpec

CASES = [
    ("softmax f=20 k=4, batch 15", ModelSpec(SOFTMAX, 20, 4), 15),
    ("softmax f=20 k=4, batch 256", ModelSpec(SOFTMAX, 20, 4), 256),
    ("mlp f=20 h=16 k=4, batch 15", ModelSpec(MLP, 20, 4, 16), 15),
    ("mlp f=20 h=16 k=4, batch 256", ModelSpec(MLP, 20, 4, 16), 256),
]


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=2000)
    args = parser.parse_args()
    rng = np.random.default_rng(0)
    names = sorted(BACKENDS)
    print(f"{'case':32s}" + "".join(f"{n + ' (us)':>16s}" for n in names) + f"{'speedup':>10s}")
    for label, spec, batch in CASES:
        params = rng.normal(scale=0.3, size=spec.dim)
        x = rng.normal(size=(batch, spec.num_features))
        y = rng.integers(0, spec.num_classes, batch)
        times = {}
        for name in names:
            fn = lambda: clipped_grad_sum(spec, params, x, y, 1.0, backend=name)
            fn()
            times[name] = min(timeit.repeat(fn, number=args.repeats, repeat=3)) / args.repeats * 1e6
        speedup = (times["python"] / times["compiled"]) if "compiled" in times else float("nan")
        print(f"{label:32s}" + "".join(f"{times[n]:16.1f}" for n in names) + f"{speedup:10.1f}x")


if __name__ == "__main__":
    main()
