"""Compare the compiled kernels against the numpy reference.

Runs the shapes the trainer actually uses (batch-1 policy/value forwards and
whole-episode backwards) and prints per-call timings plus the speedup.

    python3 benchmarks/bench_backends.py [--repeat N]
"""

import argparse
import importlib
import time

import numpy as np

from vecoffload._backend import pure

try:
    fast = importlib.import_module("vecoffload._backend._fast")
except ImportError:
    fast = None


ACTOR_SIZES = (81, 64, 64, 64, 11)
CRITIC_SIZES = (81, 64, 64, 64, 1)


def make_net(rng, sizes):
    ws = [rng.normal(scale=0.3, size=(a, b)) for a, b in zip(sizes[:-1], sizes[1:])]
    bs = [np.zeros(b) for b in sizes[1:]]
    return ws, bs


def bench(fn, repeat):
    fn()  # warm up
    start = time.perf_counter()
    for _ in range(repeat):
        fn()
    return (time.perf_counter() - start) / repeat


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=2000)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    aw, ab = make_net(rng, ACTOR_SIZES)
    cw, cb = make_net(rng, CRITIC_SIZES)
    x1 = rng.normal(size=(1, 81))
    x10 = rng.normal(size=(10, 81))
    actions = rng.integers(11, size=10).astype(np.int64)
    advs = rng.uniform(-1, 1, size=10)
    targets = rng.uniform(-2, 0, size=10)

    cases = [
        ("policy forward (batch 1)", lambda m: m.policy_forward(aw, ab, x1)),
        ("value forward  (batch 1)", lambda m: m.value_forward(cw, cb, x1)),
        ("actor backward (batch 10)",
         lambda m: m.actor_backward(aw, ab, x10, actions, advs, 0.01)),
        ("critic backward (batch 10)",
         lambda m: m.critic_backward(cw, cb, x10, targets)),
    ]

    print(f"{'kernel':<28} {'pure':>12} {'fast':>12} {'speedup':>9}")
    for name, call in cases:
        t_pure = bench(lambda: call(pure), args.repeat)
        if fast is None:
            print(f"{name:<28} {t_pure * 1e6:>10.1f}us {'n/a':>12} {'n/a':>9}")
            continue
        t_fast = bench(lambda: call(fast), args.repeat)
        print(f"{name:<28} {t_pure * 1e6:>10.1f}us {t_fast * 1e6:>10.1f}us "
              f"{t_pure / t_fast:>8.1f}x")

    if fast is None:
        print("\ncompiled backend not built; showing reference timings only")


if __name__ == "__main__":
    main()
