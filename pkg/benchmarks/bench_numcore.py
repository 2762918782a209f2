"""Time forward+backward passes of the compiled kernel against the numpy one.

Usage::

    python benchmarks/bench_numcore.py [--repeats 200]

Shapes cover the Q-network, dynamics model and auto-encoder sizes used in
training, at the batch sizes they see. Both kernels get the same inputs and
their gradients are checked to agree before timing.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from homemorl.numcore import _pymlp

try:
    from homemorl.numcore import _cmlp
except ImportError:
    _cmlp = None

CASES = [
    ("q-net 64x64, batch 1", (8, 64, 64, 4), False, 1),
    ("q-net 64x64, batch 64", (8, 64, 64, 4), False, 64),
    ("q-net 256x256, batch 256", (8, 256, 256, 4), False, 256),
    ("dynamics 200x200, batch 256", (6, 200, 200, 8), False, 256),
    ("auto-encoder, batch 32", (120, 60, 30, 60, 120), True, 32),
]


def step(kernel, theta, sizes, sigmoid_all, X, G):
    acts = kernel.forward_cache(theta, sizes, sigmoid_all, X)
    return kernel.backward_cache(theta, sizes, sigmoid_all, acts, G)


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=200)
    args = ap.parse_args(argv)
    if _cmlp is None:
        print("compiled kernel not built; run `pip install --no-build-isolation -e .` first")
        return
    rng = np.random.default_rng(0)
    print(f"{'case':<30}{'numpy us':>12}{'cython us':>12}{'speedup':>10}")
    for name, sizes, sig, batch in CASES:
        n = sum(sizes[i] * sizes[i + 1] + sizes[i + 1] for i in range(len(sizes) - 1))
        theta = rng.normal(scale=0.1, size=n)
        X = rng.normal(size=(batch, sizes[0]))
        G = rng.normal(size=(batch, sizes[-1]))
        gp = step(_pymlp, theta, sizes, sig, X, G)
        gc = step(_cmlp, theta, sizes, sig, X, G)
        if not np.allclose(gp, gc, rtol=1e-9, atol=1e-12):
            raise SystemExit(f"{name}: kernels disagree")
        t = {}
        for label, k in (("py", _pymlp), ("c", _cmlp)):
            t[label] = min(timeit.repeat(lambda: step(k, theta, sizes, sig, X, G),
                                         number=args.repeats, repeat=3)) / args.repeats * 1e6
        print(f"{name:<30}{t['py']:>12.1f}{t['c']:>12.1f}{t['py'] / t['c']:>9.2f}x")


if __name__ == "__main__":
    main()
