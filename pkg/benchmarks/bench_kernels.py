"""Compare the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]
"""

import argparse
import json
import timeit

import numpy as np

from tanapprox import _pykernels, kernels
from tanapprox.expr import parse
from tanapprox.jets import taylor

try:
    from tanapprox import _ckernels
except ImportError:
    _ckernels = None


def cases(rng):
    A = rng.standard_normal((2000, 3))
    B = rng.standard_normal((2000, 3))
    s = taylor(parse("exp(x1 + x2) * cos(x3) - 1", 3), 8)[0]
    t = taylor(parse("sin(x1 * x2) + x3^2 + x1", 3), 8)[0]
    ea, ca = np.array(list(s.terms)), np.array(list(s.terms.values()))
    eb, cb = np.array(list(t.terms)), np.array(list(t.terms.values()))
    return {
        "nearest 2000x2000": lambda impl: kernels.nearest(A, B, impl=impl),
        "knn m=8 2000x2000": lambda impl: kernels.knn(A, B, 8, impl=impl),
        "series_mul n=3 k=8": lambda impl: kernels.series_mul(ea, ca, eb, cb, 8, impl=impl),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", help="also write results to this file")
    args = ap.parse_args(argv)
    if _ckernels is None:
        print("compiled extension not built; only the fallback is timed")
    impls = {"python": _pykernels}
    if _ckernels is not None:
        impls["cython"] = _ckernels
    rng = np.random.default_rng(0)
    results = []
    print(f"{'kernel':<22}" + "".join(f"{k:>12}" for k in impls) + f"{'speedup':>10}")
    for name, fn in cases(rng).items():
        times = {k: min(timeit.repeat(lambda: fn(impl), number=1, repeat=args.repeat)) for k, impl in impls.items()}
        speed = times["python"] / times["cython"] if "cython" in times else float("nan")
        print(f"{name:<22}" + "".join(f"{times[k] * 1e3:>10.2f}ms" for k in impls) + f"{speed:>9.1f}x")
        results.append({"kernel": name, "seconds": times, "speedup": speed})
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(results, fh, indent=2)


if __name__ == "__main__":
    main()
