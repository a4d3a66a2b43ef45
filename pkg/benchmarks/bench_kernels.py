"""Compare the compiled kernels with the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]

Prints one line per kernel and problem size with the median time of each
backend and the speedup. The end-to-end line times a transfer-engine QCMI
evaluation under each backend (run in a subprocess so the backend switch
takes effect at import).
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from pgfcs import _pykernels, kernels

try:
    from pgfcs import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def bench(fn, repeat):
    t = timeit.Timer(fn)
    number, _ = t.autorange()
    return float(np.median(t.repeat(repeat=repeat, number=number))) / number


def conj_case(k, d, ns, rng):
    ops = rng.standard_normal((ns, d, d)) + 1j * rng.standard_normal((ns, d, d))
    x = rng.standard_normal((k * d, k * d)) + 1j * rng.standard_normal((k * d, k * d))
    return x, ops


END_TO_END = (
    "import time;from pgfcs.fcskit import builtin_model, Tripartition;from pgfcs.infokit import qcmi;"
    "m=builtin_model('two-component');qcmi(m,Tripartition(1,8,1));t=time.perf_counter();"
    "[qcmi(m,Tripartition(1,n,1)) for n in range(4,200)];print(time.perf_counter()-t)"
)


def end_to_end(pure):
    env = dict(os.environ, PGFCS_PURE="1" if pure else "0")
    out = subprocess.run([sys.executable, "-c", END_TO_END], env=env, capture_output=True, text=True, check=True)
    return float(out.stdout.strip())


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(1)
    if _ckernels is None:
        print("compiled extension missing; build with `pip install -e . --no-build-isolation`")
        return 1
    print(f"{'kernel':<28}{'numpy [s]':>12}{'cython [s]':>12}{'speedup':>9}{'dispatch [s]':>14}")
    for k, d, ns in [(2, 2, 3), (4, 4, 3), (9, 4, 3), (27, 4, 3), (8, 8, 2)]:
        x, ops = conj_case(k, d, ns, rng)
        a = np.abs(_pykernels.conj_last(x, ops, k) - _ckernels.conj_last(x, ops, k)).max()
        assert a < 1e-10, a
        tp = bench(lambda: _pykernels.conj_last(x, ops, k), args.repeat)
        tc = bench(lambda: _ckernels.conj_last(x, ops, k), args.repeat)
        td = bench(lambda: kernels.conj_last(x, ops, k), args.repeat)
        print(f"{f'conj_last k={k} d={d} s={ns}':<28}{tp:>12.3e}{tc:>12.3e}{tp / tc:>9.2f}{td:>14.3e}")
    for n in (16, 256, 4096):
        w = rng.random(n)
        tp = bench(lambda: _pykernels.xlogx_sum(w), args.repeat)
        tc = bench(lambda: _ckernels.xlogx_sum(w), args.repeat)
        td = bench(lambda: kernels.xlogx_sum(w), args.repeat)
        print(f"{f'xlogx_sum n={n}':<28}{tp:>12.3e}{tc:>12.3e}{tp / tc:>9.2f}{td:>14.3e}")
    tp, tc = end_to_end(True), end_to_end(False)
    print(f"{'qcmi sweep (end to end)':<28}{tp:>12.3e}{tc:>12.3e}{tp / tc:>9.2f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
