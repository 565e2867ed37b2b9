"""Compare the numba recursion kernel with its numpy twin.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Also times one full strategy enumeration of the bundled case study, once with
numba enabled and once in a subprocess with CYBERALLOC_NUMBA=0.
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from cyberalloc import _kernels


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def severity(n, seed=0):
    rng = np.random.default_rng(seed)
    fz = rng.random(n) ** 4
    fz[0] = 0.3 * fz.sum()
    return fz / fz.sum()


def kernel_rows(repeat):
    rows = []
    for n, lam in ((200, 5.0), (1000, 5.0), (4000, 3.0)):
        fz = severity(n)
        seed = float(np.exp(-lam * (1 - fz[0])))
        args = (0.0, lam, fz, seed, 1e-9, 1 << 16)
        _kernels._panjer_nb(*args)  # compile
        rows.append((f"panjer n={n} lambda={lam:g}",
                     best_of(lambda: _kernels._panjer_py(*args), repeat),
                     best_of(lambda: _kernels._panjer_nb(*args), repeat)))
    return rows


ENUMERATE = """
import time
from cyberalloc.config import case_study_config
from cyberalloc.allocate import enumerate_strategies
start = time.perf_counter()
cfg = case_study_config()
enumerate_strategies(cfg.problem())
print(time.perf_counter() - start)
"""


def enumeration_time(flag):
    env = dict(os.environ, CYBERALLOC_NUMBA=flag)
    out = subprocess.run([sys.executable, "-c", ENUMERATE], env=env, capture_output=True, text=True, check=True)
    return float(out.stdout.strip())


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--skip-enumeration", action="store_true")
    args = ap.parse_args(argv)
    if not _kernels.NUMBA_AVAILABLE:
        sys.exit("numba is not installed; nothing to compare")

    print(f"{'case':32s} {'numpy (s)':>12s} {'numba (s)':>12s} {'speedup':>9s}")
    for name, slow, fast in kernel_rows(args.repeat):
        print(f"{name:32s} {slow:12.5f} {fast:12.5f} {slow / fast:8.1f}x")
    if not args.skip_enumeration:
        # the first numba run may compile; the on-disk cache makes the second one representative
        enumeration_time("1")
        on, off = enumeration_time("1"), enumeration_time("0")
        print(f"{'case-study enumeration':32s} {off:12.3f} {on:12.3f} {off / on:8.1f}x")


if __name__ == "__main__":
    main()
