"""Compare the numba element-matrix kernel against the numpy fallback.

Run twice, once per backend:

    python3 benchmarks/bench_kernels.py
    HELMADAPT_NO_NUMBA=1 python3 benchmarks/bench_kernels.py

or let the script spawn the fallback itself with --both.
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np


def bench(n_elems, repeats):
    from helmadapt import kernels

    rng = np.random.default_rng(7)
    coords = rng.standard_normal((n_elems, 4, 3))
    # make every tet positively oriented so volumes stay well away from 0
    from helmadapt.kernels import grads_vols
    _, vols = grads_vols(coords)
    flip = vols < 0
    coords[flip][:, [0, 1]] = coords[flip][:, [1, 0]]

    # warm-up (numba compilation happens here, excluded from timing)
    kernels.local_matrices(coords[:10])

    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        S, M, _ = kernels.local_matrices(coords)
        best = min(best, time.perf_counter() - t0)
    backend = "numpy" if kernels.USE_NUMBA is False else "numba"
    rate = n_elems / best
    print(f"{backend:6s}  {n_elems} elements  best {best * 1e3:8.2f} ms  "
          f"{rate / 1e6:6.2f} M elem/s")
    return S, M


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=200_000)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--both", action="store_true",
                    help="also run the numpy fallback in a subprocess and "
                    "check both backends agree")
    args = ap.parse_args()

    S, M = bench(args.n, args.repeats)

    if args.both and not os.environ.get("HELMADAPT_NO_NUMBA"):
        env = dict(os.environ, HELMADAPT_NO_NUMBA="1")
        subprocess.run(
            [sys.executable, __file__, "--n", str(args.n),
             "--repeats", str(args.repeats)],
            env=env, check=True)
        # agreement check in-process against the fallback implementations
        from helmadapt import kernels
        rng = np.random.default_rng(7)
        coords = rng.standard_normal((1000, 4, 3))
        S1, M1, _ = kernels._local_matrices_numba(coords)
        S2, M2, _ = kernels._local_matrices_numpy(coords)
        ds = np.abs(S1 - S2).max() / np.abs(S2).max()
        dm = np.abs(M1 - M2).max() / np.abs(M2).max()
        print(f"backend agreement (relative): |dS| {ds:.2e}  |dM| {dm:.2e}")
        assert ds < 1e-12 and dm < 1e-12


if __name__ == "__main__":
    main()
