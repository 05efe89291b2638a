"""Compare the numba kernels against the pure-numpy fallback.

Each backend runs in its own interpreter because the backend is fixed at
import time by DEIMBAYES_DISABLE_NUMBA.

    python benchmarks/bench_kernels.py [--n-g 128] [--reps 7]
"""
import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def _time(fn, reps):
    fn()  # warm-up (and JIT compile)
    out = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        out.append(time.perf_counter() - t0)
    return float(np.median(out))


def worker(n_g: int, reps: int) -> dict:
    from deimbayes import _kernels
    from deimbayes.model import FullSystem, build_grid
    from deimbayes.linsolve import PoissonSolver

    full = FullSystem(build_grid(n_g))
    A = full.A.tocsr()
    rng = np.random.default_rng(0)
    x = rng.standard_normal(A.shape[0])
    b = rng.standard_normal(A.shape[0])
    gs = _kernels.GaussSeidel(A)
    series = rng.standard_normal(10000)
    mg = PoissonSolver(full.A, "multigrid", n_g=n_g)
    return {
        "numba": _kernels.NUMBA_ENABLED,
        "csr_matvec": _time(lambda: _kernels.csr_matvec(A, x), reps),
        "gauss_seidel_sweep": _time(lambda: gs.symmetric(x.copy(), b), reps),
        "autocovariance_J40": _time(lambda: _kernels.autocovariance(series - series.mean(), 40), reps),
        "multigrid_solve": _time(lambda: mg.apply(b), reps),
    }


def run_backend(disable: bool, n_g: int, reps: int) -> dict:
    env = dict(os.environ, DEIMBAYES_DISABLE_NUMBA="1" if disable else "0")
    cmd = [sys.executable, __file__, "--worker", "--n-g", str(n_g), "--reps", str(reps)]
    res = subprocess.run(cmd, env=env, capture_output=True, text=True, check=True)
    return json.loads(res.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-g", type=int, default=128)
    ap.add_argument("--reps", type=int, default=7)
    ap.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()
    if args.worker:
        print(json.dumps(worker(args.n_g, args.reps)))
        return
    jit = run_backend(False, args.n_g, args.reps)
    ref = run_backend(True, args.n_g, args.reps)
    print(f"N = {args.n_g ** 2}, median of {args.reps} (numba active: {jit['numba']})")
    print(f"{'kernel':<22}{'numba [ms]':>12}{'numpy [ms]':>12}{'speedup':>10}")
    for key in ("csr_matvec", "gauss_seidel_sweep", "autocovariance_J40", "multigrid_solve"):
        print(f"{key:<22}{jit[key] * 1e3:>12.3f}{ref[key] * 1e3:>12.3f}{ref[key] / jit[key]:>9.1f}x")


if __name__ == "__main__":
    main()
