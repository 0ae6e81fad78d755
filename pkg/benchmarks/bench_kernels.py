"""Compiled vs pure-numpy kernel timings.

Times each kernel pair on the same inputs, checks that the two paths agree,
and optionally times one end-to-end ``sblm`` run with the compiled kernels
switched off through ``SEMIBAYES_DISABLE_NUMBA``.

    python benchmarks/bench_kernels.py [--repeat 5] [--end-to-end]
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from semibayes import kernels
from semibayes._accel import HAVE_NUMBA
from semibayes.transform import fritsch_carlson_slopes

E2E = """
import time, numpy as np
from semibayes.simlab import SimDesign, simulate
from semibayes.sblm import SblmConfig, sblm_run
data = simulate(SimDesign(200, 50, "beta", n_test=0), np.random.default_rng(0))
sblm_run(data.train, SblmConfig(num_draws=20), seed=0)  # warm-up and compilation
t0 = time.perf_counter()
sblm_run(data.train, SblmConfig(num_draws=1000), seed=0)
print(time.perf_counter() - t0)
"""


def cases(rng):
    n, K = 200, 100
    means, sds = rng.normal(size=n * K), rng.uniform(0.5, 2, n * K)
    weights = np.repeat(rng.dirichlet(np.ones(n)), K) / K
    x = np.linspace(-4, 4, 400)
    p = np.sort(rng.uniform(0.01, 0.99, 400))
    t = np.sort(rng.normal(size=500))
    g = np.cumsum(rng.uniform(0.1, 1, 500))
    d = fritsch_carlson_slopes(t, g)
    z = rng.uniform(g[0], g[-1], 5000)
    chi, psi = rng.uniform(0, 5, 10**4), np.full(10**4, 3.0)
    lam = np.full(10**4, 0.5)
    zz, M, la = rng.normal(size=50), rng.normal(size=(1000, 50)), np.log(np.full(50, 1 / 50))
    return {
        "mixture_cdf_pdf": (kernels.mixture_cdf_pdf_nb, kernels.mixture_cdf_pdf_np, (x, means, sds, weights)),
        "invert_mixture": (kernels._invert_mixture_nb, kernels._invert_mixture_np,
                           (p, means, sds, weights, -20.0, 20.0, 1e-13)),
        "component_table": (kernels.component_table_nb, kernels.component_table_np, (x, means.reshape(n, K), sds.reshape(n, K))),
        "hermite_eval": (kernels.hermite_eval_nb, kernels.hermite_eval_np, (t, g, d, np.sort(z - g[0] + t[0]), False)),
        "hermite_inverse": (kernels.hermite_inverse_nb, kernels.hermite_inverse_np, (t, g, d, z, False)),
        "log_mean_mixture_likelihood": (kernels.log_mean_mixture_likelihood_nb, kernels.log_mean_mixture_likelihood_np,
                                        (zz, M, la)),
        "sample_gig": (kernels.sample_gig_nb, kernels.sample_gig_np, (lam, chi, psi)),
    }


def same(u, v):
    if isinstance(u, tuple):
        return all(same(a, b) for a, b in zip(u, v))
    return bool(np.allclose(u, v, rtol=1e-9, atol=1e-11))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--end-to-end", action="store_true")
    args = ap.parse_args(argv)
    if not HAVE_NUMBA:
        print("numba is unavailable; nothing to compare")
        return 0
    rng = np.random.default_rng(0)
    print(f"{'kernel':30s} {'numba ms':>10s} {'numpy ms':>10s} {'speedup':>8s}  agree")
    for name, (fast, slow, a) in cases(rng).items():
        if name == "sample_gig":
            run_fast = lambda: fast(*a, np.random.default_rng(1))
            run_slow = lambda: slow(*a, np.random.default_rng(1))
            # different variate streams: compare means only
            agree = abs(run_fast().mean() / run_slow().mean() - 1) < 0.05
        else:
            run_fast, run_slow = (lambda: fast(*a)), (lambda: slow(*a))
            agree = same(run_fast(), run_slow())
        tf = min(timeit.repeat(run_fast, number=1, repeat=args.repeat)) * 1e3
        ts = min(timeit.repeat(run_slow, number=1, repeat=args.repeat)) * 1e3
        print(f"{name:30s} {tf:10.2f} {ts:10.2f} {ts / tf:8.1f}  {agree}")
    if args.end_to_end:
        for flag in ("0", "1"):
            env = {**os.environ, "SEMIBAYES_DISABLE_NUMBA": flag}
            out = subprocess.run([sys.executable, "-c", E2E], env=env, capture_output=True, text=True, check=True)
            label = "numpy" if flag == "1" else "numba"
            print(f"sblm n=200 p=50 S=1000 ({label}): {float(out.stdout.strip()):.2f} s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
