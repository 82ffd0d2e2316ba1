"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py --p 3 --repeat 3
"""

import argparse
import timeit

import numpy as np

from circcorr import _fallback
from circcorr.families import make_family
from circcorr.montecarlo import cos_table

try:
    from circcorr import _kernels as compiled
except ImportError:  # extension not built
    compiled = None


def workloads(p: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    fam = make_family("full", p)
    dim = fam.d + p
    data = rng.normal(size=(100, p))
    scat, cost = data.T @ data, cos_table(p)
    x0 = np.zeros(dim)
    chol = 0.05 * np.eye(dim)
    z, u = rng.standard_normal((5000, dim)), rng.random(5000)
    th, be = rng.normal(scale=0.2, size=(1000, fam.d)), rng.normal(scale=0.2, size=(1000, p))
    Y = rng.normal(size=(2000, p))
    lw = np.full((2, 1000), -np.log(1000))

    def rwm(mod):
        lp0 = mod.log_posterior(x0, fam.C, cost, scat, 100.0, 0.5)
        return lambda: mod.rwm_run(x0, lp0, chol, z, u, fam.C, cost, scat, 100.0, 0.5)

    def mixture(mod):
        return lambda: mod.mixture_logpdf(Y, th, be, fam.C, cost, lw)

    return {"rwm_run (5000 steps)": rwm, "mixture_logpdf (1000 draws x 2000 points)": mixture}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--p", type=int, default=3)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if compiled is None:
        print("compiled extension unavailable; only the fallback can run")
    print(f"{'kernel':45s} {'fallback [s]':>13s} {'compiled [s]':>13s} {'speedup':>8s}")
    for name, make in workloads(args.p).items():
        slow = min(timeit.repeat(make(_fallback), number=1, repeat=args.repeat))
        if compiled is None:
            print(f"{name:45s} {slow:13.4f} {'-':>13s} {'-':>8s}")
            continue
        fast = min(timeit.repeat(make(compiled), number=1, repeat=args.repeat))
        print(f"{name:45s} {slow:13.4f} {fast:13.4f} {slow / fast:7.1f}x")


if __name__ == "__main__":
    main()
