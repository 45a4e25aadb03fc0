"""Fit distribution of the full identification pipeline over seeds.

Generates ``--n-seeds`` systems per SNR, identifies each with every
requested kernel and evaluator, and prints fit quartiles per group.

    python scripts/pipeline_study.py --m 2000 --n 400 --n-seeds 20 --snr 10 inf
"""

import argparse
import math
import time
import warnings

import numpy as np

from firkrylov import SearchConfig, SynthSpec, ToeplitzOperator, generate, make_kernel, minimize_pml, posterior_mean
from firkrylov.estimate import fit_metric


def one(seed, snr, kernel, evaluator, args):
    data = generate(SynthSpec(a=args.a, m=args.m, n=args.n, snr=snr, seed=seed))
    cfg = SearchConfig(budget=args.budget, evaluator=evaluator, seed=seed)
    t0 = time.perf_counter()
    res = minimize_pml(data, kernel, cfg)
    kf = make_kernel(kernel, data.n, res.beta_star)
    theta = posterior_mean(ToeplitzOperator(data.u, data.n), kf, data.y, res.lambda_star)
    return fit_metric(theta, data.theta_true), time.perf_counter() - t0, res.matvec_total


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--m", type=int, default=2000)
    ap.add_argument("--n", type=int, default=400)
    ap.add_argument("--a", type=float, default=0.2)
    ap.add_argument("--n-seeds", type=int, default=20)
    ap.add_argument("--budget", type=int, default=40)
    ap.add_argument("--snr", type=float, nargs="+", default=[10.0, math.inf])
    ap.add_argument("--kernel", nargs="+", default=["tc"])
    ap.add_argument("--evaluator", nargs="+", default=["direct", "krylov"])
    args = ap.parse_args()
    warnings.simplefilter("ignore", UserWarning)

    print("kernel evaluator snr      min     q1  median     q3    max  sec/run  matvecs/run")
    for kernel in args.kernel:
        for snr in args.snr:
            for ev in args.evaluator:
                runs = [one(s, snr, kernel, ev, args) for s in range(args.n_seeds)]
                fits = np.array([r[0] for r in runs])
                q = np.percentile(fits, [0, 25, 50, 75, 100])
                sec = np.mean([r[1] for r in runs])
                mv = np.mean([r[2] for r in runs])
                print(f"{kernel:6s} {ev:9s} {snr:<6g} " + " ".join(f"{v:6.2f}" for v in q)
                      + f"  {sec:7.2f}  {mv:11.0f}")


if __name__ == "__main__":
    main()
