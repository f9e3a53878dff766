"""Ratio of asymptotic to exact single-report probability for Gamma delays."""

import argparse
import math

from scipy import special

from ruinsim.distributions import DiscreteWeighted
from ruinsim.runoff import (
    DelayModel,
    RunoffExposure,
    asymptotic_report_rate,
    report_prefactor,
    single_report_probability,
)


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--shape", type=float, default=2.0)
    p.add_argument("--rate", type=float, default=0.1)
    p.add_argument("--lam", type=float, default=0.5)
    p.add_argument("--n", type=int, nargs="+", default=[50, 100, 200, 400])
    args = p.parse_args()
    exp = RunoffExposure(
        d=2,
        pi=(0.8, 0.9, 1.0),
        dist_q_past=DiscreteWeighted((0.5, 1.5), (0.5, 0.5)),
        delay=DelayModel(kind="gamma", shape=args.shape, rate=args.rate),
    )
    print("n,leading_term,exact_tail")
    for n in args.n:
        exact, _ = single_report_probability(exp, args.lam, n)
        lead = asymptotic_report_rate(exp, args.lam, n)
        full_h = special.gammaincc(args.shape, args.rate * n) * math.exp(args.rate * n)
        alt = args.lam * report_prefactor(exp) * full_h * math.exp(-n * args.rate)
        print(f"{n},{lead / exact:.4f},{alt / exact:.4f}")


if __name__ == "__main__":
    main()
