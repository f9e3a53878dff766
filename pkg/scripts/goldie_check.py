"""Tail constant of the growth instance and a crude Monte Carlo comparison."""

import argparse

from ruinsim.config import load_config
from ruinsim.distributions import RngStream
from ruinsim.estimators import GoldieProblem, estimate_goldie_constant, simulate_fixed_point, tail_slope
from ruinsim.lundberg import solve_rate
from ruinsim.montecarlo import mc_ruin_grid


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("config", nargs="?", default="configs/growth_goldie.json")
    p.add_argument("--samples", type=int, default=4 * 10**6)
    args = p.parse_args()
    cfg = load_config(args.config)
    spec = cfg.model
    rate = solve_rate(spec.lambda_1()).rate
    problem = GoldieProblem.from_growth(spec)
    chain = simulate_fixed_point(problem, burn_in=cfg.goldie_burn_in, n_samples=args.samples,
                                 rng=RngStream(cfg.goldie_seed, 0).generator)
    const = estimate_goldie_constant(problem, chain, RngStream(cfg.goldie_seed, 1).generator)
    print(f"rate {rate:.10g}; empirical tail slope {tail_slope(chain, 0.1):.3f}")
    print(f"C = {const.estimate:.5g} +/- {const.std_error:.2g}")
    for u, rep in zip(cfg.u_grid, mc_ruin_grid(spec, cfg.u_grid, cfg.mc)):
        ref = const.estimate * u**-rate
        print(f"u={u:g}: MC {rep.estimate:.4g} +/- {rep.std_error:.2g}, C u^-rate {ref:.4g}, ratio {rep.estimate / ref:.3f}")


if __name__ == "__main__":
    main()
