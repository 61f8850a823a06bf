#!/usr/bin/env python3
"""Particle-to-SPDE convergence ladder in the weighted-CDF metric.

Runs the two-colony particle system at n = 50, 200, 800 (h = 1/n) with a
supercritical drift and mass-coupled migration, compares replica-mean CDFs
at t = 0.5 against the deterministic limit solved by the SPDE scheme, and
writes a rho_trend.csv consumable by the plots package.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "src"))

from scipy.stats import norm  # noqa: E402

from colonysim.config import RunConfig  # noqa: E402
from colonysim.diagnostics import convergence_test  # noqa: E402
from colonysim.measures import FiniteMeasure, Grid  # noqa: E402
from colonysim.migration import MigrationIntensity  # noqa: E402
from colonysim.params import ColonyBranching, InitialSpec, ModelParams  # noqa: E402
from colonysim.runner import run_replicas  # noqa: E402
from colonysim.spde import SchemeSpec  # noqa: E402

GRID = Grid(-4.0, 4.0, 192)
SCHEME = SchemeSpec(grid=GRID, dt=1.0 / 1280, da=0.2, a_max=28.0)
BETA, C = 15.0, 0.3


def quantiles(n, loc, scale):
    return norm.ppf((np.arange(n) + 0.5) / n, loc=loc, scale=scale)


def particle_config(n, replicas, seed):
    m = 1.0 + BETA / n
    params = ModelParams(
        n=n,
        colony1=ColonyBranching(rate=0.2 * n, beta=BETA, sigma_sq=(m - 1) * (2 - m)),
        colony2=ColonyBranching(rate=0.2 * n, beta=BETA, sigma_sq=(m - 1) * (2 - m)),
        eta=MigrationIntensity(model="mass_coupled", c=C),
        chi=FiniteMeasure.point(0.5, 1.0),
        initial1=InitialSpec.at(quantiles(n, -0.5, 0.8)),
        initial2=InitialSpec.at(quantiles(n, 0.5, 0.8)),
        h=1.0 / n,
    )
    return RunConfig(mode="particles", params=params, T=0.5, replicas=replicas,
                     seed=seed, scheme=SCHEME, snapshot_times=(0.5,))


def spde_config(seed):
    params = ModelParams(
        n=1000,
        colony1=ColonyBranching(rate=200.0, beta=BETA, sigma_sq=0.0),
        colony2=ColonyBranching(rate=200.0, beta=BETA, sigma_sq=0.0),
        eta=MigrationIntensity(model="mass_coupled", c=C),
        chi=FiniteMeasure.point(0.5, 1.0),
        initial1=InitialSpec.at(quantiles(1000, -0.5, 0.8)),
        initial2=InitialSpec.at(quantiles(1000, 0.5, 0.8)),
        h=0.001,
    )
    return RunConfig(mode="spde", params=params, T=0.5, replicas=2, seed=seed,
                     scheme=SCHEME, snapshot_times=(0.5,))


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--replicas", type=int, nargs=3, default=[2000, 2000, 1000],
                    metavar=("R50", "R200", "R800"))
    ap.add_argument("--out", default="build/rho_trend.csv")
    ap.add_argument("--workers", type=int, default=None)
    args = ap.parse_args()

    by_n = {}
    for n, R in zip((50, 200, 800), args.replicas):
        print(f"running particles n={n} x {R} replicas ...")
        by_n[n] = run_replicas(particle_config(n, R, args.seed), args.workers)
    print("solving the deterministic limit ...")
    spde_records = run_replicas(spde_config(args.seed + 1), workers=1)

    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w") as fh:
        fh.write("n,colony,rho,stderr\n")
        for colony in (1, 2):
            rep = convergence_test(by_n, spde_records, t=0.5, colony=colony)
            for d in rep.details:
                if "rho" in d:
                    fh.write(f"{d['n']},{colony},{d['rho']!r},{d['stderr']!r}\n")
            flag = "PASS" if rep.passed else "FAIL"
            print(f"[{flag}] colony {colony}: " + " -> ".join(
                f"{d['rho']:.4g}" for d in rep.details if "rho" in d))
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
