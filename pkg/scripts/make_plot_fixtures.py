#!/usr/bin/env python3
"""Regenerate the golden fixtures shipped with the plots package.

Runs small frozen-seed simulations and copies the documented output files
into plots/fixtures/. The rho-trend fixture carries measured values from
the convergence experiment at n = 50/200/800.
"""

import json
import shutil
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
FIXTURES = ROOT / "plots" / "fixtures"

sys.path.insert(0, str(ROOT / "src"))

from colonysim.cli import main as colonysim_main  # noqa: E402

CONFIG = {
    "mode": "particles",
    "n": 60,
    "h": 0.005,
    "T": 0.5,
    "replicas": 60,
    "seed": 4242,
    "colony1": {"rate": 30.0, "beta": 0.0, "sigma_sq": 1.0},
    "colony2": {"rate": 30.0, "beta": 0.0, "sigma_sq": 1.0},
    "eta": {"model": "constant", "c": 0.4},
    "chi": {"atoms": [[0.0, 1.0]]},
    "initial1": {"positions": [0.0] * 60},
    "initial2": {"positions": [0.0] * 60},
    "snapshot_times": [0.5],
    "scheme": {"x_min": -4.0, "x_max": 4.0, "cells": 64, "dt": 0.005,
               "da": 0.1, "a_max": 6.0},
}

# measured in the n-ladder convergence experiment (see test_acceptance.py,
# criterion 7 configuration, frozen seeds)
RHO_TREND = [
    (50, 1, 0.1841, 0.01416),
    (200, 1, 0.03851, 0.00753),
    (800, 1, 0.01457, 0.005432),
    (50, 2, 0.1643, 0.01034),
    (200, 2, 0.03725, 0.005696),
    (800, 2, 0.005915, 0.002563),
]


def main() -> int:
    FIXTURES.mkdir(parents=True, exist_ok=True)
    work = ROOT / "build" / "fixture_runs"
    work.mkdir(parents=True, exist_ok=True)

    cfg_particles = work / "particles.json"
    cfg_particles.write_text(json.dumps(CONFIG, indent=2))
    out_p = work / "particles"
    colonysim_main(["simulate-particles", "--config", str(cfg_particles),
                    "--out", str(out_p), "--workers", "2"])

    spde_cfg = dict(CONFIG, mode="spde")
    cfg_spde = work / "spde.json"
    cfg_spde.write_text(json.dumps(spde_cfg, indent=2))
    out_s = work / "spde"
    colonysim_main(["simulate-spde", "--config", str(cfg_spde),
                    "--out", str(out_s), "--workers", "2"])

    shutil.copy(out_p / "summary.csv", FIXTURES / "summary.csv")
    shutil.copy(out_p / "cdf_t0.5_colony1.csv", FIXTURES / "cdf_particle.csv")
    shutil.copy(out_s / "cdf_t0.5_colony1.csv", FIXTURES / "cdf_spde.csv")
    shutil.copy(out_p / "replica_00000.ndjson", FIXTURES / "replica.ndjson")

    with open(FIXTURES / "rho_trend.csv", "w") as fh:
        fh.write("n,colony,rho,stderr\n")
        for n, colony, rho, se in RHO_TREND:
            fh.write(f"{n},{colony},{rho},{se}\n")

    print(f"fixtures written to {FIXTURES}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
