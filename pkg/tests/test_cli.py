import json
from pathlib import Path

import numpy as np
import pytest

from colonysim.cli import main

BASE = {
    "mode": "particles",
    "n": 30,
    "T": 0.2,
    "h": 0.01,
    "replicas": 40,
    "seed": 12,
    "colony1": {"rate": 15.0, "beta": 0.0, "sigma_sq": 1.0},
    "colony2": {"rate": 15.0, "beta": 0.0, "sigma_sq": 1.0},
    "eta": {"model": "constant", "c": 0.5},
    "chi": {"atoms": [[0.0, 1.0]]},
    "initial1": {"positions": [0.0] * 30},
    "initial2": {"positions": [0.0] * 30},
    "checkpoints": [0.1, 0.2],
}


def write_config(tmp_path, name="config.json", **overrides):
    raw = dict(BASE, **overrides)
    path = tmp_path / name
    path.write_text(json.dumps(raw))
    return path


def test_simulate_particles_outputs(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "out"
    assert main(["simulate-particles", "--config", str(cfg), "--out", str(out),
                 "--workers", "1"]) == 0
    files = sorted(out.glob("replica_*.ndjson"))
    assert len(files) == 40
    summary = (out / "summary.csv").read_text().splitlines()
    assert summary[0].startswith("# config_hash=")
    assert summary[1] == "t,colony,observable,mean,var,stderr,replicas"
    header = json.loads(files[0].read_text().splitlines()[0])
    assert header["record"] == "header"
    assert "config_hash" in header


def test_simulate_deterministic_across_workers(tmp_path):
    cfg = write_config(tmp_path)
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["simulate-particles", "--config", str(cfg), "--out", str(out1),
                 "--workers", "1"]) == 0
    assert main(["simulate-particles", "--config", str(cfg), "--out", str(out2),
                 "--workers", "2"]) == 0
    for f1 in sorted(out1.glob("replica_*.ndjson")):
        f2 = out2 / f1.name
        assert f1.read_bytes() == f2.read_bytes()


def test_verify_suite_pass_and_fail(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "out"
    main(["simulate-particles", "--config", str(cfg), "--out", str(out),
          "--workers", "2"])
    report = tmp_path / "report.csv"
    code = main(["verify", "--records", str(out), "--suite", "drift",
                 "--out", str(report)])
    assert code == 0
    lines = report.read_text().splitlines()
    assert lines[1] == "test,statistic,estimate,stderr,target,z,pass"
    assert all(line.rsplit(",", 1)[1] == "True" for line in lines[2:])
    # an absurd threshold forces failures and a nonzero exit
    code = main(["verify", "--records", str(out), "--suite", "qv-limit",
                 "--out", str(tmp_path / "r2.csv"), "--threshold", "0.000001"])
    assert code == 1


def test_simulate_baseline(tmp_path):
    cfg = write_config(tmp_path, mode="baseline", kappa={"atoms": [[0.0, 0.5]]})
    out = tmp_path / "base"
    assert main(["simulate-baseline", "--config", str(cfg), "--out", str(out),
                 "--workers", "1", "--replicas", "35"]) == 0
    assert len(list(out.glob("replica_*.ndjson"))) == 35
    report = tmp_path / "base.csv"
    assert main(["verify", "--records", str(out), "--suite", "drift",
                 "--out", str(report)]) == 0


def test_simulate_spde_and_compare(tmp_path):
    scheme = {"x_min": -4.0, "x_max": 4.0, "cells": 32, "dt": 0.02,
              "da": 0.2, "a_max": 4.0}
    spde_cfg = write_config(
        tmp_path, "spde.json", mode="spde", scheme=scheme, replicas=40,
        snapshot_times=[0.2], h=0.01,
        colony1={"rate": 15.0, "beta": 0.0, "sigma_sq": 0.5},
        colony2={"rate": 15.0, "beta": 0.0, "sigma_sq": 0.5},
    )
    spde_out = tmp_path / "spde"
    assert main(["simulate-spde", "--config", str(spde_cfg), "--out", str(spde_out),
                 "--workers", "2"]) == 0
    assert (spde_out / "cdf_t0.2_colony1.csv").exists()

    particle_dirs = []
    for n in (10, 40):
        cfg = write_config(
            tmp_path, f"p{n}.json", n=n, h=min(0.01, 1.0 / n), replicas=40,
            snapshot_times=[0.2], scheme=scheme,
            initial1={"positions": [0.0] * n}, initial2={"positions": [0.0] * n},
        )
        out = tmp_path / f"p{n}"
        assert main(["simulate-particles", "--config", str(cfg), "--out", str(out),
                     "--workers", "2"]) == 0
        particle_dirs.append(str(out))

    report = tmp_path / "compare.csv"
    code = main(["compare", "--particle-records", *particle_dirs,
                 "--spde-records", str(spde_out), "--t", "0.2",
                 "--out", str(report)])
    assert code in (0, 1)  # tiny runs may not resolve the trend
    assert report.exists()
    lines = report.read_text().splitlines()
    assert lines[1] == "test,statistic,estimate,stderr,target,z,pass"


def test_bad_config_exit_code(tmp_path, capsys):
    cfg = write_config(tmp_path, colony1={"rate": 500.0, "beta": 0.0, "sigma_sq": 1.0})
    assert main(["simulate-particles", "--config", str(cfg),
                 "--out", str(tmp_path / "x"), "--workers", "1"]) == 2
    err = capsys.readouterr().err
    assert "rate*h" in err


def test_verify_moments_suite(tmp_path):
    dirs = []
    for n in (20, 40):
        cfg = write_config(tmp_path, f"m{n}.json", n=n, h=0.01, replicas=40,
                           initial1={"positions": [0.0] * n},
                           initial2={"positions": [0.0] * n})
        out = tmp_path / f"m{n}"
        main(["simulate-particles", "--config", str(cfg), "--out", str(out),
              "--workers", "2"])
        dirs.append(str(out))
    report = tmp_path / "moments.csv"
    code = main(["verify", "--records", *dirs, "--suite", "moments",
                 "--out", str(report)])
    assert report.exists()
    assert code in (0, 1)


def test_worker_count_env_var(monkeypatch):
    from colonysim.runner import worker_count

    monkeypatch.setenv("COLONYSIM_WORKERS", "3")
    assert worker_count() == 3
    assert worker_count(5) == 5
    monkeypatch.delenv("COLONYSIM_WORKERS")
    assert worker_count() >= 1
