"""Replica orchestration: worker pool, NDJSON/CSV persistence.

Replica r always uses the Philox stream keyed by (seed, r), and results are
collected in replica order, so output is bit-identical no matter how many
workers run. Worker count comes from the COLONYSIM_WORKERS environment
variable unless given explicitly.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import particles, spde
from .config import RunConfig
from .measures import FiniteMeasure, Grid
from .params import InitialSpec
from .records import PathRecord, write_ndjson

__all__ = ["worker_count", "initial_measure", "run_replicas", "write_outputs", "load_records"]


def worker_count(explicit: int | None = None) -> int:
    if explicit is not None:
        return max(1, explicit)
    env = os.environ.get("COLONYSIM_WORKERS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def initial_measure(spec: InitialSpec, n: int) -> FiniteMeasure:
    """Limit initial measure implied by an initial spec (mass 1 or 0)."""
    if spec.positions is not None:
        pos = np.asarray(spec.positions, dtype=float)
        if pos.size == 0:
            return FiniteMeasure.empty()
        return FiniteMeasure.from_atoms(pos, np.full(pos.size, 1.0 / n))
    mu = spec.sample_from
    return FiniteMeasure.from_atoms(mu.positions, mu.weights / mu.total_mass)


def _snapshot_grid(config: RunConfig) -> Grid | None:
    if config.scheme is not None:
        return config.scheme.grid
    if config.snapshot_times:
        # particle-only runs still need a grid for CDF snapshots
        return Grid(-8.0, 8.0, 256)
    return None


def _run_one(config: RunConfig, replica: int) -> PathRecord:
    obs1 = [spec.build() for spec in config.observables1]
    obs2 = [spec.build() for spec in config.observables2]
    if config.mode == "particles":
        return particles.run(
            config.params, config.T, obs1, obs2, config.seed, replica,
            snapshot_times=config.snapshot_times,
            snapshot_grid=_snapshot_grid(config),
            config_hash=config.config_hash,
        )
    if config.mode == "baseline":
        return particles.run_baseline(
            config.params.n, config.params.colony1, config.kappa,
            config.params.initial1, config.T, obs1, config.seed, replica,
            h=config.params.h, config_hash=config.config_hash,
        )
    if config.mode == "spde":
        grid = config.scheme.grid
        from .measures import cdf
        u0_1 = cdf(initial_measure(config.params.initial1, config.params.n), grid)
        u0_2 = cdf(initial_measure(config.params.initial2, config.params.n), grid)
        return spde.spde_run(
            config.params, config.T, config.scheme, u0_1, u0_2, obs1, obs2,
            config.seed, replica, snapshot_times=config.snapshot_times,
            config_hash=config.config_hash,
        )
    raise ValueError(f"unknown mode {config.mode!r}")


def run_replicas(config: RunConfig, workers: int | None = None) -> list[PathRecord]:
    w = worker_count(workers)
    reps = range(config.replicas)
    if w <= 1 or config.replicas == 1:
        return [_run_one(config, r) for r in reps]
    with ProcessPoolExecutor(max_workers=w) as pool:
        futures = [pool.submit(_run_one, config, r) for r in reps]
        return [f.result() for f in futures]


def summarize(records: list[PathRecord]) -> list[tuple]:
    """Rows (t, colony, observable, mean, var, stderr, replicas) over replicas."""
    rows = []
    times = records[0].times
    R = len(records)
    series = {("mass", 1): np.array([r.mass1 for r in records]),
              ("mass", 2): np.array([r.mass2 for r in records])}
    for obs in records[0].observables:
        series[(obs.name, obs.colony)] = np.array(
            [r.observable(obs.key).value for r in records])
    for (name, colony), mat in series.items():
        mean = mat.mean(axis=0)
        var = mat.var(axis=0, ddof=1) if R > 1 else np.zeros_like(mean)
        se = np.sqrt(var / R)
        for i, t in enumerate(times):
            rows.append((float(t), colony, name, float(mean[i]), float(var[i]),
                         float(se[i]), R))
    return rows


def write_outputs(config: RunConfig, records: list[PathRecord], out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(config.serialize())
    stamp = f"# config_hash={config.config_hash} seed={config.seed}\n"
    for record in records:
        write_ndjson(record, out / f"replica_{record.replica:05d}.ndjson")
    with open(out / "summary.csv", "w") as fh:
        fh.write(stamp)
        fh.write("t,colony,observable,mean,var,stderr,replicas\n")
        for row in summarize(records):
            fh.write(",".join(repr(v) if isinstance(v, float) else str(v)
                              for v in row) + "\n")
    _write_snapshots(records, out, stamp)


def _write_snapshots(records: list[PathRecord], out: Path, stamp: str) -> None:
    """Replica-mean CDF snapshots, one CSV per (t, colony)."""
    keys = {(s.t, s.colony) for r in records for s in r.snapshots}
    for t, colony in sorted(keys):
        rows = []
        grid = None
        for r in records:
            try:
                snap = r.snapshot(t, colony)
            except KeyError:
                continue
            rows.append(snap.values)
            grid = snap.grid
        if not rows:
            continue
        mean = np.mean(rows, axis=0)
        with open(out / f"cdf_t{t:g}_colony{colony}.csv", "w") as fh:
            fh.write(stamp)
            fh.write("x,value\n")
            for x, v in zip(grid.nodes, mean):
                fh.write(f"{float(x)!r},{float(v)!r}\n")


def load_records(records_dir) -> list[PathRecord]:
    from .records import read_ndjson

    paths = sorted(Path(records_dir).glob("replica_*.ndjson"))
    if not paths:
        raise FileNotFoundError(f"no replica_*.ndjson files under {records_dir}")
    return [read_ndjson(p) for p in paths]
