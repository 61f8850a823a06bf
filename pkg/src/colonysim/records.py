"""Per-replica time series of observables, compensators and residuals.

A PathRecord is the contract between the engines and the diagnostics: the
residual series M(t) = value(t) - value(0) - compensator(t) is constructed
here, never re-derived downstream, and the auxiliary series carry exactly
what the finite-n variance targets need.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .measures import Grid

__all__ = ["ObservableSeries", "CdfSnapshot", "PathRecord", "write_ndjson", "read_ndjson"]


@dataclass
class ObservableSeries:
    """Series attached to one observable f in one colony.

    value       <mu_t, f>
    compensator drift compensator A(t), A(0) = 0
    value_sq    <mu_t, f^2>          (variance targets)
    value_dfsq  <mu_t, (f')^2>       (particle motion term, colony QV)
    value_ddf   <mu_t, f''>          (recorded for reference)
    value_feta  <mu_t, f eta>        (colony 1: covariation target)
    value_fsq_eta <mu_t, f^2 eta>    (colony 1: migration QV term)
    chi_pair    <chi, f>             (colony 2 deposits)
    """

    name: str
    colony: int
    value: np.ndarray
    compensator: np.ndarray
    value_sq: np.ndarray
    value_ddf: np.ndarray | None = None
    value_dfsq: np.ndarray | None = None
    value_feta: np.ndarray | None = None
    value_fsq_eta: np.ndarray | None = None
    chi_pair: float | None = None

    @property
    def residual(self) -> np.ndarray:
        return self.value - self.value[0] - self.compensator

    def realized_qv(self) -> np.ndarray:
        """Cumulative sum of squared residual increments, aligned with times."""
        dm = np.diff(self.residual)
        return np.concatenate([[0.0], np.cumsum(dm * dm)])

    @property
    def key(self) -> str:
        return f"{self.colony}:{self.name}"


@dataclass
class CdfSnapshot:
    t: float
    colony: int
    grid: Grid
    values: np.ndarray


@dataclass
class PathRecord:
    engine: str
    times: np.ndarray
    mass1: np.ndarray
    mass2: np.ndarray
    flow: np.ndarray  # <mu1_t, eta(., mu1_t, mu2_t)>
    observables: list[ObservableSeries]
    replica: int
    seed: int
    config_hash: str
    model_info: dict
    events: dict = field(default_factory=dict)
    snapshots: list[CdfSnapshot] = field(default_factory=list)

    def observable(self, key: str) -> ObservableSeries:
        for obs in self.observables:
            if obs.key == key or obs.name == key:
                return obs
        raise KeyError(f"no observable {key!r}; have {[o.key for o in self.observables]}")

    def index_of(self, t: float) -> int:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-9 + 1e-9 * abs(t):
            raise KeyError(f"time {t} not on the mesh (closest {self.times[i]})")
        return i

    def snapshot(self, t: float, colony: int) -> CdfSnapshot:
        for snap in self.snapshots:
            if snap.colony == colony and abs(snap.t - t) <= 1e-9 + 1e-9 * abs(t):
                return snap
        raise KeyError(f"no CDF snapshot at t={t} colony={colony}")


def _series_fields(obs: ObservableSeries):
    out = {"value": obs.value, "comp": obs.compensator, "sq": obs.value_sq}
    for key, arr in [
        ("ddf", obs.value_ddf),
        ("dfsq", obs.value_dfsq),
        ("feta", obs.value_feta),
        ("fsq_eta", obs.value_fsq_eta),
    ]:
        if arr is not None:
            out[key] = arr
    return out


def write_ndjson(record: PathRecord, path) -> None:
    with open(path, "w") as fh:
        header = {
            "record": "header",
            "engine": record.engine,
            "replica": record.replica,
            "seed": record.seed,
            "config_hash": record.config_hash,
            "model_info": record.model_info,
            "observables": [
                {"name": o.name, "colony": o.colony, "chi_pair": o.chi_pair}
                for o in record.observables
            ],
            "events": sorted(record.events),
        }
        fh.write(json.dumps(header) + "\n")
        per_obs = [(o.key, _series_fields(o)) for o in record.observables]
        for i, t in enumerate(record.times):
            row = {
                "record": "step",
                "t": float(t),
                "mass1": float(record.mass1[i]),
                "mass2": float(record.mass2[i]),
                "flow": float(record.flow[i]),
                "obs": {
                    key: {k: float(arr[i]) for k, arr in fields.items()}
                    for key, fields in per_obs
                },
            }
            if record.events:
                row["events"] = {k: float(v[i]) for k, v in record.events.items()}
            fh.write(json.dumps(row) + "\n")
        for snap in record.snapshots:
            fh.write(json.dumps({
                "record": "cdf",
                "t": snap.t,
                "colony": snap.colony,
                "x_min": snap.grid.x_min,
                "x_max": snap.grid.x_max,
                "cells": snap.grid.cells,
                "values": [float(v) for v in snap.values],
            }) + "\n")


def read_ndjson(path) -> PathRecord:
    with open(path) as fh:
        header = json.loads(fh.readline())
        if header.get("record") != "header":
            raise ValueError(f"{path}: first line is not a header record")
        steps, snaps = [], []
        for line in fh:
            row = json.loads(line)
            if row["record"] == "step":
                steps.append(row)
            elif row["record"] == "cdf":
                snaps.append(row)
    times = np.array([row["t"] for row in steps])
    mass1 = np.array([row["mass1"] for row in steps])
    mass2 = np.array([row["mass2"] for row in steps])
    flow = np.array([row["flow"] for row in steps])
    observables = []
    for meta in header["observables"]:
        key = f"{meta['colony']}:{meta['name']}"
        fields = {}
        for fkey in steps[0]["obs"][key]:
            fields[fkey] = np.array([row["obs"][key][fkey] for row in steps])
        observables.append(ObservableSeries(
            name=meta["name"],
            colony=meta["colony"],
            value=fields["value"],
            compensator=fields["comp"],
            value_sq=fields["sq"],
            value_ddf=fields.get("ddf"),
            value_dfsq=fields.get("dfsq"),
            value_feta=fields.get("feta"),
            value_fsq_eta=fields.get("fsq_eta"),
            chi_pair=meta.get("chi_pair"),
        ))
    events = {}
    for key in header.get("events", []):
        events[key] = np.array([row["events"][key] for row in steps])
    snapshots = [
        CdfSnapshot(
            t=row["t"],
            colony=row["colony"],
            grid=Grid(row["x_min"], row["x_max"], row["cells"]),
            values=np.array(row["values"]),
        )
        for row in snaps
    ]
    return PathRecord(
        engine=header["engine"],
        times=times,
        mass1=mass1,
        mass2=mass2,
        flow=flow,
        observables=observables,
        replica=header["replica"],
        seed=header["seed"],
        config_hash=header["config_hash"],
        model_info=header["model_info"],
        events=events,
        snapshots=snapshots,
    )
