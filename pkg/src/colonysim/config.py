"""Run configuration: JSON parsing, fail-closed validation, canonical form.

Validation collects every violation before failing, so a bad config reports
all problems at once. The canonical dict (sorted keys, atoms inlined) is
what gets hashed into output headers and what round-trips exactly.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .measures import FiniteMeasure, Grid, TestFunction
from .migration import MigrationIntensity
from .params import ColonyBranching, InitialSpec, ModelParams, ValidationError
from .spde import SchemeSpec, StabilityViolation

__all__ = ["ParseError", "ObservableSpec", "RunConfig", "parse_config", "config_from_dict"]

MODES = ("particles", "spde", "baseline")


class ParseError(ValueError):
    """File missing, unreadable, or not a JSON object."""


@dataclass(frozen=True)
class ObservableSpec:
    """Declarative observable; engines build the callable per replica.

    Kept as plain data so configs cross process boundaries when replicas
    run in a worker pool.
    """

    kind: str
    value: float = 1.0
    center: float = 0.0
    halfwidth: float = 1.0
    name: str | None = None

    def build(self) -> TestFunction:
        if self.kind == "constant":
            return TestFunction.constant(self.value, name=self.name or "one")
        if self.kind == "bump":
            return TestFunction.bump(self.center, self.halfwidth, name=self.name)
        raise ValueError(f"unknown observable kind {self.kind!r}")

    def to_dict(self) -> dict:
        if self.kind == "constant":
            return {"kind": "constant", "value": self.value, "name": self.name or "one"}
        return {
            "kind": "bump", "center": self.center, "halfwidth": self.halfwidth,
            "name": self.name or f"bump[{self.center:g},{self.halfwidth:g}]",
        }

    @staticmethod
    def from_dict(d: dict) -> "ObservableSpec":
        kind = d.get("kind")
        if kind == "constant":
            return ObservableSpec(kind="constant", value=float(d.get("value", 1.0)),
                                  name=d.get("name"))
        if kind == "bump":
            return ObservableSpec(kind="bump", center=float(d.get("center", 0.0)),
                                  halfwidth=float(d.get("halfwidth", 1.0)),
                                  name=d.get("name"))
        raise ValueError(f"unknown observable kind {kind!r}")


def _measure_to_dict(mu: FiniteMeasure) -> dict:
    return {"atoms": [[float(p), float(w)] for p, w in zip(mu.positions, mu.weights)]}


def _measure_from_dict(d: dict, what: str, errors: list[str]) -> FiniteMeasure:
    try:
        if "csv" in d:
            return FiniteMeasure.from_csv(d["csv"])
        atoms = d.get("atoms", [])
        if atoms:
            arr = np.asarray(atoms, dtype=float)
            return FiniteMeasure.from_atoms(arr[:, 0], arr[:, 1])
        return FiniteMeasure.empty()
    except Exception as exc:
        errors.append(f"{what}: {exc}")
        return FiniteMeasure.empty()


def _initial_to_dict(spec: InitialSpec) -> dict:
    if spec.positions is not None:
        return {"positions": [float(x) for x in spec.positions]}
    return {"sample_atoms": _measure_to_dict(spec.sample_from)["atoms"]}


def _initial_from_dict(d: dict, what: str, errors: list[str]) -> InitialSpec:
    try:
        if "positions" in d:
            return InitialSpec.at(d["positions"])
        if "sample_atoms" in d:
            arr = np.asarray(d["sample_atoms"], dtype=float)
            return InitialSpec.sampled(FiniteMeasure.from_atoms(arr[:, 0], arr[:, 1]))
        errors.append(f"{what}: give positions or sample_atoms")
    except Exception as exc:
        errors.append(f"{what}: {exc}")
    return InitialSpec.empty()


@dataclass(frozen=True, eq=False)
class RunConfig:
    mode: str
    params: ModelParams
    T: float
    replicas: int
    seed: int
    kappa: FiniteMeasure | None = None
    scheme: SchemeSpec | None = None
    checkpoints: tuple[float, ...] = ()
    snapshot_times: tuple[float, ...] = ()
    observables1: tuple[ObservableSpec, ...] = (ObservableSpec(kind="constant"),)
    observables2: tuple[ObservableSpec, ...] = (ObservableSpec(kind="constant"),)

    def to_dict(self) -> dict:
        p = self.params
        out = {
            "mode": self.mode,
            "n": p.n,
            "h": p.step,
            "T": self.T,
            "replicas": self.replicas,
            "seed": self.seed,
            "colony1": {"rate": p.colony1.rate, "beta": p.colony1.beta,
                        "sigma_sq": p.colony1.sigma_sq},
            "colony2": {"rate": p.colony2.rate, "beta": p.colony2.beta,
                        "sigma_sq": p.colony2.sigma_sq},
            "eta": {"model": p.eta.model, "c": p.eta.c, "r": p.eta.r,
                    "eta_max": p.eta.eta_max},
            "chi": _measure_to_dict(p.chi),
            "initial1": _initial_to_dict(p.initial1),
            "initial2": _initial_to_dict(p.initial2),
            "checkpoints": list(self.checkpoints),
            "snapshot_times": list(self.snapshot_times),
            "observables1": [o.to_dict() for o in self.observables1],
            "observables2": [o.to_dict() for o in self.observables2],
        }
        if self.kappa is not None:
            out["kappa"] = _measure_to_dict(self.kappa)
        if self.scheme is not None:
            out["scheme"] = {
                "x_min": self.scheme.grid.x_min, "x_max": self.scheme.grid.x_max,
                "cells": self.scheme.grid.cells, "dt": self.scheme.dt,
                "da": self.scheme.da, "a_max": self.scheme.a_max,
                "cell_rule": self.scheme.cell_rule,
            }
        return out

    def serialize(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @property
    def config_hash(self) -> str:
        digest = hashlib.sha256(
            json.dumps(self.to_dict(), sort_keys=True).encode()
        ).hexdigest()
        return digest[:12]

    def __eq__(self, other) -> bool:
        return isinstance(other, RunConfig) and self.to_dict() == other.to_dict()


def config_from_dict(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ParseError("config must be a JSON object")
    errors: list[str] = []

    mode = raw.get("mode", "particles")
    if mode not in MODES:
        errors.append(f"mode must be one of {MODES}, got {mode!r}")

    def number(key, default=None, positive=False, integer=False):
        if key not in raw:
            if default is None:
                errors.append(f"missing required key {key!r}")
                return None
            return default
        val = raw[key]
        if not isinstance(val, (int, float)) or isinstance(val, bool):
            errors.append(f"{key} must be a number")
            return default
        if integer and int(val) != val:
            errors.append(f"{key} must be an integer")
            return default
        if positive and val <= 0:
            errors.append(f"{key} must be positive")
            return default
        return int(val) if integer else float(val)

    n = number("n", positive=True, integer=True)
    T = number("T", positive=True)
    replicas = number("replicas", default=1, positive=True, integer=True)
    seed = number("seed", default=0, integer=True)
    h = number("h", default=(1.0 / n if n else 1.0), positive=True)

    def colony(key):
        d = raw.get(key, {})
        if not isinstance(d, dict):
            errors.append(f"{key} must be an object")
            d = {}
        return ColonyBranching(
            rate=float(d.get("rate", 0.0)),
            beta=float(d.get("beta", 0.0)),
            sigma_sq=float(d.get("sigma_sq", d.get("sigma2", 0.0))),
        )

    c1, c2 = colony("colony1"), colony("colony2")

    eta_raw = raw.get("eta", {"model": "constant", "c": 0.0})
    try:
        eta = MigrationIntensity(
            model=eta_raw.get("model", "constant"),
            c=float(eta_raw.get("c", 0.0)),
            r=float(eta_raw.get("r") or 0.0),
            eta_max=float(eta_raw.get("eta_max") or 0.0),
        )
    except Exception as exc:
        errors.append(f"eta: {exc}")
        eta = MigrationIntensity(model="constant", c=0.0)

    chi = _measure_from_dict(raw.get("chi", {}), "chi", errors)
    kappa = None
    if mode == "baseline":
        kappa = _measure_from_dict(raw.get("kappa", {}), "kappa", errors)

    initial1 = _initial_from_dict(raw.get("initial1", {}), "initial1", errors)
    initial2 = _initial_from_dict(raw.get("initial2", {}), "initial2", errors)

    params = ModelParams(
        n=n or 1, colony1=c1, colony2=c2, eta=eta, chi=chi,
        initial1=initial1, initial2=initial2, h=h,
    )
    errors.extend(params.violations())

    scheme = None
    if "scheme" in raw or mode == "spde":
        s = raw.get("scheme", {})
        try:
            grid = Grid(float(s["x_min"]), float(s["x_max"]), int(s["cells"]))
            scheme = SchemeSpec(
                grid=grid,
                dt=float(s["dt"]),
                da=float(s["da"]),
                a_max=float(s["a_max"]),
                cell_rule=s.get("cell_rule", "midpoint"),
            )
        except KeyError as exc:
            errors.append(f"scheme: missing key {exc}")
        except (StabilityViolation, ValueError) as exc:
            errors.append(f"scheme: {exc}")

    def observables(key, fallback):
        entries = raw.get(key, fallback)
        out = []
        for entry in entries:
            try:
                out.append(ObservableSpec.from_dict(entry))
            except Exception as exc:
                errors.append(f"{key}: {exc}")
        return tuple(out) or (ObservableSpec(kind="constant"),)

    shared = raw.get("observables", [{"kind": "constant"}])
    obs1 = observables("observables1", shared)
    obs2 = observables("observables2", shared)

    checkpoints = tuple(float(t) for t in raw.get("checkpoints", []))
    snapshot_times = tuple(float(t) for t in raw.get("snapshot_times", []))

    if errors:
        raise ValidationError(errors)
    return RunConfig(
        mode=mode, params=params, T=T, replicas=replicas, seed=seed,
        kappa=kappa, scheme=scheme, checkpoints=checkpoints,
        snapshot_times=snapshot_times, observables1=obs1, observables2=obs2,
    )


def parse_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError as exc:
        raise ParseError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"config is not valid JSON: {exc}") from exc
    return config_from_dict(raw)
