"""Render static figures from simulator output files.

Only the documented interchange formats are consumed here: the summary CSV
(t, colony, observable, mean, var, stderr, replicas), CDF snapshot CSVs
(x, value), replica NDJSON step records, and rho-trend CSVs
(n, colony, rho, stderr). Rendering is deterministic: fixed figure sizes,
fixed PNG metadata, no timestamps.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from scipy.stats import norm

__all__ = ["EmptyInput", "MissingColumn", "FigureSpec", "render"]

KINDS = ("mass", "cdf", "qq", "rho_trend")
PNG_METADATA = {"Software": "colonyplots"}
FIGSIZE = (7.0, 4.5)


class EmptyInput(ValueError):
    """Input file has no data rows."""


class MissingColumn(KeyError):
    """A required column is absent from the input."""


@dataclass(frozen=True)
class FigureSpec:
    kind: str
    inputs: tuple[str, ...]
    out: str
    labels: tuple[str, ...] = ()
    observable: str = "mass"
    colony: int | None = None
    title: str = ""
    oracle: dict | None = None  # {"kind": "exp_decay"|"linear", "m0":, "rate"|"slope":}

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if not self.inputs:
            raise ValueError("need at least one input file")

    @staticmethod
    def from_dict(raw: dict) -> "FigureSpec":
        return FigureSpec(
            kind=raw["kind"],
            inputs=tuple(raw["inputs"]),
            out=raw["out"],
            labels=tuple(raw.get("labels", ())),
            observable=raw.get("observable", "mass"),
            colony=raw.get("colony"),
            title=raw.get("title", ""),
            oracle=raw.get("oracle"),
        )


def _read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = [row for row in csv.DictReader(
            line for line in fh if not line.startswith("#"))]
    if not rows:
        raise EmptyInput(f"{path}: no data rows")
    return rows


def _column(rows: list[dict], name: str, path) -> np.ndarray:
    if name not in rows[0] or rows[0][name] is None:
        raise MissingColumn(f"{path}: missing column {name!r}")
    try:
        return np.array([float(r[name]) for r in rows])
    except (TypeError, ValueError) as exc:
        raise MissingColumn(f"{path}: column {name!r} is not numeric") from exc


def _text_column(rows: list[dict], name: str, path) -> list[str]:
    if name not in rows[0]:
        raise MissingColumn(f"{path}: missing column {name!r}")
    return [r[name] for r in rows]


def _oracle_curve(oracle: dict, t: np.ndarray) -> np.ndarray:
    kind = oracle.get("kind")
    m0 = float(oracle.get("m0", 1.0))
    if kind == "exp_decay":
        return m0 * np.exp(-float(oracle["rate"]) * t)
    if kind == "exp_growth":
        return m0 * np.exp(float(oracle["rate"]) * t)
    if kind == "linear":
        return m0 + float(oracle["slope"]) * t
    raise ValueError(f"unknown oracle kind {kind!r}")


def _render_mass(spec: FigureSpec, ax) -> dict:
    rows = _read_csv(spec.inputs[0])
    t = _column(rows, "t", spec.inputs[0])
    colony = _column(rows, "colony", spec.inputs[0])
    mean = _column(rows, "mean", spec.inputs[0])
    stderr = _column(rows, "stderr", spec.inputs[0])
    names = _text_column(rows, "observable", spec.inputs[0])
    mask0 = np.array([nm == spec.observable for nm in names])
    if not mask0.any():
        raise EmptyInput(f"no rows for observable {spec.observable!r}")
    plotted = {}
    colonies = [spec.colony] if spec.colony else sorted(set(colony[mask0].astype(int)))
    for col in colonies:
        m = mask0 & (colony == col)
        order = np.argsort(t[m])
        tt, mm, ss = t[m][order], mean[m][order], stderr[m][order]
        ax.plot(tt, mm, label=f"colony {col}")
        ax.fill_between(tt, mm - 2 * ss, mm + 2 * ss, alpha=0.25, linewidth=0)
        plotted[col] = {"t": tt, "mean": mm, "stderr": ss}
    if spec.oracle:
        tt = np.unique(t[mask0])
        ax.plot(tt, _oracle_curve(spec.oracle, tt), "k--", label="oracle")
    ax.set_xlabel("t")
    ax.set_ylabel(spec.observable)
    ax.legend()
    return plotted


def _render_cdf(spec: FigureSpec, ax) -> dict:
    plotted = {}
    for i, path in enumerate(spec.inputs):
        rows = _read_csv(path)
        x = _column(rows, "x", path)
        v = _column(rows, "value", path)
        label = spec.labels[i] if i < len(spec.labels) else Path(path).stem
        ax.step(x, v, where="post", label=label)
        plotted[label] = {"x": x, "value": v}
    ax.set_xlabel("x")
    ax.set_ylabel("u(x)")
    ax.legend()
    return plotted


def _residual_increments(path, observable: str) -> np.ndarray:
    resid = []
    with open(path) as fh:
        for line in fh:
            row = json.loads(line)
            if row.get("record") != "step":
                continue
            obs = row.get("obs", {})
            if observable not in obs:
                raise MissingColumn(f"{path}: no observable {observable!r} in records")
            entry = obs[observable]
            resid.append(entry["value"] - entry["comp"])
    if len(resid) < 2:
        raise EmptyInput(f"{path}: fewer than two step records")
    return np.diff(np.asarray(resid))


def _render_qq(spec: FigureSpec, ax) -> dict:
    increments = np.concatenate([
        _residual_increments(path, spec.observable) for path in spec.inputs
    ])
    sd = increments.std(ddof=1)
    if sd == 0:
        raise EmptyInput("residual increments are all identical")
    z = np.sort((increments - increments.mean()) / sd)
    probs = (np.arange(1, z.size + 1) - 0.5) / z.size
    theo = norm.ppf(probs)
    ax.plot(theo, z, ".", markersize=3)
    lim = [min(theo[0], z[0]), max(theo[-1], z[-1])]
    ax.plot(lim, lim, "k--", linewidth=1)
    ax.set_xlabel("normal quantile")
    ax.set_ylabel("standardized increment quantile")
    return {"theoretical": theo, "sample": z}


def _render_rho_trend(spec: FigureSpec, ax) -> dict:
    path = spec.inputs[0]
    rows = _read_csv(path)
    n = _column(rows, "n", path)
    rho = _column(rows, "rho", path)
    stderr = _column(rows, "stderr", path)
    try:
        colony = _column(rows, "colony", path).astype(int)
    except MissingColumn:
        colony = np.ones(n.size, dtype=int)
    plotted = {}
    for col in sorted(set(colony)):
        m = colony == col
        order = np.argsort(n[m])
        nn, rr, ss = n[m][order], rho[m][order], stderr[m][order]
        ax.errorbar(nn, rr, yerr=ss, marker="o", capsize=4, label=f"colony {col}")
        plotted[col] = {"n": nn, "rho": rr, "stderr": ss}
    ax.set_xscale("log")
    ax.set_xlabel("n")
    ax.set_ylabel("rho(particle mean CDF, SPDE mean CDF)")
    ax.legend()
    return plotted


def render(spec: FigureSpec) -> dict:
    """Write the figure and return the plotted arrays (for verification)."""
    for path in spec.inputs:
        if not Path(path).exists():
            raise FileNotFoundError(path)
    fig, ax = plt.subplots(figsize=FIGSIZE)
    try:
        if spec.kind == "mass":
            data = _render_mass(spec, ax)
        elif spec.kind == "cdf":
            data = _render_cdf(spec, ax)
        elif spec.kind == "qq":
            data = _render_qq(spec, ax)
        else:
            data = _render_rho_trend(spec, ax)
        if spec.title:
            ax.set_title(spec.title)
        fig.tight_layout()
        fig.savefig(spec.out, dpi=110, metadata=dict(PNG_METADATA))
    finally:
        plt.close(fig)
    return data
