"""Statistical verification of the martingale structure from path records.

Every test is a pure function of (records, options) returning a TestReport;
reports are reproducible bit-for-bit from the same inputs. Two-sided tests
pass iff |z| <= threshold; trend tests carry their one-sided rule in the
`direction` field.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .measures import Grid, exp_abs_integral
from .records import PathRecord

__all__ = [
    "TooFewReplicas",
    "GridMismatch",
    "TestReport",
    "drift_test",
    "qv_test",
    "covariation_test",
    "moment_bound_test",
    "convergence_test",
    "run_suite",
    "write_report_csv",
]

MIN_REPLICAS = 30
DEFAULT_Z = 4.0


class TooFewReplicas(ValueError):
    """Fewer replicas than the test needs for a meaningful standard error."""


class GridMismatch(ValueError):
    """CDF snapshots being compared do not share a grid."""


def _zscore(estimate: float, target: float, stderr: float) -> float:
    if stderr == 0.0:
        return 0.0 if estimate == target else math.inf
    return (estimate - target) / stderr


@dataclass(frozen=True)
class TestReport:
    __test__ = False  # not a pytest collectible

    test: str
    statistic: str
    estimate: float
    stderr: float
    target: float
    z: float
    passed: bool
    threshold: float
    direction: str = "two_sided"  # two_sided | ci_upper | decreasing
    details: tuple = ()

    @staticmethod
    def two_sided(test, statistic, estimate, stderr, target, threshold, details=()):
        z = _zscore(estimate, target, stderr)
        return TestReport(
            test=test, statistic=statistic, estimate=estimate, stderr=stderr,
            target=target, z=z, passed=bool(abs(z) <= threshold),
            threshold=threshold, details=tuple(details),
        )


def _require(records: list[PathRecord], minimum: int = MIN_REPLICAS) -> None:
    if len(records) < minimum:
        raise TooFewReplicas(f"need at least {minimum} replicas, got {len(records)}")


def _checkpoint_indices(record: PathRecord, checkpoints) -> list[tuple[float, int]]:
    if checkpoints is None:
        return [(float(record.times[-1]), len(record.times) - 1)]
    return [(float(t), record.index_of(t)) for t in checkpoints]


def drift_test(records: list[PathRecord], observable: str, checkpoints=None,
               threshold: float = DEFAULT_Z) -> TestReport:
    """Replica-mean residual should vanish at every checkpoint."""
    _require(records)
    marks = _checkpoint_indices(records[0], checkpoints)
    details = []
    worst = None
    for t, idx in marks:
        vals = np.array([r.observable(observable).residual[idx] for r in records])
        mean = float(vals.mean())
        se = float(vals.std(ddof=1) / math.sqrt(len(vals)))
        z = _zscore(mean, 0.0, se)
        details.append({"t": t, "estimate": mean, "stderr": se, "z": z})
        if worst is None or abs(z) > abs(worst[3]):
            worst = (t, mean, se, z)
    t, mean, se, z = worst
    return TestReport(
        test=f"drift[{observable}]",
        statistic=f"mean residual, worst checkpoint t={t:g}",
        estimate=mean, stderr=se, target=0.0, z=z,
        passed=bool(all(abs(d["z"]) <= threshold for d in details)),
        threshold=threshold, details=tuple(details),
    )


def _qv_target(record: PathRecord, observable: str, mode: str, idx: int,
               gamma: float | None) -> float:
    obs = record.observable(observable)
    info = record.model_info
    h = info["h"]
    g = gamma if gamma is not None else info[f"gamma{obs.colony}"]
    limit = g * h * float(obs.value_sq[:idx].sum())
    if mode == "limit":
        return limit
    n = info.get("n")
    if not n:
        raise ValueError("finite-n targets need particle records with a known n")
    extra = h * float(obs.value_dfsq[:idx].sum())
    if obs.colony == 1:
        extra += h * float(obs.value_fsq_eta[:idx].sum())
    else:
        extra += (obs.chi_pair or 0.0) ** 2 * h * float(record.flow[:idx].sum())
    return limit + extra / n


def qv_test(records: list[PathRecord], observable: str, gamma: float | None = None,
            mode: str = "limit", t: float | None = None,
            threshold: float = DEFAULT_Z) -> TestReport:
    """Realized quadratic variation against its limit or finite-density target.

    The finite-density target adds the 1/n motion and migration variance
    terms on top of the branching term; the paired replica difference
    (realized minus target) drives the z score, and the ratio of replica
    means is reported as the estimate against a target of 1.
    """
    _require(records)
    if mode not in ("limit", "finite"):
        raise ValueError("mode must be 'limit' or 'finite'")
    (t_val, idx), = _checkpoint_indices(records[0], None if t is None else [t])
    realized = np.array([r.observable(observable).realized_qv()[idx] for r in records])
    targets = np.array([_qv_target(r, observable, mode, idx, gamma) for r in records])
    diff = realized - targets
    se = float(diff.std(ddof=1) / math.sqrt(len(diff)))
    z = _zscore(float(diff.mean()), 0.0, se)
    mean_target = float(targets.mean())
    ratio = float(realized.mean() / mean_target) if mean_target else (
        1.0 if realized.mean() == 0 else math.inf)
    return TestReport(
        test=f"qv-{mode}[{observable}]",
        statistic=f"QV ratio at t={t_val:g}",
        estimate=ratio, stderr=se, target=1.0, z=z,
        passed=bool(abs(z) <= threshold), threshold=threshold,
        details=(
            {"mean_realized": float(realized.mean()), "mean_target": mean_target,
             "t": t_val, "ratio": ratio},
        ),
    )


def covariation_test(records: list[PathRecord], observable1: str, observable2: str,
                     mode: str = "limit", t: float | None = None,
                     threshold: float = DEFAULT_Z) -> TestReport:
    """Cross quadratic variation of the two colonies' residuals.

    In the limit the target is 0. At finite density the migration terms of
    the two decompositions are anticorrelated, so the target is minus the
    leading covariation term (chi pairing times the f-weighted flow)/n.
    """
    _require(records)
    (t_val, idx), = _checkpoint_indices(records[0], None if t is None else [t])
    cross = []
    targets = []
    for r in records:
        o1 = r.observable(observable1)
        o2 = r.observable(observable2)
        if o1.colony == o2.colony:
            raise ValueError("covariation needs one observable per colony")
        dm1 = np.diff(o1.residual[: idx + 1])
        dm2 = np.diff(o2.residual[: idx + 1])
        cross.append(float(np.dot(dm1, dm2)))
        if mode == "finite":
            info = r.model_info
            n = info.get("n")
            if not n:
                raise ValueError("finite-n targets need particle records")
            targets.append(
                -(o2.chi_pair or 0.0) / n * info["h"] * float(o1.value_feta[:idx].sum())
            )
        else:
            targets.append(0.0)
    cross = np.array(cross)
    targets = np.array(targets)
    diff = cross - targets
    se = float(diff.std(ddof=1) / math.sqrt(len(diff)))
    z = _zscore(float(diff.mean()), 0.0, se)
    return TestReport(
        test=f"covariation-{mode}[{observable1},{observable2}]",
        statistic=f"cross QV at t={t_val:g}",
        estimate=float(cross.mean()), stderr=se, target=float(targets.mean()), z=z,
        passed=bool(abs(z) <= threshold), threshold=threshold,
    )


def moment_bound_test(records_by_n: dict[int, list[PathRecord]], p: float = 1.0,
                      rel_margin: float = 0.05,
                      ci_z: float = 2.0) -> TestReport:
    """Uniform-in-n bound on E[sup_t (m1^{2p} + m2^{2p})].

    Fits a weighted slope of the estimate against log2(n) and passes when
    the ci_z-sigma confidence interval both contains nonpositive values and
    stays below rel_margin * mean estimate: no meaningful growth with n.
    """
    if len(records_by_n) < 2:
        raise ValueError("need at least two densities for a trend")
    ns = sorted(records_by_n)
    means, ses = [], []
    for n in ns:
        records = records_by_n[n]
        _require(records)
        sup = np.array([
            float(np.max(r.mass1 ** (2 * p) + r.mass2 ** (2 * p))) for r in records
        ])
        means.append(float(sup.mean()))
        ses.append(float(sup.std(ddof=1) / math.sqrt(len(sup))))
    x = np.log2(np.array(ns, dtype=float) / ns[0])
    y = np.array(means)
    w = 1.0 / np.maximum(np.array(ses), 1e-300) ** 2
    xbar = float(np.dot(w, x) / w.sum())
    sxx = float(np.dot(w, (x - xbar) ** 2))
    slope = float(np.dot(w, (x - xbar) * y) / sxx)
    se_slope = math.sqrt(1.0 / sxx)
    margin = rel_margin * float(np.mean(y))
    z = _zscore(slope, margin, se_slope)
    passed = (slope - ci_z * se_slope <= 0.0) and (slope + ci_z * se_slope <= margin)
    return TestReport(
        test=f"moment-bound[p={p:g}]",
        statistic=f"slope per doubling of n over n={ns}",
        estimate=slope, stderr=se_slope, target=margin, z=z,
        passed=bool(passed),
        threshold=ci_z, direction="ci_upper",
        details=tuple({"n": n, "estimate": m, "stderr": s}
                      for n, m, s in zip(ns, means, ses)),
    )


def _mean_cdf(records: list[PathRecord], t: float, colony: int) -> tuple[Grid, np.ndarray]:
    grids = []
    rows = []
    for r in records:
        snap = r.snapshot(t, colony)
        grids.append(snap.grid)
        rows.append(snap.values)
    if any(g != grids[0] for g in grids):
        raise GridMismatch("snapshots use different grids")
    return grids[0], np.array(rows)


def _rho_pieces(grid: Grid) -> np.ndarray:
    nodes = grid.nodes
    return np.array([exp_abs_integral(nodes[j], nodes[j + 1]) for j in range(grid.cells)])


def _rho_rows(v1: np.ndarray, v2: np.ndarray, pieces: np.ndarray) -> float:
    return float(np.dot(np.abs(v1[:-1] - v2[:-1]), pieces))


def _jackknife_rho(rows_a: np.ndarray, mean_b: np.ndarray, pieces: np.ndarray) -> float:
    """Delete-one variance of rho(mean(rows_a), mean_b) in the rows_a sample."""
    R = rows_a.shape[0]
    total = rows_a.sum(axis=0)
    vals = np.empty(R)
    for r in range(R):
        vals[r] = _rho_rows((total - rows_a[r]) / (R - 1), mean_b, pieces)
    return float((R - 1) / R * ((vals - vals.mean()) ** 2).sum())


def convergence_test(particle_records_by_n: dict[int, list[PathRecord]],
                     spde_records: list[PathRecord], t: float, colony: int,
                     threshold: float = 2.0) -> TestReport:
    """Windowed rho between replica-mean CDFs must fall as density grows.

    Passes when every step down the n-ladder exceeds `threshold` combined
    standard errors (jackknifed on both sides); exact zeros on both rungs
    count as converged.
    """
    if len(particle_records_by_n) < 2:
        raise ValueError("need at least two densities for a trend")
    grid_s, rows_s = _mean_cdf(spde_records, t, colony)
    pieces = _rho_pieces(grid_s)
    mean_s = rows_s.mean(axis=0)

    ns = sorted(particle_records_by_n)
    rhos, ses = [], []
    for n in ns:
        grid_p, rows_p = _mean_cdf(particle_records_by_n[n], t, colony)
        if grid_p != grid_s:
            raise GridMismatch("particle and SPDE snapshots use different grids")
        mean_p = rows_p.mean(axis=0)
        rho_n = _rho_rows(mean_p, mean_s, pieces)
        var_p = _jackknife_rho(rows_p, mean_s, pieces)
        var_s = _jackknife_rho(rows_s, mean_p, pieces)
        rhos.append(rho_n)
        ses.append(math.sqrt(var_p + var_s))
    gaps = []
    for i in range(len(ns) - 1):
        gap = rhos[i] - rhos[i + 1]
        se_gap = math.sqrt(ses[i] ** 2 + ses[i + 1] ** 2)
        if se_gap == 0.0:
            zi = math.inf if gap > 0 or rhos[i + 1] == 0.0 else -math.inf
        else:
            zi = gap / se_gap
        gaps.append({"n_low": ns[i], "n_high": ns[i + 1], "gap": gap,
                     "stderr": se_gap, "z": zi})
    zmin = min(g["z"] for g in gaps)
    return TestReport(
        test=f"convergence[colony {colony}, t={t:g}]",
        statistic=f"rho trend over n={ns}",
        estimate=rhos[-1], stderr=ses[-1], target=0.0, z=zmin,
        passed=bool(zmin >= threshold or zmin == math.inf),
        threshold=threshold, direction="decreasing",
        details=tuple(
            [{"n": n, "rho": r, "stderr": s} for n, r, s in zip(ns, rhos, ses)] + gaps
        ),
    )


def run_suite(name: str, records: list[PathRecord], threshold: float = DEFAULT_Z,
              checkpoints=None) -> list[TestReport]:
    """Named bundles for the CLI: drift | qv-limit | qv-finite | covariation | all."""
    reports: list[TestReport] = []
    base = [o for o in records[0].observables if not o.name.endswith("+l1")]
    if name in ("drift", "all"):
        for obs in base:
            reports.append(drift_test(records, obs.key, checkpoints, threshold))
    if name in ("qv-limit", "all"):
        for obs in base:
            reports.append(qv_test(records, obs.key, mode="limit", threshold=threshold))
    if name in ("qv-finite", "all"):
        if records[0].model_info.get("n"):
            for obs in base:
                reports.append(qv_test(records, obs.key, mode="finite", threshold=threshold))
    if name in ("covariation", "covariation-limit", "covariation-finite", "all"):
        firsts = {1: None, 2: None}
        for obs in base:
            if firsts.get(obs.colony) is None:
                firsts[obs.colony] = obs.key
        if firsts[1] and firsts[2]:
            modes = ["limit", "finite"] if name in ("covariation", "all") else [name.split("-")[1]]
            for mode in modes:
                if mode == "finite" and not records[0].model_info.get("n"):
                    continue
                reports.append(covariation_test(
                    records, firsts[1], firsts[2], mode=mode, threshold=threshold))
    if not reports:
        raise ValueError(f"suite {name!r} produced no tests for these records")
    return reports


def write_report_csv(reports: list[TestReport], path, header_comment: str = "") -> None:
    with open(path, "w") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        fh.write("test,statistic,estimate,stderr,target,z,pass\n")
        for rep in reports:
            fh.write(
                f"{rep.test},\"{rep.statistic}\",{rep.estimate!r},{rep.stderr!r},"
                f"{rep.target!r},{rep.z!r},{rep.passed}\n"
            )
