import json

import numpy as np
import pytest

from colonysim.config import ObservableSpec, ParseError, RunConfig, config_from_dict, parse_config
from colonysim.params import ValidationError

MINIMAL = {
    "mode": "particles",
    "n": 50,
    "T": 0.5,
    "replicas": 4,
    "seed": 9,
    "colony1": {"rate": 5.0, "beta": 0.0, "sigma_sq": 1.0},
    "colony2": {"rate": 5.0, "beta": 0.0, "sigma_sq": 1.0},
    "eta": {"model": "constant", "c": 0.3},
    "chi": {"atoms": [[0.0, 1.0]]},
    "initial1": {"positions": [0.0] * 50},
    "initial2": {"positions": [0.0] * 50},
}


def test_minimal_config_defaults():
    config = config_from_dict(MINIMAL)
    assert config.params.step == pytest.approx(1.0 / 50)  # default h = 1/n
    assert config.observables1[0].kind == "constant"
    assert config.checkpoints == ()
    assert config.params.gamma(1) == pytest.approx(0.1)


def test_rate_step_violation_named():
    raw = dict(MINIMAL, colony1={"rate": 25.0, "beta": 0.0, "sigma_sq": 1.0})
    with pytest.raises(ValidationError) as err:
        config_from_dict(raw)
    assert any("rate*h" in v for v in err.value.violations)


def test_offspring_infeasible_cites_inequality():
    raw = dict(MINIMAL, colony2={"rate": 5.0, "beta": 0.0, "sigma_sq": 1.4})
    with pytest.raises(ValidationError) as err:
        config_from_dict(raw)
    assert any("mean(2-mean)" in v or "mean.2-mean." in v for v in err.value.violations)


def test_all_violations_collected():
    raw = dict(
        MINIMAL,
        colony1={"rate": 25.0, "beta": 0.0, "sigma_sq": 1.0},
        colony2={"rate": 5.0, "beta": 0.0, "sigma_sq": 2.0},
        eta={"model": "constant", "c": 100.0},
    )
    raw.pop("T")
    with pytest.raises(ValidationError) as err:
        config_from_dict(raw)
    joined = " ".join(err.value.violations)
    assert "rate*h" in joined
    assert "infeasible" in joined
    assert "eta_max" in joined
    assert "T" in joined
    assert len(err.value.violations) >= 4


def test_parse_errors(tmp_path):
    with pytest.raises(ParseError):
        parse_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ParseError):
        parse_config(bad)


def test_roundtrip_parse_serialize(tmp_path):
    raw = dict(
        MINIMAL,
        scheme={"x_min": -4.0, "x_max": 4.0, "cells": 32, "dt": 0.005,
                "da": 0.1, "a_max": 4.0},
        checkpoints=[0.25, 0.5],
        snapshot_times=[0.5],
        observables=[{"kind": "constant"}, {"kind": "bump", "center": 0.0, "halfwidth": 1.5}],
    )
    config = config_from_dict(raw)
    path = tmp_path / "config.json"
    path.write_text(config.serialize())
    again = parse_config(path)
    assert again == config
    assert again.config_hash == config.config_hash


def test_chi_from_csv(tmp_path):
    csv = tmp_path / "chi.csv"
    csv.write_text("position,weight\n-1.0,0.25\n1.0,0.75\n")
    raw = dict(MINIMAL, chi={"csv": str(csv)})
    config = config_from_dict(raw)
    assert config.params.chi.total_mass == pytest.approx(1.0)
    assert config.params.chi.positions.tolist() == [-1.0, 1.0]


def test_sampled_initial():
    raw = dict(MINIMAL, initial1={"sample_atoms": [[0.0, 0.5], [1.0, 0.5]]})
    config = config_from_dict(raw)
    rng = np.random.default_rng(0)
    pos = config.params.initial1.realize(50, rng)
    assert set(np.unique(pos)) <= {0.0, 1.0}


def test_observable_spec_builds():
    f = ObservableSpec(kind="bump", center=0.5, halfwidth=1.0).build()
    assert f(0.5) == pytest.approx(1.0)
    assert f(2.0) == 0.0
    with pytest.raises(ValueError):
        ObservableSpec(kind="mystery").build()
