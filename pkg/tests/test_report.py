import json
import math

import numpy as np
import pandas as pd
import pytest

from mems_app.report import emit_report, load_summary, to_jsonable
from mems_app.scenario import run_scenario, validate_config


@pytest.fixture(scope="module")
def stationary_outcome():
    cfg = validate_config({"mode": "stationary", "domain": {"N": 64}, "run": {"lambda": 1.0}})
    return run_scenario(cfg)


def test_to_jsonable():
    raw = {"a": np.float64(0.1), "b": [np.int64(3), math.inf], "c": np.array([1.5, -math.nan]), "d": np.bool_(True)}
    assert to_jsonable(raw) == {"a": 0.1, "b": [3, None], "c": [1.5, None], "d": True}


def test_non_evolution_trace_is_header_only(tmp_path, stationary_outcome):
    emit_report(tmp_path, stationary_outcome.summary, fields=stationary_outcome.fields)
    assert (tmp_path / "trace.csv").read_text(encoding="utf-8") == "t,max_u,E,dist_to_ref,dt\n"
    field = pd.read_csv(tmp_path / "fields" / "v_lambda.csv")
    assert len(field) == 64
    assert field["value"].max() == pytest.approx(stationary_outcome.summary["results"]["max_v"], rel=1e-15)


def test_summary_round_trips(tmp_path, stationary_outcome):
    paths = emit_report(tmp_path, stationary_outcome.summary)
    assert paths[0].name == "summary.json"
    parsed = load_summary(tmp_path / "summary.json")
    assert parsed.mode == "stationary"
    assert parsed.results["converged"] is True
    text = (tmp_path / "summary.json").read_text(encoding="utf-8")
    assert list(json.loads(text)) == sorted(json.loads(text))
    assert parsed.results["max_v"] == stationary_outcome.summary["results"]["max_v"]


def test_reruns_are_byte_identical(tmp_path):
    cfg = validate_config({"mode": "stationary", "domain": {"N": 64}, "run": {"lambda": 1.0}})
    for name in ("first", "second"):
        outcome = run_scenario(cfg)
        emit_report(tmp_path / name, outcome.summary, outcome.trace, outcome.fields)
    for rel in ("summary.json", "trace.csv", "fields/v_lambda.csv"):
        assert (tmp_path / "first" / rel).read_bytes() == (tmp_path / "second" / rel).read_bytes()


def test_extra_csv_rows(tmp_path, stationary_outcome):
    rows = [{"k": 1, "sup_increment": 0.5, "max_v": 0.1}, {"k": 2, "sup_increment": 0.25, "max_v": 0.2}]
    emit_report(tmp_path, stationary_outcome.summary, extra_csv={"iterations.csv": rows})
    frame = pd.read_csv(tmp_path / "iterations.csv")
    assert list(frame.columns) == ["k", "sup_increment", "max_v"]
    assert frame["max_v"].tolist() == [0.1, 0.2]


def test_missing_summary(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_summary(tmp_path / "summary.json")


def test_summary_floats_use_seventeen_digits(tmp_path, stationary_outcome):
    summary = dict(stationary_outcome.summary, results={"x": 0.1, "n": 3.0, "flag": True, "k": 2})
    emit_report(tmp_path, summary)
    text = (tmp_path / "summary.json").read_text(encoding="utf-8")
    assert '"x": 0.10000000000000001' in text
    assert '"n": 3.0' in text
    parsed = json.loads(text)["results"]
    assert parsed == {"x": 0.1, "n": 3.0, "flag": True, "k": 2}
    assert isinstance(parsed["n"], float) and isinstance(parsed["k"], int)
