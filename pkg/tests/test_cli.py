import csv
import json
import math
from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

from ruinsim import __version__
from ruinsim.cli import log_slope, main, run_experiment, tail_plotdata
from ruinsim.config import ConfigError, load_config, parse_config
from ruinsim.report import CSV_COLUMNS

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def fading_doc(**overrides):
    doc = {
        "name": "fading",
        "model": {
            "regime": "runoff",
            "lam": 0.5,
            "inflation_factor": {"family": "constant", "value": math.exp(0.05)},
            "return_factor": {"family": "lognormal", "mean_log": 0.1, "var_log": 0.1},
            "claim_size": {"family": "exponential", "mean": 1.0},
            "xi_model": {"kind": "deterministic_exp", "phi": 0.1},
        },
        "estimators": ["asymptotic-runoff", "mc"],
        "u_grid": [5.0, 20.0],
        "mc": {"replications": 2000, "seed": 4},
    }
    doc.update(overrides)
    return doc


def write(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


@pytest.mark.parametrize("preset", ["table51", "table52"])
def test_presets_load(preset):
    cfg = load_config(preset)
    assert cfg.model.regime == "runoff"
    assert cfg.mc.replications == 10**6


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.json")), ids=lambda p: p.stem)
def test_example_configs_load(path):
    cfg = load_config(str(path))
    assert parse_config(cfg.to_dict()) == cfg


@settings(max_examples=30, deadline=None)
@given(
    lam=st.floats(0.01, 500.0),
    u=st.lists(st.floats(1.5, 1e5), min_size=1, max_size=4),
    seed=st.integers(0, 2**63),
    phi=st.floats(0.01, 1.0),
    estimators=st.sets(st.sampled_from(["mc", "hybrid", "asymptotic-runoff", "decomposition"]), min_size=1),
    horizon=st.sampled_from([None, {"kind": "fixed", "years": 50}, {"kind": "adaptive_runoff", "intensity_floor": 1e-6}]),
)
def test_config_round_trip(lam, u, seed, phi, estimators, horizon):
    doc = fading_doc(u_grid=u, estimators=sorted(estimators), hybrid={"lam0": 0.1})
    doc["model"]["lam"] = lam
    doc["model"]["xi_model"]["phi"] = phi
    doc["mc"] = {"seed": seed, "replications": 10}
    if horizon:
        doc["mc"]["horizon"] = horizon
    first = parse_config(doc)
    again = parse_config(json.loads(first.to_json()))
    assert again == first
    assert again.to_dict() == first.to_dict()


def test_growth_config_round_trip():
    cfg = load_config(str(CONFIGS / "growth_goldie.json"))
    assert parse_config(json.loads(cfg.to_json())) == cfg


@pytest.mark.parametrize(
    "mutate",
    [
        lambda d: d.update(estimators=[]),
        lambda d: d.update(estimators=["bootstrap"]),
        lambda d: d.update(u_grid=[-1.0]),
        lambda d: d["model"].update(claim_size={"family": "weibull", "k": 1}),
        lambda d: d["model"].pop("xi_model"),
        lambda d: d.update(estimators=["hybrid"]),
        lambda d: d["model"].update(lam=-2.0),
        lambda d: d.update(extra_field=1),
    ],
)
def test_invalid_configs_exit_2(tmp_path, mutate):
    doc = fading_doc()
    mutate(doc)
    with pytest.raises(ConfigError):
        parse_config(doc)
    assert main(["run", write(tmp_path, doc), "--out", str(tmp_path)]) == 2


def test_unreadable_config_exits_2(tmp_path):
    bad = tmp_path / "broken.json"
    bad.write_text("{not json")
    assert main(["run", str(bad)]) == 2
    assert main(["run", str(tmp_path / "missing.json")]) == 2


def test_run_writes_fixed_columns_and_report(tmp_path):
    assert main(["run", write(tmp_path, fading_doc()), "--out", str(tmp_path)]) == 0
    rows = list(csv.reader((tmp_path / "fading.csv").open()))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert len(rows) == 1 + 2 * 2
    methods = {r[2] for r in rows[1:]}
    assert methods == {"asymptotic-runoff", "mc"}
    report = (tmp_path / "fading_report.txt").read_text()
    assert f"ruinsim version: {__version__}" in report
    assert "mc seed: 4" in report
    assert "rho: 2" in report and "mu: 6.66666" in report and "beta: inf" in report
    assert "check rho_2 in (1, beta_2): True" in report


def test_rows_per_lambda(tmp_path):
    doc = fading_doc(lambda_grid=[0.1, 1.0])
    result = run_experiment(parse_config(doc))
    keys = {(r.u, r.lam, r.method) for r in result.reports}
    assert len(keys) == 2 * 2 * 2


def test_reruns_are_bit_identical(tmp_path):
    doc = fading_doc()
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", write(tmp_path, doc), "--out", str(a)]) == 0
    assert main(["run", write(tmp_path, doc), "--out", str(b)]) == 0

    def estimates(p):
        # every column except the wall-clock time
        return [r[:-1] for r in csv.reader((p / "fading.csv").open())]

    assert estimates(a) == estimates(b)


def test_hypothesis_violation_exits_3(tmp_path):
    doc = fading_doc()
    doc["model"]["transition_rule"] = "claims_end_of_year"
    assert main(["run", write(tmp_path, doc), "--out", str(tmp_path)]) == 3
    doc["estimators"] = ["mc"]
    assert main(["run", write(tmp_path, doc), "--out", str(tmp_path)]) == 0


def test_growth_estimator_on_runoff_model_exits_3(tmp_path):
    assert main(["run", write(tmp_path, fading_doc(estimators=["asymptotic-growth"])), "--out", str(tmp_path)]) == 3


def test_growth_model_tail_exits_3():
    assert main(["tail", str(CONFIGS / "growth_goldie.json")]) == 3


def test_tail_single_u_has_no_slope(tmp_path):
    cfg = parse_config(fading_doc(u_grid=[10.0]))
    rows, slope = tail_plotdata(cfg)
    assert len(rows) == 1 and slope is None
    out = tmp_path / "tail.csv"
    assert main(["tail", write(tmp_path, fading_doc(u_grid=[10.0])), "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 2


def test_tail_log_spaced_grid():
    cfg = parse_config(fading_doc(u_grid=[5.0, 50.0]))
    rows, slope = tail_plotdata(cfg, points=4)
    assert [round(r["u"], 6) for r in rows] == [5.0, round(5 * 10 ** (1 / 3), 6), round(5 * 10 ** (2 / 3), 6), 50.0]
    assert slope is not None and slope < 0
    for r in rows:
        assert r["ratio"] == pytest.approx(r["mc"] / r["asymptotic"])


def test_log_slope_recovers_power_law():
    u = [10.0, 20.0, 50.0]
    assert log_slope(u, [x**-2 for x in u]) == pytest.approx(-2.0)
    assert log_slope([10.0], [0.1]) is None


def test_reproduce_small(tmp_path, capsys):
    assert main(["reproduce", "table5.1", "--reps", "2000", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "E2/E1" in out
    assert (tmp_path / "table51.csv").exists()


def test_exposure_config_resolves_volume_file():
    cfg = load_config(str(CONFIGS / "runoff_exposure.json"))
    assert cfg.model.xi_model.exposure.pi == (0.8, 0.9, 1.0)


def test_other_estimators_run():
    doc = fading_doc(estimators=["compound-tail", "decomposition"], u_grid=[1e3])
    doc["decomposition"] = {"n_max": 300}
    result = run_experiment(parse_config(doc))
    by = {r.method: r.estimate for r in result.reports}
    assert by["compound-tail"] > 0
    assert abs(by["decomposition"] / (20 / 3 * 0.5 * 1e-6) - 1) < 0.1
