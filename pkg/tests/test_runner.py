import csv
import io
import json

import pytest
from hypothesis import given, strategies as st
from jsonschema import Draft202012Validator

import endores.runner as runner
from endores.errors import IoError, ParseError, ValidationError
from endores.runner import (
    CSV_COLUMNS,
    config_to_dict,
    default_config_text,
    format_float,
    load_schema,
    parse_config,
    parse_report,
    run_experiment,
    serialize_report,
    write_report,
)


def scalar(beta=1.0, mech=None, x_cov=None):
    return {"beta": [beta], "x_cov": x_cov or [[1.0]], "mechanism": mech or {"type": "exogenous"}}


def lec(g):
    return {"type": "linear_error_correlation", "gamma": [g]}


def doc(*scenarios, **top):
    return json.dumps({"scenarios": list(scenarios), **top})


def scenario(name, spec_b=None, spec_a=None, n=200, reps=200, **extra):
    return {
        "name": name,
        "spec_b": spec_b or scalar(),
        "spec_a": spec_a or scalar(),
        "n_b": n,
        "n_a": n,
        "reps": reps,
        **extra,
    }


SMALL = doc(
    scenario("zero", scalar(1.0), scalar(1.5, x_cov=[[2.0]])),
    scenario("violation", scalar(1.0, lec(0.5)), scalar(1.5, lec(0.8)), n=500, reps=400),
    scenario(
        "iv",
        scalar(0.5, {"type": "simultaneity", "alpha": 0.4}),
        scalar(0.5, {"type": "simultaneity", "alpha": 0.4}),
        n=300,
        reps=50,
        instrument="v",
    ),
    master_seed=99,
)


@pytest.fixture(scope="module")
def small_report():
    return run_experiment(parse_config(SMALL), workers=1)


# --- parse_config ------------------------------------------------------------


def test_defaults_applied():
    cfg = parse_config(doc(scenario("one")))
    assert cfg.tol_multiplier == 4.0
    assert cfg.format == "json"
    assert cfg.master_seed == 0
    assert cfg.output_path is None
    assert cfg.scenarios[0].spec_b.noise_sd == 1.0
    assert cfg.scenarios[0].instrument is None


def test_not_positive_definite_names_path():
    bad = scenario("one", spec_b={"beta": [1.0, 1.0], "x_cov": [[1.0, 2.0], [2.0, 1.0]]},
                   spec_a={"beta": [1.0, 1.0], "x_cov": [[1.0, 0.0], [0.0, 1.0]]})
    with pytest.raises(ValidationError) as info:
        parse_config(doc(bad))
    assert info.value.path == "scenarios[0].spec_b.x_cov"


def test_duplicate_names():
    with pytest.raises(ValidationError) as info:
        parse_config(doc(scenario("same"), scenario("same")))
    assert info.value.path == "scenarios[1].name"


@pytest.mark.parametrize(
    "mutate, path",
    [
        (lambda s: s.update(reps=1), "scenarios[0].reps"),
        (lambda s: s.update(n_b=1), "scenarios[0].n_b"),
        (lambda s: s["spec_a"].update(mechanism={"type": "linear_error_correlation", "gamma": [0.1, 0.2]}),
         "scenarios[0].spec_a.mechanism.gamma"),
        (lambda s: s["spec_a"].update(mechanism={"type": "simultaneity", "alpha": 2.0}),
         "scenarios[0].spec_a.mechanism.alpha"),
        (lambda s: s["spec_a"].update(mechanism={"type": "warp"}), "scenarios[0].spec_a.mechanism.type"),
        (lambda s: s["spec_b"].update(noise_sd=-1), "scenarios[0].spec_b.noise_sd"),
        (lambda s: s["spec_a"].update(beta=[1.0, 2.0], x_cov=[[1.0, 0.0], [0.0, 1.0]]), "scenarios[0].spec_a.beta"),
        (lambda s: s["spec_b"].update(x_cov=[[1.0, 0.0]]), "scenarios[0].spec_b.x_cov"),
        (lambda s: s.update(instrument="v"), "scenarios[0].instrument"),
        (lambda s: s.update(name=""), "scenarios[0].name"),
        (lambda s: s.update(extra=1), "scenarios[0]"),
    ],
)
def test_validation_paths(mutate, path):
    s = scenario("one")
    mutate(s)
    with pytest.raises(ValidationError) as info:
        parse_config(doc(s))
    assert info.value.path == path


def test_parse_error_has_location():
    with pytest.raises(ParseError, match="line 2"):
        parse_config('{"scenarios": [\n  ,]}')


def test_top_level_validation():
    with pytest.raises(ValidationError) as info:
        parse_config(json.dumps({"scenarios": [], "tol_multiplier": 0}))
    assert info.value.path == "tol_multiplier"
    with pytest.raises(ValidationError):
        parse_config(json.dumps({"scenarios": [], "output": {"format": "xml"}}))


def test_config_dict_round_trip():
    cfg = parse_config(default_config_text())
    again = parse_config(json.dumps(config_to_dict(cfg)))
    assert config_to_dict(again) == config_to_dict(cfg)


def test_shipped_default_validates():
    cfg = parse_config(default_config_text())
    names = {s.name for s in cfg.scenarios}
    assert {"A2-cancellation", "A3-violation", "A4-attenuation", "A5-iv-baseline", "A6-trivial-zero"} <= names
    assert sum(n.startswith("A1-") for n in names) >= 6


def test_overrides():
    cfg = parse_config(SMALL).with_overrides(seed=5, reps=10, format="csv", output_path="x.csv")
    assert cfg.master_seed == 5 and cfg.format == "csv" and cfg.output_path == "x.csv"
    assert all(s.reps == 10 for s in cfg.scenarios)
    with pytest.raises(ValidationError):
        cfg.with_overrides(reps=1)


# --- run_experiment ----------------------------------------------------------


def test_trivial_and_violation(small_report):
    zero = small_report.outcome("zero")
    assert zero.result.verdict == "criterion holds" and zero.ok
    v = small_report.outcome("violation").result
    assert v.verdict == "violated"
    assert abs(v.criterion_gap[0] - 0.3) <= max(0.03, 4 * v.gap_mc_se[0])
    assert all(s.ok for s in small_report.scenarios)
    assert not small_report.failed


def test_iv_block(small_report):
    iv = small_report.outcome("iv").iv
    assert iv.instrument == "v"
    assert abs(iv.mean_beta_b[0] - 0.5) <= 4 * iv.mc_se_b[0]


def test_outcomes_sorted_by_name(small_report):
    names = [s.name for s in small_report.scenarios]
    assert names == sorted(names)


def test_scenario_order_does_not_change_results(small_report):
    d = json.loads(SMALL)
    d["scenarios"].reverse()
    again = run_experiment(parse_config(json.dumps(d)), workers=1)
    blocks = [json.loads(serialize_report(r))["scenarios"] for r in (again, small_report)]
    assert blocks[0] == blocks[1]
    assert serialize_report(again) != serialize_report(small_report)  # echoed config order differs


def test_byte_identical_reruns(small_report):
    again = run_experiment(parse_config(SMALL), workers=2)
    for fmt in ("json", "csv"):
        assert serialize_report(again, fmt) == serialize_report(small_report, fmt)


def test_partial_failure_recorded(monkeypatch):
    real = runner.proposition_check

    def boom(pair, tol, **kw):
        if pair.n_b == 201:
            raise RuntimeError("injected")
        return real(pair, tol, **kw)

    monkeypatch.setattr(runner, "proposition_check", boom)
    rep = run_experiment(parse_config(doc(scenario("bad", n=201, reps=5), scenario("good", reps=5))), workers=1)
    assert rep.outcome("bad").error == "RuntimeError: injected"
    assert rep.outcome("good").ok
    assert rep.failed
    Draft202012Validator(load_schema("report")).validate(json.loads(serialize_report(rep)))
    rows = list(csv.reader(io.StringIO(serialize_report(rep, "csv"))))
    assert rows[1][0] == "bad" and rows[1][-1] == "error"


# --- serialization -----------------------------------------------------------


def test_report_round_trip(small_report):
    assert small_report.duration_s is not None
    timed = parse_report(serialize_report(small_report, timing=True))
    assert timed == small_report
    untimed = parse_report(serialize_report(small_report))
    assert untimed.duration_s is None
    assert serialize_report(untimed) == serialize_report(small_report)


def test_report_validates_against_schema(small_report):
    validator = Draft202012Validator(load_schema("report"))
    for timing in (False, True):
        validator.validate(json.loads(serialize_report(small_report, timing=timing)))


def test_json_key_order(small_report):
    d = json.loads(serialize_report(small_report))
    assert list(d) == ["version", "master_seed", "tol_multiplier", "duration_s", "config", "scenarios"]
    assert list(d["scenarios"][0]) == [
        "name", "seed", "status", "error", "verdict", "identity_holds", "valid", "result", "iv",
    ]


def test_floats_written_with_17_digits(small_report):
    text = serialize_report(small_report)
    gap = small_report.outcome("violation").result.criterion_gap[0]
    assert format(gap, ".17g") in text


def test_empty_report_csv_has_header():
    rep = run_experiment(parse_config(doc()), workers=1)
    text = serialize_report(rep, "csv")
    assert text == ",".join(CSV_COLUMNS) + "\n"
    assert parse_report(serialize_report(rep, timing=True)) == rep


def test_one_scalar_scenario_csv_shape():
    rep = run_experiment(parse_config(doc(scenario("s", reps=5))), workers=1)
    rows = list(csv.reader(io.StringIO(serialize_report(rep, "csv"))))
    assert len(rows) == 2
    assert all(len(r) == 10 for r in rows)
    assert rows[1][:2] == ["s", "0"]


def test_write_report(tmp_path, small_report):
    path = tmp_path / "r.json"
    write_report(small_report, "json", path)
    assert path.read_text(encoding="utf-8") == serialize_report(small_report)
    with pytest.raises(IoError):
        write_report(small_report, "csv", tmp_path / "missing" / "r.csv")
    with pytest.raises(ValueError):
        serialize_report(small_report, "xml")


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_format_float_round_trips(x):
    s = format_float(x)
    assert float(s) == x
    assert json.loads(s) == x
    assert any(ch in s for ch in ".e")


def test_format_float_non_finite():
    assert format_float(float("nan")) is None
    assert format_float(float("inf")) is None
