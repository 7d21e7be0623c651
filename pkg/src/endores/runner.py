"""Experiment configuration, execution and report serialization.

Config documents are JSON validated against ``data/config.schema.json``;
reports validate against ``data/report.schema.json``. JSON reports keep keys
in a fixed order and print every float with 17 significant digits so that a
parsed report is bit-identical to the one written.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, is_dataclass, replace
from importlib import resources
from typing import Any

import numpy as np
from jsonschema import Draft202012Validator
from jsonschema.exceptions import best_match

from endores import __version__
from endores.bias import (
    BiasTerm,
    PropositionReport,
    ScenarioPair,
    default_workers,
    mc_expectation_tsls,
    proposition_check,
)
from endores.dgp import (
    DgpSpec,
    Exogenous,
    LinearErrorCorrelation,
    MeasurementError,
    OmittedVariable,
    Simultaneity,
    generate_sample,
)
from endores.errors import InvalidSpec, IoError, ParseError, ValidationError
from endores.rng import name_seed

log = logging.getLogger(__name__)

FORMATS = ("json", "csv")
CSV_COLUMNS = (
    "scenario",
    "coef",
    "true_diff",
    "measured_diff",
    "mc_se_diff",
    "bias_b",
    "bias_a",
    "gap",
    "gap_mc_se",
    "verdict",
)


def _data_text(name: str) -> str:
    return resources.files("endores").joinpath("data", name).read_text(encoding="utf-8")


def load_schema(name: str) -> dict:
    """``name`` is ``"config"`` or ``"report"``."""
    return json.loads(_data_text(f"{name}.schema.json"))


def default_config_text() -> str:
    return _data_text("default_experiment.json")


# --- configuration ---------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ScenarioConfig:
    name: str
    spec_b: DgpSpec
    spec_a: DgpSpec
    n_b: int
    n_a: int
    reps: int
    instrument: str | None = None


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    scenarios: tuple[ScenarioConfig, ...]
    master_seed: int = 0
    tol_multiplier: float = 4.0
    format: str = "json"
    output_path: str | None = None

    def with_overrides(
        self,
        *,
        seed: int | None = None,
        reps: int | None = None,
        format: str | None = None,
        output_path: str | None = None,
    ) -> ExperimentConfig:
        cfg = self
        if seed is not None:
            cfg = replace(cfg, master_seed=seed)
        if reps is not None:
            if reps < 2:
                raise ValidationError("reps", "must be >= 2")
            cfg = replace(cfg, scenarios=tuple(replace(s, reps=reps) for s in cfg.scenarios))
        if format is not None:
            cfg = replace(cfg, format=format)
        if output_path is not None:
            cfg = replace(cfg, output_path=output_path)
        return cfg


def _json_path(parts) -> str:
    out = ""
    for part in parts:
        out += f"[{part}]" if isinstance(part, int) else (f".{part}" if out else str(part))
    return out


def _mechanism(d: dict | None):
    if d is None:
        return Exogenous()
    kind = d["type"]
    if kind == "linear_error_correlation":
        return LinearErrorCorrelation(d["gamma"])
    if kind == "omitted_variable":
        return OmittedVariable(d["delta"], d["loading"])
    if kind == "measurement_error":
        return MeasurementError(d["eta_sd"])
    if kind == "simultaneity":
        return Simultaneity(d["alpha"])
    return Exogenous()


def _build_spec(d: dict, path: str) -> DgpSpec:
    try:
        mech = _mechanism(d.get("mechanism"))
    except InvalidSpec as exc:
        raise ValidationError(f"{path}.mechanism.{exc.field}", str(exc)) from None
    x_cov = d["x_cov"]
    if any(len(row) != len(x_cov) for row in x_cov):
        raise ValidationError(f"{path}.x_cov", "must be a square matrix")
    try:
        return DgpSpec(d["beta"], x_cov, d.get("noise_sd", 1.0), mech)
    except InvalidSpec as exc:
        raise ValidationError(f"{path}.{exc.field}" if exc.field else path, str(exc)) from None


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a JSON experiment document, applying defaults.

    Raises ParseError for malformed JSON and ValidationError (with the
    offending field path, e.g. ``scenarios[0].spec_b.x_cov``) otherwise.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"line {exc.lineno} column {exc.colno}: {exc.msg}") from None

    err = best_match(Draft202012Validator(load_schema("config")).iter_errors(doc))
    if err is not None:
        raise ValidationError(_json_path(err.absolute_path) or "<root>", err.message)

    scenarios = []
    seen: set[str] = set()
    for i, s in enumerate(doc["scenarios"]):
        base = f"scenarios[{i}]"
        if s["name"] in seen:
            raise ValidationError(f"{base}.name", f"duplicate scenario name {s['name']!r}")
        seen.add(s["name"])
        spec_b = _build_spec(s["spec_b"], f"{base}.spec_b")
        spec_a = _build_spec(s["spec_a"], f"{base}.spec_a")
        if spec_a.p != spec_b.p:
            raise ValidationError(
                f"{base}.spec_a.beta", f"length {spec_a.p} differs from spec_b ({spec_b.p})"
            )
        for key in ("n_b", "n_a"):
            if s[key] <= spec_b.p:
                raise ValidationError(f"{base}.{key}", f"must be at least p + 1 = {spec_b.p + 1}")
        instrument = s.get("instrument")
        if instrument is not None:
            for side, spec in (("spec_b", spec_b), ("spec_a", spec_a)):
                available = generate_sample(spec, spec.p + 1, 0).latents
                if instrument not in available:
                    raise ValidationError(
                        f"{base}.instrument",
                        f"{instrument!r} is not a latent of {side}; have {sorted(available)}",
                    )
        scenarios.append(
            ScenarioConfig(s["name"], spec_b, spec_a, s["n_b"], s["n_a"], s["reps"], instrument)
        )

    output = doc.get("output", {})
    return ExperimentConfig(
        scenarios=tuple(scenarios),
        master_seed=doc.get("master_seed", 0),
        tol_multiplier=float(doc.get("tol_multiplier", 4.0)),
        format=output.get("format", "json"),
        output_path=output.get("path"),
    )


def _floats(arr) -> list[float]:
    return [float(v) for v in np.asarray(arr).reshape(-1)]


def spec_to_dict(spec: DgpSpec) -> dict:
    mech = spec.mechanism
    if isinstance(mech, LinearErrorCorrelation):
        m = {"type": "linear_error_correlation", "gamma": _floats(mech.gamma)}
    elif isinstance(mech, OmittedVariable):
        m = {"type": "omitted_variable", "delta": mech.delta, "loading": _floats(mech.loading)}
    elif isinstance(mech, MeasurementError):
        m = {"type": "measurement_error", "eta_sd": _floats(mech.eta_sd)}
    elif isinstance(mech, Simultaneity):
        m = {"type": "simultaneity", "alpha": mech.alpha}
    else:
        m = {"type": "exogenous"}
    return {
        "beta": _floats(spec.beta),
        "x_cov": [_floats(row) for row in spec.x_cov],
        "noise_sd": spec.noise_sd,
        "mechanism": m,
    }


def config_to_dict(cfg: ExperimentConfig) -> dict:
    """Fully resolved config; feeding it back to :func:`parse_config` reproduces ``cfg``."""
    return {
        "master_seed": cfg.master_seed,
        "tol_multiplier": cfg.tol_multiplier,
        "output": {"format": cfg.format, "path": cfg.output_path},
        "scenarios": [
            {
                "name": s.name,
                "spec_b": spec_to_dict(s.spec_b),
                "spec_a": spec_to_dict(s.spec_a),
                "n_b": s.n_b,
                "n_a": s.n_a,
                "reps": s.reps,
                "instrument": s.instrument,
            }
            for s in cfg.scenarios
        ],
    }


# --- execution -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class IvResult:
    instrument: str
    mean_beta_b: np.ndarray
    mc_se_b: np.ndarray
    mean_beta_a: np.ndarray
    mc_se_a: np.ndarray


@dataclass(frozen=True, eq=False)
class ScenarioOutcome:
    name: str
    seed: int
    result: PropositionReport | None = None
    iv: IvResult | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        """No error, identity residual inside tolerance, and skip rate acceptable."""
        return (
            self.error is None
            and self.result is not None
            and self.result.identity_holds
            and self.result.valid
        )


@dataclass(frozen=True, eq=False)
class RunReport:
    version: str
    master_seed: int
    tol_multiplier: float
    config: dict
    scenarios: tuple[ScenarioOutcome, ...]
    duration_s: float | None = None

    def __eq__(self, other: object) -> bool:
        return isinstance(other, RunReport) and _same(self, other)

    def outcome(self, name: str) -> ScenarioOutcome:
        for s in self.scenarios:
            if s.name == name:
                return s
        raise KeyError(name)

    @property
    def failed(self) -> bool:
        return any(not s.ok for s in self.scenarios)


def _same(a: Any, b: Any) -> bool:
    if is_dataclass(a):
        return type(a) is type(b) and all(
            _same(getattr(a, f.name), getattr(b, f.name)) for f in fields(a)
        )
    if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
        a, b = np.asarray(a), np.asarray(b)
        return a.shape == b.shape and np.array_equal(a, b, equal_nan=True)
    if isinstance(a, (list, tuple)):
        return (
            isinstance(b, (list, tuple))
            and len(a) == len(b)
            and all(_same(x, y) for x, y in zip(a, b))
        )
    if isinstance(a, dict):
        return isinstance(b, dict) and a.keys() == b.keys() and all(_same(a[k], b[k]) for k in a)
    if isinstance(a, float) and isinstance(b, float) and math.isnan(a) and math.isnan(b):
        return True
    return a == b


def run_scenario(sc: ScenarioConfig, master_seed: int, tol_multiplier: float) -> ScenarioOutcome:
    seed = name_seed(master_seed, sc.name)
    try:
        pair = ScenarioPair(sc.spec_b, sc.spec_a, sc.n_b, sc.n_a, sc.reps, seed)
        result = proposition_check(pair, tol_multiplier, workers=1)
        iv = None
        if sc.instrument is not None:
            mb, sb = mc_expectation_tsls(
                sc.spec_b, sc.n_b, sc.reps, pair.seed_b, sc.instrument, workers=1
            )
            ma, sa = mc_expectation_tsls(
                sc.spec_a, sc.n_a, sc.reps, pair.seed_a, sc.instrument, workers=1
            )
            iv = IvResult(sc.instrument, mb, sb, ma, sa)
    except Exception as exc:  # one bad scenario must not sink the run
        log.error("scenario %s failed: %s", sc.name, exc)
        return ScenarioOutcome(sc.name, seed, error=f"{type(exc).__name__}: {exc}")
    return ScenarioOutcome(sc.name, seed, result, iv)


def _run_star(args) -> ScenarioOutcome:
    return run_scenario(*args)


def run_experiment(config: ExperimentConfig, *, workers: int | None = None) -> RunReport:
    """Run every scenario; outcomes are ordered by scenario name.

    With ``workers > 1`` scenarios run in separate processes. Results do not
    depend on the worker count.
    """
    workers = default_workers() if workers is None else max(1, workers)
    ordered = sorted(config.scenarios, key=lambda s: s.name)
    jobs = [(s, config.master_seed, config.tol_multiplier) for s in ordered]
    start = time.perf_counter()
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            outcomes = list(pool.map(_run_star, jobs))
    else:
        outcomes = [_run_star(j) for j in jobs]
    duration = time.perf_counter() - start
    return RunReport(
        version=__version__,
        master_seed=config.master_seed,
        tol_multiplier=config.tol_multiplier,
        # output path omitted so the same study written to two places is byte-identical
        config=config_to_dict(replace(config, output_path=None)),
        scenarios=tuple(outcomes),
        duration_s=duration,
    )


# --- serialization ---------------------------------------------------------


def format_float(x: float) -> str | None:
    """17 significant digits, always with a '.' or exponent; None for non-finite."""
    x = float(x)
    if not math.isfinite(x):
        return None
    s = format(x, ".17g")
    if not any(ch in s for ch in ".en"):
        s += ".0"
    return s


def _emit(obj: Any, indent: int, out: list[str]) -> None:
    pad = "  " * indent
    if obj is None or isinstance(obj, bool):
        out.append(json.dumps(obj))
    elif isinstance(obj, int):
        out.append(str(obj))
    elif isinstance(obj, float):
        s = format_float(obj)
        out.append("null" if s is None else s)
    elif isinstance(obj, str):
        out.append(json.dumps(obj, ensure_ascii=False))
    elif isinstance(obj, (list, tuple)):
        if not obj:
            out.append("[]")
        elif all(v is None or isinstance(v, (int, float, str)) for v in obj):
            parts: list[str] = []
            for v in obj:
                _emit(v, 0, parts)
                parts.append(", ")
            out.append("[" + "".join(parts[:-1]) + "]")
        else:
            out.append("[\n")
            for i, v in enumerate(obj):
                out.append(pad + "  ")
                _emit(v, indent + 1, out)
                out.append(",\n" if i < len(obj) - 1 else "\n")
            out.append(pad + "]")
    elif isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        items = list(obj.items())
        for i, (k, v) in enumerate(items):
            out.append(f"{pad}  {json.dumps(k)}: ")
            _emit(v, indent + 1, out)
            out.append(",\n" if i < len(items) - 1 else "\n")
        out.append(pad + "}")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj: Any) -> str:
    out: list[str] = []
    _emit(obj, 0, out)
    return "".join(out) + "\n"


def _bias_dict(b: BiasTerm) -> dict:
    return {
        "finite_sample": _floats(b.finite_sample),
        "asymptotic": _floats(b.asymptotic),
        "mc_se": _floats(b.mc_se),
        "reps": b.reps,
        "skipped": b.skipped,
    }


def _result_dict(r: PropositionReport) -> dict:
    return {
        "mean_beta_b": _floats(r.mean_beta_b),
        "mean_beta_a": _floats(r.mean_beta_a),
        "mc_se_beta_b": _floats(r.mc_se_beta_b),
        "mc_se_beta_a": _floats(r.mc_se_beta_a),
        "true_diff": _floats(r.true_diff),
        "measured_diff": _floats(r.measured_diff),
        "mc_se_diff": _floats(r.mc_se_diff),
        "bias_b": _bias_dict(r.bias_b),
        "bias_a": _bias_dict(r.bias_a),
        "criterion_gap": _floats(r.criterion_gap),
        "gap_mc_se": _floats(r.gap_mc_se),
        "asymptotic_gap": _floats(r.asymptotic_gap),
        "identity_residual": _floats(r.identity_residual),
        "identity_tolerance": _floats(r.identity_tolerance),
        "tol_multiplier": r.tol_multiplier,
        "verdict": r.verdict,
    }


def _outcome_dict(s: ScenarioOutcome) -> dict:
    r = s.result
    iv = None
    if s.iv is not None:
        iv = {
            "instrument": s.iv.instrument,
            "mean_beta_b": _floats(s.iv.mean_beta_b),
            "mc_se_b": _floats(s.iv.mc_se_b),
            "mean_beta_a": _floats(s.iv.mean_beta_a),
            "mc_se_a": _floats(s.iv.mc_se_a),
        }
    return {
        "name": s.name,
        "seed": s.seed,
        "status": "ok" if s.error is None else "error",
        "error": s.error,
        "verdict": r.verdict if r is not None else None,
        "identity_holds": r.identity_holds if r is not None else None,
        "valid": r.valid if r is not None else None,
        "result": _result_dict(r) if r is not None else None,
        "iv": iv,
    }


def report_to_dict(report: RunReport, *, timing: bool = False) -> dict:
    """Key order here is the documented on-disk order.

    ``duration_s`` is written as null unless ``timing`` is set, keeping
    default output a pure function of the config.
    """
    return {
        "version": report.version,
        "master_seed": report.master_seed,
        "tol_multiplier": report.tol_multiplier,
        "duration_s": report.duration_s if timing else None,
        "config": report.config,
        "scenarios": [_outcome_dict(s) for s in report.scenarios],
    }


def _arr(v: list) -> np.ndarray:
    return np.array([math.nan if x is None else x for x in v], dtype=float)


def _bias_from(d: dict) -> BiasTerm:
    return BiasTerm(
        _arr(d["finite_sample"]), _arr(d["asymptotic"]), _arr(d["mc_se"]), d["reps"], d["skipped"]
    )


def _result_from(d: dict) -> PropositionReport:
    vec = {
        k: _arr(v)
        for k, v in d.items()
        if k not in ("bias_b", "bias_a", "tol_multiplier", "verdict")
    }
    return PropositionReport(
        **vec,
        bias_b=_bias_from(d["bias_b"]),
        bias_a=_bias_from(d["bias_a"]),
        tol_multiplier=float(d["tol_multiplier"]),
        verdict=d["verdict"],
    )


def report_from_dict(d: dict) -> RunReport:
    outcomes = []
    for s in d["scenarios"]:
        iv = None
        if s["iv"] is not None:
            v = s["iv"]
            iv = IvResult(
                v["instrument"],
                _arr(v["mean_beta_b"]),
                _arr(v["mc_se_b"]),
                _arr(v["mean_beta_a"]),
                _arr(v["mc_se_a"]),
            )
        result = _result_from(s["result"]) if s["result"] is not None else None
        outcomes.append(ScenarioOutcome(s["name"], s["seed"], result, iv, s["error"]))
    duration = d["duration_s"]
    return RunReport(
        version=d["version"],
        master_seed=d["master_seed"],
        tol_multiplier=float(d["tol_multiplier"]),
        config=d["config"],
        scenarios=tuple(outcomes),
        duration_s=None if duration is None else float(duration),
    )


def parse_report(text: str) -> RunReport:
    try:
        return report_from_dict(json.loads(text))
    except json.JSONDecodeError as exc:
        raise ParseError(f"line {exc.lineno} column {exc.colno}: {exc.msg}") from None


def _csv_text(report: RunReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for s in report.scenarios:
        r = s.result
        if r is None:
            w.writerow([s.name, "", "", "", "", "", "", "", "", "error"])
            continue
        for j in range(r.true_diff.shape[0]):
            nums = (
                r.true_diff[j],
                r.measured_diff[j],
                r.mc_se_diff[j],
                r.bias_b.finite_sample[j],
                r.bias_a.finite_sample[j],
                r.criterion_gap[j],
                r.gap_mc_se[j],
            )
            w.writerow([s.name, j, *(format_float(v) or "nan" for v in nums), r.verdict])
    return buf.getvalue()


def serialize_report(report: RunReport, format: str = "json", *, timing: bool = False) -> str:
    if format == "json":
        return dumps(report_to_dict(report, timing=timing))
    if format == "csv":
        return _csv_text(report)
    raise ValueError(f"unknown format {format!r}; expected one of {FORMATS}")


def write_report(report: RunReport, format: str, path, *, timing: bool = False) -> None:
    text = serialize_report(report, format, timing=timing)
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise IoError(f"cannot write report to {path}: {exc}") from exc
