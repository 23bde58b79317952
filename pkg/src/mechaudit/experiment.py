"""Configuration loading, seeded experiment runs and report emission.

Config files are TOML::

    seed = 7
    trials = 10000
    audits = ["dp", "dominance", "accuracy"]

    [instance]
    builtin = "digital-goods"   # "poll" (m, g), "digital-goods" (q) or "custom"
    n = 3
    q = 2

    [mechanism]                 # or: mechanism = "solve"
    epsilon = 0.01
    delta = 0.5
    v_max = 1.0

    [valuations]                # or: vector = [...]
    family = "exponential"
    params = {rate = 1.0}

Randomness is derived from the master seed with ``SeedSequence`` spawn keys,
one per purpose and population size, so each audit owns its streams.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import metadata
from pathlib import Path
from typing import Any

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .admissibility import (AdmissibilityParams, ValuationDistribution, check_admissible,
                            distribution_admissibility)
from .analysis import AUDIT_GUARD, accuracy_audit, dominance_audit, solve_parameters
from .domain import BOTTOM, AlternativeSet, InstanceTooLarge, ObjectiveFunction, TypeSpace, enumeration_size
from .games import GameInstance, GapViolation, verify_gap
from .instances import make_digital_goods, make_poll, poll_claim1_check
from .mechanisms import MechanismParams, generic_mechanism, poll_mechanism
from .privacy import DP_GUARD, dp_mi_bound_check, verify_dp

AUDITS = ("dp", "dominance", "accuracy", "mi", "admissibility", "claim1")
DEFAULT_TRIALS = 10**4
DEFAULT_ALPHA = 0.5
REPORT_SCHEMA = "mechaudit-report/1"
CSV_SCHEMA = "mechaudit-csv/1"
CSV_COLUMNS = ("n", "audit", "quantity", "value", "bound", "pass")

# spawn-key purposes
_VALUATIONS, _TRUE_TYPES, _MONTE_CARLO = 1, 2, 3


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the offending field."""


@dataclass(frozen=True)
class ExperimentConfig:
    instance: dict
    mechanism: dict | str = "solve"
    valuations: dict = field(default_factory=lambda: {"family": "point-mass", "params": {"value": 0.0}})
    true_types: list | None = None
    trials: int = DEFAULT_TRIALS
    seed: int = 0
    audits: tuple = ("dp", "dominance", "accuracy")
    n_grid: tuple | None = None
    output_dir: str | None = None
    output_format: str = "json"
    workers: int = 1

    def __post_init__(self):
        _validate(self)

    def to_json(self) -> dict:
        return {"instance": self.instance, "mechanism": self.mechanism,
                "valuations": self.valuations, "true_types": self.true_types,
                "trials": self.trials, "seed": self.seed, "audits": list(self.audits),
                "n_grid": None if self.n_grid is None else list(self.n_grid)}


def _validate(cfg: ExperimentConfig) -> None:
    inst = cfg.instance
    if not isinstance(inst, dict):
        raise ConfigError("instance: expected a table")
    builtin = inst.get("builtin")
    if builtin not in ("poll", "digital-goods", "custom"):
        raise ConfigError(f"instance.builtin: expected 'poll', 'digital-goods' or 'custom', got {builtin!r}")
    if "n" not in inst and cfg.n_grid is None:
        raise ConfigError("instance.n: required unless sweep.n is given")
    if builtin == "poll" and int(inst.get("m", 2)) < 2:
        raise ConfigError("instance.m: a poll needs at least two magazines")
    if builtin == "digital-goods" and "q" not in inst:
        raise ConfigError("instance.q: required for digital-goods")
    if builtin == "custom":
        for key in ("types", "alternatives", "reactions", "table", "utility", "sensitivity"):
            if key not in inst:
                raise ConfigError(f"instance.{key}: required for a custom instance")
    if isinstance(cfg.mechanism, str):
        if cfg.mechanism != "solve":
            raise ConfigError(f"mechanism: expected a table or 'solve', got {cfg.mechanism!r}")
    elif not cfg.mechanism.get("solve", False):
        for key in ("epsilon", "delta", "v_max"):
            if key not in cfg.mechanism:
                raise ConfigError(f"mechanism.{key}: required unless solve = true")
    if not isinstance(cfg.trials, int) or cfg.trials < 1:
        raise ConfigError(f"trials: must be a positive integer, got {cfg.trials!r}")
    if not isinstance(cfg.seed, int) or not 0 <= cfg.seed < 2**64:
        raise ConfigError(f"seed: must be a 64-bit non-negative integer, got {cfg.seed!r}")
    for a in cfg.audits:
        if a not in AUDITS:
            raise ConfigError(f"audits: unknown audit {a!r}; expected a subset of {list(AUDITS)}")
    if cfg.output_format not in ("json", "csv"):
        raise ConfigError(f"output.format: expected 'json' or 'csv', got {cfg.output_format!r}")
    val = cfg.valuations
    if "vector" not in val:
        try:
            ValuationDistribution(val.get("family", ""), dict(val.get("params", {})))
        except ValueError as exc:
            raise ConfigError(f"valuations: {exc}") from None


def config_from_dict(raw: dict) -> ExperimentConfig:
    known = {"seed", "trials", "audits", "instance", "mechanism", "valuations", "true_types",
             "sweep", "output", "workers"}
    for key in raw:
        if key not in known:
            raise ConfigError(f"{key}: unknown top-level field")
    output = raw.get("output", {})
    sweep = raw.get("sweep", {})
    kwargs: dict[str, Any] = {"instance": dict(raw.get("instance", {}))}
    if "mechanism" in raw:
        mech = raw["mechanism"]
        kwargs["mechanism"] = mech if isinstance(mech, str) else dict(mech)
    if "valuations" in raw:
        kwargs["valuations"] = dict(raw["valuations"])
    for key in ("seed", "trials", "workers", "true_types"):
        if key in raw:
            kwargs[key] = raw[key]
    if "audits" in raw:
        kwargs["audits"] = tuple(raw["audits"])
    if "n" in sweep:
        kwargs["n_grid"] = tuple(int(n) for n in sweep["n"])
    if "dir" in output:
        kwargs["output_dir"] = str(output["dir"])
    if "format" in output:
        kwargs["output_format"] = output["format"]
    return ExperimentConfig(**kwargs)


def load_config(path) -> ExperimentConfig:
    """Parse and validate a TOML experiment file, filling documented defaults."""
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: parse error: {exc}") from None
    return config_from_dict(raw)


def _rng(seed: int, purpose: int, n: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(purpose, n)))


def _derived_seed(seed: int, purpose: int, n: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=(purpose, n)).generate_state(1, np.uint64)[0])


def _label(x):
    if isinstance(x, Fraction):
        return float(x) if x.denominator == 1 else str(x)
    if x is BOTTOM:
        return "BOTTOM"
    return x


def _number(x):
    if isinstance(x, Fraction):
        return float(x)
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return x


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return _number(obj.item())
    if isinstance(obj, (Fraction, float)):
        return _number(obj)
    if obj is BOTTOM:
        return "BOTTOM"
    return obj


def build_game(instance: dict, n: int) -> GameInstance:
    builtin = instance["builtin"]
    if builtin == "poll":
        return make_poll(int(instance.get("m", 2)), n, float(instance.get("g", 0.5)))
    if builtin == "digital-goods":
        return make_digital_goods(int(instance["q"]), n)
    types = TypeSpace(tuple(instance["types"]))
    alternatives = AlternativeSet(tuple(instance["alternatives"]))
    reactions = tuple(instance["reactions"])
    f = ObjectiveFunction.from_table(types, alternatives, n, instance["table"],
                                     float(instance["sensitivity"]))
    table = np.asarray(instance["utility"], dtype=float)
    if table.shape != (len(types), len(alternatives), len(reactions)):
        raise ConfigError("instance.utility: expected a |T| x |S| x |R| nested list")

    def utility(t, s, r):
        return table[types.index(t), alternatives.index(s), reactions.index(r)]

    probe = GameInstance(types, alternatives, reactions, utility, 1.0, f)
    gap = float(instance["gap"]) if "gap" in instance else float(verify_gap(probe))
    return GameInstance(types, alternatives, reactions, utility, gap, f,
                        t_bottom=instance.get("t_bottom"))


def _resolve_params(cfg: ExperimentConfig, game: GameInstance, n: int):
    mech = cfg.mechanism
    if isinstance(mech, str) or mech.get("solve", False):
        alpha = DEFAULT_ALPHA if isinstance(mech, str) else float(mech.get("alpha", DEFAULT_ALPHA))
        solved = solve_parameters(n, alpha, float(game.gap), len(game.alternatives),
                                  game.objective.sensitivity)
        params = solved.params() if solved.feasible else None
        return params, {"solved": True, **solved.to_json()}
    alpha = mech.get("alpha")
    params = MechanismParams(float(mech["epsilon"]), float(mech["delta"]), float(mech["v_max"]),
                             None if alpha is None else float(alpha),
                             None if "gap" not in mech else float(mech["gap"]))
    return params, {"solved": False, "epsilon": params.epsilon, "delta": params.delta,
                    "v_max": params.v_max, "alpha": params.alpha}


def _valuations(cfg: ExperimentConfig, n: int) -> np.ndarray:
    val = cfg.valuations
    if "vector" in val:
        v = np.asarray(val["vector"], dtype=float)
        if len(v) != n:
            raise ConfigError(f"valuations.vector: expected {n} entries, got {len(v)}")
        return v
    dist = ValuationDistribution(val["family"], dict(val.get("params", {})))
    return dist.sample(n, _rng(cfg.seed, _VALUATIONS, n))


def _true_types(cfg: ExperimentConfig, game: GameInstance, n: int) -> tuple:
    if cfg.true_types is not None:
        raw = list(cfg.true_types)
        if len(raw) != n:
            raise ConfigError(f"true_types: expected {n} entries, got {len(raw)}")
        lookup = {_label(t): t for t in game.types}
        lookup.update({t: t for t in game.types})
        try:
            return tuple(lookup[x] if x in lookup else Fraction(x) for x in raw)
        except (ValueError, TypeError):
            raise ConfigError("true_types: entries must be type labels") from None
    idx = _rng(cfg.seed, _TRUE_TYPES, n).integers(0, len(game.types), n)
    return tuple(game.types[i] for i in idx)


@dataclass(frozen=True)
class RunReport:
    body: dict
    wall_times: dict

    @property
    def passed(self) -> bool:
        return bool(self.body["all_pass"])

    def to_json(self) -> str:
        return json.dumps(self.body, indent=2) + "\n"


def _audit(name: str, cfg: ExperimentConfig, game: GameInstance, params, n: int,
           valuations: np.ndarray, true_types: tuple) -> dict:
    mech = cfg.mechanism if isinstance(cfg.mechanism, dict) else {}
    alpha = params.alpha if params is not None and params.alpha is not None else float(
        mech.get("alpha", DEFAULT_ALPHA))
    if name == "admissibility":
        beta = float(cfg.valuations.get("beta", 1 - alpha))
        check = check_admissible(valuations, AdmissibilityParams(alpha, beta))
        out = {"pass": check.ok, "fraction": check.fraction, "limit": n ** (-beta),
               "alpha": alpha, "beta": beta}
        if "vector" not in cfg.valuations:
            dist = ValuationDistribution(cfg.valuations["family"], dict(cfg.valuations.get("params", {})))
            da = distribution_admissibility(dist, alpha, beta, n)
            out["distribution"] = {"tail": da.tail, "limit": da.limit,
                                   "implied_constant": da.implied_constant, "pass": da.ok}
        return out
    if name == "claim1":
        if game.name != "poll":
            raise ConfigError("claim1 applies to the poll instance only")
        res = poll_claim1_check(n, alpha, len(game.alternatives), float(game.gap),
                                trials=cfg.trials, seed=_derived_seed(cfg.seed, _MONTE_CARLO, n),
                                workers=cfg.workers)
        return res.to_json()
    if params is None:
        raise ValueError("mechanism parameters are infeasible for this instance")
    if name == "dp":
        if game.name == "poll":
            alphabet = game.types.elements + (BOTTOM,)
            mech_fn = poll_mechanism(params.epsilon, len(game.alternatives))
        else:
            alphabet = game.types.elements
            mech_fn = generic_mechanism(game.objective, params)
        report = verify_dp(mech_fn, alphabet, n, params.epsilon, guard=DP_GUARD)
        return report.to_json()
    if name == "mi":
        res = dp_mi_bound_check(generic_mechanism(game.objective, params), game.types.elements, n)
        return res.to_json()
    if name == "dominance":
        restrict = bool(mech.get("restrict_first_arm", True))
        report = dominance_audit(game, params, valuations, restrict_first_arm=restrict)
        out = report.to_json()
        out["pass"] = report.all_dominant
        return out
    if name == "accuracy":
        method = mech.get("accuracy_method", "auto")
        small = enumeration_size(len(game.types), n) <= AUDIT_GUARD
        mc = method == "monte-carlo" or (method == "auto" and not small)
        report = accuracy_audit(game, params, true_types, valuations, monte_carlo=mc,
                                trials=cfg.trials, seed=_derived_seed(cfg.seed, _MONTE_CARLO, n),
                                workers=cfg.workers)
        return report.to_json()
    raise ConfigError(f"unknown audit {name!r}")


def run_experiment(cfg: ExperimentConfig) -> RunReport:
    """Run every requested audit for every population size.

    Failures of one audit (guards, infeasible parameters, inapplicable audits)
    are recorded as that audit's result; the run continues.
    """
    grid = cfg.n_grid if cfg.n_grid is not None else (int(cfg.instance["n"]),)
    runs, timings = [], {}
    all_pass = True
    for n in grid:
        game = build_game(cfg.instance, n)
        params, param_echo = _resolve_params(cfg, game, n)
        wanted = set(cfg.audits)
        valuations = _valuations(cfg, n) if wanted & {"dominance", "accuracy", "admissibility"} else None
        true_types = _true_types(cfg, game, n) if "accuracy" in wanted else None
        audits = {}
        for name in cfg.audits:
            start = time.perf_counter()
            try:
                result = _audit(name, cfg, game, params, n, valuations, true_types)
            except (InstanceTooLarge, ConfigError, GapViolation, ValueError) as exc:
                result = {"pass": False, "error": f"{type(exc).__name__}: {exc}"}
            timings[f"n={n}/{name}"] = time.perf_counter() - start
            audits[name] = _jsonable(result)
            all_pass = all_pass and bool(result.get("pass", False))
        runs.append({"n": n, "instance": game.name, "gap": _number(game.gap),
                     "parameters": _jsonable(param_echo), "audits": audits})
    body = {"schema": REPORT_SCHEMA, "seed": cfg.seed, "versions": _versions(),
            "config": _jsonable(cfg.to_json()), "runs": runs, "all_pass": all_pass}
    return RunReport(body, timings)


def _versions() -> dict:
    try:
        own = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        own = "unknown"
    return {"mechaudit": own, "numpy": np.__version__}


def csv_rows(report: RunReport) -> list[tuple]:
    rows = []
    for run in report.body["runs"]:
        n = run["n"]
        for name, res in run["audits"].items():
            if "error" in res:
                rows.append((n, name, "error", res["error"], "", False))
            elif name == "dp":
                rows.append((n, name, "max_log_ratio", res["max_log_ratio"],
                             res["epsilon_declared"], res["pass"]))
            elif name == "dominance":
                rows.append((n, name, "max_net_bound", res["max_net_bound"], 0.0, res["all_dominant"]))
                rows.append((n, name, "max_m1_out_gain", res["max_m1_out_gain"], 4 * res["epsilon"],
                             res["bounds_hold"]))
                rows.append((n, name, "condition_lhs", res["condition_lhs"], res["condition_rhs"],
                             res["condition_holds"]))
            elif name == "accuracy":
                rows.append((n, name, "expected_f", res["expected_f"], res["bound"], res["pass"]))
            elif name == "mi":
                rows.append((n, name, "mi_nats", res["mi_nats"], res["epsilon"], res["pass"]))
            elif name == "admissibility":
                rows.append((n, name, "fraction_above_threshold", res["fraction"], res["limit"],
                             res["pass"]))
            elif name == "claim1":
                rows.append((n, name, "bad_event_probability", res["exact_probability"], res["bound"],
                             res["pass"]))
                if res.get("mc_probability") is not None:
                    rows.append((n, name, "mc_bad_event_probability", res["mc_probability"],
                                 res["bound"], res["pass"]))
    return rows


def report_csv(report: RunReport) -> str:
    buf = io.StringIO()
    buf.write(f"# schema: {CSV_SCHEMA}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    writer.writerows(csv_rows(report))
    return buf.getvalue()


def emit_report(report: RunReport, out_dir, fmt: str = "json") -> list[Path]:
    """Write ``report.json`` or ``report.csv`` plus ``timings.json`` into ``out_dir``.

    Wall times live in their own file so report bodies stay byte-identical
    across runs with the same config and seed.
    """
    if fmt not in ("json", "csv"):
        raise ValueError(f"unknown format {fmt!r}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    target = out / f"report.{fmt}"
    target.write_text(report.to_json() if fmt == "json" else report_csv(report))
    timings = out / "timings.json"
    timings.write_text(json.dumps(report.wall_times, indent=2) + "\n")
    return [target, timings]
