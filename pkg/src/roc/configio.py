"""Scenario and grid configuration parsing (JSON to dataclasses and back)."""

from __future__ import annotations

import copy
import hashlib
import json
import math
from pathlib import Path
from typing import Any, Mapping

from .agents import AgentProfile, OutcomeGenerator, ReportingProfile, ScalarLaw, SuccessModel
from .calibration import BucketConfig
from .clearinghouse import SolverConfig
from .model import AgentDescriptor
from .protocol import (
    constraints_from_dict,
    constraints_to_dict,
    dumps_canonical,
    option_from_dict,
    option_to_dict,
)
from .risk import RiskConfig, UtilityConfig
from .simulator import (
    ConfigError,
    DeadlineSpec,
    FeatureSpec,
    ScenarioConfig,
    TaskTemplate,
)


def _scalar_law_from_dict(d: Mapping) -> ScalarLaw:
    return ScalarLaw(
        kind=d["kind"],
        median=float(d.get("median", 1.0)),
        sigma=float(d.get("sigma", 0.5)),
        shift=float(d.get("shift", 0.0)),
        mean_excess=float(d.get("mean_excess", 1.0)),
        value=float(d.get("value", 1.0)),
        upper=float(d.get("upper", math.inf)),
        context_coeffs=dict(d.get("context_coeffs", {})),
    )


def _scalar_law_to_dict(law: ScalarLaw) -> dict:
    out: dict[str, Any] = {"kind": law.kind}
    if law.kind == "lognormal":
        out.update(median=law.median, sigma=law.sigma)
    elif law.kind == "shifted_exponential":
        out.update(shift=law.shift, mean_excess=law.mean_excess)
    else:
        out.update(value=law.value)
    if math.isfinite(law.upper):
        out["upper"] = law.upper
    if law.context_coeffs:
        out["context_coeffs"] = dict(law.context_coeffs)
    return out


def _generator_from_dict(d: Mapping) -> OutcomeGenerator:
    success = d.get("success", {})
    return OutcomeGenerator(
        time=_scalar_law_from_dict(d["time"]),
        success=SuccessModel(
            base=float(success.get("base", 1.0)),
            context_coeffs=dict(success.get("context_coeffs", {})),
        ),
        metrics={
            name: _scalar_law_from_dict(m) for name, m in sorted(d.get("metrics", {}).items())
        },
    )


def _generator_to_dict(gen: OutcomeGenerator) -> dict:
    out = {"time": _scalar_law_to_dict(gen.time), "success": {"base": gen.success.base}}
    if gen.success.context_coeffs:
        out["success"]["context_coeffs"] = dict(gen.success.context_coeffs)
    if gen.metrics:
        out["metrics"] = {name: _scalar_law_to_dict(law) for name, law in gen.metrics.items()}
    return out


def profile_from_dict(d: Mapping) -> AgentProfile:
    options = []
    generators = {}
    for od in d.get("options", ()):
        spec_fields = {k: v for k, v in od.items() if k != "ground_truth"}
        options.append(option_from_dict(spec_fields))
        if "ground_truth" in od:
            generators[od["option_id"]] = _generator_from_dict(od["ground_truth"])
    reporting = d.get("reporting", {})
    descriptor = AgentDescriptor(
        agent_id=d["agent_id"],
        kind=d.get("kind", "robot"),
        options=tuple(options),
        roles=frozenset(d.get("roles", ())),
        state=dict(d.get("state", {})),
        tier=d.get("tier", "full"),
    )
    return AgentProfile(
        descriptor=descriptor,
        generators=generators,
        reporting=ReportingProfile(
            kind=reporting.get("kind", "truthful"),
            gamma=float(reporting.get("gamma", 1.0)),
            delta=float(reporting.get("delta", 0.0)),
            jitter=float(reporting.get("jitter", 0.0)),
        ),
        failure_rate_per_hour=float(d.get("failure_rate_per_hour", 0.0)),
    )


def profile_to_dict(profile: AgentProfile) -> dict:
    desc = profile.descriptor
    options = []
    for opt in desc.options:
        od = option_to_dict(opt)
        if opt.option_id in profile.generators:
            od["ground_truth"] = _generator_to_dict(profile.generators[opt.option_id])
        options.append(od)
    out = {
        "agent_id": desc.agent_id,
        "kind": desc.kind,
        "roles": sorted(desc.roles),
        "state": dict(desc.state),
        "tier": desc.tier,
        "options": options,
        "reporting": {
            "kind": profile.reporting.kind,
            "gamma": profile.reporting.gamma,
            "delta": profile.reporting.delta,
            "jitter": profile.reporting.jitter,
        },
        "failure_rate_per_hour": profile.failure_rate_per_hour,
    }
    return out


def _feature_spec_from_dict(d: Mapping) -> FeatureSpec:
    return FeatureSpec(
        kind=d["kind"],
        value=d.get("value"),
        low=float(d.get("low", 0.0)),
        high=float(d.get("high", 1.0)),
        values=tuple(d.get("values", ())),
    )


def _feature_spec_to_dict(spec: FeatureSpec) -> dict:
    if spec.kind == "fixed":
        return {"kind": "fixed", "value": spec.value}
    if spec.kind == "uniform":
        return {"kind": "uniform", "low": spec.low, "high": spec.high}
    return {"kind": "choice", "values": list(spec.values)}


def _template_from_dict(d: Mapping) -> TaskTemplate:
    dl = d["deadline"]
    return TaskTemplate(
        goal_label=d["goal_label"],
        rate_per_hour=float(d["rate_per_hour"]),
        deadline=DeadlineSpec(
            kind=dl.get("kind", "fixed"),
            value=float(dl.get("value", 600.0)),
            low=float(dl.get("low", 0.0)),
            high=float(dl.get("high", 0.0)),
        ),
        constraints=constraints_from_dict(d.get("constraints", {})),
        context_features={
            name: _feature_spec_from_dict(f) for name, f in sorted(d.get("context", {}).items())
        },
    )


def _template_to_dict(tpl: TaskTemplate) -> dict:
    dl: dict[str, Any] = {"kind": tpl.deadline.kind}
    if tpl.deadline.kind == "fixed":
        dl["value"] = tpl.deadline.value
    else:
        dl.update(low=tpl.deadline.low, high=tpl.deadline.high)
    return {
        "goal_label": tpl.goal_label,
        "rate_per_hour": tpl.rate_per_hour,
        "deadline": dl,
        "constraints": constraints_to_dict(tpl.constraints),
        "context": {name: _feature_spec_to_dict(f) for name, f in tpl.context_features.items()},
    }


def scenario_from_dict(d: Mapping) -> ScenarioConfig:
    try:
        solver = d.get("solver", {})
        utility = d.get("utility", {})
        risk = d.get("risk", {})
        bucket = d.get("bucket", {})
        return ScenarioConfig(
            horizon=float(d["horizon"]),
            seed=int(d.get("seed", 0)),
            mechanism=d.get("mechanism", "roc_full"),
            task_templates=tuple(_template_from_dict(t) for t in d["task_templates"]),
            roster=tuple(profile_from_dict(p) for p in d.get("roster", ())),
            joins=tuple(
                (float(j["time"]), profile_from_dict(j["agent"])) for j in d.get("joins", ())
            ),
            resource_pools={k: float(v) for k, v in d.get("resource_pools", {}).items()},
            solver=SolverConfig(
                mode=solver.get("mode", "greedy_plus_local_search"),
                exhaustive_limit=int(solver.get("exhaustive_limit", 10_000)),
                local_search_iters=int(solver.get("local_search_iters", 200)),
                allow_backups=bool(solver.get("allow_backups", True)),
                mc_samples=int(solver.get("mc_samples", 0)),
            ),
            utility=UtilityConfig(
                success_weight=float(utility.get("success_weight", 1.0)),
                lateness_weight=float(utility.get("lateness_weight", 1.0)),
                violation_weight=float(utility.get("violation_weight", 1.0)),
                cost_weight=float(utility.get("cost_weight", 0.1)),
                lateness_cap=float(utility.get("lateness_cap", 10.0)),
                violation_weight_by_metric=dict(utility.get("violation_weight_by_metric", {})),
            ),
            risk=RiskConfig(
                measure=risk.get("measure", "deadline_violation_prob"),
                metric=risk.get("metric"),
                cvar_level=float(risk.get("cvar_level", 0.1)),
                lambda_=float(risk.get("lambda", 1.0)),
            ),
            bucket=BucketConfig(
                ranges={k: (float(v[0]), float(v[1])) for k, v in bucket.get("ranges", {}).items()},
                bins=int(bucket.get("bins", 4)),
                min_count=int(bucket.get("min_count", 5)),
                prior_time_max=(
                    float(bucket["prior_time_max"])
                    if bucket.get("prior_time_max") is not None
                    else None
                ),
                prior_success_prob=float(bucket.get("prior_success_prob", 0.7)),
            ),
            recalibrate_reports=bool(d.get("recalibrate_reports", True)),
            k_min=int(d.get("k_min", 20)),
            clear_tick=float(d.get("clear_tick", 10.0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid scenario config: {exc}") from exc


def scenario_to_dict(config: ScenarioConfig) -> dict:
    return {
        "horizon": config.horizon,
        "seed": config.seed,
        "mechanism": config.mechanism,
        "clear_tick": config.clear_tick,
        "recalibrate_reports": config.recalibrate_reports,
        "k_min": config.k_min,
        "resource_pools": dict(config.resource_pools),
        "solver": {
            "mode": config.solver.mode,
            "exhaustive_limit": config.solver.exhaustive_limit,
            "local_search_iters": config.solver.local_search_iters,
            "allow_backups": config.solver.allow_backups,
            "mc_samples": config.solver.mc_samples,
        },
        "utility": {
            "success_weight": config.utility.success_weight,
            "lateness_weight": config.utility.lateness_weight,
            "violation_weight": config.utility.violation_weight,
            "cost_weight": config.utility.cost_weight,
            "lateness_cap": config.utility.lateness_cap,
            "violation_weight_by_metric": dict(config.utility.violation_weight_by_metric),
        },
        "risk": {
            "measure": config.risk.measure,
            "metric": config.risk.metric,
            "cvar_level": config.risk.cvar_level,
            "lambda": config.risk.lambda_,
        },
        "bucket": {
            "ranges": {k: list(v) for k, v in config.bucket.ranges.items()},
            "bins": config.bucket.bins,
            "min_count": config.bucket.min_count,
            "prior_time_max": config.bucket.prior_time_max,
            "prior_success_prob": config.bucket.prior_success_prob,
        },
        "task_templates": [_template_to_dict(t) for t in config.task_templates],
        "roster": [profile_to_dict(p) for p in config.roster],
        "joins": [
            {"time": t, "agent": profile_to_dict(p)} for t, p in config.joins
        ],
    }


def load_json(path: str | Path) -> dict:
    text = Path(path).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"{path}: malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}"
        ) from exc


def load_scenario(path: str | Path) -> ScenarioConfig:
    return scenario_from_dict(load_json(path))


def apply_override(d: dict, dotted: str, value: Any) -> None:
    parts = dotted.split(".")
    node = d
    for part in parts[:-1]:
        node = node.setdefault(part, {})
    node[parts[-1]] = value


def config_hash(d: Mapping) -> str:
    return hashlib.sha256(dumps_canonical(d).encode()).hexdigest()[:12]


def grid_from_dict(d: Mapping, base_dir: Path | None = None) -> tuple[list[str], list[dict], list[int]]:
    """Expand a grid config into (labels, scenario dicts, seeds).

    The grid is mechanisms x sweep combinations; each combination becomes one
    labeled scenario dict (seed applied later per run)."""
    if "base" in d:
        base = copy.deepcopy(d["base"])
    elif "base_path" in d:
        path = Path(d["base_path"])
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        base = load_json(path)
    else:
        raise ConfigError("grid config needs 'base' or 'base_path'")
    mechanisms = list(d.get("mechanisms", [base.get("mechanism", "roc_full")]))
    seeds = [int(s) for s in d.get("seeds", [base.get("seed", 0)])]
    sweep: Mapping[str, list] = d.get("sweep", {})

    sweep_keys = sorted(sweep)
    combos: list[list[tuple[str, Any]]] = [[]]
    for key in sweep_keys:
        combos = [combo + [(key, v)] for combo in combos for v in sweep[key]]

    labels: list[str] = []
    dicts: list[dict] = []
    for mechanism in mechanisms:
        for combo in combos:
            scenario = copy.deepcopy(base)
            scenario["mechanism"] = mechanism
            suffix = ""
            for key, value in combo:
                apply_override(scenario, key, value)
                suffix += f"-{key.split('.')[-1]}={value}"
            labels.append(f"{mechanism}{suffix}")
            dicts.append(scenario)
    return labels, dicts, seeds
