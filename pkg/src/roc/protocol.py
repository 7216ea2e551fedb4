"""Wire formats: canonical JSON encode/decode for the five message types.

Messages: OptionAdvertisement, TaskAnnouncement, RiskReport, DispatchMessage,
OutcomeReport. Encoding is canonical (sorted keys, compact separators), so
decode(encode(v)) == v and re-encoding is byte-identical. Field names mirror
the domain types in snake_case; risk report atoms use the compact keys
{"t", "s", "metrics", "p"}.
"""

from __future__ import annotations

import json
from typing import Any, Mapping

from .distributions import DiscreteOutcomeDistribution, QuantileSummary, RiskReport
from .model import (
    AgentDescriptor,
    Candidate,
    Clause,
    ConstraintSet,
    Context,
    MetricLimit,
    OptionSpec,
    OutcomeVector,
    Portfolio,
    Task,
)


def dumps_canonical(payload: Any) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def message_bytes(payload: Mapping[str, Any]) -> int:
    return len(dumps_canonical(payload).encode())


# -- context / task -----------------------------------------------------------


def context_to_dict(context: Context) -> dict:
    return {"features": dict(context.features), "timestamp": context.timestamp}


def context_from_dict(d: Mapping) -> Context:
    return Context(features=dict(d["features"]), timestamp=float(d["timestamp"]))


def _clause_to_dict(c: Clause) -> dict:
    value = list(c.value) if isinstance(c.value, (list, tuple)) else c.value
    return {"source": c.source, "name": c.name, "op": c.op, "value": value}


def _clause_from_dict(d: Mapping) -> Clause:
    value = d["value"]
    if isinstance(value, list):
        value = tuple(value)
    return Clause(source=d["source"], name=d["name"], op=d["op"], value=value)


def constraints_to_dict(c: ConstraintSet) -> dict:
    return {
        "required_roles": sorted(c.required_roles),
        "deadline_confidence": c.deadline_confidence,
        "metric_limits": [
            {"metric": ml.metric, "limit": ml.limit, "confidence": ml.confidence}
            for ml in c.metric_limits
        ],
        "resource_demands": dict(c.resource_demands),
    }


def constraints_from_dict(d: Mapping) -> ConstraintSet:
    return ConstraintSet(
        required_roles=frozenset(d.get("required_roles", ())),
        deadline_confidence=float(d.get("deadline_confidence", 0.0)),
        metric_limits=tuple(
            MetricLimit(m["metric"], float(m["limit"]), float(m["confidence"]))
            for m in d.get("metric_limits", ())
        ),
        resource_demands={k: float(v) for k, v in d.get("resource_demands", {}).items()},
    )


def task_to_dict(task: Task) -> dict:
    return {
        "id": task.id,
        "goal_label": task.goal_label,
        "context": context_to_dict(task.context),
        "deadline": task.deadline,
        "constraints": constraints_to_dict(task.constraints),
        "arrival_time": task.arrival_time,
    }


def task_from_dict(d: Mapping) -> Task:
    return Task(
        id=d["id"],
        goal_label=d["goal_label"],
        context=context_from_dict(d["context"]),
        deadline=float(d["deadline"]),
        constraints=constraints_from_dict(d["constraints"]),
        arrival_time=float(d.get("arrival_time", 0.0)),
    )


# -- option advertisement ------------------------------------------------------


def option_to_dict(opt: OptionSpec) -> dict:
    return {
        "option_id": opt.option_id,
        "label": opt.label,
        "initiation": [_clause_to_dict(c) for c in opt.initiation],
        "roles_provided": sorted(opt.roles_provided),
        "nominal_cost": opt.nominal_cost,
        "goals": sorted(opt.goals),
        "metadata": dict(opt.metadata),
    }


def option_from_dict(d: Mapping) -> OptionSpec:
    return OptionSpec(
        option_id=d["option_id"],
        label=d["label"],
        initiation=tuple(_clause_from_dict(c) for c in d.get("initiation", ())),
        roles_provided=frozenset(d.get("roles_provided", ())),
        nominal_cost=float(d.get("nominal_cost", 0.0)),
        goals=frozenset(d.get("goals", ())),
        metadata=dict(d.get("metadata", {})),
    )


def advertisement_to_dict(agent: AgentDescriptor) -> dict:
    return {
        "agent_id": agent.agent_id,
        "kind": agent.kind,
        "roles": sorted(agent.roles),
        "options": [option_to_dict(o) for o in agent.options],
    }


def advertisement_from_dict(d: Mapping) -> AgentDescriptor:
    return AgentDescriptor(
        agent_id=d["agent_id"],
        kind=d["kind"],
        options=tuple(option_from_dict(o) for o in d["options"]),
        roles=frozenset(d.get("roles", ())),
    )


# -- risk report ----------------------------------------------------------------


def outcome_to_dict(outcome: OutcomeVector) -> dict:
    return {
        "completion_time": outcome.completion_time,
        "success": outcome.success,
        "metrics": dict(outcome.metrics),
    }


def outcome_from_dict(d: Mapping) -> OutcomeVector:
    return OutcomeVector(
        completion_time=float(d["completion_time"]),
        success=bool(d["success"]),
        metrics={k: float(v) for k, v in d.get("metrics", {}).items()},
    )


def _summary_to_dict(s: QuantileSummary) -> dict:
    return {
        "time_quantiles": [[l, v] for l, v in s.time_quantiles],
        "success_prob": s.success_prob,
        "metric_quantiles": {
            name: [[l, v] for l, v in grid] for name, grid in s.metric_quantiles.items()
        },
        "cost": s.cost,
    }


def _summary_from_dict(d: Mapping) -> QuantileSummary:
    return QuantileSummary(
        time_quantiles=tuple((float(l), float(v)) for l, v in d["time_quantiles"]),
        success_prob=float(d["success_prob"]),
        metric_quantiles={
            name: tuple((float(l), float(v)) for l, v in grid)
            for name, grid in d.get("metric_quantiles", {}).items()
        },
        cost=float(d.get("cost", 0.0)),
    )


def risk_report_to_dict(report: RiskReport) -> dict:
    out: dict = {"tier": report.tier}
    if report.distribution is not None:
        out["atoms"] = [
            {
                "t": outcome.completion_time,
                "s": outcome.success,
                "metrics": dict(outcome.metrics),
                "p": p,
            }
            for outcome, p in report.distribution.atoms
        ]
    if report.summary is not None:
        out["summary"] = _summary_to_dict(report.summary)
    return out


def risk_report_from_dict(d: Mapping) -> RiskReport:
    tier = d["tier"]
    dist = None
    summary = None
    if "atoms" in d:
        dist = DiscreteOutcomeDistribution.from_atoms(
            (
                OutcomeVector(float(a["t"]), bool(a["s"]), {k: float(v) for k, v in a.get("metrics", {}).items()}),
                float(a["p"]),
            )
            for a in d["atoms"]
        )
    if "summary" in d:
        summary = _summary_from_dict(d["summary"])
    return RiskReport(tier=tier, distribution=dist, summary=summary)


# -- dispatch / outcome report ----------------------------------------------------


def candidate_to_dict(c: Candidate) -> dict:
    return {
        "agent_id": c.agent_id,
        "option_id": c.option_id,
        "cost": c.cost,
        "report": risk_report_to_dict(c.report) if c.report is not None else None,
    }


def candidate_from_dict(d: Mapping) -> Candidate:
    report = d.get("report")
    return Candidate(
        agent_id=d["agent_id"],
        option_id=d["option_id"],
        cost=float(d["cost"]),
        report=risk_report_from_dict(report) if report is not None else None,
    )


def portfolio_to_dict(p: Portfolio) -> dict:
    return {
        "task_id": p.task_id,
        "primary": candidate_to_dict(p.primary),
        "backup": candidate_to_dict(p.backup) if p.backup is not None else None,
        "backup_trigger_time": p.backup_trigger_time,
    }


def portfolio_from_dict(d: Mapping) -> Portfolio:
    backup = d.get("backup")
    return Portfolio(
        task_id=d["task_id"],
        primary=candidate_from_dict(d["primary"]),
        backup=candidate_from_dict(backup) if backup is not None else None,
        backup_trigger_time=float(d.get("backup_trigger_time", 0.0)),
    )


def dispatch_to_dict(task_id: str, portfolio: Portfolio) -> dict:
    return {"task_id": task_id, "portfolio": portfolio_to_dict(portfolio)}


def dispatch_from_dict(d: Mapping) -> tuple[str, Portfolio]:
    return d["task_id"], portfolio_from_dict(d["portfolio"])


def outcome_report_to_dict(
    task_id: str, agent_id: str, option_id: str, outcome: OutcomeVector
) -> dict:
    return {
        "task_id": task_id,
        "agent_id": agent_id,
        "option_id": option_id,
        "outcome": outcome_to_dict(outcome),
    }


def outcome_report_from_dict(d: Mapping) -> tuple[str, str, str, OutcomeVector]:
    return d["task_id"], d["agent_id"], d["option_id"], outcome_from_dict(d["outcome"])
