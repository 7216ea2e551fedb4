"""Utility and risk functionals over composed outcome laws.

All functions are exact expectations/tail statistics over finite supports and
are pure, so candidate portfolios can be scored in parallel.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .distributions import DiscreteOutcomeDistribution, Marginal
from .model import OutcomeVector, Task

RISK_MEASURES = ("deadline_violation_prob", "cvar_time", "cvar_metric")


@dataclass(frozen=True)
class UtilityConfig:
    """Weights of the additive utility decomposition. Lateness is measured in
    deadlines and saturates at `lateness_cap` so that T=+inf stays finite."""

    success_weight: float = 1.0
    lateness_weight: float = 1.0
    violation_weight: float = 1.0
    cost_weight: float = 0.1
    lateness_cap: float = 10.0
    violation_weight_by_metric: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        weights = (
            self.success_weight,
            self.lateness_weight,
            self.violation_weight,
            self.cost_weight,
            self.lateness_cap,
            *self.violation_weight_by_metric.values(),
        )
        if any(w < 0 for w in weights):
            raise ValueError("utility weights must be >= 0")

    def metric_weight(self, name: str) -> float:
        return float(self.violation_weight_by_metric.get(name, self.violation_weight))


@dataclass(frozen=True)
class RiskConfig:
    measure: str = "deadline_violation_prob"
    metric: str | None = None
    cvar_level: float = 0.1
    lambda_: float = 1.0

    def __post_init__(self) -> None:
        if self.measure not in RISK_MEASURES:
            raise ValueError(f"unknown risk measure {self.measure!r}; choose from {RISK_MEASURES}")
        if not (0.0 < self.cvar_level <= 1.0):
            raise ValueError("cvar_level must be in (0, 1]")
        if self.lambda_ < 0:
            raise ValueError("lambda must be >= 0")
        if self.measure == "cvar_metric" and not self.metric:
            raise ValueError("cvar_metric requires a metric name")


def _lateness(times: np.ndarray | float, deadline: float, cap: float) -> np.ndarray | float:
    return np.clip((times - deadline) / deadline, 0.0, cap)


def utility(outcome: OutcomeVector, task: Task, cfg: UtilityConfig, cost: float) -> float:
    """Additive mission utility of one realized outcome: success reward minus
    lateness (in deadlines, capped), metric-limit violations, and cost."""
    u = cfg.success_weight * (1.0 if outcome.success else 0.0)
    u -= cfg.lateness_weight * float(_lateness(outcome.completion_time, task.deadline, cfg.lateness_cap))
    for ml in task.constraints.metric_limits:
        if outcome.metrics.get(ml.metric, 0.0) > ml.limit:
            u -= cfg.metric_weight(ml.metric)
    return u - cfg.cost_weight * cost


def utility_values(
    dist: DiscreteOutcomeDistribution, task: Task, cfg: UtilityConfig, cost: float
) -> np.ndarray:
    u = cfg.success_weight * dist.success.astype(float)
    u = u - cfg.lateness_weight * _lateness(dist.times, task.deadline, cfg.lateness_cap)
    for ml in task.constraints.metric_limits:
        u = u - cfg.metric_weight(ml.metric) * (dist.metric_values(ml.metric) > ml.limit)
    return u - cfg.cost_weight * cost


def expected_utility(
    dist: DiscreteOutcomeDistribution, task: Task, cfg: UtilityConfig, cost: float
) -> float:
    return float(np.dot(utility_values(dist, task, cfg, cost), dist.probs))


def deadline_violation_prob(dist: DiscreteOutcomeDistribution, deadline: float) -> float:
    """Probability mass of atoms that fail or finish after the deadline."""
    return float(dist.probs[~(dist.success & (dist.times <= deadline))].sum())


def cvar(marginal: Marginal, level: float) -> float:
    """Expected value of the worst (largest) `level` fraction of the law.

    Rockafellar-Uryasev tail average with fractional atom splitting; level 1
    recovers the mean.
    """
    if not (0.0 < level <= 1.0):
        raise ValueError("cvar level must be in (0, 1]")
    order = np.argsort(-marginal.values, kind="stable")
    v = marginal.values[order]
    p = marginal.probs[order]
    cum = np.cumsum(p)
    k = min(int(np.searchsorted(cum, level, side="left")), v.size - 1)
    full = float(np.dot(v[:k], p[:k]))
    frac = level - (float(cum[k - 1]) if k > 0 else 0.0)
    return (full + float(v[k]) * frac) / level


def risk_value(dist: DiscreteOutcomeDistribution, task: Task, cfg: RiskConfig) -> float:
    if cfg.measure == "deadline_violation_prob":
        return deadline_violation_prob(dist, task.deadline)
    if cfg.measure == "cvar_time":
        return cvar(dist.time_marginal(), cfg.cvar_level)
    return cvar(dist.metric_marginal(cfg.metric), cfg.cvar_level)


def portfolio_score(
    dist: DiscreteOutcomeDistribution,
    task: Task,
    utility_cfg: UtilityConfig,
    risk_cfg: RiskConfig,
    cost: float,
) -> tuple[float, float, float]:
    """(score, expected utility, risk value) with score = EU - lambda * risk."""
    eu = expected_utility(dist, task, utility_cfg, cost)
    rho = risk_value(dist, task, risk_cfg)
    return eu - risk_cfg.lambda_ * rho, eu, rho


def chance_constraints_hold(
    dist: DiscreteOutcomeDistribution, task: Task
) -> tuple[bool, dict[str, float]]:
    """Check the task's probabilistic constraints against a composed law.

    The deadline constraint is joint: P[success and T <= deadline] must reach
    the required confidence, so a fast failure never satisfies it. Slacks are
    attained minus required, one entry per constraint.
    """
    slacks: dict[str, float] = {}
    attained = dist.prob_success_within(task.deadline)
    slacks["deadline"] = attained - task.constraints.deadline_confidence
    for ml in task.constraints.metric_limits:
        p_ok = float(dist.probs[dist.metric_values(ml.metric) <= ml.limit].sum())
        slacks[f"metric:{ml.metric}"] = p_ok - ml.confidence
    ok = all(s >= -1e-12 for s in slacks.values())
    return ok, slacks
