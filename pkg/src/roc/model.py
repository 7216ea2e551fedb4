"""Domain types shared by the clearinghouse, simulator, and baselines.

Everything here is an immutable value object: construction validates nothing
beyond basic shape, `validate_task` reports invariant violations as data, and
`is_eligible` is the one piece of behavior (initiation-predicate evaluation).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Literal, Mapping

FeatureValue = float | str

AgentKind = Literal["human", "robot", "software"]
Tier = Literal["full", "lite", "min"]

TIERS: tuple[Tier, ...] = ("full", "lite", "min")


class EligibilityError(ValueError):
    """An initiation predicate referenced a field that does not exist."""


@dataclass(frozen=True)
class Context:
    """Named scalar or categorical features observed at assignment time."""

    features: Mapping[str, FeatureValue] = field(default_factory=dict)
    timestamp: float = 0.0


@dataclass(frozen=True)
class Clause:
    """One conjunct of an initiation predicate.

    `source` selects where `name` is looked up: the task context or the
    agent's state mapping. `op` is a comparison against `value`; "in" tests
    membership of the field value in a sequence.
    """

    source: Literal["context", "state"]
    name: str
    op: Literal[">", ">=", "<", "<=", "==", "in"]
    value: Any

    def holds(self, context: Context, state: Mapping[str, FeatureValue]) -> bool:
        pool = context.features if self.source == "context" else state
        if self.name not in pool:
            raise EligibilityError(
                f"initiation predicate references unknown {self.source} field {self.name!r}"
            )
        actual = pool[self.name]
        if self.op == "==":
            return actual == self.value
        if self.op == "in":
            return actual in self.value
        if isinstance(actual, str):
            raise EligibilityError(
                f"ordering comparison {self.op!r} against categorical field {self.name!r}"
            )
        if self.op == ">":
            return actual > self.value
        if self.op == ">=":
            return actual >= self.value
        if self.op == "<":
            return actual < self.value
        return actual <= self.value


@dataclass(frozen=True)
class MetricLimit:
    metric: str
    limit: float
    confidence: float


@dataclass(frozen=True)
class ConstraintSet:
    required_roles: frozenset[str] = frozenset()
    deadline_confidence: float = 0.0
    metric_limits: tuple[MetricLimit, ...] = ()
    resource_demands: Mapping[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class Task:
    id: str
    goal_label: str
    context: Context
    deadline: float
    constraints: ConstraintSet = ConstraintSet()
    arrival_time: float = 0.0

    @property
    def absolute_deadline(self) -> float:
        return self.arrival_time + self.deadline


@dataclass(frozen=True)
class OutcomeVector:
    """Realized (or predicted) result of one attempt: duration, goal success,
    and named cost/risk metric values. completion_time may be +inf for
    attempts that never finish."""

    completion_time: float
    success: bool
    metrics: Mapping[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class OptionSpec:
    option_id: str
    label: str
    initiation: tuple[Clause, ...] = ()
    roles_provided: frozenset[str] = frozenset()
    nominal_cost: float = 0.0
    goals: frozenset[str] = frozenset()  # empty: handles goals named like the option
    metadata: Mapping[str, Any] = field(default_factory=dict)

    def handles_goal(self, goal_label: str) -> bool:
        if self.goals:
            return goal_label in self.goals
        return goal_label in (self.option_id, self.label)


@dataclass(frozen=True)
class AgentDescriptor:
    agent_id: str
    kind: AgentKind
    options: tuple[OptionSpec, ...] = ()
    roles: frozenset[str] = frozenset()
    state: Mapping[str, FeatureValue] = field(default_factory=dict)
    tier: Tier = "full"

    def option(self, option_id: str) -> OptionSpec:
        for opt in self.options:
            if opt.option_id == option_id:
                return opt
        raise KeyError(f"agent {self.agent_id!r} has no option {option_id!r}")


@dataclass(frozen=True)
class Candidate:
    """An eligible (agent, option) pair for one task. `report` is None under
    the min tier until the learned model substitutes one."""

    agent_id: str
    option_id: str
    cost: float
    report: Any = None  # RiskReport; Any avoids a circular import


@dataclass(frozen=True)
class Portfolio:
    task_id: str
    primary: Candidate
    backup: Candidate | None = None
    backup_trigger_time: float = 0.0


@dataclass(frozen=True)
class PortfolioEvaluation:
    score: float
    expected_utility: float
    risk_value: float
    feasible: bool
    slacks: Mapping[str, float] = field(default_factory=dict)
    cost: float = 0.0


@dataclass(frozen=True)
class Schedule:
    portfolios: Mapping[str, Portfolio] = field(default_factory=dict)
    objective_value: float = 0.0
    feasible: bool = True
    diagnostics: Mapping[str, PortfolioEvaluation] = field(default_factory=dict)
    unassigned: tuple[str, ...] = ()


def validate_context(context: Context) -> list[str]:
    violations = []
    if not math.isfinite(context.timestamp) or context.timestamp < 0:
        violations.append("context timestamp must be finite and >= 0")
    for name, value in context.features.items():
        if isinstance(value, bool) or not isinstance(value, (int, float, str)):
            violations.append(f"feature {name!r} must be a real number or a string tag")
        elif isinstance(value, (int, float)) and not math.isfinite(value):
            violations.append(f"feature {name!r} must be finite")
    return violations


def validate_task(task: Task) -> list[str]:
    """Return every invariant violation; the task is valid iff the list is empty."""
    violations = validate_context(task.context)
    if not (task.deadline > 0):
        violations.append("deadline must be > 0")
    if not math.isfinite(task.deadline):
        violations.append("deadline must be finite")
    if task.arrival_time < 0 or not math.isfinite(task.arrival_time):
        violations.append("arrival_time must be finite and >= 0")
    c = task.constraints
    if not (0.0 <= c.deadline_confidence <= 1.0):
        violations.append("deadline confidence outside [0,1]")
    for ml in c.metric_limits:
        if not (0.0 <= ml.confidence <= 1.0):
            violations.append(f"confidence outside [0,1] for metric {ml.metric!r}")
        if not math.isfinite(ml.limit):
            violations.append(f"limit for metric {ml.metric!r} must be finite")
    for pool, amount in c.resource_demands.items():
        if amount < 0 or not math.isfinite(amount):
            violations.append(f"resource demand for {pool!r} must be finite and >= 0")
    return violations


def validate_agent(agent: AgentDescriptor) -> list[str]:
    violations = []
    if agent.kind not in ("human", "robot", "software"):
        violations.append(f"unknown agent kind {agent.kind!r}")
    if agent.tier not in TIERS:
        violations.append(f"unknown tier {agent.tier!r}")
    seen: set[str] = set()
    for option in agent.options:
        if option.option_id in seen:
            violations.append(f"duplicate option_id {option.option_id!r}")
        seen.add(option.option_id)
        if option.nominal_cost < 0 or not math.isfinite(option.nominal_cost):
            violations.append(f"option {option.option_id!r} cost must be finite and >= 0")
    return violations


def is_eligible(agent: AgentDescriptor, option: OptionSpec, task: Task) -> bool:
    """True iff the option's initiation predicate holds on (task context,
    agent state) and the task's required roles are covered by the agent plus
    the option. Deterministic; raises EligibilityError on unknown fields."""
    if option.option_id not in {o.option_id for o in agent.options}:
        raise ValueError(
            f"option {option.option_id!r} is not advertised by agent {agent.agent_id!r}"
        )
    required = task.constraints.required_roles
    if not required <= (agent.roles | option.roles_provided):
        return False
    return all(clause.holds(task.context, agent.state) for clause in option.initiation)


def capacity_violations(
    portfolios: Mapping[str, Portfolio], capacity: int = 1
) -> list[str]:
    """Check the schedule capacity invariant in O(|portfolios|): every agent
    occupies at most `capacity` slots counting both primary and backup roles."""
    load: dict[str, int] = {}
    violations = []
    for portfolio in portfolios.values():
        load[portfolio.primary.agent_id] = load.get(portfolio.primary.agent_id, 0) + 1
        if portfolio.backup is not None:
            load[portfolio.backup.agent_id] = load.get(portfolio.backup.agent_id, 0) + 1
    for agent_id, used in sorted(load.items()):
        if used > capacity:
            violations.append(f"agent {agent_id!r} holds {used} slots (capacity {capacity})")
    return violations
