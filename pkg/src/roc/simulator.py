"""Seeded discrete-event simulation of the disaster-response benchmark.

One run is single-threaded and fully deterministic given its seed: task
arrivals, contexts, executions, failures, and contract-net declines each draw
from their own child stream of the run seed. The event loop drives the
clearing state machine through arrival/outcome/failure/tick events; metrics,
an event log (which doubles as the message log), a decision log, and the
calibration ledger come out.
"""

from __future__ import annotations

import heapq
import math
import time as _time
from dataclasses import dataclass, field, replace
from typing import Any, Mapping, Sequence

import numpy as np

from . import protocol
from .agents import AgentProfile, execute, report as agent_report
from .baselines import (
    central_nodl_clear,
    contract_net_clear,
    scalar_auction_clear,
    scalar_bid_from_report,
)
from .calibration import BucketConfig, CalibrationLedger, LedgerRecord, fit_empirical_model
from .clearinghouse import (
    AgentFailureEvent,
    ClearingConfig,
    ClearingState,
    OutcomeEvent,
    ResourcePool,
    RoundResult,
    SolverConfig,
    TaskArrivalEvent,
    TickEvent,
    activate_backup,
    clear_with_audit,
    reclear_on_event,
)
from .model import (
    ConstraintSet,
    Context,
    OutcomeVector,
    Portfolio,
    Task,
    is_eligible,
    validate_agent,
)
from .risk import RiskConfig, UtilityConfig, utility as realized_utility

MECHANISMS = ("roc_full", "roc_lite", "roc_min", "auction", "contract_net", "central_nodl")

_CLEARING_MECHANISMS = ("roc_full", "roc_lite", "roc_min", "central_nodl")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureSpec:
    kind: str  # fixed | uniform | choice
    value: float | str | None = None
    low: float = 0.0
    high: float = 1.0
    values: tuple = ()

    def draw(self, rng: np.random.Generator):
        if self.kind == "fixed":
            return self.value
        if self.kind == "uniform":
            return float(rng.uniform(self.low, self.high))
        if self.kind == "choice":
            return self.values[int(rng.integers(len(self.values)))]
        raise ConfigError(f"unknown feature spec kind {self.kind!r}")


@dataclass(frozen=True)
class DeadlineSpec:
    kind: str = "fixed"  # fixed | uniform
    value: float = 600.0
    low: float = 0.0
    high: float = 0.0

    def draw(self, rng: np.random.Generator) -> float:
        if self.kind == "fixed":
            return self.value
        if self.kind == "uniform":
            return float(rng.uniform(self.low, self.high))
        raise ConfigError(f"unknown deadline spec kind {self.kind!r}")


@dataclass(frozen=True)
class TaskTemplate:
    goal_label: str
    rate_per_hour: float
    deadline: DeadlineSpec
    constraints: ConstraintSet = ConstraintSet()
    context_features: Mapping[str, FeatureSpec] = field(default_factory=dict)


@dataclass(frozen=True)
class ScenarioConfig:
    horizon: float
    seed: int
    mechanism: str
    task_templates: tuple[TaskTemplate, ...]
    roster: tuple[AgentProfile, ...]
    joins: tuple[tuple[float, AgentProfile], ...] = ()
    resource_pools: Mapping[str, float] = field(default_factory=dict)
    solver: SolverConfig = SolverConfig()
    utility: UtilityConfig = UtilityConfig()
    risk: RiskConfig = RiskConfig()
    bucket: BucketConfig = BucketConfig()
    recalibrate_reports: bool = True
    k_min: int = 20
    clear_tick: float = 10.0


def validate_config(config: ScenarioConfig) -> list[str]:
    problems = []
    if not (config.horizon > 0):
        problems.append("horizon must be > 0")
    if config.mechanism not in MECHANISMS:
        problems.append(f"unknown mechanism {config.mechanism!r}; choose from {MECHANISMS}")
    if not config.task_templates:
        problems.append("at least one task template is required")
    for tpl in config.task_templates:
        if tpl.rate_per_hour < 0:
            problems.append(f"template {tpl.goal_label!r}: arrival rate must be >= 0")
    if not config.roster and not config.joins:
        problems.append("roster is empty")
    seen = set()
    for profile in config.roster:
        aid = profile.descriptor.agent_id
        if aid in seen:
            problems.append(f"duplicate agent_id {aid!r}")
        seen.add(aid)
        problems.extend(f"{aid}: {v}" for v in validate_agent(profile.descriptor))
    if config.clear_tick <= 0:
        problems.append("clear_tick must be > 0")
    return problems


@dataclass(frozen=True)
class MetricsReport:
    mechanism: str
    seed: int
    n_tasks: int
    n_success: int
    n_deadline_violations: int
    n_safety_violations: int
    mission_success_rate: float | None
    deadline_violation_rate: float | None
    safety_violation_rate: float | None
    mean_risk_adjusted_utility: float | None
    mean_reassignment_latency: float | None
    message_count: int
    message_bytes: int
    mean_brier: float | None
    mean_crps: float | None


METRIC_COLUMNS = (
    "mechanism",
    "seed",
    "n_tasks",
    "n_success",
    "n_deadline_violations",
    "n_safety_violations",
    "mission_success_rate",
    "deadline_violation_rate",
    "safety_violation_rate",
    "mean_risk_adjusted_utility",
    "mean_reassignment_latency",
    "message_count",
    "message_bytes",
    "mean_brier",
    "mean_crps",
)

AGGREGATE_METRICS = METRIC_COLUMNS[2:]


@dataclass
class RunResult:
    metrics: MetricsReport
    events: list[dict]
    ledger: CalibrationLedger
    decisions: list[dict]
    solver_wall_time: float


@dataclass
class _TaskRecord:
    task: Task
    first_dispatch: float | None = None
    attempts: int = 0
    realized_cost: float = 0.0
    completed_at: float | None = None
    success: bool = False
    metrics: dict[str, float] = field(default_factory=dict)
    terminal: str | None = None  # completed | failed | expired | horizon


def _hash64(label: str) -> int:
    import hashlib

    return int.from_bytes(hashlib.sha256(label.encode()).digest()[:8], "big")


_EVENT_PRIORITY = {
    "exec_complete": 0,
    "agent_failure": 1,
    "backup_trigger": 2,
    "arrival": 3,
    "join": 4,
    "tick": 5,
}


class _Sim:
    def __init__(self, config: ScenarioConfig, warm_ledger: CalibrationLedger | None = None):
        problems = validate_config(config)
        if problems:
            raise ConfigError("; ".join(problems))
        self.config = config
        self.ledger = warm_ledger if warm_ledger is not None else CalibrationLedger()
        self.state = ClearingState(
            resource_pools={name: ResourcePool(budget) for name, budget in sorted(config.resource_pools.items())}
        )
        self.profiles: dict[str, AgentProfile] = {}
        self.events: list[dict] = []
        self.decisions: list[dict] = []
        self.queue: list[tuple[float, int, int, str, Any]] = []
        self._seq = 0
        self._epoch = 0
        self.task_records: dict[str, _TaskRecord] = {}
        self.attempt_reports: dict[tuple[str, str, str], Any] = {}
        self.task_epochs: dict[str, int] = {}
        self.message_count = 0
        self.message_bytes = 0
        self.bucket = config.bucket
        if config.mechanism == "roc_min" and self.bucket.prior_time_max is None:
            # scale the cold-start prior to the tightest deadline on offer so
            # the learner scores its first candidates above zero and explores
            tightest = min(
                (tpl.deadline.value if tpl.deadline.kind == "fixed"
                 else (tpl.deadline.low + tpl.deadline.high) / 2.0)
                for tpl in config.task_templates
            )
            self.bucket = replace(self.bucket, prior_time_max=float(tightest))
        self.clearing_config = ClearingConfig(
            solver=config.solver,
            utility=config.utility,
            risk=config.risk,
            recalibrate_reports=config.recalibrate_reports
            and config.mechanism in ("roc_full", "roc_lite"),
            k_min=config.k_min,
        )
        self._decline_rng = np.random.default_rng(
            np.random.SeedSequence((config.seed, 5))
        )
        self._model = None
        self._model_dirty = True
        self.solver_wall_time = 0.0
        self._now = 0.0

        tier = {"roc_full": "full", "roc_lite": "lite", "roc_min": "min"}.get(config.mechanism, "full")
        for profile in config.roster:
            self._register(profile, tier, at=0.0)
        for join_time, profile in config.joins:
            self._push(join_time, "join", (profile, tier))

        self._generate_arrivals()
        t = config.clear_tick
        while t <= config.horizon:
            self._push(t, "tick", None)
            t += config.clear_tick

    # -- plumbing -------------------------------------------------------------

    def _push(self, when: float, kind: str, payload: Any) -> None:
        self._seq += 1
        heapq.heappush(self.queue, (when, _EVENT_PRIORITY[kind], self._seq, kind, payload))

    def _log(self, t: float, kind: str, payload: dict) -> None:
        entry = {"t": t, "kind": kind}
        entry.update(payload)
        self.events.append(entry)

    def _log_message(self, t: float, kind: str, payload: dict) -> None:
        self._log(t, kind, payload)
        self.message_count += 1
        self.message_bytes += protocol.message_bytes(payload)

    def _register(self, profile: AgentProfile, tier: str, at: float) -> None:
        descriptor = replace(profile.descriptor, tier=tier)
        profile = replace(profile, descriptor=descriptor)
        self.profiles[descriptor.agent_id] = profile
        self.state.registry[descriptor.agent_id] = descriptor
        if profile.failure_rate_per_hour > 0:
            rng = np.random.default_rng(
                np.random.SeedSequence((self.config.seed, 301, _hash64(descriptor.agent_id)))
            )
            delay = float(rng.exponential(3600.0 / profile.failure_rate_per_hour))
            if at + delay <= self.config.horizon:
                self._push(at + delay, "agent_failure", descriptor.agent_id)

    def _generate_arrivals(self) -> None:
        for idx, tpl in enumerate(self.config.task_templates):
            if tpl.rate_per_hour <= 0:
                continue
            rng = np.random.default_rng(np.random.SeedSequence((self.config.seed, 101, idx)))
            t = 0.0
            i = 0
            while True:
                t += float(rng.exponential(3600.0 / tpl.rate_per_hour))
                if t > self.config.horizon:
                    break
                features = {
                    name: spec.draw(rng) for name, spec in sorted(tpl.context_features.items())
                }
                task = Task(
                    id=f"t{idx:02d}-{i:04d}",
                    goal_label=tpl.goal_label,
                    context=Context(features=features, timestamp=t),
                    deadline=tpl.deadline.draw(rng),
                    constraints=tpl.constraints,
                    arrival_time=t,
                )
                self._push(t, "arrival", task)
                i += 1

    # -- report / bid collection ---------------------------------------------

    def _eligible_pairs(self, task: Task):
        for agent_id in sorted(self.state.registry):
            if agent_id in self.state.busy or agent_id in self.state.failed_agents:
                continue
            agent = self.state.registry[agent_id]
            for option in sorted(agent.options, key=lambda o: o.option_id):
                if option.handles_goal(task.goal_label) and is_eligible(agent, option, task):
                    yield agent_id, option

    def _collect_reports(self, task: Task, now: float) -> dict[tuple[str, str], Any]:
        """Gather predictive responses for one pending task, logging each
        response as a message. The min tier sends nothing."""
        mechanism = self.config.mechanism
        table: dict[tuple[str, str], Any] = {}
        for agent_id, option in self._eligible_pairs(task):
            profile = self.profiles[agent_id]
            if mechanism == "roc_min":
                continue
            rep = agent_report(profile, option.option_id, task.context)
            if mechanism in _CLEARING_MECHANISMS:
                table[(agent_id, option.option_id)] = rep
                self._log_message(
                    now,
                    "risk_report",
                    {
                        "task_id": task.id,
                        "agent_id": agent_id,
                        "option_id": option.option_id,
                        "report": protocol.risk_report_to_dict(rep),
                    },
                )
            else:
                cost = option.nominal_cost
                if rep.summary is not None and rep.summary.cost > 0:
                    cost = rep.summary.cost
                bid = scalar_bid_from_report(agent_id, option.option_id, rep, cost, task)
                table[(agent_id, option.option_id)] = bid
                self._log_message(
                    now,
                    "risk_report",
                    {
                        "task_id": task.id,
                        "agent_id": agent_id,
                        "option_id": option.option_id,
                        "bid": {"expected_time": bid.expected_time, "cost": bid.cost},
                    },
                )
        return table

    def _current_model(self):
        if self.config.mechanism != "roc_min":
            return None
        if self._model_dirty:
            self._model = fit_empirical_model(self.ledger, self.bucket)
            self._model_dirty = False
        return self._model

    # -- mechanism adapters -----------------------------------------------------

    def _solve(self, state: ClearingState, pending: list[Task], table: Mapping) -> Any:
        mechanism = self.config.mechanism
        start = _time.perf_counter()
        try:
            if mechanism == "auction":
                bids = {
                    t.id: [table[t.id][k] for k in sorted(table[t.id])] for t in pending
                }
                return scalar_auction_clear(
                    state, pending, bids, cost_weight=self.config.utility.cost_weight
                )
            if mechanism == "contract_net":
                bids = {
                    t.id: [table[t.id][k] for k in sorted(table[t.id])] for t in pending
                }
                return contract_net_clear(state, pending, bids, self._decline_rng)
            if mechanism == "central_nodl":
                return central_nodl_clear(
                    state, table, self.clearing_config, tasks=pending, ledger=self.ledger
                )
            schedule, tables, candidates = clear_with_audit(
                state,
                table,
                self.clearing_config,
                tasks=pending,
                model=self._current_model(),
                ledger=self.ledger,
            )
            self._log_decisions(pending, schedule, tables, candidates)
            return schedule
        finally:
            self.solver_wall_time += _time.perf_counter() - start

    def _log_decisions(self, pending, schedule, tables, candidates) -> None:
        if not pending:
            return
        tasks_payload = {}
        for task in pending:
            rows = []
            for portfolio, ev in tables.get(task.id, ()):
                rows.append(
                    {
                        "portfolio": protocol.portfolio_to_dict(portfolio),
                        "score": ev.score,
                        "expected_utility": ev.expected_utility,
                        "risk_value": ev.risk_value,
                        "feasible": ev.feasible,
                        "slacks": dict(ev.slacks),
                        "cost": ev.cost,
                    }
                )
            chosen = schedule.portfolios.get(task.id)
            tasks_payload[task.id] = {
                "task": protocol.task_to_dict(task),
                "candidates": [
                    protocol.candidate_to_dict(c) for c in candidates.get(task.id, ())
                ],
                "portfolios": rows,
                "chosen": protocol.portfolio_to_dict(chosen) if chosen else None,
            }
        self.decisions.append(
            {
                "kind": "round",
                "round": self.state.round_counter,
                "t": self._now,
                "mechanism": self.config.mechanism,
                "tasks": tasks_payload,
            }
        )

    # -- attempt execution --------------------------------------------------------

    def _start_attempt(self, task_id: str, portfolio: Portfolio, phase: str, now: float) -> None:
        candidate = portfolio.primary if phase == "primary" else portfolio.backup
        assert candidate is not None
        record = self.task_records[task_id]
        task = record.task
        profile = self.profiles[candidate.agent_id]
        # keyed per (agent, task, attempt) so identical work draws identical
        # outcomes across mechanisms, which tightens paired comparisons
        rng = np.random.default_rng(
            np.random.SeedSequence(
                (self.config.seed, 201, _hash64(f"{candidate.agent_id}|{task_id}"), record.attempts)
            )
        )
        realized = execute(profile, candidate.option_id, task.context, rng)
        record.attempts += 1
        record.realized_cost += candidate.cost
        self.attempt_reports[(task_id, candidate.agent_id, candidate.option_id)] = candidate.report
        if math.isfinite(realized.completion_time):
            self._push(
                now + realized.completion_time,
                "exec_complete",
                (task_id, candidate.agent_id, candidate.option_id, realized, self._epoch),
            )

    def _handle_dispatches(self, dispatches: list[tuple[str, Portfolio, str]], now: float) -> None:
        for task_id, portfolio, phase in dispatches:
            record = self.task_records[task_id]
            if phase == "primary":
                self._epoch += 1
                self.task_epochs[task_id] = self._epoch
                assignment = self.state.executing.get(task_id)
                if assignment is not None:
                    assignment.epoch = self._epoch
                if record.first_dispatch is None:
                    record.first_dispatch = now
                self._log_message(
                    now, "dispatch", protocol.dispatch_to_dict(task_id, portfolio)
                )
                if portfolio.backup is not None:
                    self._push(
                        now + portfolio.backup_trigger_time,
                        "backup_trigger",
                        (task_id, self.task_epochs[task_id]),
                    )
            else:
                self._log_message(
                    now, "dispatch", protocol.dispatch_to_dict(task_id, portfolio)
                )
                self._log(now, "backup_activation", {"task_id": task_id})
            self._start_attempt(task_id, portfolio, phase, now)

    def _handle_finished(self, result: RoundResult, now: float) -> None:
        for task_id, cause in result.finished:
            record = self.task_records[task_id]
            if record.terminal is not None:
                continue
            record.terminal = cause
            if cause == "completed":
                record.success = True
                record.completed_at = now
                self._log(now, "task_completed", {"task_id": task_id})
            else:
                self._log(now, "task_" + cause, {"task_id": task_id})

    def _record_attempt_outcome(
        self, task_id: str, agent_id: str, option_id: str, realized: OutcomeVector, now: float
    ) -> None:
        record = self.task_records[task_id]
        for name, value in realized.metrics.items():
            record.metrics[name] = max(record.metrics.get(name, -math.inf), value)
        self._log_message(
            now,
            "outcome_report",
            protocol.outcome_report_to_dict(task_id, agent_id, option_id, realized),
        )
        rep = self.attempt_reports.get((task_id, agent_id, option_id))
        if rep is not None:
            self.ledger.record_outcome(
                LedgerRecord(
                    task_id=task_id,
                    agent_id=agent_id,
                    option_id=option_id,
                    context=record.task.context,
                    report=rep,
                    realized=realized,
                    timestamp=now,
                    attempt=record.attempts,
                )
            )
            self._model_dirty = True

    # -- event handlers ----------------------------------------------------------

    def _reclear(self, event, now: float) -> None:
        result = reclear_on_event(
            self.state,
            event,
            self.clearing_config,
            lambda task: self._collect_reports(task, now),
            model=self._current_model(),
            ledger=self.ledger,
            solve=self._solve,
        )
        for task_id, agent_id, option_id in result.aborted_attempts:
            self._record_attempt_outcome(
                task_id, agent_id, option_id, OutcomeVector(math.inf, False, {}), now
            )
        self._handle_finished(result, now)
        self._handle_dispatches(result.dispatches, now)

    def run(self) -> RunResult:
        config = self.config
        while self.queue:
            when, _prio, _seq, kind, payload = heapq.heappop(self.queue)
            if when > config.horizon:
                break
            self._now = when
            if kind == "arrival":
                task: Task = payload
                self.task_records[task.id] = _TaskRecord(task=task)
                self._log_message(when, "announce", protocol.task_to_dict(task))
                self._reclear(TaskArrivalEvent(task=task, time=when), when)
            elif kind == "tick":
                self._reclear(TickEvent(time=when), when)
            elif kind == "join":
                profile, tier = payload
                self._register(profile, tier, at=when)
                self._log(when, "agent_join", {"agent_id": profile.descriptor.agent_id})
                self._reclear(TickEvent(time=when), when)
            elif kind == "agent_failure":
                agent_id = payload
                self._log(when, "agent_failure", {"agent_id": agent_id})
                self._reclear(AgentFailureEvent(agent_id=agent_id, time=when), when)
            elif kind == "backup_trigger":
                task_id, epoch = payload
                if self.task_epochs.get(task_id) != epoch:
                    continue
                dispatch = activate_backup(self.state, task_id)
                if dispatch is not None:
                    self._handle_dispatches([dispatch], when)
            elif kind == "exec_complete":
                task_id, agent_id, option_id, realized, _epoch = payload
                assignment = self.state.executing.get(task_id)
                if assignment is None or agent_id not in assignment.running:
                    continue  # attempt was aborted or task already finished
                self._record_attempt_outcome(task_id, agent_id, option_id, realized, when)
                self._reclear(
                    OutcomeEvent(
                        task_id=task_id,
                        agent_id=agent_id,
                        option_id=option_id,
                        outcome=realized,
                        time=when,
                    ),
                    when,
                )
        # horizon: anything unfinished counts as a failure
        for task_id, record in sorted(self.task_records.items()):
            if record.terminal is None:
                record.terminal = "horizon"
                self._log(config.horizon, "task_horizon_truncated", {"task_id": task_id})
        self._log(config.horizon, "run_end", {"tasks": len(self.task_records)})
        return RunResult(
            metrics=self._metrics(),
            events=self.events,
            ledger=self.ledger,
            decisions=self.decisions,
            solver_wall_time=self.solver_wall_time,
        )

    # -- metrics -----------------------------------------------------------------

    def _metrics(self) -> MetricsReport:
        config = self.config
        records = list(self.task_records.values())
        n = len(records)
        n_success = sum(1 for r in records if r.success)
        violations = 0
        safety = 0
        utilities = []
        latencies = []
        for r in records:
            completion = (
                r.completed_at - r.task.arrival_time
                if (r.success and r.completed_at is not None)
                else math.inf
            )
            violated = not (r.success and completion <= r.task.deadline)
            violations += violated
            if any(
                r.metrics.get(ml.metric, 0.0) > ml.limit
                for ml in r.task.constraints.metric_limits
            ):
                safety += 1
            outcome = OutcomeVector(
                completion_time=completion, success=r.success, metrics=dict(r.metrics)
            )
            u = realized_utility(outcome, r.task, config.utility, r.realized_cost)
            utilities.append(u - config.risk.lambda_ * (1.0 if violated else 0.0))
            if r.first_dispatch is not None:
                latencies.append(r.first_dispatch - r.task.arrival_time)

        brier_sum = crps_sum = 0.0
        brier_n = crps_n = 0
        for stats in self.ledger.all_stats().values():
            brier_sum += stats.brier_sum
            brier_n += stats.brier_count
            crps_sum += stats.crps_sum
            crps_n += stats.crps_count

        def rate(x: int) -> float | None:
            return x / n if n else None

        return MetricsReport(
            mechanism=config.mechanism,
            seed=config.seed,
            n_tasks=n,
            n_success=n_success,
            n_deadline_violations=violations,
            n_safety_violations=safety,
            mission_success_rate=rate(n_success),
            deadline_violation_rate=rate(violations),
            safety_violation_rate=rate(safety),
            mean_risk_adjusted_utility=(sum(utilities) / n) if n else None,
            mean_reassignment_latency=(sum(latencies) / len(latencies)) if latencies else None,
            message_count=self.message_count,
            message_bytes=self.message_bytes,
            mean_brier=(brier_sum / brier_n) if brier_n else None,
            mean_crps=(crps_sum / crps_n) if crps_n else None,
        )


def run(config: ScenarioConfig, *, warm_ledger: CalibrationLedger | None = None) -> RunResult:
    """Execute one seeded scenario; deterministic given (config, seed)."""
    return _Sim(config, warm_ledger=warm_ledger).run()


def metrics_to_row(metrics: MetricsReport) -> dict[str, Any]:
    return {name: getattr(metrics, name) for name in METRIC_COLUMNS}


def _run_indexed(args: tuple[int, int, ScenarioConfig]) -> tuple[int, int, MetricsReport]:
    config_idx, seed_idx, config = args
    return config_idx, seed_idx, run(config).metrics


def run_grid(
    configs: Sequence[ScenarioConfig],
    seeds: Sequence[int],
    *,
    jobs: int = 1,
    labels: Sequence[str] | None = None,
) -> tuple[list[dict], list[dict]]:
    """Cartesian product of configs x seeds; returns (per-run rows, aggregate
    rows with mean and standard error per metric), ordered by configuration
    index then seed index."""
    if not seeds:
        raise ConfigError("at least one seed is required")
    if labels is None:
        labels = [f"cfg{idx:02d}" for idx in range(len(configs))]
    work = [
        (ci, si, replace(config, seed=int(seed)))
        for ci, config in enumerate(configs)
        for si, seed in enumerate(seeds)
    ]
    results: dict[tuple[int, int], MetricsReport] = {}
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for ci, si, metrics in pool.map(_run_indexed, work):
                results[(ci, si)] = metrics
    else:
        for args in work:
            ci, si, metrics = _run_indexed(args)
            results[(ci, si)] = metrics

    run_rows: list[dict] = []
    aggregate_rows: list[dict] = []
    for ci in range(len(configs)):
        per_seed = [results[(ci, si)] for si in range(len(seeds))]
        for metrics in per_seed:
            row = {"config": labels[ci]}
            row.update(metrics_to_row(metrics))
            run_rows.append(row)
        agg: dict[str, Any] = {
            "config": labels[ci],
            "mechanism": per_seed[0].mechanism,
            "n_seeds": len(seeds),
        }
        for name in AGGREGATE_METRICS:
            values = [getattr(m, name) for m in per_seed]
            values = [v for v in values if v is not None]
            if not values:
                agg[f"{name}_mean"] = None
                agg[f"{name}_stderr"] = None
                continue
            mean = sum(values) / len(values)
            if len(values) > 1:
                var = sum((v - mean) ** 2 for v in values) / (len(values) - 1)
                stderr = math.sqrt(var / len(values))
            else:
                stderr = 0.0
            agg[f"{name}_mean"] = mean
            agg[f"{name}_stderr"] = stderr
        aggregate_rows.append(agg)
    return run_rows, aggregate_rows
