"""The clearing engine: candidate enumeration, portfolio construction and
scoring, constrained global assignment, and the event-driven re-clearing
state machine.

`clear` is a pure function of (state, reports, config); re-clearing mutates a
ClearingState on a single coordinating thread. Executing assignments are
never revoked; backup slots reserve agent capacity as soon as a portfolio is
dispatched.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

from .calibration import DEFAULT_K_MIN, CalibrationLedger, recalibrate, reputation_rank
from .distributions import (
    DiscreteOutcomeDistribution,
    RiskReport,
    compose_portfolio,
    from_quantile_summary,
)
from .model import (
    AgentDescriptor,
    Candidate,
    Portfolio,
    PortfolioEvaluation,
    Schedule,
    Task,
    capacity_violations,
    is_eligible,
)
from .risk import RiskConfig, UtilityConfig, chance_constraints_hold, portfolio_score

SOLVER_MODES = ("exhaustive", "greedy", "greedy_plus_local_search")


class SolverError(RuntimeError):
    pass


class MissingReportError(ValueError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    mode: str = "greedy_plus_local_search"
    exhaustive_limit: int = 10_000
    local_search_iters: int = 200
    allow_backups: bool = True
    mc_samples: int = 0

    def __post_init__(self) -> None:
        if self.mode not in SOLVER_MODES:
            raise ValueError(f"unknown solver mode {self.mode!r}; choose from {SOLVER_MODES}")
        if self.exhaustive_limit <= 0 or self.local_search_iters <= 0:
            raise ValueError("solver limits must be positive")


@dataclass(frozen=True)
class ClearingConfig:
    solver: SolverConfig = SolverConfig()
    utility: UtilityConfig = UtilityConfig()
    risk: RiskConfig = RiskConfig()
    ignore_chance_constraints: bool = False
    recalibrate_reports: bool = True
    k_min: int = DEFAULT_K_MIN


@dataclass
class ResourcePool:
    budget: float
    consumed: float = 0.0

    @property
    def available(self) -> float:
        return self.budget - self.consumed


@dataclass
class ActiveAssignment:
    portfolio: Portfolio
    phase: str  # "primary" or "backup"
    dispatched_at: float
    running: set[str] = field(default_factory=set)
    reserved: str | None = None  # backup agent waiting for its trigger
    epoch: int = 0  # dispatch generation, used to drop stale trigger events


@dataclass
class ClearingState:
    active_tasks: dict[str, Task] = field(default_factory=dict)
    registry: dict[str, AgentDescriptor] = field(default_factory=dict)
    busy: dict[str, str] = field(default_factory=dict)
    resource_pools: dict[str, ResourcePool] = field(default_factory=dict)
    round_counter: int = 0
    executing: dict[str, ActiveAssignment] = field(default_factory=dict)
    failed_agents: set[str] = field(default_factory=set)

    def pending_tasks(self) -> list[Task]:
        return [
            t for tid, t in sorted(self.active_tasks.items()) if tid not in self.executing
        ]

    def check_consistent(self) -> None:
        for agent_id in self.busy:
            if agent_id not in self.registry:
                raise SolverError(f"busy agent {agent_id!r} is not in the registry")


ReportTable = Mapping[tuple[str, str], RiskReport]


# -- candidate and portfolio construction --------------------------------------


def report_distribution(report: RiskReport) -> DiscreteOutcomeDistribution:
    if report.distribution is not None:
        return report.distribution
    if report.summary is not None:
        return from_quantile_summary(report.summary)
    raise MissingReportError("report carries no payload to evaluate")


def enumerate_candidates(
    state: ClearingState,
    task: Task,
    reports: ReportTable | None = None,
    *,
    model=None,
    ledger: CalibrationLedger | None = None,
    config: ClearingConfig | None = None,
) -> list[Candidate]:
    """All eligible, non-busy (agent, option) pairs for the task, in
    deterministic (agent_id, option_id) order.

    Missing reports (the min tier) are filled from the learned model when one
    is provided; reports are recalibrated against ledger history when the
    config enables it.
    """
    config = config or ClearingConfig()
    reports = reports or {}
    out: list[Candidate] = []
    for agent_id in sorted(state.registry):
        if agent_id in state.busy or agent_id in state.failed_agents:
            continue
        agent = state.registry[agent_id]
        for option in sorted(agent.options, key=lambda o: o.option_id):
            if not option.handles_goal(task.goal_label):
                continue
            if not is_eligible(agent, option, task):
                continue
            report = reports.get((agent_id, option.option_id))
            if (report is None or report.tier == "min") and model is not None:
                report = model.lookup_report(agent_id, option.option_id, task.context)
            if report is not None and config.recalibrate_reports and ledger is not None:
                report = recalibrate(
                    report, ledger.stats(agent_id, option.option_id), config.k_min
                )
            cost = option.nominal_cost
            if report is not None and report.summary is not None and report.summary.cost > 0:
                cost = report.summary.cost
            out.append(
                Candidate(agent_id=agent_id, option_id=option.option_id, cost=cost, report=report)
            )
    return out


def candidate_distributions(
    candidates: Sequence[Candidate],
) -> dict[tuple[str, str], DiscreteOutcomeDistribution]:
    dists = {}
    for c in candidates:
        if c.report is None:
            raise MissingReportError(
                f"candidate ({c.agent_id}, {c.option_id}) has no report and no model substitute"
            )
        dists[(c.agent_id, c.option_id)] = report_distribution(c.report)
    return dists


def build_portfolios(
    candidates: Sequence[Candidate],
    allow_backups: bool,
    task: Task,
    dists: Mapping[tuple[str, str], DiscreteOutcomeDistribution] | None = None,
) -> list[Portfolio]:
    """All singletons plus, when allowed, all ordered pairs with distinct
    agents. The backup trigger is the primary's reported 0.95 completion-time
    quantile clamped into (0, deadline]."""
    dists = dists if dists is not None else candidate_distributions(candidates)
    portfolios = [Portfolio(task_id=task.id, primary=c) for c in candidates]
    if not allow_backups:
        return portfolios
    for primary, backup in itertools.permutations(candidates, 2):
        if primary.agent_id == backup.agent_id:
            continue
        q95 = dists[(primary.agent_id, primary.option_id)].time_marginal().quantile(0.95)
        trigger = min(q95, task.deadline)
        portfolios.append(
            Portfolio(
                task_id=task.id,
                primary=primary,
                backup=backup,
                backup_trigger_time=max(trigger, 1e-9),
            )
        )
    return portfolios


def _mc_estimate(
    primary: DiscreteOutcomeDistribution,
    backup: DiscreteOutcomeDistribution | None,
    trigger: float,
    samples: int,
    seed: int,
) -> DiscreteOutcomeDistribution:
    """Empirical composed law from seeded Monte Carlo, for approximate
    evaluation (solver mc_samples > 0)."""
    import numpy as np

    from .distributions import sample_indices

    rng = np.random.default_rng(seed)
    pi = sample_indices(primary, rng, samples)
    t = primary.times[pi]
    s = primary.success[pi]
    metrics = {k: v[pi].copy() for k, v in primary.metrics.items()}
    if backup is not None:
        bi = sample_indices(backup, rng, samples)
        handoff = ~(s & (t <= trigger))
        t = np.where(handoff, trigger + backup.times[bi], t)
        s = np.where(handoff, backup.success[bi], s)
        for k in set(metrics) | set(backup.metric_names):
            a = metrics.get(k, np.zeros(samples))
            b = backup.metric_values(k)[bi]
            metrics[k] = np.where(handoff, np.maximum(a, b), a)
    probs = np.full(samples, 1.0 / samples)
    return DiscreteOutcomeDistribution(t, s, probs, metrics, max_support=None)


def evaluate_portfolio(
    portfolio: Portfolio,
    task: Task,
    utility_cfg: UtilityConfig,
    risk_cfg: RiskConfig,
    dists: Mapping[tuple[str, str], DiscreteOutcomeDistribution],
    *,
    ignore_chance_constraints: bool = False,
    mc_samples: int = 0,
) -> PortfolioEvaluation:
    """Compose the portfolio's outcome law and score it.

    Pair cost is primary cost plus backup cost weighted by the probability
    the backup triggers.
    """
    key = (portfolio.primary.agent_id, portfolio.primary.option_id)
    if key not in dists:
        raise MissingReportError(f"no report distribution for primary candidate {key}")
    primary = dists[key]
    backup = None
    cost = portfolio.primary.cost
    if portfolio.backup is not None:
        bkey = (portfolio.backup.agent_id, portfolio.backup.option_id)
        if bkey not in dists:
            raise MissingReportError(f"no report distribution for backup candidate {bkey}")
        backup = dists[bkey]
        p_trigger = 1.0 - primary.prob_success_within(portfolio.backup_trigger_time)
        cost += portfolio.backup.cost * p_trigger
    if mc_samples > 0:
        seed_label = f"{task.id}|{portfolio.primary.agent_id}|{portfolio.primary.option_id}"
        if portfolio.backup is not None:
            seed_label += f"|{portfolio.backup.agent_id}|{portfolio.backup.option_id}"
        import hashlib

        seed = int.from_bytes(hashlib.sha256(seed_label.encode()).digest()[:8], "big")
        composed = _mc_estimate(primary, backup, portfolio.backup_trigger_time, mc_samples, seed)
    else:
        composed = compose_portfolio(primary, backup, portfolio.backup_trigger_time or 1.0)
    score, eu, rho = portfolio_score(composed, task, utility_cfg, risk_cfg, cost)
    ok, slacks = chance_constraints_hold(composed, task)
    if ignore_chance_constraints:
        ok = True
    return PortfolioEvaluation(
        score=score, expected_utility=eu, risk_value=rho, feasible=ok, slacks=slacks, cost=cost
    )


# -- global assignment ----------------------------------------------------------


def _portfolio_order_key(
    item: tuple[Portfolio, PortfolioEvaluation], rep_rank: Mapping[tuple[str, str], int]
):
    portfolio, ev = item
    p = portfolio.primary
    b = portfolio.backup
    return (
        -ev.score,
        ev.cost,
        rep_rank.get((p.agent_id, p.option_id), len(rep_rank)),
        p.agent_id,
        p.option_id,
        b.agent_id if b else "",
        b.option_id if b else "",
    )


def _portfolio_agents(portfolio: Portfolio) -> frozenset[str]:
    agents = {portfolio.primary.agent_id}
    if portfolio.backup is not None:
        agents.add(portfolio.backup.agent_id)
    return frozenset(agents)


@dataclass(frozen=True)
class _TaskChoices:
    task: Task
    ranked: tuple[tuple[Portfolio, PortfolioEvaluation], ...]


def _prepare_choices(
    state: ClearingState,
    tasks: Sequence[Task],
    reports_by_task: Mapping[str, ReportTable],
    config: ClearingConfig,
    model,
    ledger,
) -> tuple[list[_TaskChoices], dict[str, list[Candidate]]]:
    rep_rank: dict[tuple[str, str], int] = {}
    if ledger is not None and len(ledger) > 0:
        rep_rank = {k: i for i, k in enumerate(reputation_rank(ledger.all_stats()))}
    choices = []
    candidate_log: dict[str, list[Candidate]] = {}
    for task in sorted(tasks, key=lambda t: (t.absolute_deadline, t.id)):
        candidates = enumerate_candidates(
            state, task, reports_by_task.get(task.id), model=model, ledger=ledger, config=config
        )
        candidate_log[task.id] = candidates
        evaluated: list[tuple[Portfolio, PortfolioEvaluation]] = []
        if candidates:
            dists = candidate_distributions(candidates)
            for portfolio in build_portfolios(candidates, config.solver.allow_backups, task, dists):
                ev = evaluate_portfolio(
                    portfolio,
                    task,
                    config.utility,
                    config.risk,
                    dists,
                    ignore_chance_constraints=config.ignore_chance_constraints,
                    mc_samples=config.solver.mc_samples,
                )
                if ev.feasible:
                    evaluated.append((portfolio, ev))
        evaluated.sort(key=lambda item: _portfolio_order_key(item, rep_rank))
        choices.append(_TaskChoices(task=task, ranked=tuple(evaluated)))
    return choices, candidate_log


def _resources_fit(
    chosen_tasks: Sequence[Task], pools: Mapping[str, ResourcePool]
) -> bool:
    demand: dict[str, float] = {}
    for task in chosen_tasks:
        for pool, units in task.constraints.resource_demands.items():
            demand[pool] = demand.get(pool, 0.0) + units
    for pool, units in demand.items():
        if pool not in pools:
            return False
        if units > pools[pool].available + 1e-12:
            return False
    return True


def _assignment_objective(
    choices: Sequence[_TaskChoices], picks: Sequence[int | None]
) -> tuple[float, int]:
    total = 0.0
    assigned = 0
    for tc, pick in zip(choices, picks):
        if pick is not None:
            total += tc.ranked[pick][1].score
            assigned += 1
    return total, assigned


def _assignment_valid(
    choices: Sequence[_TaskChoices],
    picks: Sequence[int | None],
    pools: Mapping[str, ResourcePool],
) -> bool:
    used: set[str] = set()
    chosen_tasks = []
    for tc, pick in zip(choices, picks):
        if pick is None:
            continue
        agents = _portfolio_agents(tc.ranked[pick][0])
        if used & agents:
            return False
        used |= agents
        chosen_tasks.append(tc.task)
    return _resources_fit(chosen_tasks, pools)


def _solve_exhaustive(
    choices: list[_TaskChoices], pools: Mapping[str, ResourcePool], limit: int
) -> list[int | None]:
    space = 1
    for tc in choices:
        space *= len(tc.ranked) + 1
    if space > limit:
        raise SolverError(
            f"joint space {space} exceeds exhaustive_limit {limit}; use greedy or "
            "greedy_plus_local_search"
        )
    best: list[int | None] | None = None
    best_key = (-math.inf, -1)
    options = [list(range(len(tc.ranked))) + [None] for tc in choices]
    for picks in itertools.product(*options):
        if not _assignment_valid(choices, picks, pools):
            continue
        key = _assignment_objective(choices, picks)
        if key > best_key:
            best_key = key
            best = list(picks)
    return best if best is not None else [None] * len(choices)


def _solve_greedy(
    choices: list[_TaskChoices], pools: Mapping[str, ResourcePool]
) -> list[int | None]:
    picks: list[int | None] = [None] * len(choices)
    used: set[str] = set()
    chosen_tasks: list[Task] = []
    for i, tc in enumerate(choices):
        for j, (portfolio, ev) in enumerate(tc.ranked):
            if ev.score < 0:
                break  # ranked by score; nothing assignable improves the objective
            agents = _portfolio_agents(portfolio)
            if used & agents:
                continue
            if not _resources_fit(chosen_tasks + [tc.task], pools):
                continue
            picks[i] = j
            used |= agents
            chosen_tasks.append(tc.task)
            break
    return picks


def _solve_local_search(
    choices: list[_TaskChoices], pools: Mapping[str, ResourcePool], iters: int
) -> list[int | None]:
    picks = _solve_greedy(choices, pools)
    best_key = _assignment_objective(choices, picks)
    accepted = 0
    improved = True
    while improved and accepted < iters:
        improved = False
        # single-task portfolio swaps
        for i, tc in enumerate(choices):
            for j in list(range(len(tc.ranked))) + [None]:
                if j == picks[i]:
                    continue
                trial = list(picks)
                trial[i] = j
                if not _assignment_valid(choices, trial, pools):
                    continue
                key = _assignment_objective(choices, trial)
                if key > best_key:
                    picks, best_key = trial, key
                    accepted += 1
                    improved = True
                    break
            if improved:
                break
        if improved or accepted >= iters:
            continue
        # pairwise joint re-assignment
        for i, k in itertools.combinations(range(len(choices)), 2):
            opts_i = list(range(len(choices[i].ranked))) + [None]
            opts_k = list(range(len(choices[k].ranked))) + [None]
            for j_i, j_k in itertools.product(opts_i, opts_k):
                if (j_i, j_k) == (picks[i], picks[k]):
                    continue
                trial = list(picks)
                trial[i], trial[k] = j_i, j_k
                if not _assignment_valid(choices, trial, pools):
                    continue
                key = _assignment_objective(choices, trial)
                if key > best_key:
                    picks, best_key = trial, key
                    accepted += 1
                    improved = True
                    break
            if improved:
                break
    return picks


def clear_with_audit(
    state: ClearingState,
    reports_by_task: Mapping[str, ReportTable],
    config: ClearingConfig,
    *,
    tasks: Sequence[Task] | None = None,
    model=None,
    ledger: CalibrationLedger | None = None,
) -> tuple[Schedule, dict[str, list[tuple[Portfolio, PortfolioEvaluation]]], dict[str, list[Candidate]]]:
    """`clear` plus the full per-task evaluation tables for audit logging."""
    state.check_consistent()
    if tasks is None:
        tasks = state.pending_tasks()
    choices, candidate_log = _prepare_choices(
        state, tasks, reports_by_task, config, model, ledger
    )
    mode = config.solver.mode
    if mode == "exhaustive":
        picks = _solve_exhaustive(choices, state.resource_pools, config.solver.exhaustive_limit)
    elif mode == "greedy":
        picks = _solve_greedy(choices, state.resource_pools)
    else:
        picks = _solve_local_search(choices, state.resource_pools, config.solver.local_search_iters)

    portfolios: dict[str, Portfolio] = {}
    diagnostics: dict[str, PortfolioEvaluation] = {}
    unassigned = []
    total = 0.0
    for tc, pick in zip(choices, picks):
        if pick is None:
            unassigned.append(tc.task.id)
            continue
        portfolio, ev = tc.ranked[pick]
        portfolios[tc.task.id] = portfolio
        diagnostics[tc.task.id] = ev
        total += ev.score
    schedule = Schedule(
        portfolios=portfolios,
        objective_value=total,
        feasible=not validate_schedule_against_state(portfolios, state),
        diagnostics=diagnostics,
        unassigned=tuple(sorted(unassigned)),
    )
    tables = {tc.task.id: list(tc.ranked) for tc in choices}
    return schedule, tables, candidate_log


def clear(
    state: ClearingState,
    reports_by_task: Mapping[str, ReportTable],
    config: ClearingConfig,
    *,
    tasks: Sequence[Task] | None = None,
    model=None,
    ledger: CalibrationLedger | None = None,
) -> Schedule:
    """Solve the constrained assignment over the pending active tasks.

    Maximizes the sum of per-task risk-adjusted scores over feasible
    portfolios subject to unit agent capacity (primary and backup slots both
    consume the agent), resource-pool budgets, and per-task chance
    constraints; tasks with no feasible portfolio stay unassigned.
    """
    schedule, _, _ = clear_with_audit(
        state, reports_by_task, config, tasks=tasks, model=model, ledger=ledger
    )
    return schedule


def validate_schedule_against_state(
    portfolios: Mapping[str, Portfolio], state: ClearingState, capacity: int = 1
) -> list[str]:
    """Independent post-hoc feasibility check used on every emitted schedule."""
    violations = capacity_violations(portfolios, capacity)
    for task_id, portfolio in sorted(portfolios.items()):
        for agent_id in sorted(_portfolio_agents(portfolio)):
            if agent_id in state.busy:
                violations.append(f"busy agent {agent_id!r} assigned to task {task_id!r}")
            if agent_id in state.failed_agents:
                violations.append(f"failed agent {agent_id!r} assigned to task {task_id!r}")
        if portfolio.backup is not None:
            if portfolio.backup.agent_id == portfolio.primary.agent_id:
                violations.append(f"task {task_id!r} pairs an agent with itself")
            if not (portfolio.backup_trigger_time > 0):
                violations.append(f"task {task_id!r} has a non-positive backup trigger")
    demand: dict[str, float] = {}
    tasks = [state.active_tasks[tid] for tid in portfolios if tid in state.active_tasks]
    for task in tasks:
        for pool, units in task.constraints.resource_demands.items():
            demand[pool] = demand.get(pool, 0.0) + units
    for pool, units in sorted(demand.items()):
        if pool not in state.resource_pools:
            violations.append(f"unknown resource pool {pool!r}")
        elif units > state.resource_pools[pool].available + 1e-12:
            violations.append(f"pool {pool!r} over budget: {units} > {state.resource_pools[pool].available}")
    return violations


# -- event-driven re-clearing ------------------------------------------------------


@dataclass(frozen=True)
class TaskArrivalEvent:
    task: Task
    time: float


@dataclass(frozen=True)
class OutcomeEvent:
    task_id: str
    agent_id: str
    option_id: str
    outcome: object  # OutcomeVector
    time: float


@dataclass(frozen=True)
class AgentFailureEvent:
    agent_id: str
    time: float


@dataclass(frozen=True)
class TickEvent:
    time: float


ClearingEvent = TaskArrivalEvent | OutcomeEvent | AgentFailureEvent | TickEvent


@dataclass
class RoundResult:
    schedule: Schedule
    dispatches: list[tuple[str, Portfolio, str]] = field(default_factory=list)
    finished: list[tuple[str, str]] = field(default_factory=list)  # (task_id, cause)
    aborted_attempts: list[tuple[str, str, str]] = field(default_factory=list)


def _release_task_holds(state: ClearingState, task_id: str) -> None:
    assignment = state.executing.pop(task_id, None)
    if assignment is not None:
        for agent_id in list(assignment.running) + ([assignment.reserved] if assignment.reserved else []):
            if state.busy.get(agent_id) == task_id:
                del state.busy[agent_id]
    task = state.active_tasks.get(task_id)
    if task is not None:
        for pool, units in task.constraints.resource_demands.items():
            if pool in state.resource_pools:
                state.resource_pools[pool].consumed -= units


def _consume_resources(state: ClearingState, task: Task) -> None:
    for pool, units in task.constraints.resource_demands.items():
        if pool in state.resource_pools:
            state.resource_pools[pool].consumed += units


def activate_backup(state: ClearingState, task_id: str) -> tuple[str, Portfolio, str] | None:
    """Start a reserved backup (trigger-time rule); None when there is
    nothing to activate."""
    assignment = state.executing.get(task_id)
    if assignment is None or assignment.reserved is None:
        return None
    backup_agent = assignment.reserved
    assignment.reserved = None
    assignment.running.add(backup_agent)
    assignment.phase = "backup"
    return (task_id, assignment.portfolio, "backup")


def _after_attempt_failure(
    state: ClearingState, task_id: str, now: float, result: RoundResult
) -> None:
    """Shared logic once a running attempt has failed or been aborted."""
    assignment = state.executing.get(task_id)
    if assignment is None:
        return
    if assignment.reserved is not None:
        dispatch = activate_backup(state, task_id)
        if dispatch is not None:
            result.dispatches.append(dispatch)
        return
    if assignment.running:
        return  # another attempt is still in flight
    task = state.active_tasks[task_id]
    if now < task.absolute_deadline:
        # retry through re-clearing
        _release_task_holds(state, task_id)
    else:
        _release_task_holds(state, task_id)
        del state.active_tasks[task_id]
        result.finished.append((task_id, "failed"))


def apply_event(state: ClearingState, event: ClearingEvent, result: RoundResult) -> None:
    if isinstance(event, TaskArrivalEvent):
        state.active_tasks[event.task.id] = event.task
        return
    if isinstance(event, TickEvent):
        return
    if isinstance(event, OutcomeEvent):
        assignment = state.executing.get(event.task_id)
        if assignment is None:
            return
        assignment.running.discard(event.agent_id)
        if state.busy.get(event.agent_id) == event.task_id:
            del state.busy[event.agent_id]
        if event.outcome.success:
            _release_task_holds(state, event.task_id)
            state.active_tasks.pop(event.task_id, None)
            result.finished.append((event.task_id, "completed"))
        else:
            _after_attempt_failure(state, event.task_id, event.time, result)
        return
    if isinstance(event, AgentFailureEvent):
        state.failed_agents.add(event.agent_id)
        task_id = state.busy.pop(event.agent_id, None)
        if task_id is None:
            return
        assignment = state.executing.get(task_id)
        if assignment is None:
            return
        if assignment.reserved == event.agent_id:
            assignment.reserved = None  # the backup plan died with the agent
            return
        if event.agent_id in assignment.running:
            assignment.running.discard(event.agent_id)
            option_id = assignment.portfolio.primary.option_id
            if assignment.portfolio.backup is not None and (
                assignment.portfolio.backup.agent_id == event.agent_id
            ):
                option_id = assignment.portfolio.backup.option_id
            result.aborted_attempts.append((task_id, event.agent_id, option_id))
            _after_attempt_failure(state, task_id, event.time, result)
        return
    raise ValueError(f"unknown clearing event type {type(event).__name__}")


def reclear_on_event(
    state: ClearingState,
    event: ClearingEvent,
    config: ClearingConfig,
    reports_by_task: Mapping[str, ReportTable] | Callable[[Task], ReportTable],
    *,
    model=None,
    ledger: CalibrationLedger | None = None,
    solve: Callable[..., Schedule] | None = None,
) -> RoundResult:
    """Apply an event to the state, expire lapsed pending tasks, re-clear the
    not-yet-dispatched tasks, and dispatch new assignments. Executing
    assignments are never revoked."""
    result = RoundResult(schedule=Schedule())
    apply_event(state, event, result)
    now = event.time

    for task_id in sorted(state.active_tasks):
        task = state.active_tasks[task_id]
        if task_id not in state.executing and task.absolute_deadline <= now:
            del state.active_tasks[task_id]
            result.finished.append((task_id, "expired"))

    pending = state.pending_tasks()
    if callable(reports_by_task):
        table = {task.id: reports_by_task(task) for task in pending}
    else:
        table = reports_by_task
    if solve is not None:
        schedule = solve(state, pending, table)
    else:
        schedule = clear(state, table, config, tasks=pending, model=model, ledger=ledger)
    result.schedule = schedule

    for task_id in sorted(schedule.portfolios):
        portfolio = schedule.portfolios[task_id]
        assignment = ActiveAssignment(
            portfolio=portfolio,
            phase="primary",
            dispatched_at=now,
            running={portfolio.primary.agent_id},
            reserved=portfolio.backup.agent_id if portfolio.backup else None,
        )
        state.executing[task_id] = assignment
        state.busy[portfolio.primary.agent_id] = task_id
        if portfolio.backup is not None:
            state.busy[portfolio.backup.agent_id] = task_id
        _consume_resources(state, state.active_tasks[task_id])
        result.dispatches.append((task_id, portfolio, "primary"))
    state.round_counter += 1
    return result
