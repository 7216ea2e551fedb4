"""Comparison mechanisms sharing the clearing state machine.

The auction and contract-net mechanisms see only scalar summaries (expected
completion time, cost, and for contract net the proposer's own decline
probability); the interface enforces that no tail information reaches the
award decision. The risk-blind centralized scheduler reuses `clear` with
lambda = 0 and chance constraints disabled.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from .clearinghouse import (
    ClearingConfig,
    ClearingState,
    ReportTable,
    Schedule,
    clear,
    report_distribution,
)
from .model import Candidate, Portfolio, PortfolioEvaluation, Task
from .risk import deadline_violation_prob


@dataclass(frozen=True)
class ScalarBid:
    """The only thing baseline mechanisms are allowed to see per candidate."""

    agent_id: str
    option_id: str
    expected_time: float
    cost: float
    decline_prob: float = 0.0


def scalar_bid_from_report(
    agent_id: str, option_id: str, report, cost: float, task: Task
) -> ScalarBid:
    """Agent-side reduction of a predictive report to a scalar proposal. The
    decline probability is the proposer's own predicted chance of violating
    the deadline (used only by the contract-net variant)."""
    dist = report_distribution(report)
    return ScalarBid(
        agent_id=agent_id,
        option_id=option_id,
        expected_time=dist.time_marginal().mean(),
        cost=cost,
        decline_prob=deadline_violation_prob(dist, task.deadline),
    )


BidTable = Mapping[str, Sequence[ScalarBid]]  # task_id -> bids


def _award_order(bids: Sequence[ScalarBid], cost_weight: float) -> list[tuple[float, ScalarBid]]:
    scored = [(b.expected_time + cost_weight * b.cost, b) for b in bids]
    scored.sort(key=lambda item: (item[0], item[1].cost, item[1].agent_id, item[1].option_id))
    return scored


def _greedy_scalar_assign(
    state: ClearingState,
    tasks: Sequence[Task],
    bids_by_task: BidTable,
    cost_weight: float,
    decline_rng: np.random.Generator | None,
) -> Schedule:
    portfolios: dict[str, Portfolio] = {}
    diagnostics: dict[str, PortfolioEvaluation] = {}
    unassigned: list[str] = []
    used: set[str] = set()
    chosen_tasks: list[Task] = []
    total = 0.0
    for task in sorted(tasks, key=lambda t: (t.absolute_deadline, t.id)):
        awarded = None
        for bid_value, bid in _award_order(bids_by_task.get(task.id, ()), cost_weight):
            if bid.agent_id in used or bid.agent_id in state.busy or bid.agent_id in state.failed_agents:
                continue
            if not _fits_resources(state, chosen_tasks + [task]):
                break
            if decline_rng is not None and decline_rng.random() < bid.decline_prob:
                continue  # proposer walks away from a risky award
            awarded = (bid_value, bid)
            break
        if awarded is None:
            unassigned.append(task.id)
            continue
        bid_value, bid = awarded
        candidate = Candidate(agent_id=bid.agent_id, option_id=bid.option_id, cost=bid.cost)
        portfolios[task.id] = Portfolio(task_id=task.id, primary=candidate)
        # the negated bid stands in for a score so award order is auditable
        diagnostics[task.id] = PortfolioEvaluation(
            score=-bid_value,
            expected_utility=0.0,
            risk_value=0.0,
            feasible=True,
            slacks={},
            cost=bid.cost,
        )
        total += -bid_value
        used.add(bid.agent_id)
        chosen_tasks.append(task)
    return Schedule(
        portfolios=portfolios,
        objective_value=total,
        feasible=True,
        diagnostics=diagnostics,
        unassigned=tuple(sorted(unassigned)),
    )


def _fits_resources(state: ClearingState, tasks: Sequence[Task]) -> bool:
    demand: dict[str, float] = {}
    for task in tasks:
        for pool, units in task.constraints.resource_demands.items():
            demand[pool] = demand.get(pool, 0.0) + units
    for pool, units in demand.items():
        if pool not in state.resource_pools:
            return False
        if units > state.resource_pools[pool].available + 1e-12:
            return False
    return True


def scalar_auction_clear(
    state: ClearingState,
    tasks: Sequence[Task],
    bids_by_task: BidTable,
    *,
    cost_weight: float = 0.1,
) -> Schedule:
    """Single-scalar sealed-bid award: per task, lowest expected completion
    time plus weighted cost wins. No risk term, no backups."""
    return _greedy_scalar_assign(state, tasks, bids_by_task, cost_weight, decline_rng=None)


def contract_net_clear(
    state: ClearingState,
    tasks: Sequence[Task],
    bids_by_task: BidTable,
    rng: np.random.Generator,
) -> Schedule:
    """Announce/propose/award with a self-interest twist: the awarded agent
    declines with probability equal to its own predicted deadline-violation
    chance, pushing the award to the next proposal."""
    return _greedy_scalar_assign(state, tasks, bids_by_task, cost_weight=0.0, decline_rng=rng)


def central_nodl_clear(
    state: ClearingState,
    reports_by_task: Mapping[str, ReportTable],
    config: ClearingConfig,
    *,
    tasks: Sequence[Task] | None = None,
    model=None,
    ledger=None,
) -> Schedule:
    """Risk-blind centralized scheduler: expected-utility maximization with
    lambda = 0 and chance constraints ignored."""
    blind = replace(
        config,
        risk=replace(config.risk, lambda_=0.0),
        ignore_chance_constraints=True,
    )
    return clear(state, reports_by_task, blind, tasks=tasks, model=model, ledger=ledger)
