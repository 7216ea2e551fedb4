import numpy as np
import pytest

from roc.baselines import (
    ScalarBid,
    central_nodl_clear,
    contract_net_clear,
    scalar_auction_clear,
    scalar_bid_from_report,
)
from roc.clearinghouse import (
    ClearingConfig,
    SolverConfig,
    clear,
    validate_schedule_against_state,
)
from roc.risk import RiskConfig, deadline_violation_prob

from test_clearinghouse import make_task, reliable_report, report_of, simple_agent, state_of


def bid(agent_id, expected_time, cost=1.0, decline=0.0):
    return ScalarBid(
        agent_id=agent_id,
        option_id="survey",
        expected_time=expected_time,
        cost=cost,
        decline_prob=decline,
    )


def test_auction_lowest_bid_wins():
    state = state_of(simple_agent("a"), simple_agent("b"))
    task = make_task("t1")
    state.active_tasks["t1"] = task
    bids = {"t1": [bid("a", 7.0), bid("b", 4.0)]}
    schedule = scalar_auction_clear(state, [task], bids, cost_weight=0.0)
    assert schedule.portfolios["t1"].primary.agent_id == "b"
    assert schedule.portfolios["t1"].backup is None


def test_auction_prefers_low_mean_despite_tail_risk():
    # the intended failure mode: a fat-tailed fast-on-average agent wins the
    # auction even though its chance of blowing the deadline is larger
    gambler = report_of((10.0, True, {}, 0.7), (200.0, True, {}, 0.3))  # mean 67
    steady = report_of((80.0, True, {}, 1.0))  # mean 80
    task = make_task("t1", deadline=100.0)
    b_gambler = scalar_bid_from_report("gambler", "survey", gambler, 1.0, task)
    b_steady = scalar_bid_from_report("steady", "survey", steady, 1.0, task)
    assert b_gambler.expected_time < b_steady.expected_time
    assert b_gambler.decline_prob > b_steady.decline_prob
    state = state_of(simple_agent("gambler"), simple_agent("steady"))
    state.active_tasks["t1"] = task
    schedule = scalar_auction_clear(state, [task], {"t1": [b_gambler, b_steady]}, cost_weight=0.0)
    assert schedule.portfolios["t1"].primary.agent_id == "gambler"


def test_auction_no_bidders_unassigned():
    state = state_of()
    task = make_task("t1")
    state.active_tasks["t1"] = task
    schedule = scalar_auction_clear(state, [task], {}, cost_weight=0.1)
    assert schedule.portfolios == {}
    assert schedule.unassigned == ("t1",)


def test_contract_net_without_declines_matches_zero_cost_auction():
    state = state_of(simple_agent("a"), simple_agent("b"), simple_agent("c"))
    tasks = [make_task("t1", deadline=50.0), make_task("t2", deadline=80.0)]
    for t in tasks:
        state.active_tasks[t.id] = t
    bids = {
        "t1": [bid("a", 30.0, cost=9.0), bid("b", 20.0, cost=1.0), bid("c", 25.0, cost=0.1)],
        "t2": [bid("a", 10.0, cost=5.0), bid("b", 15.0, cost=0.2), bid("c", 12.0, cost=0.3)],
    }
    import copy

    auction = scalar_auction_clear(copy.deepcopy(state), tasks, bids, cost_weight=0.0)
    cn = contract_net_clear(copy.deepcopy(state), tasks, bids, np.random.default_rng(0))
    assert {t: p.primary.agent_id for t, p in auction.portfolios.items()} == {
        t: p.primary.agent_id for t, p in cn.portfolios.items()
    }


def test_contract_net_certain_decline_passes_award_on():
    state = state_of(simple_agent("a"), simple_agent("b"))
    task = make_task("t1")
    state.active_tasks["t1"] = task
    bids = {"t1": [bid("a", 5.0, decline=1.0), bid("b", 9.0, decline=0.0)]}
    schedule = contract_net_clear(state, [task], bids, np.random.default_rng(1))
    assert schedule.portfolios["t1"].primary.agent_id == "b"


def test_contract_net_all_decline_unassigned():
    state = state_of(simple_agent("a"), simple_agent("b"))
    task = make_task("t1")
    state.active_tasks["t1"] = task
    bids = {"t1": [bid("a", 5.0, decline=1.0), bid("b", 9.0, decline=1.0)]}
    schedule = contract_net_clear(state, [task], bids, np.random.default_rng(2))
    assert schedule.unassigned == ("t1",)


def test_central_nodl_matches_roc_on_risk_free_instance():
    state = state_of(simple_agent("a"), simple_agent("b"))
    task = make_task("t1", deadline=100.0)
    state.active_tasks["t1"] = task
    reports = {
        "t1": {
            ("a", "survey"): reliable_report(10.0),
            ("b", "survey"): reliable_report(60.0),
        }
    }
    config = ClearingConfig(
        solver=SolverConfig(mode="exhaustive", allow_backups=False),
        risk=RiskConfig(lambda_=3.0),
    )
    import copy

    risky = clear(copy.deepcopy(state), reports, config)
    blind = central_nodl_clear(copy.deepcopy(state), reports, config)
    assert {t: p.primary.agent_id for t, p in risky.portfolios.items()} == {
        t: p.primary.agent_id for t, p in blind.portfolios.items()
    }


def test_central_nodl_ignores_chance_constraints():
    state = state_of(simple_agent("a"))
    task = make_task("t1", deadline=100.0, theta=0.95)
    state.active_tasks["t1"] = task
    reports = {"t1": {("a", "survey"): reliable_report(10.0, 0.5)}}
    config = ClearingConfig(solver=SolverConfig(mode="exhaustive"), risk=RiskConfig(lambda_=1.0))
    import copy

    constrained = clear(copy.deepcopy(state), reports, config)
    assert constrained.portfolios == {}  # infeasible under the chance constraint
    blind = central_nodl_clear(copy.deepcopy(state), reports, config)
    assert "t1" in blind.portfolios


def test_central_nodl_empty_tasks():
    state = state_of(simple_agent("a"))
    schedule = central_nodl_clear(state, {}, ClearingConfig())
    assert schedule.portfolios == {}


def test_baseline_schedules_pass_validator():
    state = state_of(simple_agent("a"), simple_agent("b"))
    tasks = [make_task("t1"), make_task("t2")]
    for t in tasks:
        state.active_tasks[t.id] = t
    bids = {
        "t1": [bid("a", 5.0), bid("b", 6.0)],
        "t2": [bid("a", 4.0), bid("b", 7.0)],
    }
    schedule = scalar_auction_clear(state, tasks, bids, cost_weight=0.0)
    assert validate_schedule_against_state(schedule.portfolios, state) == []
    # capacity respected: both tasks assigned to different agents
    agents = [p.primary.agent_id for p in schedule.portfolios.values()]
    assert len(set(agents)) == len(agents)


def test_scalar_bid_exposes_only_scalars():
    report = report_of((10.0, True, {}, 0.5), (90.0, True, {}, 0.5))
    task = make_task("t1", deadline=50.0)
    b = scalar_bid_from_report("a", "survey", report, 2.0, task)
    assert set(b.__dataclass_fields__) == {
        "agent_id",
        "option_id",
        "expected_time",
        "cost",
        "decline_prob",
    }
    assert b.expected_time == pytest.approx(50.0)
    assert b.decline_prob == pytest.approx(deadline_violation_prob(report.distribution, 50.0))
