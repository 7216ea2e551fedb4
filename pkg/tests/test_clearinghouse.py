import numpy as np
import pytest

from roc import protocol
from roc.calibration import CalibrationLedger
from roc.clearinghouse import (
    AgentFailureEvent,
    ClearingConfig,
    ClearingState,
    MissingReportError,
    OutcomeEvent,
    ResourcePool,
    SolverConfig,
    SolverError,
    TaskArrivalEvent,
    TickEvent,
    build_portfolios,
    candidate_distributions,
    clear,
    clear_with_audit,
    enumerate_candidates,
    evaluate_portfolio,
    reclear_on_event,
    validate_schedule_against_state,
)
from roc.distributions import RiskReport, compose_portfolio
from roc.model import (
    AgentDescriptor,
    Candidate,
    ConstraintSet,
    Context,
    OptionSpec,
    OutcomeVector,
    Portfolio,
    Task,
)
from roc.risk import RiskConfig, UtilityConfig, portfolio_score

from oracles import brute_best_assignment
from test_distributions import dist_of


def simple_agent(agent_id, option_ids=("survey",), roles=()):
    options = tuple(OptionSpec(option_id=o, label=o, nominal_cost=1.0) for o in option_ids)
    return AgentDescriptor(
        agent_id=agent_id, kind="robot", options=options, roles=frozenset(roles)
    )


def make_task(task_id="t1", deadline=100.0, theta=0.0, arrival=0.0, demands=None):
    return Task(
        id=task_id,
        goal_label="survey",
        context=Context(),
        deadline=deadline,
        constraints=ConstraintSet(
            deadline_confidence=theta, resource_demands=demands or {}
        ),
        arrival_time=arrival,
    )


def state_of(*agents, pools=None):
    return ClearingState(
        registry={a.agent_id: a for a in agents},
        resource_pools={k: ResourcePool(v) for k, v in (pools or {}).items()},
    )


def report_of(*atoms):
    return RiskReport(tier="full", distribution=dist_of(*atoms))


def reliable_report(t=50.0, p=1.0):
    if p >= 1.0:
        return report_of((t, True, {}, 1.0))
    return report_of((t, True, {}, p), (t, False, {}, 1.0 - p))


CONFIG = ClearingConfig(solver=SolverConfig(mode="exhaustive"), risk=RiskConfig(lambda_=1.0))


# -- candidate enumeration ---------------------------------------------------------


def test_enumerate_reference_setup():
    drone = simple_agent("drone", ("survey_stairwell",))
    robot = simple_agent("robot", ("survey_stairwell",))
    medic = simple_agent("medic", ("onsite_triage",))
    state = state_of(drone, robot, medic)
    task = make_task("s1")
    reports = {
        ("drone", "survey_stairwell"): reliable_report(),
        ("robot", "survey_stairwell"): reliable_report(),
    }
    task = Task(
        id="s1",
        goal_label="survey_stairwell",
        context=Context(),
        deadline=360.0,
        constraints=ConstraintSet(),
    )
    candidates = enumerate_candidates(state, task, reports)
    assert [(c.agent_id, c.option_id) for c in candidates] == [
        ("drone", "survey_stairwell"),
        ("robot", "survey_stairwell"),
    ]


def test_enumerate_all_busy_is_empty():
    a = simple_agent("a")
    state = state_of(a)
    state.busy["a"] = "elsewhere"
    assert enumerate_candidates(state, make_task(), {}) == []


def test_enumerate_combinatorial_count():
    options = tuple(
        OptionSpec(option_id=o, label=o, nominal_cost=1.0, goals=frozenset({"survey"}))
        for o in ("o1", "o2")
    )
    agents = [
        AgentDescriptor(agent_id=f"a{i}", kind="robot", options=options) for i in range(3)
    ]
    state = state_of(*agents)
    reports = {(a.agent_id, o): reliable_report() for a in agents for o in ("o1", "o2")}
    candidates = enumerate_candidates(state, make_task(), reports)
    assert len(candidates) == 6


def test_min_tier_filled_from_model():
    from roc.calibration import BucketConfig, fit_empirical_model

    a = simple_agent("a")
    state = state_of(a)
    model = fit_empirical_model(CalibrationLedger(), BucketConfig(prior_time_max=10.0))
    candidates = enumerate_candidates(state, make_task(), {}, model=model)
    assert len(candidates) == 1
    assert candidates[0].report is not None
    assert candidates[0].report.tier == "full"


# -- portfolio construction ---------------------------------------------------------


def test_build_portfolios_counts():
    c1 = Candidate("a", "survey", 1.0, reliable_report())
    c2 = Candidate("b", "survey", 1.0, reliable_report())
    task = make_task()
    dists = candidate_distributions([c1, c2])
    with_backups = build_portfolios([c1, c2], True, task, dists)
    assert len(with_backups) == 4  # 2 singletons + 2 ordered pairs
    singles_only = build_portfolios([c1, c2], False, task, dists)
    assert len(singles_only) == 2
    assert len(build_portfolios([c1], True, task, candidate_distributions([c1]))) == 1


def test_backup_trigger_clamped_to_deadline():
    slow = Candidate("a", "survey", 1.0, report_of((500.0, True, {}, 1.0)))
    fast = Candidate("b", "survey", 1.0, reliable_report(10.0))
    task = make_task(deadline=100.0)
    dists = candidate_distributions([slow, fast])
    pairs = [p for p in build_portfolios([slow, fast], True, task, dists) if p.backup]
    for p in pairs:
        assert 0 < p.backup_trigger_time <= 100.0


# -- portfolio evaluation ---------------------------------------------------------------


def test_evaluate_singleton_lambda_zero_is_expected_utility():
    c = Candidate("a", "survey", 2.0, reliable_report(50.0, 0.8))
    task = make_task(deadline=100.0)
    cfg_u = UtilityConfig()
    cfg_r = RiskConfig(lambda_=0.0)
    dists = candidate_distributions([c])
    ev = evaluate_portfolio(Portfolio("t1", c), task, cfg_u, cfg_r, dists)
    assert ev.score == pytest.approx(ev.expected_utility)


def test_evaluate_infeasible_reports_negative_slack():
    c = Candidate("a", "survey", 0.0, reliable_report(50.0, 0.5))
    task = make_task(theta=0.9)
    ev = evaluate_portfolio(
        Portfolio("t1", c), task, UtilityConfig(), RiskConfig(), candidate_distributions([c])
    )
    assert not ev.feasible
    assert ev.slacks["deadline"] == pytest.approx(0.5 - 0.9)


def test_evaluate_pair_matches_hand_composition():
    primary = Candidate("a", "survey", 1.0, report_of((10.0, False, {}, 1.0)))
    backup = Candidate("b", "survey", 2.0, report_of((20.0, True, {}, 1.0)))
    task = make_task(deadline=100.0)
    portfolio = Portfolio("t1", primary, backup, backup_trigger_time=30.0)
    dists = candidate_distributions([primary, backup])
    ev = evaluate_portfolio(portfolio, task, UtilityConfig(), RiskConfig(lambda_=1.0), dists)
    composed = compose_portfolio(
        dists[("a", "survey")], dists[("b", "survey")], 30.0
    )
    # primary always fails, so the backup always triggers: cost = 1 + 2
    score, eu, risk = portfolio_score(composed, task, UtilityConfig(), RiskConfig(lambda_=1.0), 3.0)
    assert (ev.score, ev.expected_utility, ev.risk_value) == pytest.approx((score, eu, risk))


def test_evaluate_missing_report_identifies_candidate():
    c = Candidate("a", "survey", 1.0, None)
    with pytest.raises(MissingReportError, match="a"):
        candidate_distributions([c])


# -- clear -----------------------------------------------------------------------------


def test_clear_picks_higher_score():
    a = simple_agent("a")
    b = simple_agent("b")
    state = state_of(a, b)
    task = make_task("t1", deadline=100.0)
    state.active_tasks["t1"] = task
    reports = {
        "t1": {
            ("a", "survey"): reliable_report(10.0),   # on time, high utility
            ("b", "survey"): reliable_report(500.0),  # late
        }
    }
    schedule = clear(state, reports, CONFIG)
    assert schedule.portfolios["t1"].primary.agent_id == "a"


def test_clear_two_tasks_one_agent_assigns_better_score():
    a = simple_agent("a")
    state = state_of(a)
    t1 = make_task("t1", deadline=20.0)   # the report is late for t1
    t2 = make_task("t2", deadline=200.0)  # comfortably on time
    state.active_tasks = {"t1": t1, "t2": t2}
    reports = {
        "t1": {("a", "survey"): reliable_report(50.0)},
        "t2": {("a", "survey"): reliable_report(50.0)},
    }
    schedule = clear(state, reports, CONFIG)
    assert set(schedule.portfolios) == {"t2"}
    assert schedule.unassigned == ("t1",)


def random_instance(rng, max_tasks=3, max_agents=4):
    n_tasks = int(rng.integers(1, max_tasks + 1))
    n_agents = int(rng.integers(2, max_agents + 1))
    agents = [simple_agent(f"a{i}") for i in range(n_agents)]
    pools = {"ops": float(rng.uniform(1.0, 3.0))} if rng.random() < 0.3 else {}
    state = state_of(*agents, pools=pools)
    reports = {}
    for i in range(n_tasks):
        demands = {"ops": 1.0} if pools and rng.random() < 0.5 else {}
        task = make_task(f"t{i}", deadline=float(rng.uniform(20, 120)), demands=demands)
        state.active_tasks[task.id] = task
        table = {}
        for agent in agents:
            t = float(rng.uniform(5, 150))
            p = float(rng.uniform(0.4, 1.0))
            table[(agent.agent_id, "survey")] = reliable_report(t, p)
        reports[task.id] = table
    return state, reports


def oracle_optimum(state, reports, config):
    _, tables, _ = clear_with_audit(state, reports, config)
    per_task = []
    for task_id in sorted(state.active_tasks):
        options = []
        task = state.active_tasks[task_id]
        for portfolio, ev in tables[task_id]:
            agents = {portfolio.primary.agent_id}
            if portfolio.backup:
                agents.add(portfolio.backup.agent_id)
            options.append((frozenset(agents), ev.score, dict(task.constraints.resource_demands)))
        per_task.append(options)
    budgets = {k: p.budget for k, p in state.resource_pools.items()}
    return brute_best_assignment(per_task, budgets)


def test_exhaustive_matches_enumeration_oracle():
    rng = np.random.default_rng(41)
    for _ in range(40):
        state, reports = random_instance(rng)
        schedule = clear(state, reports, CONFIG)
        assert schedule.objective_value == pytest.approx(
            oracle_optimum(state, reports, CONFIG), abs=1e-9
        )


def test_solver_quality_ordering():
    rng = np.random.default_rng(43)
    for _ in range(30):
        state, reports = random_instance(rng)
        objectives = {}
        for mode in ("exhaustive", "greedy", "greedy_plus_local_search"):
            cfg = ClearingConfig(solver=SolverConfig(mode=mode), risk=RiskConfig(lambda_=1.0))
            objectives[mode] = clear(state, reports, cfg).objective_value
        assert objectives["exhaustive"] >= objectives["greedy_plus_local_search"] - 1e-9
        assert objectives["greedy_plus_local_search"] >= objectives["greedy"] - 1e-9


def test_exhaustive_limit_error_demands_other_mode():
    agents = [simple_agent(f"a{i}") for i in range(4)]
    state = state_of(*agents)
    reports = {}
    for i in range(3):
        task = make_task(f"t{i}")
        state.active_tasks[task.id] = task
        reports[task.id] = {
            (a.agent_id, "survey"): reliable_report(float(10 + i)) for a in agents
        }
    cfg = ClearingConfig(solver=SolverConfig(mode="exhaustive", exhaustive_limit=10))
    with pytest.raises(SolverError, match="greedy"):
        clear(state, reports, cfg)


def schedule_fingerprint(schedule):
    payload = {
        "portfolios": {
            tid: protocol.portfolio_to_dict(p) for tid, p in schedule.portfolios.items()
        },
        "objective": schedule.objective_value,
        "unassigned": list(schedule.unassigned),
    }
    return protocol.dumps_canonical(payload)


def test_clear_deterministic():
    rng = np.random.default_rng(47)
    state, reports = random_instance(rng)
    import copy

    s1 = clear(copy.deepcopy(state), reports, CONFIG)
    s2 = clear(copy.deepcopy(state), reports, CONFIG)
    assert schedule_fingerprint(s1) == schedule_fingerprint(s2)


def test_lambda_monotone_through_clear():
    a_report = reliable_report(10.0, 0.70)   # fast but flaky
    b_report = reliable_report(80.0, 0.99)   # slower but safe
    state = state_of(simple_agent("a"), simple_agent("b"))
    task = make_task("t1", deadline=100.0)
    state.active_tasks["t1"] = task
    reports = {"t1": {("a", "survey"): a_report, ("b", "survey"): b_report}}
    risks = []
    for lam in (0.0, 0.5, 1.0, 2.0, 5.0, 10.0):
        cfg = ClearingConfig(
            solver=SolverConfig(mode="exhaustive", allow_backups=False),
            risk=RiskConfig(lambda_=lam),
        )
        schedule = clear(state, reports, cfg)
        risks.append(schedule.diagnostics["t1"].risk_value)
    assert all(r1 >= r2 - 1e-12 for r1, r2 in zip(risks, risks[1:]))


def test_emitted_schedules_pass_validator():
    rng = np.random.default_rng(53)
    for _ in range(20):
        state, reports = random_instance(rng)
        for mode in ("exhaustive", "greedy", "greedy_plus_local_search"):
            cfg = ClearingConfig(solver=SolverConfig(mode=mode))
            schedule = clear(state, reports, cfg)
            assert validate_schedule_against_state(schedule.portfolios, state) == []
            assert schedule.feasible


def test_mc_evaluation_approximates_exact():
    c1 = Candidate("a", "survey", 1.0, reliable_report(50.0, 0.8))
    c2 = Candidate("b", "survey", 1.0, reliable_report(70.0, 0.9))
    task = make_task(deadline=100.0)
    dists = candidate_distributions([c1, c2])
    portfolio = Portfolio("t1", c1, c2, backup_trigger_time=60.0)
    exact = evaluate_portfolio(portfolio, task, UtilityConfig(), RiskConfig(), dists)
    approx = evaluate_portfolio(
        portfolio, task, UtilityConfig(), RiskConfig(), dists, mc_samples=20_000
    )
    assert approx.score == pytest.approx(exact.score, abs=0.05)
    # deterministic: same sample budget, same estimate
    again = evaluate_portfolio(
        portfolio, task, UtilityConfig(), RiskConfig(), dists, mc_samples=20_000
    )
    assert again.score == approx.score


# -- event-driven re-clearing ----------------------------------------------------------


def arrival(task, t=0.0):
    return TaskArrivalEvent(task=task, time=t)


def simple_reports_provider(reports):
    return lambda task: reports.get(task.id, {})


def test_reclear_dispatches_on_arrival():
    state = state_of(simple_agent("a"))
    task = make_task("t1")
    reports = {"t1": {("a", "survey"): reliable_report(10.0)}}
    result = reclear_on_event(
        state, arrival(task), CONFIG, simple_reports_provider(reports)
    )
    assert [(d[0], d[2]) for d in result.dispatches] == [("t1", "primary")]
    assert state.busy == {"a": "t1"}
    assert "t1" in state.executing


def test_reclear_arrival_without_eligible_agents_flags_unassigned():
    state = state_of()
    task = make_task("t1")
    result = reclear_on_event(state, arrival(task), CONFIG, lambda t: {})
    assert result.schedule.unassigned == ("t1",)
    assert result.dispatches == []
    assert "t1" in state.active_tasks  # retried next round


def test_reclear_tick_idempotent():
    state = state_of()
    task = make_task("t1", deadline=1000.0)
    reclear_on_event(state, arrival(task), CONFIG, lambda t: {})
    r1 = reclear_on_event(state, TickEvent(time=1.0), CONFIG, lambda t: {})
    r2 = reclear_on_event(state, TickEvent(time=2.0), CONFIG, lambda t: {})
    assert schedule_fingerprint(r1.schedule) == schedule_fingerprint(r2.schedule)


def test_reclear_agent_failure_activates_backup():
    state = state_of(simple_agent("a"), simple_agent("b"))
    task = make_task("t1", deadline=500.0)
    # a fails often enough that the pair with backup b wins under high lambda
    reports = {
        "t1": {
            ("a", "survey"): reliable_report(10.0, 0.6),
            ("b", "survey"): reliable_report(20.0, 0.99),
        }
    }
    cfg = ClearingConfig(solver=SolverConfig(mode="exhaustive"), risk=RiskConfig(lambda_=5.0))
    result = reclear_on_event(state, arrival(task), cfg, simple_reports_provider(reports))
    assert result.dispatches, "expected an initial dispatch"
    portfolio = result.dispatches[0][1]
    if portfolio.backup is None:
        pytest.skip("instance did not select a backup pair")
    primary_agent = portfolio.primary.agent_id
    failure = AgentFailureEvent(agent_id=primary_agent, time=5.0)
    result2 = reclear_on_event(state, failure, cfg, simple_reports_provider(reports))
    backups = [d for d in result2.dispatches if d[2] == "backup"]
    assert len(backups) == 1
    assert backups[0][0] == "t1"
    assert result2.aborted_attempts == [("t1", primary_agent, "survey")]
    assert primary_agent in state.failed_agents


def test_reclear_no_revocation_of_executing_assignment():
    state = state_of(simple_agent("a"), simple_agent("b"))
    t1 = make_task("t1", deadline=500.0)
    reports = {
        "t1": {
            ("a", "survey"): reliable_report(10.0),
            ("b", "survey"): reliable_report(400.0),
        },
        "t2": {
            ("a", "survey"): reliable_report(5.0),
            ("b", "survey"): reliable_report(50.0),
        },
    }
    reclear_on_event(state, arrival(t1), CONFIG, simple_reports_provider(reports))
    assert state.busy["a"] == "t1"
    # a would be better for t2, but it is executing and must not be taken
    t2 = make_task("t2", deadline=500.0)
    result = reclear_on_event(state, arrival(t2, 1.0), CONFIG, simple_reports_provider(reports))
    assert result.schedule.portfolios["t2"].primary.agent_id == "b"
    assert state.busy["a"] == "t1"


def test_reclear_success_outcome_frees_agents():
    state = state_of(simple_agent("a"))
    task = make_task("t1")
    reports = {"t1": {("a", "survey"): reliable_report(10.0)}}
    reclear_on_event(state, arrival(task), CONFIG, simple_reports_provider(reports))
    outcome = OutcomeEvent(
        task_id="t1", agent_id="a", option_id="survey",
        outcome=OutcomeVector(10.0, True, {}), time=10.0,
    )
    result = reclear_on_event(state, outcome, CONFIG, lambda t: {})
    assert result.finished == [("t1", "completed")]
    assert state.busy == {}
    assert state.active_tasks == {}


def test_reclear_failure_requeues_until_deadline_lapses():
    state = state_of(simple_agent("a"))
    task = make_task("t1", deadline=100.0)
    reports = {"t1": {("a", "survey"): reliable_report(10.0)}}
    reclear_on_event(state, arrival(task), CONFIG, simple_reports_provider(reports))
    fail = OutcomeEvent(
        task_id="t1", agent_id="a", option_id="survey",
        outcome=OutcomeVector(10.0, False, {}), time=10.0,
    )
    result = reclear_on_event(state, fail, CONFIG, simple_reports_provider(reports))
    # re-dispatched immediately: the deadline has not lapsed
    assert [(d[0], d[2]) for d in result.dispatches] == [("t1", "primary")]
    late_fail = OutcomeEvent(
        task_id="t1", agent_id="a", option_id="survey",
        outcome=OutcomeVector(10.0, False, {}), time=150.0,
    )
    result2 = reclear_on_event(state, late_fail, CONFIG, simple_reports_provider(reports))
    assert ("t1", "failed") in result2.finished
    assert "t1" not in state.active_tasks


def test_reclear_unknown_event_rejected():
    state = state_of()
    with pytest.raises(ValueError, match="unknown clearing event"):
        reclear_on_event(state, object(), CONFIG, lambda t: {})


def test_reclear_expires_pending_tasks_past_deadline():
    state = state_of()
    task = make_task("t1", deadline=10.0)
    reclear_on_event(state, arrival(task), CONFIG, lambda t: {})
    result = reclear_on_event(state, TickEvent(time=20.0), CONFIG, lambda t: {})
    assert result.finished == [("t1", "expired")]
    assert state.active_tasks == {}


def test_resource_budget_respected():
    state = state_of(simple_agent("a"), simple_agent("b"), pools={"ops": 1.0})
    t1 = make_task("t1", deadline=100.0, demands={"ops": 1.0})
    t2 = make_task("t2", deadline=100.0, demands={"ops": 1.0})
    state.active_tasks = {"t1": t1, "t2": t2}
    reports = {
        "t1": {
            ("a", "survey"): reliable_report(10.0),
            ("b", "survey"): reliable_report(12.0),
        },
        "t2": {
            ("a", "survey"): reliable_report(11.0),
            ("b", "survey"): reliable_report(10.0),
        },
    }
    schedule = clear(state, reports, CONFIG)
    assert len(schedule.portfolios) == 1  # only one fits the ops budget
