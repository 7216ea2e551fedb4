"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines. Tolerances are pinned here and nowhere else.
"""

import json
import math
import statistics
import time

import numpy as np

from roc.agents import (
    AgentProfile,
    OutcomeGenerator,
    ReportingProfile,
    ScalarLaw,
    SuccessModel,
    execute,
    generate_ground_truth,
    report as agent_report,
)
from roc.calibration import (
    BucketConfig,
    CalibrationLedger,
    LedgerRecord,
    fit_empirical_model,
    pit_value,
    recalibrate,
)
from roc.clearinghouse import (
    ClearingConfig,
    SolverConfig,
    clear,
)
from roc.distributions import (
    RiskReport,
    brier,
    compose_portfolio,
    crps,
)
from roc.model import AgentDescriptor, ConstraintSet, Context, OptionSpec
from roc.risk import (
    RiskConfig,
    UtilityConfig,
    cvar,
    deadline_violation_prob,
    expected_utility,
    utility,
)
from roc.simulator import DeadlineSpec, ScenarioConfig, TaskTemplate, run

from oracles import (
    brute_crps,
    brute_cvar,
    chi_square_uniform,
    empirical_ks,
    mc_compose,
)
from test_clearinghouse import make_task, reliable_report, state_of, simple_agent, random_instance, oracle_optimum
from test_distributions import dist_of, random_dist


def report_line(number: int, name: str, ok: bool, detail: str) -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] criterion {number} ({name}): {detail}")


# -- criterion 1: risk-math oracle equivalence ---------------------------------------


def test_criterion_1_risk_math_oracles():
    started = time.perf_counter()
    rng = np.random.default_rng(101)
    cfg = UtilityConfig()
    worst_arith = 0.0
    worst_ks = 0.0
    for trial in range(100):
        n = int(rng.integers(1, 17))
        times = rng.uniform(0.5, 120.0, size=n)
        success = rng.random(n) < 0.7
        probs = rng.dirichlet(np.ones(n))
        atoms = [
            (float(times[i]), bool(success[i]), {"haz": float(rng.uniform(0, 5))}, float(probs[i]))
            for i in range(n)
        ]
        dist = dist_of(*atoms)
        task = make_task(deadline=float(rng.uniform(10, 100)))

        # cvar vs sorted-tail brute force
        tm = dist.time_marginal()
        pairs = list(zip(tm.values.tolist(), tm.probs.tolist()))
        alpha = float(rng.uniform(0.02, 1.0))
        worst_arith = max(worst_arith, abs(cvar(tm, alpha) - brute_cvar(pairs, alpha)))

        # expected utility vs per-atom enumeration through the scalar path
        brute_eu = sum(p * utility(o, task, cfg, 1.0) for o, p in dist.atoms)
        worst_arith = max(worst_arith, abs(expected_utility(dist, task, cfg, 1.0) - brute_eu))

        # deadline violation probability vs enumeration
        brute_viol = sum(
            p for o, p in dist.atoms if not (o.success and o.completion_time <= task.deadline)
        )
        worst_arith = max(
            worst_arith, abs(deadline_violation_prob(dist, task.deadline) - brute_viol)
        )

        # crps vs double sum
        y = float(rng.uniform(0, 130))
        worst_arith = max(worst_arith, abs(crps(tm, y) - brute_crps(pairs, y)))

        # brier identity
        p = float(rng.uniform(0, 1))
        outcome = bool(rng.random() < 0.5)
        worst_arith = max(worst_arith, abs(brier(p, outcome) - (p - float(outcome)) ** 2))

        # composition vs 1e5-sample Monte Carlo on every marginal
        if trial < 100:
            backup = random_dist(rng, max_atoms=8)
            primary = random_dist(rng, max_atoms=8)
            trigger = float(rng.uniform(1.0, 60.0))
            composed = compose_portfolio(primary, backup, trigger)
            to_atoms = lambda d: [
                ({"t": o.completion_time, "s": o.success, "metrics": dict(o.metrics)}, pr)
                for o, pr in d.atoms
            ]
            sampled = mc_compose(
                to_atoms(primary), to_atoms(backup), trigger, 100_000, 9000 + trial
            )
            ctm = composed.time_marginal()
            worst_ks = max(
                worst_ks, empirical_ks(sampled["t"], list(zip(ctm.values, ctm.probs)))
            )
            worst_ks = max(worst_ks, abs(sampled["s"].mean() - composed.success_prob()))
            chm = composed.metric_marginal("haz")
            worst_ks = max(
                worst_ks, empirical_ks(sampled["haz"], list(zip(chm.values, chm.probs)))
            )
    elapsed = time.perf_counter() - started
    ok = worst_arith <= 1e-9 and worst_ks <= 0.02 and elapsed < 10.0
    report_line(
        1,
        "risk-math oracle equivalence",
        ok,
        f"max arithmetic deviation {worst_arith:.2e}, max composition KS {worst_ks:.4f}, "
        f"{elapsed:.1f}s",
    )
    assert worst_arith <= 1e-9
    assert worst_ks <= 0.02
    assert elapsed < 10.0


# -- criterion 2: solver oracle equivalence ------------------------------------------


def test_criterion_2_solver_oracles():
    started = time.perf_counter()
    rng = np.random.default_rng(202)
    worst_gap = 0.0
    ordering_ok = True
    totals = {"exhaustive": 0.0, "greedy": 0.0, "greedy_plus_local_search": 0.0}
    for _ in range(200):
        state, reports = random_instance(rng, max_tasks=3, max_agents=4)
        objectives = {}
        for mode in ("exhaustive", "greedy", "greedy_plus_local_search"):
            cfg = ClearingConfig(solver=SolverConfig(mode=mode), risk=RiskConfig(lambda_=1.0))
            objectives[mode] = clear(state, reports, cfg).objective_value
            totals[mode] += objectives[mode]
        cfg = ClearingConfig(solver=SolverConfig(mode="exhaustive"), risk=RiskConfig(lambda_=1.0))
        optimum = oracle_optimum(state, reports, cfg)
        worst_gap = max(worst_gap, abs(objectives["exhaustive"] - optimum))
        ordering_ok = ordering_ok and (
            objectives["exhaustive"] >= objectives["greedy_plus_local_search"] - 1e-9
            >= objectives["greedy"] - 2e-9
        )
    # the 0.6 bound is on the objective attained over the whole instance set;
    # single near-zero-optimum instances make per-instance ratios meaningless
    greedy_ratio = totals["greedy"] / totals["exhaustive"]
    local_ratio = totals["greedy_plus_local_search"] / totals["exhaustive"]
    elapsed = time.perf_counter() - started
    ok = worst_gap <= 1e-9 and ordering_ok and local_ratio >= greedy_ratio >= 0.6 and elapsed < 30.0
    report_line(
        2,
        "solver oracle equivalence",
        ok,
        f"max |exhaustive - enumeration| {worst_gap:.2e}; objective over the set: "
        f"greedy {greedy_ratio:.3f}, local-search {local_ratio:.3f} of exhaustive; "
        f"ordering {'held' if ordering_ok else 'violated'}; {elapsed:.1f}s",
    )
    assert worst_gap <= 1e-9
    assert ordering_ok
    assert greedy_ratio >= 0.6
    assert local_ratio >= greedy_ratio
    assert elapsed < 30.0


# -- criterion 3: lambda monotonicity ---------------------------------------------------


def test_criterion_3_lambda_monotonicity():
    rng = np.random.default_rng(303)
    lambdas = (0.0, 0.5, 1.0, 2.0, 5.0, 10.0)
    violations = 0
    for _ in range(50):
        n_agents = int(rng.integers(2, 5))
        state = state_of(*(simple_agent(f"a{i}") for i in range(n_agents)))
        task = make_task("t1", deadline=float(rng.uniform(20, 120)))
        state.active_tasks["t1"] = task
        table = {}
        for i in range(n_agents):
            t = float(rng.uniform(5, 150))
            p = float(rng.uniform(0.4, 1.0))
            table[(f"a{i}", "survey")] = reliable_report(t, p)
        reports = {"t1": table}
        risks = []
        for lam in lambdas:
            cfg = ClearingConfig(
                solver=SolverConfig(mode="exhaustive"), risk=RiskConfig(lambda_=lam)
            )
            schedule = clear(state, reports, cfg)
            if "t1" in schedule.diagnostics:
                risks.append(schedule.diagnostics["t1"].risk_value)
            else:
                risks.append(0.0)  # unassigned contributes no risk
        if any(r1 < r2 - 1e-12 for r1, r2 in zip(risks, risks[1:])):
            violations += 1
    ok = violations == 0
    report_line(
        3,
        "lambda monotonicity",
        ok,
        f"selected risk non-increasing in lambda on 50/50 instances"
        if ok
        else f"{violations} instances violated monotonicity",
    )
    assert violations == 0


# -- criterion 4: tail-risk advantage over the scalar auction -----------------------------


def _tail_risk_config(mechanism: str, seed: int) -> ScenarioConfig:
    # low mean, fat constant-hazard tail: ~29% of completions land past the
    # 60 s deadline even though the mean (50 s) undercuts the steady agent's
    gambler = AgentProfile(
        descriptor=AgentDescriptor(
            agent_id="gambler",
            kind="robot",
            options=(OptionSpec(option_id="job", label="Job", nominal_cost=1.0),),
        ),
        generators={
            "job": OutcomeGenerator(
                time=ScalarLaw(kind="shifted_exponential", shift=5.0, mean_excess=45.0, upper=600.0),
                success=SuccessModel(base=0.99),
            )
        },
    )
    # higher mean (57 s) but tightly concentrated below the deadline
    steady = AgentProfile(
        descriptor=AgentDescriptor(
            agent_id="steady",
            kind="robot",
            options=(OptionSpec(option_id="job", label="Job", nominal_cost=1.0),),
        ),
        generators={
            "job": OutcomeGenerator(
                time=ScalarLaw(kind="shifted_exponential", shift=55.0, mean_excess=2.0, upper=600.0),
                success=SuccessModel(base=0.99),
            )
        },
    )
    template = TaskTemplate(
        goal_label="job",
        rate_per_hour=15.0,
        deadline=DeadlineSpec(kind="fixed", value=60.0),
        constraints=ConstraintSet(),
    )
    return ScenarioConfig(
        horizon=3600.0,
        seed=seed,
        mechanism=mechanism,
        task_templates=(template,),
        roster=(gambler, steady),
        solver=SolverConfig(mode="exhaustive", allow_backups=False),
        utility=UtilityConfig(cost_weight=0.0),
        risk=RiskConfig(measure="deadline_violation_prob", lambda_=1.0),
        clear_tick=30.0,
    )


def test_criterion_4_tail_risk_beats_scalar_auction():
    started = time.perf_counter()
    diffs = []
    for seed in range(1, 21):
        rates = {}
        for mechanism in ("roc_full", "auction"):
            result = run(_tail_risk_config(mechanism, seed))
            assert result.metrics.n_tasks > 0
            rates[mechanism] = result.metrics.deadline_violation_rate
        diffs.append(rates["auction"] - rates["roc_full"])
    mean_diff = statistics.mean(diffs)
    stderr = statistics.stdev(diffs) / math.sqrt(len(diffs))
    elapsed = time.perf_counter() - started
    ok = mean_diff >= 0.10 and elapsed < 120.0
    report_line(
        4,
        "tail-risk advantage",
        ok,
        f"paired deadline-violation difference {mean_diff * 100:.1f} ± {stderr * 100:.1f} pp "
        f"over 20 seeds, {elapsed:.1f}s",
    )
    assert mean_diff >= 0.10
    assert elapsed < 120.0


# -- criterion 5: calibration loop --------------------------------------------------------


def _twin_profiles():
    option = OptionSpec(option_id="job", label="Job", nominal_cost=1.0)
    gen = OutcomeGenerator(
        time=ScalarLaw(kind="lognormal", median=60.0, sigma=0.5, upper=600.0),
        success=SuccessModel(base=0.9),
    )
    truthful = AgentProfile(
        descriptor=AgentDescriptor(agent_id="truthful", kind="robot", options=(option,)),
        generators={"job": gen},
        reporting=ReportingProfile(kind="truthful"),
    )
    braggart = AgentProfile(
        descriptor=AgentDescriptor(agent_id="braggart", kind="robot", options=(option,)),
        generators={"job": gen},
        reporting=ReportingProfile(kind="overconfident", gamma=0.45, delta=0.05),
    )
    return truthful, braggart


def test_criterion_5_calibration_loop():
    started = time.perf_counter()
    k_min = 20
    crps_wins = 0
    chi_wins = 0
    runs = 20
    ctx = Context(features={"x": 0.5})
    truthful, braggart = _twin_profiles()
    truth_report = agent_report(truthful, "job", ctx)
    brag_report = agent_report(braggart, "job", ctx)
    brag_marginal = brag_report.distribution.time_marginal()
    for run_idx in range(runs):
        rng = np.random.default_rng(500 + run_idx)
        ledger = CalibrationLedger()
        raw_hist = [0] * 10
        recal_hist = [0] * 10
        crps_truth = []
        crps_brag = []
        for i in range(500):
            realized = execute(truthful, "job", ctx, rng)
            crps_truth.append(crps(truth_report.distribution.time_marginal(), realized.completion_time))
            crps_brag.append(crps(brag_marginal, realized.completion_time))
            stats = ledger.stats("braggart", "job")
            if stats.count >= k_min:
                corrected = recalibrate(brag_report, stats, k_min)
                u = pit_value(
                    corrected.distribution.time_marginal(),
                    realized.completion_time,
                    float(rng.random()),
                )
                recal_hist[min(9, int(u * 10))] += 1
                u_raw = pit_value(brag_marginal, realized.completion_time, float(rng.random()))
                raw_hist[min(9, int(u_raw * 10))] += 1
            ledger.record_outcome(
                LedgerRecord(
                    task_id=f"t{i}",
                    agent_id="braggart",
                    option_id="job",
                    context=ctx,
                    report=brag_report,
                    realized=realized,
                    timestamp=float(i),
                )
            )
        if statistics.mean(crps_brag) > statistics.mean(crps_truth):
            crps_wins += 1
        if chi_square_uniform(recal_hist) < chi_square_uniform(raw_hist):
            chi_wins += 1
    elapsed = time.perf_counter() - started
    ok = crps_wins >= 0.95 * runs and chi_wins >= 0.90 * runs
    report_line(
        5,
        "calibration loop",
        ok,
        f"overconfident CRPS higher in {crps_wins}/{runs} runs; recalibration lowered the "
        f"PIT chi-square in {chi_wins}/{runs} runs; {elapsed:.1f}s",
    )
    assert crps_wins >= 0.95 * runs
    assert chi_wins >= 0.90 * runs


# -- criterion 6: cold-start convergence of the learned-model tier -------------------------


def _convergence_agents():
    option = OptionSpec(option_id="job", label="Job", nominal_cost=1.0)
    able = AgentProfile(
        descriptor=AgentDescriptor(agent_id="able", kind="robot", options=(option,)),
        generators={
            "job": OutcomeGenerator(
                time=ScalarLaw(kind="lognormal", median=30.0, sigma=0.3, upper=600.0),
                success=SuccessModel(base=0.95),
            )
        },
    )
    shaky = AgentProfile(
        descriptor=AgentDescriptor(agent_id="shaky", kind="robot", options=(option,)),
        generators={
            "job": OutcomeGenerator(
                time=ScalarLaw(kind="lognormal", median=34.0, sigma=0.3, upper=600.0),
                success=SuccessModel(base=0.70),
            )
        },
    )
    return able, shaky


def _battery_task(i: int, x: float) -> "Task":
    from roc.model import Task

    return Task(
        id=f"eval-{i}",
        goal_label="job",
        context=Context(features={"x": x}),
        deadline=60.0,
        constraints=ConstraintSet(),
    )


def _decision_quality(schedule_portfolios, task, truth_dists, ucfg, rcfg):
    from roc.risk import portfolio_score

    if task.id not in schedule_portfolios:
        return 0.0
    portfolio = schedule_portfolios[task.id]
    dist = truth_dists[portfolio.primary.agent_id]
    score, _, _ = portfolio_score(dist, task, ucfg, rcfg, portfolio.primary.cost)
    return score


def test_criterion_6_learned_model_convergence():
    started = time.perf_counter()
    able, shaky = _convergence_agents()
    profiles = {"able": able, "shaky": shaky}
    bucket_cfg = BucketConfig(ranges={"x": (0.0, 1.0)}, bins=4, min_count=5, prior_time_max=300.0)
    ucfg = UtilityConfig(cost_weight=0.0)
    rcfg = RiskConfig(lambda_=1.0)
    battery_rng = np.random.default_rng(6000)
    battery = [_battery_task(i, float(battery_rng.uniform(0, 1))) for i in range(40)]

    def clearing_quality(reports_fn, model):
        total = 0.0
        for task in battery:
            state = state_of(simple_agent("able", ("job",)), simple_agent("shaky", ("job",)))
            state.active_tasks[task.id] = task
            cfg = ClearingConfig(
                solver=SolverConfig(mode="exhaustive", allow_backups=False),
                utility=ucfg,
                risk=rcfg,
                recalibrate_reports=False,
            )
            schedule = clear(state, {task.id: reports_fn(task)}, cfg, model=model)
            truth_dists = {
                name: generate_ground_truth(profiles[name], "job", task.context)
                for name in profiles
            }
            total += _decision_quality(schedule.portfolios, task, truth_dists, ucfg, rcfg)
        return total / len(battery)

    def truthful_reports(task):
        return {
            (name, "job"): agent_report(profiles[name], "job", task.context)
            for name in profiles
        }

    gaps = {50: [], 1000: []}
    for seed in range(10):
        rng = np.random.default_rng(7000 + seed)
        q_full = clearing_quality(truthful_reports, None)
        for n_records in (50, 1000):
            ledger = CalibrationLedger()
            for i in range(n_records):
                name = ("able", "shaky")[i % 2]
                ctx = Context(features={"x": float(rng.uniform(0, 1))})
                realized = execute(profiles[name], "job", ctx, rng)
                ledger.record_outcome(
                    LedgerRecord(
                        task_id=f"warm-{seed}-{i}",
                        agent_id=name,
                        option_id="job",
                        context=ctx,
                        report=RiskReport(tier="min"),
                        realized=realized,
                        timestamp=float(i),
                    )
                )
            model = fit_empirical_model(ledger, bucket_cfg)
            q_min = clearing_quality(lambda task: {}, model)
            gaps[n_records].append(q_full - q_min)
    gap_small = statistics.mean(gaps[50])
    gap_large = statistics.mean(gaps[1000])
    elapsed = time.perf_counter() - started
    ok = gap_large <= 0.5 * gap_small
    report_line(
        6,
        "learned-model convergence",
        ok,
        f"mean quality gap {gap_small:.4f} at 50 records vs {gap_large:.4f} at 1000 "
        f"({(gap_large / gap_small * 100) if gap_small else 0:.0f}%), {elapsed:.1f}s",
    )
    assert gap_large <= 0.5 * gap_small


# -- criterion 7: determinism and replay ----------------------------------------------------


def test_criterion_7_determinism_and_replay(tmp_path):
    import json as _json

    from roc.cli import _replay_verify, main

    from test_simulator import tiny_scenario
    from roc.configio import scenario_to_dict

    scenario = tmp_path / "scenario.json"
    scenario.write_text(_json.dumps(scenario_to_dict(tiny_scenario(horizon=900.0, rate=15.0))))
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["run", "--config", str(scenario), "--out", str(out)]) == 0
        (run_dir,) = [p for p in out.iterdir() if p.is_dir()]
        outs.append(run_dir)
    metrics_identical = (outs[0] / "metrics.csv").read_bytes() == (outs[1] / "metrics.csv").read_bytes()
    decisions_identical = (outs[0] / "decisions.jsonl").read_bytes() == (
        outs[1] / "decisions.jsonl"
    ).read_bytes()
    events_identical = (outs[0] / "events.jsonl").read_bytes() == (outs[1] / "events.jsonl").read_bytes()

    cfg_entry = None
    worst = 0.0
    rounds = 0
    with (outs[0] / "decisions.jsonl").open() as fh:
        for line in fh:
            entry = _json.loads(line)
            if entry.get("kind") == "config":
                cfg_entry = entry
            elif entry.get("kind") == "round":
                for task_id in entry["tasks"]:
                    _, dev = _replay_verify(entry, task_id, cfg_entry)
                    worst = max(worst, dev)
                    rounds += 1
    ok = metrics_identical and decisions_identical and events_identical and worst <= 1e-9 and rounds > 0
    report_line(
        7,
        "determinism and replay",
        ok,
        f"byte-identical outputs: metrics={metrics_identical}, decisions={decisions_identical}, "
        f"events={events_identical}; max replay deviation {worst:.2e} over {rounds} task-rounds",
    )
    assert metrics_identical and decisions_identical and events_identical
    assert rounds > 0
    assert worst <= 1e-9


# -- criterion 8: protocol round-trips --------------------------------------------------------


def test_criterion_8_protocol_round_trips():
    from roc import protocol

    from test_protocol import (
        random_agent,
        random_outcome,
        random_portfolio,
        random_report,
        random_task,
    )

    rng = np.random.default_rng(808)
    checked = 0
    for i in range(200):
        for to_dict, from_dict, value in (
            (protocol.task_to_dict, protocol.task_from_dict, random_task(rng, i)),
            (protocol.advertisement_to_dict, protocol.advertisement_from_dict, random_agent(rng, i)),
            (protocol.risk_report_to_dict, protocol.risk_report_from_dict, random_report(rng)),
        ):
            encoded = protocol.dumps_canonical(to_dict(value))
            decoded = from_dict(json.loads(encoded))
            assert decoded == value
            assert protocol.dumps_canonical(to_dict(decoded)) == encoded
            checked += 1
        portfolio = random_portfolio(rng, i)
        encoded = protocol.dumps_canonical(protocol.dispatch_to_dict(portfolio.task_id, portfolio))
        task_id, decoded_p = protocol.dispatch_from_dict(json.loads(encoded))
        assert (task_id, decoded_p) == (portfolio.task_id, portfolio)
        assert protocol.dumps_canonical(protocol.dispatch_to_dict(task_id, decoded_p)) == encoded
        checked += 1
        outcome = random_outcome(rng)
        encoded = protocol.dumps_canonical(protocol.outcome_report_to_dict("t", "a", "o", outcome))
        decoded_o = protocol.outcome_report_from_dict(json.loads(encoded))
        assert decoded_o == ("t", "a", "o", outcome)
        assert protocol.dumps_canonical(protocol.outcome_report_to_dict(*decoded_o)) == encoded
        checked += 1
    ok = checked >= 1000
    report_line(8, "protocol round-trips", ok, f"{checked} randomized values round-tripped byte-identically")
    assert checked >= 1000
