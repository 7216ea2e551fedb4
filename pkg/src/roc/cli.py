"""Command-line harness: run, compare, calibration-report, replay.

Floats in every CSV and table are printed with 9 significant digits so output
is stable enough for golden-file comparison. Each run writes into its own
directory named by config hash and seed under --out (default $ROC_OUT_DIR or
./roc_out). The compare and calibration report paths also render PNG figures
next to the CSV output unless --no-figures is given.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from . import configio, protocol
from .calibration import (
    CalibrationLedger,
    ledger_record_from_dict,
    ledger_record_to_dict,
)
from .clearinghouse import evaluate_portfolio, report_distribution
from .risk import RiskConfig, UtilityConfig
from .simulator import (
    AGGREGATE_METRICS,
    METRIC_COLUMNS,
    ConfigError,
    metrics_to_row,
    run,
    run_grid,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MISSING = 3


def fmt(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return "%.9g" % value
    return str(value)


def _write_csv(path: Path, columns: Sequence[str], rows: Iterable[Mapping[str, Any]]) -> None:
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(fmt(row.get(c)) for c in columns))
    path.write_text("\n".join(lines) + "\n")


def _write_jsonl(path: Path, rows: Iterable[Mapping]) -> None:
    with path.open("w") as fh:
        for row in rows:
            fh.write(protocol.dumps_canonical(row) + "\n")


def _out_root(arg: str | None) -> Path:
    if arg:
        return Path(arg)
    env = os.environ.get("ROC_OUT_DIR")
    return Path(env) if env else Path("roc_out")


def _apply_cli_overrides(scenario: dict, args: argparse.Namespace) -> dict:
    if getattr(args, "seed", None) is not None:
        scenario["seed"] = int(args.seed)
    if getattr(args, "mechanism", None):
        scenario["mechanism"] = args.mechanism
    if getattr(args, "lambda_", None) is not None:
        configio.apply_override(scenario, "risk.lambda", float(args.lambda_))
    return scenario


def cmd_run(args: argparse.Namespace) -> int:
    scenario_dict = configio.load_json(args.config)
    scenario_dict = _apply_cli_overrides(scenario_dict, args)
    config = configio.scenario_from_dict(scenario_dict)
    echo = configio.scenario_to_dict(config)
    run_dir = _out_root(args.out) / f"{configio.config_hash(echo)}-s{config.seed}"
    run_dir.mkdir(parents=True, exist_ok=True)

    result = run(config)

    (run_dir / "config.json").write_text(json.dumps(echo, indent=2, sort_keys=True) + "\n")
    _write_csv(run_dir / "metrics.csv", METRIC_COLUMNS, [metrics_to_row(result.metrics)])
    _write_jsonl(run_dir / "events.jsonl", result.events)
    _write_jsonl(
        run_dir / "ledger.jsonl",
        (ledger_record_to_dict(r) for r in result.ledger.records),
    )
    decision_rows = [
        {
            "kind": "config",
            "utility": echo["utility"],
            "risk": echo["risk"],
            "solver": echo["solver"],
        }
    ]
    decision_rows.extend(result.decisions)
    _write_jsonl(run_dir / "decisions.jsonl", decision_rows)
    (run_dir / "run_summary.json").write_text(
        json.dumps(
            {
                "solver_wall_time_s": result.solver_wall_time,
                "events": len(result.events),
                "ledger_records": len(result.ledger),
            },
            indent=2,
            sort_keys=True,
        )
        + "\n"
    )
    print(f"run written to {run_dir}")
    for name in METRIC_COLUMNS:
        print(f"  {name}: {fmt(metrics_to_row(result.metrics)[name])}")
    return EXIT_OK


def _render_table(aggregate_rows: list[dict]) -> str:
    columns = ["config"] + [m for m in AGGREGATE_METRICS]
    widths = {c: len(c) for c in columns}
    cells: list[dict[str, str]] = []
    for row in aggregate_rows:
        out = {"config": str(row["config"])}
        for metric in AGGREGATE_METRICS:
            mean = row.get(f"{metric}_mean")
            err = row.get(f"{metric}_stderr")
            out[metric] = "" if mean is None else f"{fmt(mean)} ± {fmt(err)}"
        cells.append(out)
        for c in columns:
            widths[c] = max(widths[c], len(out[c]))
    lines = ["  ".join(c.ljust(widths[c]) for c in columns)]
    lines.append("  ".join("-" * widths[c] for c in columns))
    for out in cells:
        lines.append("  ".join(out[c].ljust(widths[c]) for c in columns))
    return "\n".join(lines)


def cmd_compare(args: argparse.Namespace) -> int:
    grid_dict = configio.load_json(args.config)
    labels, scenario_dicts, seeds = configio.grid_from_dict(
        grid_dict, base_dir=Path(args.config).parent
    )
    if getattr(args, "seed", None) is not None:
        seeds = [int(args.seed)]
    configs = [configio.scenario_from_dict(d) for d in scenario_dicts]
    out_dir = _out_root(args.out) / f"compare-{configio.config_hash(grid_dict)}"
    out_dir.mkdir(parents=True, exist_ok=True)

    run_rows, aggregate_rows = run_grid(configs, seeds, jobs=args.jobs, labels=labels)

    run_columns = ("config",) + METRIC_COLUMNS
    _write_csv(out_dir / "runs.csv", run_columns, run_rows)
    agg_columns = ["config", "mechanism", "n_seeds"]
    for metric in AGGREGATE_METRICS:
        agg_columns += [f"{metric}_mean", f"{metric}_stderr"]
    _write_csv(out_dir / "aggregate.csv", agg_columns, aggregate_rows)
    (out_dir / "config.json").write_text(json.dumps(grid_dict, indent=2, sort_keys=True) + "\n")

    table = _render_table(aggregate_rows)
    (out_dir / "table.txt").write_text(table + "\n")
    print(table)

    if not args.no_figures:
        from .figures import render_comparison_figures

        written = render_comparison_figures(aggregate_rows, out_dir / "figures")
        print(f"wrote {len(written)} figures under {out_dir / 'figures'}")
    print(f"comparison written to {out_dir}")
    return EXIT_OK


def _pit_bar(fraction: float, scale: int = 40) -> str:
    return "#" * int(round(fraction * scale))


def cmd_calibration_report(args: argparse.Namespace) -> int:
    path = Path(args.ledger)
    ledger = CalibrationLedger()
    if path.exists():
        with path.open() as fh:
            for line in fh:
                line = line.strip()
                if line:
                    ledger.record_outcome(ledger_record_from_dict(json.loads(line)))
    stats = ledger.all_stats()
    rows = []
    for (agent_id, option_id), s in sorted(stats.items()):
        print(f"{agent_id} / {option_id}: n={s.count}")
        print(f"  mean Brier: {fmt(s.mean_brier)}  mean CRPS: {fmt(s.mean_crps)}  EMA CRPS: {fmt(s.crps_ema)}")
        for i, frac in enumerate(s.pit_fractions()):
            lo, hi = i / 10, (i + 1) / 10
            print(f"  PIT [{lo:.1f},{hi:.1f}) {_pit_bar(frac)} {fmt(frac)}")
        row = {
            "agent_id": agent_id,
            "option_id": option_id,
            "count": s.count,
            "mean_brier": s.mean_brier,
            "mean_crps": s.mean_crps,
            "ema_crps": s.crps_ema,
        }
        for i, frac in enumerate(s.pit_fractions()):
            row[f"pit_{i}"] = frac
        rows.append(row)
    if not stats:
        print("ledger is empty")
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        columns = ["agent_id", "option_id", "count", "mean_brier", "mean_crps", "ema_crps"] + [
            f"pit_{i}" for i in range(10)
        ]
        _write_csv(out_dir / "calibration.csv", columns, rows)
        if not args.no_figures and stats:
            from .figures import render_pit_figures

            render_pit_figures(stats, out_dir / "figures")
        print(f"calibration report written to {out_dir}")
    return EXIT_OK


def _replay_verify(round_entry: dict, task_id: str, cfg_entry: dict) -> tuple[list[dict], float]:
    """Re-derive logged portfolio scores from the logged reports; returns the
    table rows and the maximum absolute score deviation."""
    payload = round_entry["tasks"][task_id]
    task = protocol.task_from_dict(payload["task"])
    u = cfg_entry["utility"]
    r = cfg_entry["risk"]
    utility_cfg = UtilityConfig(
        success_weight=u["success_weight"],
        lateness_weight=u["lateness_weight"],
        violation_weight=u["violation_weight"],
        cost_weight=u["cost_weight"],
        lateness_cap=u["lateness_cap"],
        violation_weight_by_metric=u.get("violation_weight_by_metric", {}),
    )
    risk_cfg = RiskConfig(
        measure=r["measure"], metric=r.get("metric"), cvar_level=r["cvar_level"], lambda_=r["lambda"]
    )
    mc_samples = int(cfg_entry.get("solver", {}).get("mc_samples", 0))
    rows = []
    worst = 0.0
    for entry in payload["portfolios"]:
        portfolio = protocol.portfolio_from_dict(entry["portfolio"])
        dists = {}
        for cand in (portfolio.primary, portfolio.backup):
            if cand is not None and cand.report is not None:
                dists[(cand.agent_id, cand.option_id)] = report_distribution(cand.report)
        ev = evaluate_portfolio(
            portfolio, task, utility_cfg, risk_cfg, dists, mc_samples=mc_samples
        )
        worst = max(worst, abs(ev.score - entry["score"]))
        rows.append(
            {
                "primary": f"{portfolio.primary.agent_id}/{portfolio.primary.option_id}",
                "backup": (
                    f"{portfolio.backup.agent_id}/{portfolio.backup.option_id}"
                    if portfolio.backup
                    else ""
                ),
                "score": entry["score"],
                "expected_utility": entry["expected_utility"],
                "risk_value": entry["risk_value"],
                "feasible": entry["feasible"],
                "slacks": entry["slacks"],
                "recomputed_score": ev.score,
            }
        )
    return rows, worst


def cmd_replay(args: argparse.Namespace) -> int:
    path = Path(args.log)
    cfg_entry: dict | None = None
    matching: list[dict] = []
    with path.open() as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            entry = json.loads(line)
            if entry.get("kind") == "config":
                cfg_entry = entry
            elif entry.get("kind") == "round" and args.task_id in entry.get("tasks", {}):
                matching.append(entry)
    if not matching:
        print(f"task {args.task_id!r} not found in {path}", file=sys.stderr)
        return EXIT_MISSING
    if cfg_entry is None:
        print(f"{path} has no config header; cannot recompute scores", file=sys.stderr)
        return EXIT_CONFIG
    worst_overall = 0.0
    for entry in matching:
        rows, worst = _replay_verify(entry, args.task_id, cfg_entry)
        worst_overall = max(worst_overall, worst)
        chosen = entry["tasks"][args.task_id].get("chosen")
        print(f"round {entry['round']} task {args.task_id}: {len(rows)} portfolios considered")
        header = f"{'primary':24} {'backup':24} {'score':>14} {'eu':>14} {'risk':>14} {'feasible':>8}"
        print(header)
        for row in rows:
            print(
                f"{row['primary']:24} {row['backup']:24} {fmt(row['score']):>14} "
                f"{fmt(row['expected_utility']):>14} {fmt(row['risk_value']):>14} "
                f"{str(row['feasible']):>8}"
            )
            slacks = ", ".join(f"{k}={fmt(v)}" for k, v in sorted(row["slacks"].items()))
            if slacks:
                print(f"{'':24} slacks: {slacks}")
        if chosen is not None:
            primary = chosen["primary"]
            backup = chosen.get("backup")
            desc = f"{primary['agent_id']}/{primary['option_id']}"
            if backup:
                desc += f" + backup {backup['agent_id']}/{backup['option_id']}"
            print(f"chosen: {desc}")
        else:
            print("chosen: (unassigned)")
    print(f"max |recomputed - logged| score deviation: {fmt(worst_overall)}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="roc", description="risk-aware option clearing harness"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one scenario")
    p_run.add_argument("--config", required=True, help="scenario JSON path")
    p_run.add_argument("--out", default=None, help="output root (default $ROC_OUT_DIR or ./roc_out)")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--mechanism", default=None)
    p_run.add_argument("--lambda", dest="lambda_", type=float, default=None)
    p_run.set_defaults(func=cmd_run)

    p_cmp = sub.add_parser("compare", help="run a mechanism grid and aggregate")
    p_cmp.add_argument("--config", required=True, help="grid JSON path")
    p_cmp.add_argument("--out", default=None)
    p_cmp.add_argument("--seed", type=int, default=None, help="override: use only this seed")
    p_cmp.add_argument("--jobs", type=int, default=1)
    p_cmp.add_argument("--no-figures", action="store_true")
    p_cmp.set_defaults(func=cmd_compare)

    p_cal = sub.add_parser("calibration-report", help="score a ledger file")
    p_cal.add_argument("ledger", help="ledger JSONL path")
    p_cal.add_argument("--out", default=None, help="directory for CSV and figures")
    p_cal.add_argument("--no-figures", action="store_true")
    p_cal.set_defaults(func=cmd_calibration_report)

    p_rep = sub.add_parser("replay", help="audit a clearing decision")
    p_rep.add_argument("log", help="decision log JSONL path")
    p_rep.add_argument("task_id", help="task to replay")
    p_rep.set_defaults(func=cmd_replay)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
