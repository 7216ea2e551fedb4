"""Outcome logging, calibration scoring, recalibration, and learned models.

The ledger is append-only; per-(agent, option) statistics are maintained
incrementally but always reproducible from the raw records. PIT values use
the randomized transform u = F(y-) + v * (F(y) - F(y-)) with v drawn from a
record-keyed hash, so a perfectly calibrated discrete forecaster yields an
exactly uniform PIT law while records stay reproducible.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .distributions import (
    DiscreteOutcomeDistribution,
    Marginal,
    QuantileSummary,
    RiskReport,
    brier,
    crps,
    from_quantile_summary,
)
from .model import Context, OutcomeVector

PIT_BINS = 10
DEFAULT_K_MIN = 20
EMA_DECAY = 0.9


def _hash_uniform(*parts: str) -> float:
    digest = hashlib.sha256("|".join(parts).encode()).digest()
    return int.from_bytes(digest[:8], "big") / 2**64


def report_time_marginal(report: RiskReport) -> Marginal | None:
    if report.distribution is not None:
        return report.distribution.time_marginal()
    if report.summary is not None:
        return from_quantile_summary(report.summary).time_marginal()
    return None


def report_success_prob(report: RiskReport) -> float | None:
    if report.distribution is not None:
        return report.distribution.success_prob()
    if report.summary is not None:
        return report.summary.success_prob
    return None


def pit_value(marginal: Marginal, realized: float, jitter: float) -> float:
    """Randomized PIT of a realized value under a step CDF."""
    hi = marginal.cdf(realized)
    lo = hi - (marginal.probs[marginal.values == realized].sum() if math.isfinite(realized) else 0.0)
    return float(lo + jitter * (hi - lo))


@dataclass(frozen=True)
class LedgerRecord:
    task_id: str
    agent_id: str
    option_id: str
    context: Context
    report: RiskReport
    realized: OutcomeVector
    timestamp: float
    attempt: int = 0

    @property
    def key(self) -> tuple[str, str]:
        return (self.agent_id, self.option_id)


@dataclass
class KeyStats:
    """Running calibration statistics for one (agent, option) pair."""

    count: int = 0
    brier_sum: float = 0.0
    brier_count: int = 0
    crps_sum: float = 0.0
    crps_count: int = 0
    crps_ema: float | None = None
    pit_histogram: list[int] = field(default_factory=lambda: [0] * PIT_BINS)
    success_count: int = 0

    @property
    def mean_brier(self) -> float | None:
        return self.brier_sum / self.brier_count if self.brier_count else None

    @property
    def mean_crps(self) -> float | None:
        return self.crps_sum / self.crps_count if self.crps_count else None

    def pit_fractions(self) -> list[float]:
        total = sum(self.pit_histogram)
        if total == 0:
            return [0.0] * PIT_BINS
        return [c / total for c in self.pit_histogram]


class DuplicateRecordError(ValueError):
    """A (task, agent, option, attempt) outcome was recorded twice."""


class CalibrationLedger:
    """Append-only outcome log with per-key statistics."""

    def __init__(self) -> None:
        self._records: list[LedgerRecord] = []
        self._stats: dict[tuple[str, str], KeyStats] = {}
        self._seen: set[tuple[str, str, str, int]] = set()

    @property
    def records(self) -> tuple[LedgerRecord, ...]:
        return tuple(self._records)

    def __len__(self) -> int:
        return len(self._records)

    def stats(self, agent_id: str, option_id: str) -> KeyStats:
        return self._stats.get((agent_id, option_id), KeyStats())

    def all_stats(self) -> dict[tuple[str, str], KeyStats]:
        return dict(self._stats)

    def keys(self) -> list[tuple[str, str]]:
        return sorted(self._stats)

    def record_outcome(self, record: LedgerRecord) -> None:
        """Append one realized outcome and fold it into the key's statistics.

        Brier uses the report's success probability; CRPS and PIT use its
        time marginal. CRPS is skipped for never-finished attempts (infinite
        realized time); their PIT is still well defined (CDF value 1).
        """
        dedup = (record.task_id, record.agent_id, record.option_id, record.attempt)
        if dedup in self._seen:
            raise DuplicateRecordError(f"duplicate outcome record {dedup}")
        self._seen.add(dedup)
        self._records.append(record)
        stats = self._stats.setdefault(record.key, KeyStats())
        _fold(stats, record)

    def recompute_stats(self) -> dict[tuple[str, str], KeyStats]:
        """Rebuild all statistics from the raw records (reproducibility check)."""
        fresh: dict[tuple[str, str], KeyStats] = {}
        for record in self._records:
            _fold(fresh.setdefault(record.key, KeyStats()), record)
        return fresh


def _fold(stats: KeyStats, record: LedgerRecord) -> None:
    stats.count += 1
    if record.realized.success:
        stats.success_count += 1
    p = report_success_prob(record.report)
    if p is not None:
        stats.brier_sum += brier(min(max(p, 0.0), 1.0), record.realized.success)
        stats.brier_count += 1
    marginal = report_time_marginal(record.report)
    if marginal is None:
        return
    t = record.realized.completion_time
    if math.isfinite(t):
        sample = crps(marginal, t)
        stats.crps_sum += sample
        stats.crps_count += 1
        if stats.crps_ema is None:
            stats.crps_ema = sample
        else:
            stats.crps_ema = EMA_DECAY * stats.crps_ema + (1.0 - EMA_DECAY) * sample
    jitter = _hash_uniform("pit", record.task_id, record.agent_id, record.option_id, str(record.attempt))
    u = pit_value(marginal, t, jitter)
    stats.pit_histogram[min(PIT_BINS - 1, int(u * PIT_BINS))] += 1


# -- recalibration ---------------------------------------------------------------


def _pit_cdf_knots(stats: KeyStats) -> tuple[np.ndarray, np.ndarray]:
    """Empirical PIT CDF as a piecewise-linear function on the bin edges."""
    counts = np.array(stats.pit_histogram, dtype=float)
    total = counts.sum()
    xs = np.linspace(0.0, 1.0, PIT_BINS + 1)
    ys = np.concatenate([[0.0], np.cumsum(counts) / total])
    return xs, ys


def _remap_distribution(
    dist: DiscreteOutcomeDistribution, xs: np.ndarray, ys: np.ndarray, new_p: float | None
) -> DiscreteOutcomeDistribution:
    """Apply the PIT-inverse to the time marginal (reweighting atoms in place,
    which preserves the conditional law of the other coordinates) and shift
    the success marginal to `new_p`."""
    tm = dist.time_marginal()
    cum = np.cumsum(tm.probs)
    mapped = np.interp(cum, xs, ys)
    group_new = np.diff(np.concatenate([[0.0], mapped]))
    ratio = {float(v): (g / p if p > 0 else 0.0) for v, p, g in zip(tm.values, tm.probs, group_new)}
    scale = np.array([ratio[float(t)] for t in dist.times])
    probs = dist.probs * scale

    if new_p is not None:
        cur_p = float(probs[dist.success].sum())
        total = probs.sum()
        if total > 0 and 0.0 < cur_p < total:
            s_scale = new_p / (cur_p / total)
            f_scale = (1.0 - new_p) / (1.0 - cur_p / total)
            probs = np.where(dist.success, probs * s_scale, probs * f_scale)
    keep = probs > 0
    probs = probs[keep] / probs[keep].sum()
    return DiscreteOutcomeDistribution(
        dist.times[keep], dist.success[keep], probs, {k: v[keep] for k, v in dist.metrics.items()}
    )


def recalibrate(report: RiskReport, stats: KeyStats, k_min: int = DEFAULT_K_MIN) -> RiskReport:
    """Correct a report against the key's observed calibration history.

    Below `k_min` observations the report passes through unchanged. Otherwise
    the time marginal is remapped through the empirical PIT CDF (quantile
    recalibration) and the success probability becomes the posterior blend
    w * empirical + (1 - w) * reported with w = n / (n + k_min).
    """
    if stats.count < k_min or report.tier == "min":
        return report
    xs, ys = _pit_cdf_knots(stats)
    w = stats.count / (stats.count + k_min)
    empirical = stats.success_count / stats.count

    if report.distribution is not None:
        reported_p = report.distribution.success_prob()
        new_p = w * empirical + (1.0 - w) * reported_p
        return RiskReport(tier="full", distribution=_remap_distribution(report.distribution, xs, ys, new_p))

    assert report.summary is not None
    summary = report.summary
    # quantile view: corrected q(l) = reported q at level H^{-1}(l)
    marginal = from_quantile_summary(summary).time_marginal()
    # strictly increasing knots so the inverse interpolation is well defined
    ys_inv = np.maximum.accumulate(ys + np.arange(ys.size) * 1e-12)
    new_tq = []
    for level, _ in summary.time_quantiles:
        src = float(np.interp(level, ys_inv, xs))
        src = min(max(src, 1e-9), 1.0)
        new_tq.append((level, marginal.quantile(src)))
    # enforce monotone values after interpolation noise
    for i in range(1, len(new_tq)):
        if new_tq[i][1] < new_tq[i - 1][1]:
            new_tq[i] = (new_tq[i][0], new_tq[i - 1][1])
    new_p = w * empirical + (1.0 - w) * summary.success_prob
    return RiskReport(
        tier="lite",
        summary=QuantileSummary(
            time_quantiles=tuple(new_tq),
            success_prob=new_p,
            metric_quantiles=summary.metric_quantiles,
            cost=summary.cost,
        ),
    )


# -- reputation --------------------------------------------------------------------


def reputation_rank(
    stats_by_key: Mapping[tuple[str, str], KeyStats]
) -> list[tuple[str, str]]:
    """Keys ordered best-calibrated first: ascending EMA CRPS, then mean
    Brier, then key. Keys without samples rank last."""

    def sort_key(key: tuple[str, str]):
        s = stats_by_key[key]
        ema = s.crps_ema if s.crps_ema is not None else math.inf
        mb = s.mean_brier if s.mean_brier is not None else math.inf
        return (ema, mb, key)

    return sorted(stats_by_key, key=sort_key)


# -- empirical models (min tier) -----------------------------------------------------


@dataclass(frozen=True)
class BucketConfig:
    """Axis-aligned context quantization: each configured numeric feature is
    cut into `bins` equal cells over its (low, high) range; categorical
    features contribute their tag. Unconfigured features are ignored.

    The cold-start prior is deliberately optimistic (times spread up to
    `prior_time_max`, success `prior_success_prob`): a pessimistic prior
    would score every untried candidate below zero and the learner would
    never collect its first outcome. Leave `prior_time_max` unset to let the
    simulator derive it from the scenario's deadlines."""

    ranges: Mapping[str, tuple[float, float]] = field(default_factory=dict)
    bins: int = 4
    min_count: int = 5
    prior_time_max: float | None = None
    prior_success_prob: float = 0.7

    def bucket(self, context: Context) -> tuple:
        coords = []
        for name in sorted(self.ranges):
            low, high = self.ranges[name]
            value = context.features.get(name)
            if value is None or isinstance(value, str):
                coords.append((name, value))
                continue
            if high <= low:
                cell = 0
            else:
                frac = (float(value) - low) / (high - low)
                cell = min(self.bins - 1, max(0, int(frac * self.bins)))
            coords.append((name, cell))
        return tuple(coords)


def default_prior(cfg: BucketConfig) -> DiscreteOutcomeDistribution:
    """Cold-start law: equal-mass times spread over (0, prior_time_max]."""
    grid = 16
    upper = cfg.prior_time_max if cfg.prior_time_max is not None else 3600.0
    times = (np.arange(grid) + 0.5) / grid * upper
    from .distributions import build_joint

    return build_joint(times, cfg.prior_success_prob)


def _empirical_dist(outcomes: Sequence[OutcomeVector]) -> DiscreteOutcomeDistribution:
    n = len(outcomes)
    p = 1.0 / n
    dist = DiscreteOutcomeDistribution.from_atoms((o, p) for o in outcomes)
    # Laplace-smoothed success probability (s+1)/(n+2)
    s = sum(1 for o in outcomes if o.success)
    target = (s + 1) / (n + 2)
    cur = dist.success_prob()
    if math.isclose(cur, target):
        return dist
    if 0.0 < cur < 1.0:
        scale = np.where(dist.success, target / cur, (1.0 - target) / (1.0 - cur))
        probs = dist.probs * scale
        return DiscreteOutcomeDistribution(dist.times, dist.success, probs / probs.sum(), dist.metrics)
    # all-success or all-failure history: mirror the time atoms with the
    # missing flag so the smoothed mass has somewhere to live
    times = np.concatenate([dist.times, dist.times])
    success = np.concatenate([dist.success, ~dist.success])
    base = dist.probs / dist.probs.sum()
    probs = np.concatenate([base * (target if cur == 1.0 else 1.0 - target),
                            base * ((1.0 - target) if cur == 1.0 else target)])
    metrics = {k: np.concatenate([v, v]) for k, v in dist.metrics.items()}
    return DiscreteOutcomeDistribution(times, success, probs, metrics)


class EmpiricalModel:
    """Outcome laws learned from logged executions, with a fallback chain:
    (agent, option, bucket) -> (agent, option) -> option pooled -> prior."""

    def __init__(self, cfg: BucketConfig, ledger: CalibrationLedger | Iterable[LedgerRecord]):
        self.cfg = cfg
        records = ledger.records if isinstance(ledger, CalibrationLedger) else tuple(ledger)
        by_bucket: dict[tuple, list[OutcomeVector]] = {}
        by_key: dict[tuple[str, str], list[OutcomeVector]] = {}
        by_option: dict[str, list[OutcomeVector]] = {}
        for r in sorted(records, key=lambda r: (r.agent_id, r.option_id, r.task_id, r.attempt)):
            by_bucket.setdefault((r.agent_id, r.option_id, cfg.bucket(r.context)), []).append(r.realized)
            by_key.setdefault((r.agent_id, r.option_id), []).append(r.realized)
            by_option.setdefault(r.option_id, []).append(r.realized)
        self._bucket_counts = {k: len(v) for k, v in by_bucket.items()}
        self._key_counts = {k: len(v) for k, v in by_key.items()}
        self._by_bucket = {k: _empirical_dist(v) for k, v in by_bucket.items() if len(v) >= cfg.min_count}
        self._by_key = {k: _empirical_dist(v) for k, v in by_key.items() if len(v) >= cfg.min_count}
        self._by_option = {k: _empirical_dist(v) for k, v in by_option.items() if v}
        self._prior = default_prior(cfg)

    def sample_count(self, agent_id: str, option_id: str) -> int:
        return self._key_counts.get((agent_id, option_id), 0)

    def lookup(self, agent_id: str, option_id: str, context: Context) -> DiscreteOutcomeDistribution:
        bucket = self.cfg.bucket(context)
        dist = self._by_bucket.get((agent_id, option_id, bucket))
        if dist is not None:
            return dist
        dist = self._by_key.get((agent_id, option_id))
        if dist is not None:
            return dist
        dist = self._by_option.get(option_id)
        if dist is not None:
            return dist
        return self._prior

    def lookup_report(self, agent_id: str, option_id: str, context: Context) -> RiskReport:
        return RiskReport(tier="full", distribution=self.lookup(agent_id, option_id, context))


def fit_empirical_model(
    ledger: CalibrationLedger | Iterable[LedgerRecord], cfg: BucketConfig | None = None
) -> EmpiricalModel:
    return EmpiricalModel(cfg or BucketConfig(), ledger)


# -- persistence -----------------------------------------------------------------


def ledger_record_to_dict(record: LedgerRecord) -> dict:
    from .protocol import context_to_dict, outcome_to_dict, risk_report_to_dict

    return {
        "task_id": record.task_id,
        "agent_id": record.agent_id,
        "option_id": record.option_id,
        "context": context_to_dict(record.context),
        "report": risk_report_to_dict(record.report),
        "realized": outcome_to_dict(record.realized),
        "timestamp": record.timestamp,
        "attempt": record.attempt,
    }


def ledger_record_from_dict(d: Mapping) -> LedgerRecord:
    from .protocol import context_from_dict, outcome_from_dict, risk_report_from_dict

    return LedgerRecord(
        task_id=d["task_id"],
        agent_id=d["agent_id"],
        option_id=d["option_id"],
        context=context_from_dict(d["context"]),
        report=risk_report_from_dict(d["report"]),
        realized=outcome_from_dict(d["realized"]),
        timestamp=float(d["timestamp"]),
        attempt=int(d.get("attempt", 0)),
    )
