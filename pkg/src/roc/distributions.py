"""Finite-support joint laws over outcome vectors, plus their scoring rules.

A joint law is stored as parallel numpy arrays (times, success flags, metric
columns, probabilities). Every functional in this module is exact over the
finite support; sampling exists for callers that opt into Monte Carlo.

Joint construction keeps all marginals on a common equal-mass grid so that
support stays bounded: success is split per time atom (hence exactly
independent of time), and each metric column is attached to the time grid by
a fixed name-derived shuffle, which keeps every metric marginal exact while
approximating independence without a full product support.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .model import OutcomeVector

DEFAULT_QUANTILE_LEVELS: tuple[float, ...] = (0.1, 0.25, 0.5, 0.75, 0.9, 0.95)
DEFAULT_MARGINAL_GRID = 64
DEFAULT_MAX_SUPPORT = 4096

_PROB_SUM_TOL = 1e-9


def _stable_seed(label: str) -> int:
    return int.from_bytes(hashlib.sha256(label.encode()).digest()[:8], "big")


@dataclass(frozen=True, eq=False)
class Marginal:
    """Sorted finite-support law of one real quantity."""

    values: np.ndarray
    probs: np.ndarray

    @staticmethod
    def from_pairs(pairs: Iterable[tuple[float, float]]) -> "Marginal":
        values = np.array([v for v, _ in pairs], dtype=float)
        probs = np.array([p for _, p in pairs], dtype=float)
        return Marginal.from_arrays(values, probs)

    @staticmethod
    def from_arrays(values: np.ndarray, probs: np.ndarray) -> "Marginal":
        values = np.asarray(values, dtype=float)
        probs = np.asarray(probs, dtype=float)
        if values.shape != probs.shape or values.ndim != 1 or values.size == 0:
            raise ValueError("marginal needs matching non-empty 1-D value/prob arrays")
        if np.any(probs < 0) or np.any(np.isnan(probs)):
            raise ValueError("marginal probabilities must be non-negative")
        if abs(float(probs.sum()) - 1.0) > _PROB_SUM_TOL:
            raise ValueError("marginal probabilities must sum to 1")
        keep = probs > 0
        values, probs = values[keep], probs[keep]
        order = np.argsort(values, kind="stable")
        values, probs = values[order], probs[order]
        # merge duplicate support points
        fresh = np.empty(values.size, dtype=bool)
        fresh[0] = True
        fresh[1:] = values[1:] != values[:-1]
        idx = np.flatnonzero(fresh)
        merged_p = np.add.reduceat(probs, idx)
        return Marginal(values=values[idx], probs=merged_p)

    @property
    def n(self) -> int:
        return int(self.values.size)

    def cdf(self, x: float) -> float:
        k = int(np.searchsorted(self.values, x, side="right"))
        return float(self.probs[:k].sum())

    def quantile(self, q: float) -> float:
        """Right-continuous inverse CDF: smallest support point with CDF >= q."""
        if not (0.0 < q <= 1.0):
            raise ValueError("quantile level must be in (0, 1]")
        cum = np.cumsum(self.probs)
        k = min(int(np.searchsorted(cum, q, side="left")), self.n - 1)
        return float(self.values[k])

    def mean(self) -> float:
        return float(np.dot(self.values, self.probs))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Marginal):
            return NotImplemented
        return np.array_equal(self.values, other.values) and np.array_equal(
            self.probs, other.probs
        )


class DiscreteOutcomeDistribution:
    """Joint finite-support law of (completion time, success, metrics).

    Atoms are canonicalized on construction: exact duplicates merged,
    zero-probability atoms dropped, rows sorted by (time, success, metrics).
    """

    __slots__ = ("times", "success", "probs", "metrics")

    def __init__(
        self,
        times: np.ndarray,
        success: np.ndarray,
        probs: np.ndarray,
        metrics: Mapping[str, np.ndarray] | None = None,
        *,
        max_support: int | None = DEFAULT_MAX_SUPPORT,
    ) -> None:
        times = np.asarray(times, dtype=float)
        success = np.asarray(success, dtype=bool)
        probs = np.asarray(probs, dtype=float)
        cols = {name: np.asarray(vals, dtype=float) for name, vals in sorted((metrics or {}).items())}
        n = times.size
        if not (success.size == probs.size == n) or any(c.size != n for c in cols.values()):
            raise ValueError("atom arrays must have identical length")
        if n == 0:
            raise ValueError("distribution needs at least one atom")
        if np.any(np.isnan(probs)) or np.any(probs < 0):
            raise ValueError("atom probabilities must be non-negative")
        if abs(float(probs.sum()) - 1.0) > _PROB_SUM_TOL:
            raise ValueError(f"atom probabilities sum to {float(probs.sum())!r}, not 1")
        if np.any(times <= 0):
            raise ValueError("completion times must be > 0")

        keep = probs > 0
        times, success, probs = times[keep], success[keep], probs[keep]
        cols = {k: v[keep] for k, v in cols.items()}

        # canonical order, then merge exact duplicates
        keys = [cols[k] for k in reversed(sorted(cols))] + [success.astype(float), times]
        order = np.lexsort(tuple(keys))
        times, success, probs = times[order], success[order], probs[order]
        cols = {k: v[order] for k, v in cols.items()}
        fresh = np.empty(times.size, dtype=bool)
        fresh[0] = True
        same = (times[1:] == times[:-1]) & (success[1:] == success[:-1])
        for v in cols.values():
            same &= v[1:] == v[:-1]
        fresh[1:] = ~same
        idx = np.flatnonzero(fresh)
        probs = np.add.reduceat(probs, idx)
        times, success = times[idx], success[idx]
        cols = {k: v[idx] for k, v in cols.items()}

        if max_support is not None and times.size > max_support:
            raise ValueError(
                f"support {times.size} exceeds the {max_support}-atom cap; "
                "compose with truncation or coarsen the grid"
            )
        self.times = times
        self.success = success
        self.probs = probs
        self.metrics = cols

    # -- constructors ------------------------------------------------------

    @staticmethod
    def from_atoms(
        atoms: Iterable[tuple[OutcomeVector, float]],
        *,
        max_support: int | None = DEFAULT_MAX_SUPPORT,
    ) -> "DiscreteOutcomeDistribution":
        pairs = list(atoms)
        if not pairs:
            raise ValueError("distribution needs at least one atom")
        names = sorted({name for outcome, _ in pairs for name in outcome.metrics})
        times = np.array([o.completion_time for o, _ in pairs])
        success = np.array([o.success for o, _ in pairs])
        probs = np.array([p for _, p in pairs])
        # absent metric values are treated as 0.0 so arrays stay rectangular
        cols = {
            name: np.array([float(o.metrics.get(name, 0.0)) for o, _ in pairs])
            for name in names
        }
        return DiscreteOutcomeDistribution(times, success, probs, cols, max_support=max_support)

    @staticmethod
    def point_mass(outcome: OutcomeVector) -> "DiscreteOutcomeDistribution":
        return DiscreteOutcomeDistribution.from_atoms([(outcome, 1.0)])

    # -- views -------------------------------------------------------------

    @property
    def n(self) -> int:
        return int(self.times.size)

    @property
    def metric_names(self) -> tuple[str, ...]:
        return tuple(self.metrics)

    @property
    def atoms(self) -> tuple[tuple[OutcomeVector, float], ...]:
        out = []
        for i in range(self.n):
            outcome = OutcomeVector(
                completion_time=float(self.times[i]),
                success=bool(self.success[i]),
                metrics={k: float(v[i]) for k, v in self.metrics.items()},
            )
            out.append((outcome, float(self.probs[i])))
        return tuple(out)

    def metric_values(self, name: str) -> np.ndarray:
        """Per-atom values for a metric; zeros when the metric is absent."""
        if name in self.metrics:
            return self.metrics[name]
        return np.zeros(self.n)

    def success_prob(self) -> float:
        return float(self.probs[self.success].sum())

    def prob_success_within(self, horizon: float) -> float:
        return float(self.probs[self.success & (self.times <= horizon)].sum())

    def time_marginal(self) -> Marginal:
        return Marginal.from_arrays(self.times, self.probs)

    def metric_marginal(self, name: str) -> Marginal:
        return Marginal.from_arrays(self.metric_values(name), self.probs)

    def success_marginal(self) -> Marginal:
        return Marginal.from_arrays(self.success.astype(float), self.probs)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DiscreteOutcomeDistribution):
            return NotImplemented
        return (
            np.array_equal(self.times, other.times)
            and np.array_equal(self.success, other.success)
            and np.array_equal(self.probs, other.probs)
            and self.metric_names == other.metric_names
            and all(np.array_equal(self.metrics[k], other.metrics[k]) for k in self.metrics)
        )

    def __repr__(self) -> str:
        return (
            f"DiscreteOutcomeDistribution(n={self.n}, "
            f"p_success={self.success_prob():.3f}, metrics={list(self.metrics)})"
        )


@dataclass(frozen=True)
class QuantileSummary:
    """Compact risk summary: fixed-level time quantiles, a success
    probability, per-metric quantiles on the same level grid, and a cost
    estimate."""

    time_quantiles: tuple[tuple[float, float], ...]
    success_prob: float
    metric_quantiles: Mapping[str, tuple[tuple[float, float], ...]] = None  # type: ignore[assignment]
    cost: float = 0.0

    def __post_init__(self) -> None:
        if self.metric_quantiles is None:
            object.__setattr__(self, "metric_quantiles", {})
        if not (0.0 <= self.success_prob <= 1.0):
            raise ValueError("success_prob outside [0,1]")
        if self.cost < 0:
            raise ValueError("cost must be >= 0")
        _check_quantiles("time", self.time_quantiles)
        for name, grid in self.metric_quantiles.items():
            _check_quantiles(name, grid)


def _check_quantiles(label: str, grid: Sequence[tuple[float, float]]) -> None:
    if len(grid) < 2:
        raise ValueError(f"{label} quantile grid needs at least two levels")
    for (la, va), (lb, vb) in zip(grid, grid[1:]):
        if not (0.0 < la < lb < 1.0):
            raise ValueError(f"{label} quantile levels must be increasing within (0,1)")
        if vb < va:
            raise ValueError(
                f"{label} quantiles must be non-decreasing: "
                f"q[{la}]={va} > q[{lb}]={vb}"
            )


@dataclass(frozen=True)
class RiskReport:
    """Tier-tagged predictive payload: a full joint law, a quantile summary,
    or nothing (min tier)."""

    tier: str
    distribution: DiscreteOutcomeDistribution | None = None
    summary: QuantileSummary | None = None

    def __post_init__(self) -> None:
        if self.tier == "full" and (self.distribution is None or self.summary is not None):
            raise ValueError("full-tier report must carry exactly a distribution")
        if self.tier == "lite" and (self.summary is None or self.distribution is not None):
            raise ValueError("lite-tier report must carry exactly a summary")
        if self.tier == "min" and (self.summary is not None or self.distribution is not None):
            raise ValueError("min-tier report carries no payload")
        if self.tier not in ("full", "lite", "min"):
            raise ValueError(f"unknown report tier {self.tier!r}")


# -- joint construction on a common grid ------------------------------------


def build_joint(
    time_values: np.ndarray,
    success_prob: float,
    metric_values: Mapping[str, np.ndarray] | None = None,
) -> DiscreteOutcomeDistribution:
    """Assemble a joint law from equal-mass per-marginal grids.

    Each grid must have the same length G. Every metric column is shuffled by
    a fixed permutation seeded from its name, then each of the G atoms is
    split into a success and a failure copy, so P(success and T <= x) equals
    success_prob * P(T <= x) exactly.
    """
    time_values = np.asarray(time_values, dtype=float)
    g = time_values.size
    cols: dict[str, np.ndarray] = {}
    for name in sorted(metric_values or {}):
        vals = np.asarray(metric_values[name], dtype=float)
        if vals.size != g:
            raise ValueError(f"metric grid {name!r} has size {vals.size}, expected {g}")
        rng = np.random.default_rng(_stable_seed(f"joint-pairing:{name}"))
        cols[name] = vals[rng.permutation(g)]
    base_p = np.full(g, 1.0 / g)
    p = float(min(max(success_prob, 0.0), 1.0))
    if p >= 1.0 or p <= 0.0:
        flags = np.full(g, p >= 1.0)
        return DiscreteOutcomeDistribution(time_values, flags, base_p, cols)
    times = np.concatenate([time_values, time_values])
    flags = np.concatenate([np.ones(g, bool), np.zeros(g, bool)])
    probs = np.concatenate([base_p * p, base_p * (1.0 - p)])
    cols2 = {k: np.concatenate([v, v]) for k, v in cols.items()}
    return DiscreteOutcomeDistribution(times, flags, probs, cols2)


def _grid_from_quantiles(
    grid: Sequence[tuple[float, float]], size: int, min_value: float
) -> np.ndarray:
    """Equal-mass grid of an inverse CDF that linearly interpolates the given
    quantiles, extends below the first level toward `min_value` at the first
    segment's slope, and extends beyond the last level with an exponential
    tail whose rate matches the last inter-quantile gap."""
    levels = np.array([l for l, _ in grid])
    values = np.array([v for _, v in grid])
    u = (np.arange(size) + 0.5) / size
    out = np.empty(size)

    # lower tail: continue the first segment's slope down to level 0, clamped
    if values[1] > values[0]:
        slope = (values[1] - values[0]) / (levels[1] - levels[0])
    else:
        slope = 0.0
    floor = max(min_value, values[0] - slope * levels[0])
    floor = min(floor, values[0])
    low = u < levels[0]
    out[low] = floor + (u[low] / levels[0]) * (values[0] - floor)

    for j in range(len(levels) - 1):
        seg = (u >= levels[j]) & (u < levels[j + 1])
        if not np.any(seg):
            continue
        w = (u[seg] - levels[j]) / (levels[j + 1] - levels[j])
        out[seg] = values[j] + w * (values[j + 1] - values[j])

    tail = u >= levels[-1]
    gap = values[-1] - values[-2]
    if gap <= 0:
        out[tail] = values[-1]
    else:
        rate = math.log((1.0 - levels[-2]) / (1.0 - levels[-1])) / gap
        out[tail] = values[-1] + np.log((1.0 - levels[-1]) / (1.0 - u[tail])) / rate
    return out


def from_quantile_summary(
    summary: QuantileSummary,
    *,
    grid: int = DEFAULT_MARGINAL_GRID,
    min_time: float = 0.0,
) -> DiscreteOutcomeDistribution:
    """Reconstruct a joint law from a quantile summary.

    The time marginal is piecewise-uniform between consecutive quantiles with
    the tail treatment of `_grid_from_quantiles`; reconstructed quantiles at
    the input levels land within one grid cell of the inputs. Success is
    Bernoulli(success_prob) independent of time; metric marginals are
    reconstructed the same way as time.
    """
    times = _grid_from_quantiles(summary.time_quantiles, grid, min_time)
    if times[0] <= 0:
        # keep completion times strictly positive
        times = np.maximum(times, np.finfo(float).tiny)
    metric_grids = {
        name: _grid_from_quantiles(q, grid, -math.inf)
        for name, q in summary.metric_quantiles.items()
    }
    return build_joint(times, summary.success_prob, metric_grids)


def quantile_summary_of(
    dist: DiscreteOutcomeDistribution,
    *,
    levels: Sequence[float] = DEFAULT_QUANTILE_LEVELS,
    cost: float = 0.0,
) -> QuantileSummary:
    """Extract the fixed-level summary of a joint law."""
    tm = dist.time_marginal()
    time_q = tuple((float(l), tm.quantile(l)) for l in levels)
    metric_q = {
        name: tuple((float(l), dist.metric_marginal(name).quantile(l)) for l in levels)
        for name in dist.metric_names
    }
    return QuantileSummary(
        time_quantiles=time_q,
        success_prob=dist.success_prob(),
        metric_quantiles=metric_q,
        cost=cost,
    )


# -- sampling ----------------------------------------------------------------


def sample_indices(
    dist: DiscreteOutcomeDistribution, rng: np.random.Generator, size: int
) -> np.ndarray:
    p = dist.probs / dist.probs.sum()
    return rng.choice(dist.n, size=size, p=p)


def sample(dist: DiscreteOutcomeDistribution, rng: np.random.Generator) -> OutcomeVector:
    """Draw one outcome; atom i is returned with probability p_i."""
    i = int(sample_indices(dist, rng, 1)[0])
    return OutcomeVector(
        completion_time=float(dist.times[i]),
        success=bool(dist.success[i]),
        metrics={k: float(v[i]) for k, v in dist.metrics.items()},
    )


# -- composition --------------------------------------------------------------


def compose_portfolio(
    primary: DiscreteOutcomeDistribution,
    backup: DiscreteOutcomeDistribution | None,
    trigger_time: float,
    *,
    max_support: int = DEFAULT_MAX_SUPPORT,
) -> DiscreteOutcomeDistribution:
    """Law of the primary-then-backup execution rule.

    A primary atom that succeeds by the trigger is kept as-is. Any other
    primary atom hands off: the outcome takes the backup atom's success, time
    trigger_time + T_backup, and element-wise max of the two attempts'
    metrics (absent metrics count as 0). Primary and backup draws are
    independent. Support above `max_support` is truncated by dropping the
    lightest atoms and renormalizing.
    """
    if backup is None:
        return primary
    if not (trigger_time > 0):
        raise ValueError("trigger_time must be > 0")
    names = sorted(set(primary.metric_names) | set(backup.metric_names))
    keep = primary.success & (primary.times <= trigger_time)

    parts_t = [primary.times[keep]]
    parts_s = [primary.success[keep]]
    parts_p = [primary.probs[keep]]
    parts_m = {k: [primary.metric_values(k)[keep]] for k in names}

    rest = ~keep
    if np.any(rest):
        qa = primary.probs[rest]
        nb = backup.n
        na = int(rest.sum())
        parts_t.append(np.tile(trigger_time + backup.times, na))
        parts_s.append(np.tile(backup.success, na))
        parts_p.append((qa[:, None] * backup.probs[None, :]).ravel())
        for k in names:
            a = primary.metric_values(k)[rest]
            b = backup.metric_values(k)
            parts_m[k].append(np.maximum(a[:, None], b[None, :]).ravel())

    times = np.concatenate(parts_t)
    success = np.concatenate(parts_s)
    probs = np.concatenate(parts_p)
    cols = {k: np.concatenate(v) for k, v in parts_m.items()}

    composed = DiscreteOutcomeDistribution(times, success, probs, cols, max_support=None)
    if composed.n <= max_support:
        return composed
    order = np.argsort(-composed.probs, kind="stable")[:max_support]
    order.sort()
    probs = composed.probs[order]
    probs = probs / probs.sum()
    return DiscreteOutcomeDistribution(
        composed.times[order],
        composed.success[order],
        probs,
        {k: v[order] for k, v in composed.metrics.items()},
        max_support=max_support,
    )


# -- scoring rules -------------------------------------------------------------


def crps(marginal: Marginal, realized: float) -> float:
    """Exact CRPS of a finite-support forecast: E|X - y| - 0.5 E|X - X'|.

    Computed in O(n log n) via prefix sums over the sorted support. Infinite
    support or an infinite realized value yields +inf, except the degenerate
    exact match of a point mass, which scores 0.
    """
    v, p = marginal.values, marginal.probs
    if marginal.n == 1 and v[0] == realized:
        return 0.0
    if not math.isfinite(realized) or not np.isfinite(v).all():
        return math.inf
    e_abs = float(np.dot(p, np.abs(v - realized)))
    cum_p = np.cumsum(p)
    cum_vp = np.cumsum(v * p)
    # E|X - X'| = 2 * sum_j p_j * (v_j * F_{j-1} - S_{j-1}) over the sorted support
    inner = v[1:] * cum_p[:-1] - cum_vp[:-1]
    e_pair = 2.0 * float(np.dot(p[1:], inner))
    return max(0.0, e_abs - 0.5 * e_pair)


def brier(p: float, outcome: bool) -> float:
    """Squared error of an event probability against the binary outcome."""
    if not (0.0 <= p <= 1.0):
        raise ValueError("probability outside [0,1]")
    return (p - (1.0 if outcome else 0.0)) ** 2


def _step_cdf(m: Marginal, grid: np.ndarray) -> np.ndarray:
    cum = np.concatenate([[0.0], np.cumsum(m.probs)])
    return cum[np.searchsorted(m.values, grid, side="right")]


def kolmogorov_distance(a: Marginal, b: Marginal) -> float:
    """Sup-norm distance between the two step CDFs, exact over the union of
    supports."""
    grid = np.union1d(a.values, b.values)
    return float(np.max(np.abs(_step_cdf(a, grid) - _step_cdf(b, grid))))
