"""Simulated agent behaviors: ground-truth outcome laws, tiered reporting
with configurable miscalibration, and execution sampling.

Ground-truth laws are parametric (lognormal or shifted-exponential completion
times, Bernoulli success, per-metric scalar laws), modulated by context
features, truncated, and discretized onto an equal-mass grid whose atoms are
cell conditional means, so the discrete mean matches the analytic mean of the
truncated law. Miscalibration acts on the report only, never on the ground
truth, which isolates prediction quality from capability.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Mapping

import numpy as np

from .distributions import (
    DEFAULT_MARGINAL_GRID,
    DEFAULT_QUANTILE_LEVELS,
    DiscreteOutcomeDistribution,
    RiskReport,
    build_joint,
    quantile_summary_of,
)
from .model import AgentDescriptor, Context, OutcomeVector

_NORMAL = NormalDist()

REPORTING_KINDS = ("truthful", "overconfident", "underconfident", "noisy")


def _context_shift(coeffs: Mapping[str, float], context: Context) -> float:
    total = 0.0
    for name, coef in sorted(coeffs.items()):
        value = context.features.get(name)
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            total += coef * float(value)
    return total


@dataclass(frozen=True)
class ScalarLaw:
    """Parametric positive scalar law: lognormal(log median, sigma),
    shifted-exponential(shift, mean_excess), or a fixed value. Context
    coefficients shift the location parameter (the log-median for lognormal).
    `upper` truncates the law; atoms never exceed it."""

    kind: str
    median: float = 1.0
    sigma: float = 0.5
    shift: float = 0.0
    mean_excess: float = 1.0
    value: float = 1.0
    upper: float = math.inf
    context_coeffs: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in ("lognormal", "shifted_exponential", "fixed"):
            raise ValueError(f"unknown scalar law kind {self.kind!r}")
        if self.kind == "lognormal" and (self.median <= 0 or self.sigma <= 0):
            raise ValueError("lognormal law needs median > 0 and sigma > 0")
        if self.kind == "shifted_exponential" and self.mean_excess <= 0:
            raise ValueError("shifted_exponential law needs mean_excess > 0")

    def _params(self, context: Context) -> tuple[float, float]:
        shift = _context_shift(self.context_coeffs, context)
        if self.kind == "lognormal":
            return math.log(self.median) + shift, self.sigma
        if self.kind == "shifted_exponential":
            return max(self.shift + shift, 0.0), self.mean_excess
        return max(self.value + shift, 1e-9), 0.0

    def _cdf(self, x: float, a: float, b: float) -> float:
        if self.kind == "lognormal":
            if x <= 0:
                return 0.0
            return _NORMAL.cdf((math.log(x) - a) / b)
        if self.kind == "shifted_exponential":
            if x <= a:
                return 0.0
            return 1.0 - math.exp(-(x - a) / b)
        return 1.0 if x >= a else 0.0

    def _partial_expectation(self, x: float, a: float, b: float) -> float:
        """E[X * 1(X <= x)] in closed form."""
        if self.kind == "lognormal":
            if x <= 0:
                return 0.0
            mean = math.exp(a + b * b / 2.0)
            return mean * _NORMAL.cdf((math.log(x) - a - b * b) / b)
        if self.kind == "shifted_exponential":
            if x <= a:
                return 0.0
            c = x - a
            decay = math.exp(-c / b)
            return (b * (1.0 - decay) - c * decay) + a * (1.0 - decay)
        return a if x >= a else 0.0

    def _quantile(self, u: float, a: float, b: float) -> float:
        if self.kind == "lognormal":
            return math.exp(a + b * _NORMAL.inv_cdf(u))
        if self.kind == "shifted_exponential":
            return a - b * math.log(1.0 - u)
        return a

    def mean(self, context: Context) -> float:
        a, b = self._params(context)
        if self.kind == "lognormal":
            return math.exp(a + b * b / 2.0)
        if self.kind == "shifted_exponential":
            return a + b
        return a

    def grid(self, context: Context, size: int = DEFAULT_MARGINAL_GRID) -> np.ndarray:
        """Equal-mass discretization of the law truncated at `upper`; each
        atom is its cell's conditional mean, so the grid mean equals the
        truncated analytic mean exactly."""
        a, b = self._params(context)
        if self.kind == "fixed":
            return np.full(size, min(a, self.upper))
        mass = self._cdf(self.upper, a, b) if math.isfinite(self.upper) else 1.0
        if mass <= 0:
            return np.full(size, self.upper)
        edges = np.linspace(0.0, mass, size + 1)
        pe = np.empty(size + 1)
        pe[0] = 0.0
        for i in range(1, size + 1):
            u = min(edges[i], 1.0 - 1e-15)
            pe[i] = self._partial_expectation(self._quantile(u, a, b), a, b)
        if math.isfinite(self.upper):
            pe[-1] = self._partial_expectation(self.upper, a, b)
        cell_mass = mass / size
        atoms = np.diff(pe) / cell_mass
        atoms = np.minimum(atoms, self.upper)
        return np.maximum.accumulate(atoms)  # guard monotonicity against fp noise


@dataclass(frozen=True)
class SuccessModel:
    base: float = 1.0
    context_coeffs: Mapping[str, float] = field(default_factory=dict)

    def prob(self, context: Context) -> float:
        return min(max(self.base + _context_shift(self.context_coeffs, context), 0.0), 1.0)


@dataclass(frozen=True)
class OutcomeGenerator:
    time: ScalarLaw
    success: SuccessModel = SuccessModel()
    metrics: Mapping[str, ScalarLaw] = field(default_factory=dict)


@dataclass(frozen=True)
class ReportingProfile:
    """How an agent's stated beliefs deviate from its ground truth.

    overconfident: time spread shrunk by gamma < 1 around the median and
    success probability inflated by delta; underconfident is the reverse;
    noisy applies a deterministic per-(agent, option, context) multiplicative
    jitter so reports stay reproducible without an rng argument.
    """

    kind: str = "truthful"
    gamma: float = 1.0
    delta: float = 0.0
    jitter: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in REPORTING_KINDS:
            raise ValueError(f"unknown reporting profile {self.kind!r}")
        if self.gamma <= 0:
            raise ValueError("gamma must be > 0")


@dataclass(frozen=True)
class AgentProfile:
    descriptor: AgentDescriptor
    generators: Mapping[str, OutcomeGenerator]
    reporting: ReportingProfile = ReportingProfile()
    failure_rate_per_hour: float = 0.0

    def generator(self, option_id: str) -> OutcomeGenerator:
        if option_id not in self.generators:
            raise KeyError(f"agent {self.descriptor.agent_id!r} has no generator for {option_id!r}")
        return self.generators[option_id]


def generate_ground_truth(
    profile: AgentProfile, option_id: str, context: Context, *, grid: int = DEFAULT_MARGINAL_GRID
) -> DiscreteOutcomeDistribution:
    """Discretized true outcome law for (agent, option, context).

    Deterministic: randomness enters only when executions sample from it.
    """
    gen = profile.generator(option_id)
    times = gen.time.grid(context, grid)
    times = np.maximum(times, np.finfo(float).tiny)
    metric_grids = {name: law.grid(context, grid) for name, law in gen.metrics.items()}
    return build_joint(times, gen.success.prob(context), metric_grids)


def _reporting_rng(profile: AgentProfile, option_id: str, context: Context) -> np.random.Generator:
    fingerprint = "|".join(
        [profile.descriptor.agent_id, option_id, repr(sorted(context.features.items())), repr(context.timestamp)]
    )
    seed = int.from_bytes(hashlib.sha256(fingerprint.encode()).digest()[:8], "big")
    return np.random.default_rng(seed)


def _distort(
    truth: DiscreteOutcomeDistribution, reporting: ReportingProfile, rng: np.random.Generator
) -> DiscreteOutcomeDistribution:
    if reporting.kind == "truthful":
        return truth
    times = truth.times
    p = truth.success_prob()
    if reporting.kind in ("overconfident", "underconfident"):
        median = truth.time_marginal().quantile(0.5)
        times = median + reporting.gamma * (times - median)
        delta = reporting.delta if reporting.kind == "overconfident" else -reporting.delta
        p = min(max(p + delta, 0.01), 0.99)
    else:  # noisy: one multiplicative factor keeps quantiles monotone
        factor = math.exp(reporting.jitter * rng.standard_normal())
        times = times * factor
        p = min(max(p + reporting.jitter * rng.standard_normal() * 0.1, 0.01), 0.99)
    times = np.maximum(times, 1e-9)
    probs = truth.probs
    cur = truth.success_prob()
    if not math.isclose(p, cur):
        if 0.0 < cur < 1.0:
            scale = np.where(truth.success, p / cur, (1.0 - p) / (1.0 - cur))
            probs = probs * scale
        else:
            # degenerate success marginal: mirror the atoms with the missing
            # flag so the shifted probability has support
            base = probs / probs.sum()
            all_times = np.concatenate([times, times])
            success = np.concatenate([truth.success, ~truth.success])
            got, missing = (p, 1.0 - p) if cur == 1.0 else (1.0 - p, p)
            all_probs = np.concatenate([base * got, base * missing])
            metrics = {k: np.concatenate([v, v]) for k, v in truth.metrics.items()}
            return DiscreteOutcomeDistribution(all_times, success, all_probs, metrics)
    probs = probs / probs.sum()
    return DiscreteOutcomeDistribution(times, truth.success, probs, truth.metrics)


def report(profile: AgentProfile, option_id: str, context: Context) -> RiskReport:
    """Tier-appropriate risk report: the distorted ground-truth law (full), its
    fixed-grid quantile summary (lite), or no payload (min). A truthful full
    report equals the ground truth exactly."""
    tier = profile.descriptor.tier
    if tier == "min":
        return RiskReport(tier="min")
    truth = generate_ground_truth(profile, option_id, context)
    stated = _distort(truth, profile.reporting, _reporting_rng(profile, option_id, context))
    if tier == "full":
        return RiskReport(tier="full", distribution=stated)
    cost = profile.descriptor.option(option_id).nominal_cost
    return RiskReport(
        tier="lite",
        summary=quantile_summary_of(stated, levels=DEFAULT_QUANTILE_LEVELS, cost=cost),
    )


def execute(
    profile: AgentProfile, option_id: str, context: Context, rng: np.random.Generator
) -> OutcomeVector:
    """One realized outcome, sampled from the ground-truth law."""
    from .distributions import sample

    return sample(generate_ground_truth(profile, option_id, context), rng)
