"""Statistical comparisons that turn samples into pass/fail reports.

Every function here is a pure function of its inputs (bootstraps take an
explicit generator), so rerunning with the same samples reproduces the same
report.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Iterable, Mapping, Sequence

import numpy as np
from scipy import stats as sps

from banda.errors import DegenerateSampleError, PathError
from banda.limitproc import StepPath, path_inverse

logger = logging.getLogger(__name__)

MIN_KS_SAMPLES = 20


@dataclass(frozen=True)
class Estimate:
    """Sample mean with its standard error."""

    mean: float
    stderr: float
    n: int

    @classmethod
    def from_samples(cls, samples: np.ndarray) -> Estimate:
        samples = np.asarray(samples, dtype=np.float64)
        n = len(samples)
        if n == 0:
            raise DegenerateSampleError("cannot estimate a mean from no samples")
        stderr = float(samples.std(ddof=1) / math.sqrt(n)) if n > 1 else math.inf
        return cls(float(samples.mean()), stderr, n)

    @property
    def coefficient_of_variation(self) -> float:
        """Sample standard deviation over the mean."""
        return self.stderr * math.sqrt(self.n) / self.mean


class Verdict(str, Enum):
    PASS = "pass"
    FAIL = "fail"
    INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class TestReport:
    """Outcome of one comparison."""

    __test__ = False

    name: str
    statistic: float
    sample_size: int
    verdict: Verdict
    p_value: float | None = None
    ci: tuple[float, float] | None = None
    level: float | None = None
    config: Mapping[str, Any] = field(default_factory=dict)
    detail: Mapping[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.verdict is Verdict.PASS

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "statistic": self.statistic,
            "p_value": self.p_value,
            "ci": None if self.ci is None else list(self.ci),
            "level": self.level,
            "sample_size": self.sample_size,
            "verdict": self.verdict.value,
            "config": dict(self.config),
            "detail": dict(self.detail),
        }


def _p_verdict(p_value: float, level: float) -> Verdict:
    return Verdict.PASS if p_value >= level else Verdict.FAIL


def inconclusive(name: str, sample_size: int, reason: str, **config: Any) -> TestReport:
    logger.warning("%s: inconclusive (%s)", name, reason)
    return TestReport(
        name=name,
        statistic=math.nan,
        sample_size=sample_size,
        verdict=Verdict.INCONCLUSIVE,
        config=config,
        detail={"reason": reason},
    )


# Reference laws for ks_test.


@dataclass(frozen=True)
class Exponential:
    rate: float

    def cdf(self, x: np.ndarray) -> np.ndarray:
        return sps.expon.cdf(x, scale=1.0 / self.rate)


@dataclass(frozen=True)
class ParetoTail:
    """Density αδ^α z^{-α-1} on [δ, ∞)."""

    alpha: float
    delta: float

    def cdf(self, x: np.ndarray) -> np.ndarray:
        return sps.pareto.cdf(x, self.alpha, scale=self.delta)


@dataclass(frozen=True)
class HalfGaussian:
    """Law of a standard Gaussian conditioned to be positive: 2Φ(z) - 1."""

    def cdf(self, x: np.ndarray) -> np.ndarray:
        return sps.halfnorm.cdf(x)


@dataclass(frozen=True)
class Empirical:
    samples: np.ndarray


Reference = Exponential | ParetoTail | HalfGaussian | Empirical


def ks_test(samples: Sequence[float], reference: Reference, *, level: float = 0.01, name: str = "ks") -> TestReport:
    """Two-sided Kolmogorov–Smirnov test; two-sample when the reference is ``Empirical``."""
    samples = np.asarray(samples, dtype=np.float64)
    config = {"reference": type(reference).__name__}
    if len(samples) < MIN_KS_SAMPLES:
        return inconclusive(name, len(samples), f"need at least {MIN_KS_SAMPLES} samples", **config)
    if np.all(samples == samples[0]):
        raise DegenerateSampleError(f"{name}: all {len(samples)} samples are equal")
    if isinstance(reference, Empirical):
        other = np.asarray(reference.samples, dtype=np.float64)
        if len(other) < MIN_KS_SAMPLES:
            return inconclusive(name, len(samples), "reference sample too small", **config)
        result = sps.ks_2samp(samples, other)
    else:
        result = sps.kstest(samples, reference.cdf)
    p_value = float(result.pvalue)
    return TestReport(
        name=name,
        statistic=float(result.statistic),
        p_value=p_value,
        level=level,
        sample_size=len(samples),
        verdict=_p_verdict(p_value, level),
        config=config,
    )


@dataclass(frozen=True)
class HillEstimate:
    alpha: float
    ci: tuple[float, float]
    k: int


def hill_alpha(samples: Sequence[float], k: int, *, confidence: float = 0.95) -> HillEstimate:
    """Hill tail-index estimate from the top-``k`` order statistics."""
    samples = np.asarray(samples, dtype=np.float64)
    if k < 2 or k >= len(samples) / 2:
        raise ValueError(f"k must satisfy 2 <= k < n/2, got k={k} for n={len(samples)}")
    if np.any(samples <= 0):
        raise DegenerateSampleError("Hill estimator needs positive samples")
    top = np.sort(samples)[::-1][: k + 1]
    h = float(np.mean(np.log(top[:k]) - np.log(top[k])))
    if h <= 0:
        raise DegenerateSampleError("top order statistics are all equal")
    alpha = 1.0 / h
    half = float(sps.norm.ppf(0.5 + confidence / 2.0)) * alpha / math.sqrt(k)
    return HillEstimate(alpha, (alpha - half, alpha + half), k)


def laplace_compare(
    samples: Sequence[float],
    psi: Callable[[float], float],
    lambdas: Iterable[float],
    *,
    bootstrap: int = 1000,
    level: float = 0.01,
    rng: np.random.Generator,
    name: str = "laplace",
) -> TestReport:
    """Bootstrap CI of -log mean(exp(-λX)) at each λ; pass if ψ(λ) lies inside all of them."""
    samples = np.asarray(samples, dtype=np.float64)
    if len(samples) < 100:
        return inconclusive(name, len(samples), "need at least 100 samples")
    intervals: dict[str, Any] = {}
    worst = 0.0
    inside = True
    for lam in lambdas:
        if np.mean(np.exp(-lam * samples)) <= 0.0:
            logger.warning("%s: clipping lambda=%g (Laplace transform underflows)", name, lam)
            continue

        def statistic(x: np.ndarray, axis: int = -1, lam: float = lam) -> np.ndarray:
            return -np.log(np.mean(np.exp(-lam * x), axis=axis))

        result = sps.bootstrap(
            (samples,),
            statistic,
            n_resamples=bootstrap,
            confidence_level=1.0 - level,
            method="percentile",
            random_state=rng,
        )
        low, high = float(result.confidence_interval.low), float(result.confidence_interval.high)
        target = psi(lam)
        intervals[f"{lam:g}"] = {"low": low, "high": high, "psi": target, "estimate": float(statistic(samples))}
        inside = inside and low <= target <= high
        worst = max(worst, abs(float(statistic(samples)) - target))
    if not intervals:
        return inconclusive(name, len(samples), "every lambda underflowed")
    return TestReport(
        name=name,
        statistic=worst,
        level=level,
        sample_size=len(samples),
        verdict=Verdict.PASS if inside else Verdict.FAIL,
        detail=intervals,
    )


class PathDistance(str, Enum):
    L1 = "l1"
    SUP = "sup"
    INVERSE_SUP = "inverse-sup"


def path_distance(f: StepPath, g: StepPath, kind: PathDistance | str) -> float:
    """Distance between two step paths on the same [0, T]."""
    kind = PathDistance(kind)
    if not math.isclose(f.horizon, g.horizon, rel_tol=1e-12, abs_tol=1e-15):
        raise PathError(f"paths live on [0, {f.horizon}] and [0, {g.horizon}]")
    if kind is PathDistance.INVERSE_SUP:
        top = max(f.final, g.final)
        return path_distance(path_inverse(f, top), path_inverse(g, top), PathDistance.SUP)
    grid = np.union1d(f.times, g.times)
    gap = np.abs(f(grid) - g(grid))
    if kind is PathDistance.SUP:
        return float(gap.max())
    widths = np.diff(np.append(grid, f.horizon))
    return float(np.sum(gap * widths))


def rank_correlation(x: Sequence[float], y: Sequence[float], *, bound: float, name: str) -> TestReport:
    """Spearman ρ; pass when |ρ| < bound."""
    x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    if len(x) != len(y):
        raise ValueError(f"{name}: samples of length {len(x)} and {len(y)}")
    if len(x) < MIN_KS_SAMPLES:
        return inconclusive(name, len(x), f"need at least {MIN_KS_SAMPLES} pairs")
    result = sps.spearmanr(x, y)
    rho = float(result.statistic)
    return TestReport(
        name=name,
        statistic=rho,
        p_value=float(result.pvalue),
        sample_size=len(x),
        verdict=Verdict.PASS if abs(rho) < bound else Verdict.FAIL,
        config={"bound": bound},
    )


def interval_check(name: str, value: float, low: float, high: float, sample_size: int = 1) -> TestReport:
    """Pass when ``low <= value <= high``."""
    return TestReport(
        name=name,
        statistic=float(value),
        sample_size=sample_size,
        ci=(low, high),
        verdict=Verdict.PASS if low <= value <= high else Verdict.FAIL,
    )


def dispersion_test(counts: Sequence[int], *, low: float, high: float, name: str = "dispersion") -> TestReport:
    """Variance-to-mean ratio of counts, expected near 1 for Poisson counts."""
    counts = np.asarray(counts, dtype=np.float64)
    if len(counts) < 2 or counts.mean() == 0:
        return inconclusive(name, len(counts), "no counts to compare")
    return interval_check(name, float(counts.var(ddof=1) / counts.mean()), low, high, len(counts))


def chi_square_uniform(counts: Sequence[int], *, level: float = 0.01, name: str = "chi2-uniform") -> TestReport:
    counts = np.asarray(counts, dtype=np.float64)
    result = sps.chisquare(counts)
    return TestReport(
        name=name,
        statistic=float(result.statistic),
        p_value=float(result.pvalue),
        level=level,
        sample_size=int(counts.sum()),
        verdict=_p_verdict(float(result.pvalue), level),
    )


def chi_square_independence(table: np.ndarray, *, level: float = 0.01, name: str = "chi2-independence") -> TestReport:
    table = np.asarray(table, dtype=np.float64)
    table = table[table.sum(axis=1) > 0][:, table.sum(axis=0) > 0]
    result = sps.chi2_contingency(table)
    return TestReport(
        name=name,
        statistic=float(result.statistic),
        p_value=float(result.pvalue),
        level=level,
        sample_size=int(table.sum()),
        verdict=_p_verdict(float(result.pvalue), level),
    )


def binomial_test(successes: int, trials: int, p: float, *, level: float = 0.01, name: str = "binomial") -> TestReport:
    result = sps.binomtest(successes, trials, p)
    return TestReport(
        name=name,
        statistic=successes / trials,
        p_value=float(result.pvalue),
        level=level,
        sample_size=trials,
        verdict=_p_verdict(float(result.pvalue), level),
        config={"p": p},
    )


def flux_balance(flux: Mapping[tuple[int, int], int], *, level: float = 0.01, name: str = "flux-balance") -> TestReport:
    """Chi-square of (n_xy - n_yx)² / (n_xy + n_yx) summed over undirected edges."""
    statistic = 0.0
    edges = 0
    for (x, y), forward in flux.items():
        if x < y:
            backward = flux.get((y, x), 0)
            if forward + backward:
                statistic += (forward - backward) ** 2 / (forward + backward)
                edges += 1
    if edges == 0:
        return inconclusive(name, 0, "no edge was crossed")
    p_value = float(sps.chi2.sf(statistic, edges))
    return TestReport(
        name=name,
        statistic=statistic,
        p_value=p_value,
        level=level,
        sample_size=sum(flux.values()),
        verdict=_p_verdict(p_value, level),
        config={"edges": edges},
    )


def rejection_rate(make_report: Callable[[np.random.Generator], TestReport], repetitions: int, rng: np.random.Generator) -> float:
    """Fraction of failed reports when ``make_report`` is fed its own null."""
    failures = sum(not make_report(rng).passed for _ in range(repetitions))
    return failures / repetitions


def suite_verdict(reports: Sequence[TestReport], pass_fraction: float = 0.95) -> Verdict:
    """Pass when at least ``pass_fraction`` of the conclusive reports passed."""
    decided = [r for r in reports if r.verdict is not Verdict.INCONCLUSIVE]
    if not decided:
        return Verdict.INCONCLUSIVE
    passed = sum(r.passed for r in decided)
    return Verdict.PASS if passed >= pass_fraction * len(decided) else Verdict.FAIL


def decreasing_trend(name: str, values: Sequence[float], labels: Sequence[Any]) -> TestReport:
    """Pass when ``values`` strictly decrease along ``labels`` (e.g. growing N or shrinking δ)."""
    values = [float(v) for v in values]
    if len(values) < 2 or any(math.isnan(v) for v in values):
        return inconclusive(name, len(values), "need at least two finite values")
    increases = sum(b >= a for a, b in zip(values, values[1:]))
    return TestReport(
        name=name,
        statistic=float(increases),
        sample_size=len(values),
        verdict=Verdict.PASS if increases == 0 else Verdict.FAIL,
        detail={str(label): value for label, value in zip(labels, values)},
    )
