"""Tests for the statistical comparisons and report aggregation."""

import math

import numpy as np
import pytest
from scipy import stats

from banda.errors import DegenerateSampleError, PathError
from banda.limitproc import StepPath
from banda.stats import (
    Empirical,
    Estimate,
    Exponential,
    HalfGaussian,
    ParetoTail,
    PathDistance,
    TestReport,
    Verdict,
    binomial_test,
    chi_square_independence,
    chi_square_uniform,
    decreasing_trend,
    dispersion_test,
    flux_balance,
    hill_alpha,
    interval_check,
    ks_test,
    laplace_compare,
    path_distance,
    rank_correlation,
    rejection_rate,
    suite_verdict,
)


def _report(verdict: Verdict) -> TestReport:
    return TestReport(name="r", statistic=0.0, sample_size=1, verdict=verdict)


class TestEstimate:
    def test_mean_and_stderr(self) -> None:
        estimate = Estimate.from_samples(np.array([1.0, 2.0, 3.0]))
        assert estimate.mean == 2.0
        assert estimate.stderr == pytest.approx(1.0 / math.sqrt(3.0))
        assert estimate.n == 3

    def test_coefficient_of_variation(self) -> None:
        assert Estimate.from_samples(np.array([1.0, 2.0, 3.0])).coefficient_of_variation == pytest.approx(0.5)

    def test_single_sample(self) -> None:
        assert Estimate.from_samples(np.array([4.0])).stderr == math.inf

    def test_empty(self) -> None:
        with pytest.raises(DegenerateSampleError):
            Estimate.from_samples(np.array([]))


class TestReferenceLaws:
    """CDFs of the laws samples are compared with."""

    def test_pareto_tail(self) -> None:
        law = ParetoTail(alpha=0.6, delta=0.3)
        assert law.cdf(np.array([0.3]))[0] == pytest.approx(0.0)
        assert law.cdf(np.array([0.6]))[0] == pytest.approx(1.0 - 2.0**-0.6)

    def test_half_gaussian(self) -> None:
        assert HalfGaussian().cdf(np.array([1.0]))[0] == pytest.approx(2.0 * stats.norm.cdf(1.0) - 1.0)

    def test_exponential(self) -> None:
        assert Exponential(rate=2.0).cdf(np.array([1.0]))[0] == pytest.approx(1.0 - math.exp(-2.0))


class TestKolmogorovSmirnov:
    """One- and two-sample KS reports."""

    def test_detects_wrong_rate(self, rng: np.random.Generator) -> None:
        report = ks_test(rng.exponential(1.0, 1000), Exponential(2.0), name="wrong-rate")
        assert report.verdict is Verdict.FAIL
        assert report.name == "wrong-rate"
        assert report.sample_size == 1000

    def test_two_sample_detects_difference(self, rng: np.random.Generator) -> None:
        report = ks_test(rng.exponential(1.0, 500), Empirical(rng.exponential(3.0, 500)))
        assert report.verdict is Verdict.FAIL
        assert report.config["reference"] == "Empirical"

    def test_small_sample_inconclusive(self, rng: np.random.Generator) -> None:
        report = ks_test(rng.exponential(1.0, 10), Exponential(1.0))
        assert report.verdict is Verdict.INCONCLUSIVE
        assert math.isnan(report.statistic)

    def test_degenerate_sample(self) -> None:
        with pytest.raises(DegenerateSampleError):
            ks_test(np.ones(50), Exponential(1.0))

    def test_false_rejection_rate(self) -> None:
        """Under the null the rejection rate stays close to the level."""

        def make(rng: np.random.Generator) -> TestReport:
            return ks_test(rng.exponential(1.0, 100), Exponential(1.0), level=0.05)

        rate = rejection_rate(make, 1000, np.random.default_rng(99))
        assert 0.025 <= rate <= 0.075


class TestHill:
    """Hill tail-index estimator."""

    def test_pareto_index(self) -> None:
        samples = 1.0 + np.random.default_rng(3).pareto(0.6, 10_000)
        estimate = hill_alpha(samples, 2000)
        assert estimate.alpha == pytest.approx(0.6, abs=0.05)
        assert estimate.ci[0] < estimate.alpha < estimate.ci[1]
        assert estimate.k == 2000

    def test_scale_invariant(self) -> None:
        samples = 1.0 + np.random.default_rng(4).pareto(0.6, 1000)
        assert hill_alpha(3.7 * samples, 100).alpha == pytest.approx(hill_alpha(samples, 100).alpha, rel=1e-10)

    def test_invalid_k(self) -> None:
        samples = np.arange(1.0, 11.0)
        with pytest.raises(ValueError):
            hill_alpha(samples, 1)
        with pytest.raises(ValueError):
            hill_alpha(samples, 5)

    def test_nonpositive_samples(self) -> None:
        with pytest.raises(DegenerateSampleError):
            hill_alpha(np.array([0.0, 1.0, 2.0, 3.0, 4.0, 5.0]), 2)


class TestLaplace:
    """Bootstrap comparison of empirical Laplace transforms with ψ."""

    def test_exponential_matches(self) -> None:
        """-log E[exp(-λX)] = log(1 + λ) for X ~ Exponential(1)."""
        rng = np.random.default_rng(5)
        report = laplace_compare(
            rng.exponential(1.0, 2000), lambda lam: math.log1p(lam), (0.5, 1.0, 2.0), level=0.001, bootstrap=500, rng=rng
        )
        assert report.verdict is Verdict.PASS
        assert set(report.detail) == {"0.5", "1", "2"}
        for row in report.detail.values():
            assert row["low"] <= row["estimate"] <= row["high"]

    def test_wrong_exponent_fails(self) -> None:
        rng = np.random.default_rng(6)
        report = laplace_compare(
            rng.exponential(1.0, 2000), lambda lam: 2.0 * math.log1p(lam), (0.5, 1.0, 2.0), bootstrap=500, rng=rng
        )
        assert report.verdict is Verdict.FAIL

    def test_small_sample_inconclusive(self) -> None:
        rng = np.random.default_rng(7)
        report = laplace_compare(rng.exponential(1.0, 50), math.log1p, (1.0,), rng=rng)
        assert report.verdict is Verdict.INCONCLUSIVE

    def test_reproducible(self) -> None:
        samples = np.random.default_rng(8).exponential(1.0, 300)
        a = laplace_compare(samples, math.log1p, (1.0,), bootstrap=200, rng=np.random.default_rng(1))
        b = laplace_compare(samples, math.log1p, (1.0,), bootstrap=200, rng=np.random.default_rng(1))
        assert a == b


class TestPathDistance:
    """Distances between step paths."""

    def test_shifted_unit_steps(self) -> None:
        f = StepPath(np.array([0.0, 0.5]), np.array([0.0, 1.0]), 1.0)
        g = StepPath(np.array([0.0, 0.6]), np.array([0.0, 1.0]), 1.0)
        assert path_distance(f, g, PathDistance.L1) == pytest.approx(0.1)
        assert path_distance(f, g, "sup") == 1.0
        assert path_distance(f, g, PathDistance.INVERSE_SUP) == pytest.approx(0.1)

    def test_zero_on_itself(self) -> None:
        f = StepPath(np.array([0.0, 0.2, 0.7]), np.array([0.0, 1.0, 3.0]), 1.0)
        for kind in PathDistance:
            assert path_distance(f, f, kind) == 0.0

    def test_horizons_must_match(self) -> None:
        f = StepPath(np.array([0.0]), np.array([0.0]), 1.0)
        g = StepPath(np.array([0.0]), np.array([0.0]), 2.0)
        with pytest.raises(PathError):
            path_distance(f, g, "l1")


class TestOtherChecks:
    """Correlation, dispersion, chi-square, binomial and flux checks."""

    def test_rank_correlation(self, rng: np.random.Generator) -> None:
        x = rng.standard_normal(2000)
        assert rank_correlation(x, rng.standard_normal(2000), bound=0.1, name="indep").passed
        assert not rank_correlation(x, x**3, bound=0.1, name="same").passed

    def test_rank_correlation_length_mismatch(self) -> None:
        with pytest.raises(ValueError):
            rank_correlation(np.ones(30), np.ones(31), bound=0.1, name="bad")

    def test_dispersion_of_poisson_counts(self, rng: np.random.Generator) -> None:
        report = dispersion_test(rng.poisson(5.0, 500), low=0.7, high=1.3)
        assert report.passed
        assert dispersion_test([0, 0, 0], low=0.7, high=1.3).verdict is Verdict.INCONCLUSIVE

    def test_chi_square_uniform(self) -> None:
        assert chi_square_uniform([100, 100, 100, 100]).p_value == pytest.approx(1.0)
        assert not chi_square_uniform([400, 0, 0, 0]).passed

    def test_chi_square_independence(self, rng: np.random.Generator) -> None:
        table = np.zeros((3, 4))
        np.add.at(table, (rng.integers(0, 3, 5000), rng.integers(0, 4, 5000)), 1)
        assert chi_square_independence(table, level=0.001).passed
        assert not chi_square_independence(np.array([[500, 0], [0, 500]])).passed

    def test_binomial(self) -> None:
        assert binomial_test(50, 100, 0.5).passed
        assert not binomial_test(90, 100, 0.5).passed

    def test_flux_balance(self) -> None:
        assert flux_balance({(0, 1): 40, (1, 0): 40, (1, 3): 7, (3, 1): 7}).statistic == 0.0
        assert not flux_balance({(0, 1): 100, (1, 0): 0}).passed
        assert flux_balance({}).verdict is Verdict.INCONCLUSIVE

    def test_interval_check(self) -> None:
        assert interval_check("x", 1.0, 0.0, 1.0).passed
        report = interval_check("x", 1.5, 0.0, 1.0, sample_size=4)
        assert report.verdict is Verdict.FAIL
        assert report.ci == (0.0, 1.0)


class TestAggregation:
    """Suite verdicts and trend reports."""

    def test_pass_fraction(self) -> None:
        nineteen = [_report(Verdict.PASS)] * 19 + [_report(Verdict.FAIL)]
        eighteen = [_report(Verdict.PASS)] * 18 + [_report(Verdict.FAIL)] * 2
        assert suite_verdict(nineteen) is Verdict.PASS
        assert suite_verdict(eighteen) is Verdict.FAIL

    def test_inconclusive_reports_ignored(self) -> None:
        reports = [_report(Verdict.PASS), _report(Verdict.INCONCLUSIVE)]
        assert suite_verdict(reports) is Verdict.PASS
        assert suite_verdict([_report(Verdict.INCONCLUSIVE)]) is Verdict.INCONCLUSIVE

    def test_decreasing_trend(self) -> None:
        assert decreasing_trend("t", [3.0, 2.0, 1.0], [16, 20, 24]).passed
        report = decreasing_trend("t", [3.0, 3.5, 1.0], [16, 20, 24])
        assert report.verdict is Verdict.FAIL
        assert report.detail == {"16": 3.0, "20": 3.5, "24": 1.0}
        assert decreasing_trend("t", [1.0], [16]).verdict is Verdict.INCONCLUSIVE
        assert decreasing_trend("t", [1.0, math.nan], [16, 20]).verdict is Verdict.INCONCLUSIVE

    def test_to_dict(self) -> None:
        data = interval_check("x", 0.5, 0.0, 1.0).to_dict()
        assert data["verdict"] == "pass"
        assert data["ci"] == [0.0, 1.0]
        assert data["p_value"] is None
