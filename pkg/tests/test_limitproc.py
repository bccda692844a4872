"""Tests for step paths and the limit-process samplers."""

import math

import numpy as np
import pytest
from scipy import integrate, stats
from scipy.special import gamma

from banda.errors import PathError
from banda.limitproc import (
    StepPath,
    SubordinatorPath,
    build_z,
    default_eps,
    holding_times,
    path_inverse,
    psi_stable,
    psi_truncated,
    sample_age_at,
    sample_c_delta,
    sample_stable,
    small_jump_drift,
    step_path_from_breaks,
)


def _two_jumps(drift: float = 0.0) -> SubordinatorPath:
    return SubordinatorPath(
        alpha=0.5,
        levy_const=1.0,
        truncation=0.1,
        horizon=1.0,
        drift=drift,
        locations=np.array([0.2, 0.7]),
        sizes=np.array([2.0, 3.0]),
        marks=np.array([0.5, 1.0]),
    )


def _laplace_gap(samples: np.ndarray, lam: float, psi: float) -> tuple[float, float]:
    """|mean(exp(-λX)) - exp(-ψ)| and the standard error of the mean."""
    values = np.exp(-lam * samples)
    return abs(values.mean() - math.exp(-psi)), values.std(ddof=1) / math.sqrt(len(values))


class TestStepPath:
    """Right-continuous step paths."""

    def test_right_continuous(self) -> None:
        path = StepPath(np.array([0.0, 0.5]), np.array([0.0, 1.0]), 1.0)
        assert path(0.49) == 0.0
        assert path(0.5) == 1.0
        assert path(1.0) == 1.0
        np.testing.assert_array_equal(path(np.array([0.0, 0.7])), [0.0, 1.0])

    def test_evaluation_outside_domain(self) -> None:
        path = StepPath(np.array([0.0]), np.array([1.0]), 1.0)
        with pytest.raises(PathError):
            path(1.5)
        with pytest.raises(PathError):
            path(-0.1)

    @pytest.mark.parametrize(
        "times,values,horizon",
        [
            ([0.1, 0.5], [0.0, 1.0], 1.0),
            ([0.0, 0.5, 0.5], [0.0, 1.0, 2.0], 1.0),
            ([0.0, 0.5], [0.0, 1.0], 0.4),
            ([0.0, 0.5], [0.0], 1.0),
            ([], [], 1.0),
        ],
    )
    def test_contract(self, times: list, values: list, horizon: float) -> None:
        """Start at 0, strictly increasing breaks, horizon past the last break."""
        with pytest.raises(PathError):
            StepPath(np.array(times), np.array(values), horizon)

    def test_restrict(self) -> None:
        path = StepPath(np.array([0.0, 0.5, 0.8]), np.array([0.0, 1.0, 2.0]), 1.0)
        short = path.restrict(0.6)
        assert short.horizon == 0.6
        assert short.times.tolist() == [0.0, 0.5]
        with pytest.raises(PathError):
            path.restrict(2.0)

    def test_from_breaks_keeps_last_of_equal_starts(self) -> None:
        path = step_path_from_breaks(np.array([0.0, 0.0, 1.0, 1.0, 3.0]), np.array([9.0, 1.0, 7.0, 2.0, 3.0]), 2.0)
        assert path.times.tolist() == [0.0, 1.0]
        assert path.values.tolist() == [1.0, 2.0]


class TestPathInverse:
    """f^{-1}(t) = inf{y : f(y) > t}."""

    def test_staircase(self) -> None:
        """The inverse of a fine staircase stays within one step of the identity."""
        n = 50
        grid = np.arange(n) / n
        f = StepPath(grid, grid, 1.0)
        inverse = path_inverse(f)
        t = np.linspace(0.0, inverse.horizon, 333)
        assert np.max(np.abs(inverse(t) - t)) <= 1.0 / n + 1e-12

    def test_unit_step(self) -> None:
        f = StepPath(np.array([0.0, 0.5]), np.array([0.0, 1.0]), 1.0)
        inverse = path_inverse(f)
        assert inverse.times.tolist() == [0.0, 1.0]
        assert inverse.values.tolist() == [0.5, 1.0]

    def test_rejects_decreasing(self) -> None:
        with pytest.raises(PathError):
            path_inverse(StepPath(np.array([0.0, 0.5]), np.array([1.0, 0.0]), 1.0))

    def test_double_inverse(self) -> None:
        """(f^{-1})^{-1} = f for a strictly increasing staircase started at 0."""
        rng = np.random.default_rng(7)
        times = np.concatenate(([0.0], np.sort(rng.uniform(0.0, 2.0, 30))))
        values = np.concatenate(([0.0], np.cumsum(rng.exponential(1.0, 30))))
        f = StepPath(times, values, 2.5)
        twice = path_inverse(path_inverse(f))
        assert twice.horizon == f.horizon
        t = np.linspace(0.0, f.horizon, 1001)
        np.testing.assert_array_equal(twice(t), f(t))


class TestSubordinator:
    """α-stable subordinators and the truncated clock limit."""

    def test_small_jump_drift_is_mean_of_small_jumps(self) -> None:
        alpha, eps, c = 0.6, 0.01, 1.3
        expected, _ = integrate.quad(lambda z: z * c * alpha * z ** (-alpha - 1.0), 0.0, eps)
        assert small_jump_drift(alpha, eps, c) == pytest.approx(expected, rel=1e-6)

    def test_default_eps(self) -> None:
        assert default_eps(0.5, 4.0, 1.0) == pytest.approx(1e-4 * 16.0)

    def test_sample_structure(self) -> None:
        path = sample_stable(0.6, 2.0, 1e-3, np.random.default_rng(1))
        assert np.all(np.diff(path.locations) >= 0)
        assert np.all(path.sizes >= 1e-3)
        assert np.all((path.locations >= 0) & (path.locations <= 2.0))
        assert len(path.marks) == len(path.sizes)
        assert path.levy_const == pytest.approx(gamma(1.6))
        assert float(path.value(0.0)) == 0.0 or path.locations[0] == 0.0
        t = np.linspace(0.0, 2.0, 101)
        assert np.all(np.diff(path.value(t)) >= 0)

    def test_invalid_arguments(self) -> None:
        rng = np.random.default_rng(0)
        with pytest.raises(ValueError):
            sample_stable(1.0, 1.0, 1e-3, rng)
        with pytest.raises(ValueError):
            sample_stable(0.5, 1.0, 0.0, rng)
        with pytest.raises(ValueError):
            sample_c_delta(0.5, 0.0, 1.0, rng)

    @pytest.mark.parametrize("lam", [0.5, 1.0, 2.0])
    def test_laplace_transform_of_stable(self, lam: float) -> None:
        """E[exp(-λS_1)] = exp(-Γ(1-α)Γ(1+α)λ^α)."""
        alpha = 0.6
        rng = np.random.default_rng(2)
        eps = default_eps(alpha, 1.0, float(gamma(alpha + 1.0)))
        samples = np.array([float(sample_stable(alpha, 1.0, eps, rng).value(1.0)) for _ in range(4000)])
        gap, stderr = _laplace_gap(samples, lam, psi_stable(lam, alpha))
        assert gap < 4.0 * stderr

    @pytest.mark.parametrize("lam", [0.5, 1.0, 2.0])
    def test_laplace_transform_of_truncated_clock(self, lam: float) -> None:
        """E[exp(-λC^(δ)_1)] = exp(-ψ_δ(λ))."""
        alpha, delta = 0.6, 0.2
        rng = np.random.default_rng(3)
        samples = np.array([float(sample_c_delta(alpha, delta, 1.0, rng).marked_value(1.0)) for _ in range(4000)])
        gap, stderr = _laplace_gap(samples, lam, psi_truncated(lam, alpha, delta))
        assert gap < 4.0 * stderr

    def test_large_jump_counts_are_poisson(self) -> None:
        """Jumps above y on [0, t] number Poisson(t·Γ(1+α)·y^{-α})."""
        alpha, t, y = 0.6, 2.0, 0.1
        rng = np.random.default_rng(8)
        counts = np.array([np.sum(sample_stable(alpha, t, 1e-2, rng).sizes > y) for _ in range(2000)])
        mean = t * gamma(alpha + 1.0) * y ** (-alpha)
        assert counts.mean() == pytest.approx(mean, rel=0.05)
        assert 0.85 < counts.var(ddof=1) / counts.mean() < 1.15

    def test_stable_self_similarity(self) -> None:
        """S_{ct} / c^{1/α} has the law of S_t."""
        alpha, c = 0.6, 2.0
        levy_const = float(gamma(alpha + 1.0))
        rng = np.random.default_rng(9)
        one = [float(sample_stable(alpha, 1.0, default_eps(alpha, 1.0, levy_const), rng).value(1.0)) for _ in range(1000)]
        scaled = [
            float(sample_stable(alpha, c, default_eps(alpha, c, levy_const), rng).value(c)) / c ** (1.0 / alpha)
            for _ in range(1000)
        ]
        assert stats.ks_2samp(one, scaled).pvalue > 0.001

    def test_c_delta_arrivals(self) -> None:
        """Jumps above δ arrive at rate δ^{-α} and have no drift."""
        rng = np.random.default_rng(4)
        counts = [len(sample_c_delta(0.5, 0.25, 1.0, rng).sizes) for _ in range(4000)]
        assert np.mean(counts) == pytest.approx(2.0, rel=0.05)
        assert sample_c_delta(0.5, 0.25, 1.0, rng).drift == 0.0

    @pytest.mark.parametrize("lam", [0.25, 0.5, 1.0])
    def test_psi_truncated_converges(self, lam: float) -> None:
        """ψ_δ(λ) → Γ(1-α)Γ(1+α)λ^α as δ → 0."""
        assert psi_truncated(lam, 0.5, 1e-4) == pytest.approx(psi_stable(lam, 0.5), rel=0.02)
        assert psi_truncated(lam, 0.5, 0.1) < psi_truncated(lam, 0.5, 1e-4)

    def test_psi_truncated_at_zero(self) -> None:
        assert psi_truncated(0.0, 0.5, 0.1) == 0.0

    def test_truncate(self) -> None:
        path = _two_jumps(drift=0.3).truncate(2.5)
        assert path.sizes.tolist() == [3.0]
        assert path.marks.tolist() == [1.0]
        assert path.drift == 0.0

    def test_extend_keeps_prefix(self) -> None:
        rng = np.random.default_rng(5)
        path = sample_stable(0.5, 1.0, 1e-2, rng)
        longer = path.extend(rng)
        assert longer.horizon == 2.0
        np.testing.assert_array_equal(longer.sizes[: len(path.sizes)], path.sizes)
        assert np.all(longer.locations[len(path.sizes) :] >= 1.0)

    def test_clock_path(self) -> None:
        path = _two_jumps()
        clock = path.clock_path()
        assert clock.final == pytest.approx(2.0 * 0.5 + 3.0 * 1.0)
        assert clock(0.5) == pytest.approx(1.0)
        assert path.clock_path(marked=False).final == pytest.approx(5.0)


class TestAgeLimit:
    """Z built from a marked subordinator."""

    def test_build_z_without_drift(self) -> None:
        """Each depth is held for depth × mark, in jump order."""
        z = build_z(_two_jumps(), 3.5)
        assert z(0.0) == 2.0
        assert z(0.99) == 2.0
        assert z(1.0) == 3.0
        assert z(3.5) == 3.0
        np.testing.assert_allclose(holding_times(z), [1.0, 2.5])

    def test_build_z_with_drift(self) -> None:
        """The drift opens zero-valued stretches between the jumps."""
        z = build_z(_two_jumps(drift=1.0), 5.0)
        assert z(0.1) == 0.0
        assert z(0.5) == 2.0
        assert z(1.5) == 0.0
        assert z(2.0) == 3.0
        assert z(4.8) == 0.0

    def test_build_z_brackets_inverse_clock(self) -> None:
        """Z_t = ΔS at W_t with V(W_t-) <= t <= V(W_t); Z_t = 0 only off every jump."""
        rng = np.random.default_rng(10)
        path = sample_stable(0.6, 1.0, 1e-3, rng)
        total = float(path.marked_value(1.0))
        z = build_z(path, 0.9 * total)
        after = path.marked_value(path.locations)
        before = after - path.sizes * path.marks
        for t in rng.uniform(0.0, 0.9 * total, 500):
            value = float(z(t))
            if value == 0.0:
                assert not np.any((before < t) & (t < after))
            else:
                (i,) = np.flatnonzero(path.sizes == value)
                assert before[i] <= t <= after[i]

    def test_build_z_too_short(self) -> None:
        with pytest.raises(PathError, match="longer path"):
            build_z(_two_jumps(), 4.5)

    def test_build_z_truncated(self) -> None:
        z = build_z(_two_jumps(drift=1.0), 2.5, truncation=2.5)
        assert z.values.tolist() == [3.0]

    def test_build_z_needs_marks(self) -> None:
        path = _two_jumps()
        path.marks = np.empty(0)
        with pytest.raises(PathError):
            build_z(path, 1.0)

    def test_self_similarity(self) -> None:
        """Z_2 / 2 has the law of Z_1."""
        rng = np.random.default_rng(6)
        alpha = 0.6
        eps = default_eps(alpha, 1.0, float(gamma(alpha + 1.0)))
        one = sample_age_at(alpha, 1.0, 500, eps, rng)
        two = sample_age_at(alpha, 2.0, 500, eps, rng) / 2.0
        assert np.all(one >= 0)
        assert stats.ks_2samp(one, two).pvalue > 0.001
