"""Limit objects of the aging picture.

Sampling of α-stable subordinators (jumps above a truncation level from a
Poisson random measure, smaller jumps replaced by their mean as a drift), of
the truncated clock limit C^(δ), and of the age limit Z built from a
subordinator with exponential marks. Paths are exchanged as ``StepPath``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.special import gamma

from banda.errors import PathError, QuadratureError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class StepPath:
    """Right-continuous step path on [0, horizon].

    ``values[i]`` holds on [times[i], times[i+1]); the last value holds up to
    and including ``horizon``.
    """

    times: np.ndarray
    values: np.ndarray
    horizon: float

    def __post_init__(self) -> None:
        times = np.asarray(self.times, dtype=np.float64)
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        if times.ndim != 1 or times.shape != values.shape or len(times) == 0:
            raise PathError("times and values must be nonempty 1-d arrays of equal length")
        if times[0] != 0.0:
            raise PathError(f"a step path starts at time 0, got {times[0]}")
        if np.any(np.diff(times) <= 0):
            raise PathError("breakpoints must be strictly increasing")
        if self.horizon < times[-1]:
            raise PathError(f"horizon {self.horizon} precedes the last breakpoint {times[-1]}")

    def __call__(self, t: float | np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        if np.any(t < 0) or np.any(t > self.horizon):
            raise PathError(f"evaluation outside [0, {self.horizon}]")
        return self.values[np.searchsorted(self.times, t, side="right") - 1]

    @property
    def final(self) -> float:
        return float(self.values[-1])

    def is_nondecreasing(self) -> bool:
        return bool(np.all(np.diff(self.values) >= 0))

    def restrict(self, horizon: float) -> StepPath:
        if horizon > self.horizon:
            raise PathError(f"cannot extend a path on [0, {self.horizon}] to {horizon}")
        keep = self.times <= horizon
        return StepPath(self.times[keep], self.values[keep], horizon)


def step_path_from_breaks(starts: np.ndarray, values: np.ndarray, horizon: float) -> StepPath:
    """Step path from possibly repeated start points; the last of equal starts wins."""
    starts = np.asarray(starts, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    keep = np.append(starts[1:] > starts[:-1], True)
    starts, values = starts[keep], values[keep]
    inside = starts <= horizon
    return StepPath(starts[inside], values[inside], horizon)


def path_inverse(f: StepPath, horizon: float | None = None) -> StepPath:
    """Right-continuous inverse f^{-1}(t) = inf{y : f(y) > t}, capped at f's horizon.

    The inverse lives on [0, final value of f] unless ``horizon`` is given.
    """
    if not f.is_nondecreasing():
        raise PathError("path_inverse needs a nondecreasing path")
    if f.values[0] < 0:
        raise PathError("path_inverse needs a nonnegative path")
    rises = np.flatnonzero(np.diff(f.values) > 0) + 1
    levels = np.concatenate(([f.values[0]], f.values[rises]))
    inverse_values = np.concatenate((f.times[rises], [f.horizon]))
    if levels[0] > 0:
        levels = np.concatenate(([0.0], levels))
        inverse_values = np.concatenate(([0.0], inverse_values))
    end = float(levels[-1]) if horizon is None else horizon
    keep = levels <= end
    return StepPath(levels[keep], inverse_values[keep], end)


@dataclass
class SubordinatorPath:
    """Jump representation of a subordinator on [0, horizon].

    value(t) = drift·t + Σ_{location <= t} size. ``marks`` are the
    independent mean-one exponentials attached to the jumps.
    """

    alpha: float
    levy_const: float
    truncation: float
    horizon: float
    drift: float
    locations: np.ndarray
    sizes: np.ndarray
    marks: np.ndarray = field(default_factory=lambda: np.empty(0))

    def value(self, t: float | np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        cumulative = np.concatenate(([0.0], np.cumsum(self.sizes)))
        return self.drift * t + cumulative[np.searchsorted(self.locations, t, side="right")]

    def marked_value(self, t: float | np.ndarray) -> np.ndarray:
        """drift·t + Σ_{location <= t} size·mark."""
        t = np.asarray(t, dtype=np.float64)
        cumulative = np.concatenate(([0.0], np.cumsum(self.sizes * self.marks)))
        return self.drift * t + cumulative[np.searchsorted(self.locations, t, side="right")]

    def truncate(self, level: float) -> SubordinatorPath:
        """Keep jumps of size >= ``level`` and drop the drift (pathwise thinning)."""
        keep = self.sizes >= level
        return SubordinatorPath(
            alpha=self.alpha,
            levy_const=self.levy_const,
            truncation=level,
            horizon=self.horizon,
            drift=0.0,
            locations=self.locations[keep],
            sizes=self.sizes[keep],
            marks=self.marks[keep] if len(self.marks) else self.marks,
        )

    def extend(self, rng: np.random.Generator) -> SubordinatorPath:
        """Append an independent stretch of the same length."""
        more = sample_stable(
            self.alpha, self.horizon, self.truncation, rng, levy_const=self.levy_const, drift=self.drift > 0
        )
        return SubordinatorPath(
            alpha=self.alpha,
            levy_const=self.levy_const,
            truncation=self.truncation,
            horizon=2.0 * self.horizon,
            drift=self.drift,
            locations=np.concatenate((self.locations, more.locations + self.horizon)),
            sizes=np.concatenate((self.sizes, more.sizes)),
            marks=np.concatenate((self.marks, more.marks)),
        )

    def clock_path(self, marked: bool = True) -> StepPath:
        """Jump part as a step path on [0, horizon]; the drift is not included."""
        increments = self.sizes * self.marks if marked else self.sizes
        starts = np.concatenate(([0.0], self.locations))
        values = np.concatenate(([0.0], np.cumsum(increments)))
        return step_path_from_breaks(starts, values, self.horizon)


def default_eps(alpha: float, horizon: float, levy_const: float) -> float:
    """Truncation 1e-4 times the typical largest jump on [0, horizon]."""
    return 1e-4 * (levy_const * horizon) ** (1.0 / alpha)


def small_jump_drift(alpha: float, eps: float, levy_const: float) -> float:
    """Mean of the jumps below ``eps`` per unit time."""
    return levy_const * alpha * eps ** (1.0 - alpha) / (1.0 - alpha)


def sample_stable(
    alpha: float,
    horizon: float,
    eps: float,
    rng: np.random.Generator,
    *,
    levy_const: float | None = None,
    drift: bool = True,
) -> SubordinatorPath:
    """Subordinator with Lévy measure levy_const·α z^{-α-1} dz, jumps below ``eps`` as drift.

    ``levy_const`` defaults to Γ(α+1), the clock normalization.
    """
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if not horizon > 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    levy_const = float(gamma(alpha + 1.0)) if levy_const is None else levy_const
    count = rng.poisson(horizon * levy_const * eps ** (-alpha))
    locations = np.sort(rng.uniform(0.0, horizon, count))
    sizes = eps * (1.0 + rng.pareto(alpha, count))
    marks = rng.standard_exponential(count)
    return SubordinatorPath(
        alpha=alpha,
        levy_const=levy_const,
        truncation=eps,
        horizon=horizon,
        drift=small_jump_drift(alpha, eps, levy_const) if drift else 0.0,
        locations=locations,
        sizes=sizes,
        marks=marks,
    )


def sample_c_delta(alpha: float, delta: float, horizon: float, rng: np.random.Generator) -> SubordinatorPath:
    """Truncated clock limit C^(δ): Poisson(δ^{-α}) arrivals, Pareto depths on [δ, ∞), Exp(1) marks.

    Its value is ``marked_value``. Depth law αδ^α z^{-α-1} at rate δ^{-α} is the
    Lévy measure α z^{-α-1} restricted to [δ, ∞), hence ``levy_const = 1``.
    """
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")
    return sample_stable(alpha, horizon, delta, rng, levy_const=1.0, drift=False)


def psi_stable(lam: float, alpha: float, levy_const: float | None = None) -> float:
    """Laplace exponent of the subordinator: levy_const·Γ(1-α)·λ^α."""
    levy_const = float(gamma(alpha + 1.0)) if levy_const is None else levy_const
    return levy_const * float(gamma(1.0 - alpha)) * lam**alpha


def psi_truncated(lam: float, alpha: float, delta: float) -> float:
    """Laplace exponent ψ_δ(λ) = δ^{-α}E[1 - exp(-λ e τ)] of C^(δ).

    The exponential mark integrates out to λz/(1+λz), leaving one quadrature.
    """
    if lam == 0:
        return 0.0

    def integrand(z: float) -> float:
        return alpha * z ** (-alpha - 1.0) * lam * z / (1.0 + lam * z)

    value, error = quad(integrand, delta, np.inf, limit=200)
    if error > 1e-7 * max(abs(value), 1.0):
        raise QuadratureError(f"psi_truncated quadrature error {error:.3g} for lambda={lam}")
    return value


def build_z(path: SubordinatorPath, horizon: float, truncation: float | None = None) -> StepPath:
    """Age limit Z on [0, horizon]: V = ∫ T dυ, W its inverse, Z_t = jump of υ at W_t.

    With ``truncation`` only jumps above it are kept and the drift is dropped,
    giving Z^(δ): values μ(υ_i) held for μ(υ_i)·T_i in jump order.
    """
    if len(path.marks) != len(path.sizes):
        raise PathError("build_z needs a mark on every jump")
    if truncation is not None:
        keep = path.sizes > truncation
        locations, sizes, marks, drift = path.locations[keep], path.sizes[keep], path.marks[keep], 0.0
    else:
        locations, sizes, marks, drift = path.locations, path.sizes, path.marks, path.drift
    cumulative = np.cumsum(sizes * marks)
    before = np.concatenate(([0.0], cumulative[:-1]))
    starts = drift * locations + before
    ends = drift * locations + cumulative
    total = drift * path.horizon + (cumulative[-1] if len(cumulative) else 0.0)
    if total < horizon:
        raise PathError(f"subordinator reaches V = {total:.6g} < {horizon}; sample a longer path")
    times = np.empty(2 * len(sizes) + 1)
    values = np.empty_like(times)
    times[0], values[0] = 0.0, 0.0
    times[1::2], values[1::2] = starts, sizes
    times[2::2], values[2::2] = ends, 0.0
    return step_path_from_breaks(times, values, horizon)


def holding_times(path: StepPath) -> np.ndarray:
    """Length of each constant stretch of a step path."""
    return np.diff(np.append(path.times, path.horizon))


def sample_age_at(
    alpha: float,
    t: float,
    count: int,
    eps: float,
    rng: np.random.Generator,
    *,
    levy_const: float | None = None,
) -> np.ndarray:
    """``count`` independent draws of Z_t, extending each subordinator until V covers t."""
    out = np.empty(count)
    for k in range(count):
        path = sample_stable(alpha, 1.0, eps, rng, levy_const=levy_const)
        while path.marked_value(path.horizon) < t:
            path = path.extend(rng)
        out[k] = build_z(path, t)(t)
    return out
