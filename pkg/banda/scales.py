"""Scale quantities: φ, α, b_N, B_N, t_N, d_N and the shallow-trap mass.

All depths are handled in log domain. t_N is fixed to exp(c̄N) exactly, and
the default d_N is the asymptotic t_N·N²·φ(a_N)².
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.special import log_ndtr, ndtr

from banda.config import ModelParams
from banda.env import EnergyField
from banda.errors import BudgetExceededError, QuadratureError, ScaleDomainError
from banda.pool import map_replicas
from banda.stats import Estimate
from banda.streams import environment_key, trajectory_rng
from banda.walk import run_x

logger = logging.getLogger(__name__)

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def phi(lam: float) -> float:
    """E[exp(λE)] for E the positive part of a standard Gaussian."""
    if lam < 0:
        raise ScaleDomainError(f"phi is defined for lambda >= 0, got {lam}")
    return 0.5 + math.exp(lam * lam / 2.0) * float(ndtr(lam))


def b_n(log_d_n: float) -> float:
    """Level b_N with P[E >= b_N] ~ 1/d_N, taking log d_N to stay in log domain."""
    if not log_d_n > 1.0:
        raise ScaleDomainError(f"d_N must exceed e, got log d_N = {log_d_n}")
    root = math.sqrt(2.0 * log_d_n)
    return root - (math.log(log_d_n) + math.log(4.0 * math.pi)) / (2.0 * root)


def depth_tail(z: float, log_d_n: float, sqrt_n_beta: float) -> float:
    """d_N · P[τ >= z·B_N]; tends to z^{-α} as log d_N grows."""
    u = b_n(log_d_n) + math.log(z) / sqrt_n_beta
    return math.exp(log_d_n + float(log_ndtr(-u)))


@dataclass(frozen=True)
class ScaleSet:
    """Scales derived from one parameter set.

    ``log_d_n`` is the value used for rescaling: the asymptotic one unless a
    Monte Carlo estimate was requested.
    """

    n: int
    alpha: float
    phi_a: float
    sqrt_n_beta: float
    log_t_n: float
    log_d_n: float
    log_d_n_asymptotic: float
    b_n: float
    log_b_n: float
    d_n_estimate: Estimate | None = None

    @property
    def t_n(self) -> float:
        return math.exp(self.log_t_n)

    @property
    def d_n_asymptotic(self) -> float:
        return math.exp(self.log_d_n_asymptotic)

    @property
    def rescale_factor(self) -> float:
        """N²φ(a_N)², the inverse of the Green function at a deep trap."""
        return self.n**2 * self.phi_a**2

    @property
    def in_aging_regime(self) -> bool:
        return self.alpha < 1

    def log_deep_threshold(self, delta: float) -> float:
        return math.log(delta) + self.log_b_n

    def depth_tail(self, z: float) -> float:
        return depth_tail(z, self.log_d_n, self.sqrt_n_beta)

    def as_dict(self) -> dict[str, float | int | None]:
        return {
            "n": self.n,
            "alpha": self.alpha,
            "phi_a": self.phi_a,
            "log_t_n": self.log_t_n,
            "t_n": self.t_n,
            "log_d_n": self.log_d_n,
            "d_n_asymptotic": self.d_n_asymptotic,
            "d_n_estimate": None if self.d_n_estimate is None else self.d_n_estimate.mean,
            "d_n_estimate_stderr": None if self.d_n_estimate is None else self.d_n_estimate.stderr,
            "b_n": self.b_n,
            "log_b_n": self.log_b_n,
            "rescale_factor": self.rescale_factor,
        }


def log_d_n_asymptotic(params: ModelParams) -> float:
    return params.cbar * params.n + 2.0 * math.log(params.n) + 2.0 * math.log(phi(params.a_n))


def compute_scales(params: ModelParams, d_n_estimate: Estimate | None = None) -> ScaleSet:
    """Scales for ``params``; rescale with ``d_n_estimate`` when one is given."""
    log_asym = log_d_n_asymptotic(params)
    log_d = log_asym
    if d_n_estimate is not None:
        if not d_n_estimate.mean > math.e:
            raise ScaleDomainError(f"d_N estimate {d_n_estimate.mean} is too small")
        log_d = math.log(d_n_estimate.mean)
    level = b_n(log_d)
    scales = ScaleSet(
        n=params.n,
        alpha=params.alpha,
        phi_a=phi(params.a_n),
        sqrt_n_beta=params.sqrt_n_beta,
        log_t_n=params.cbar * params.n,
        log_d_n=log_d,
        log_d_n_asymptotic=log_asym,
        b_n=level,
        log_b_n=params.sqrt_n_beta * level,
        d_n_estimate=d_n_estimate,
    )
    if not scales.in_aging_regime:
        logger.warning("alpha = %.4f >= 1: configuration lies outside the aging regime", scales.alpha)
    return scales


def expected_event_count(params: ModelParams, horizon: float) -> float:
    """Mean number of jumps of X in ``horizon``: the mean jump rate is Nφ(a_N)²."""
    return horizon * params.n * phi(params.a_n) ** 2


def _discovered_at(job: tuple[ModelParams, int, float, int, int | None]) -> float:
    params, key, horizon, stream, max_events = job
    field = EnergyField(params, key=key)
    trajectory = run_x(field, None, horizon, trajectory_rng(params.seed, stream), max_events=max_events)
    return float(len(trajectory.log.order))


def estimate_d_n(
    params: ModelParams,
    replicas: int,
    *,
    max_events: int | None = None,
    fresh_env_per_replica: bool = False,
    workers: int = 1,
) -> Estimate:
    """Monte Carlo mean of D_N(t_N) over replicas started from the uniform law."""
    if replicas < 2:
        raise ValueError(f"estimate_d_n needs at least 2 replicas, got {replicas}")
    horizon = math.exp(params.cbar * params.n)
    if max_events is not None and expected_event_count(params, horizon) > max_events:
        raise BudgetExceededError(
            f"t_N = {horizon:.4g} needs about {expected_event_count(params, horizon):.4g} events, "
            f"budget is {max_events}"
        )
    jobs = [
        (
            params,
            environment_key(params.seed, i if fresh_env_per_replica else None),
            horizon,
            i,
            max_events,
        )
        for i in range(replicas)
    ]
    estimate = Estimate.from_samples(np.array(map_replicas(_discovered_at, jobs, workers)))
    logger.info(
        "d_N estimate %.6g ± %.3g (asymptotic %.6g)",
        estimate.mean,
        estimate.stderr,
        math.exp(log_d_n_asymptotic(params)),
    )
    return estimate


def shallow_trap_mass(delta: float, scales: ScaleSet) -> float:
    """(d_N/B_N)·E[τ; τ <= δB_N] by quadrature over the energy density."""
    if not 0 < delta < 1:
        raise ScaleDomainError(f"delta must lie in (0, 1), got {delta}")
    if not scales.in_aging_regime:
        logger.warning("shallow-trap mass requested outside the aging regime (alpha = %.4f)", scales.alpha)
    c = scales.sqrt_n_beta
    log_prefactor = scales.log_d_n - scales.log_b_n
    log_threshold = scales.log_deep_threshold(delta)
    if log_threshold < 0:
        # every depth is at least 1 > δB_N
        return 0.0
    upper = log_threshold / c

    def integrand(u: float) -> float:
        return math.exp(log_prefactor + c * u - u * u / 2.0 - _LOG_SQRT_2PI)

    out = quad(integrand, 0.0, upper, epsabs=0.0, epsrel=1e-8, limit=200, full_output=True)
    if len(out) == 4:
        raise QuadratureError(f"shallow-trap quadrature did not converge: {out[3]}")
    value, error = out[0], out[1]
    if error > 1e-6 * abs(value) + 1e-300:
        raise QuadratureError(f"shallow-trap quadrature error {error:.3g} too large for value {value:.3g}")
    return value + 0.5 * math.exp(log_prefactor)


def shallow_trap_slope(deltas: list[float], scales: ScaleSet) -> float:
    """Least-squares slope of log shallow_trap_mass against log δ."""
    values = [shallow_trap_mass(d, scales) for d in deltas]
    slope, _ = np.polyfit(np.log(deltas), np.log(values), 1)
    return float(slope)
