"""Acceptance suites: run experiments, compare with the limit laws, write artifacts.

Every suite returns a list of ``TestReport``. ``run_suite`` runs the suite
named in the configuration, then writes ``report.json`` and ``manifest.json``
next to the CSV artifacts. Rerunning a manifest reproduces every CSV byte for
byte: all randomness flows from the seed through ``banda.streams``.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import platform
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np
import scipy

import banda
from banda import exactsmall
from banda.config import ExperimentConfig, ModelParams, Suite, config_hash, config_to_dict, regime_warnings
from banda.env import EnergyField
from banda.errors import BudgetExceededError, HorizonError, ScaleDomainError
from banda.limitproc import (
    StepPath,
    build_z,
    default_eps,
    holding_times,
    psi_stable,
    psi_truncated,
    sample_age_at,
    sample_c_delta,
    sample_stable,
)
from banda.observe import (
    TrapEvent,
    age_path,
    annotate_green,
    detect_traps,
    rescale_clock,
    spacings,
    trap_counts,
    write_paths_csv,
    write_traps_csv,
)
from banda.pool import map_replicas
from banda.scales import ScaleSet, compute_scales, estimate_d_n, expected_event_count, shallow_trap_slope
from banda.stats import (
    Empirical,
    Exponential,
    HalfGaussian,
    ParetoTail,
    TestReport,
    Verdict,
    binomial_test,
    chi_square_independence,
    chi_square_uniform,
    decreasing_trend,
    dispersion_test,
    flux_balance,
    hill_alpha,
    inconclusive,
    interval_check,
    ks_test,
    laplace_compare,
    path_distance,
    rank_correlation,
    suite_verdict,
)
from banda.streams import auxiliary_rng, environment_key, limit_rng, trajectory_rng
from banda.walk import JumpKernel, TrajectoryRecord, edge_flux, run_x, run_z_direct, sites_at, time_change_z, write_trajectory_csv

logger = logging.getLogger(__name__)

LAMBDAS = (0.5, 1.0, 2.0)
PSI_CONVERGENCE_LAMBDAS = (0.25, 0.5, 1.0)
PSI_CONVERGENCE_DELTA = 1e-4
HEAT_KERNEL_TIMES = (0.1, 0.25, 0.5, 1.0, 2.0, 5.0)
ANNEALED_TIMES = (0.25, 0.5, 1.0, 2.0)
SEPARATION_TIMES = (0.25, 0.5, 1.0, 2.0)
SST_NS = (4, 6)
SST_TAIL_K = 4
H2_N = 5
DIRICHLET_FUNCTIONS = 100
EXPLORATION_SAMPLES = 20_000
TIME_CHANGE_STEPS = 5_000
OCCUPATION_SPACING = 3.0
OCCUPATION_SAMPLES = 5_000
TAIL_POINTS = (0.5, 1.0, 2.0)
AGE_HORIZON_FACTOR = 50.0
REPORT_FILE = "report.json"
MANIFEST_FILE = "manifest.json"


# Shared helpers.


def _env_key(config: ExperimentConfig, replica: int) -> int:
    return environment_key(config.model.seed, replica if config.fresh_env_per_replica else None)


def _check_budget(params: ModelParams, horizon: float, max_events: int) -> None:
    expected = expected_event_count(params, horizon)
    if expected > max_events:
        raise BudgetExceededError(
            f"N={params.n}: horizon {horizon:.4g} needs about {expected:.4g} events, budget is {max_events}"
        )


def scales_for(config: ExperimentConfig, params: ModelParams | None = None) -> ScaleSet:
    """Scales of ``params`` (default: the configured model), with the Monte Carlo d_N if requested."""
    params = config.model if params is None else params
    estimate = None
    if config.use_d_estimate:
        estimate = estimate_d_n(
            params,
            max(config.replicas, 2),
            max_events=config.max_events,
            fresh_env_per_replica=config.fresh_env_per_replica,
            workers=config.workers,
        )
    return compute_scales(params, estimate)


def _relative(a: float, b: float) -> float:
    return abs(a - b) / abs(b)


def _aging_alpha(alpha: float) -> float:
    if not alpha < 1:
        raise ScaleDomainError(f"alpha = {alpha:.4f} >= 1: the stable limit laws need alpha < 1")
    return alpha


# exact


def suite_exact(config: ExperimentConfig, output_dir: Path) -> list[TestReport]:
    """Finite-N identities from the exact generator."""
    tol = config.tolerances
    n = config.exact_n
    params = replace(config.model, n=n)
    count = config.exact_environments
    t_scale = float(n * n)

    asymmetry, row_sums, green_asymmetry, green_sums, range_gaps, gaps = [], [], [], [], [], []
    violations = 0
    diagonals: dict[float, list[float]] = {t: [] for t in ANNEALED_TIMES}
    for i in range(count):
        env = EnergyField(params, key=environment_key(params.seed, i))
        L = exactsmall.generator_matrix(env)
        scale = float(np.max(np.abs(L)))
        sym, rows = exactsmall.generator_defects(L)
        asymmetry.append(sym / scale)
        row_sums.append(rows / scale)
        spectrum = exactsmall.Spectrum.of(L)
        gaps.append(spectrum.gap)
        violations += exactsmall.heat_kernel_violations(spectrum, list(HEAT_KERNEL_TIMES))
        for t in ANNEALED_TIMES:
            diagonals[t].append(float(np.mean(np.diag(spectrum.transition_matrix(t)))))
        green = exactsmall.green_exact(L, t_scale)
        green_asymmetry.append(float(np.max(np.abs(green - green.T)) / np.max(np.abs(green))))
        green_sums.append(float(np.max(np.abs(green.sum(axis=1) - t_scale))) / t_scale)
        via_pairs, via_diagonal = exactsmall.expected_range(green, t_scale)
        range_gaps.append(_relative(via_pairs, via_diagonal))

    reports = [
        interval_check("generator-symmetry", max(asymmetry), 0.0, tol.exact_rtol, count),
        interval_check("generator-row-sums", max(row_sums), 0.0, tol.exact_rtol, count),
        interval_check("green-symmetry", max(green_asymmetry), 0.0, tol.exact_rtol, count),
        interval_check("green-row-sums", max(green_sums), 0.0, tol.exact_rtol, count),
        interval_check("range-identity", max(range_gaps), 0.0, tol.exact_rtol, count),
        interval_check("spectral-gap-lower-bound", min(gaps), 2.0 - 1e-9, math.inf, count),
        interval_check("heat-kernel-bound-violations", violations, 0.0, 0.0, count),
    ]

    # every smaller dimension too, same environment keys
    for m in range(2, n):
        for i in range(count):
            env = EnergyField(replace(params, n=m), key=environment_key(params.seed, i))
            gaps.append(exactsmall.spectral_gap(exactsmall.generator_matrix(env)))
    reports.append(interval_check("spectral-gap-lower-bound-all-n", min(gaps), 2.0 - 1e-9, math.inf, len(gaps)))

    zero = exactsmall.spectral_gap(exactsmall.generator_matrix(EnergyField.zero_disorder(params)))
    reports.append(interval_check("zero-disorder-gap", zero, 2.0 - 1e-9, 2.0 + 1e-9))

    for t, values in diagonals.items():
        sigma = float(np.std(values, ddof=1) / math.sqrt(len(values))) if len(values) > 1 else 0.0
        bound = exactsmall.annealed_diagonal_bound(n, t)
        reports.append(interval_check(f"annealed-diagonal-t{t:g}", float(np.mean(values)), 0.0, bound + 3 * sigma, count))

    reports.extend(_exact_dirichlet_and_separation(params, tol.exact_rtol))
    reports.extend(_exact_exit_rate(config, params))
    reports.extend(_exact_stationary_time(config))
    return reports


def _exact_dirichlet_and_separation(params: ModelParams, rtol: float) -> list[TestReport]:
    env = EnergyField(params, key=environment_key(params.seed, 0))
    L = exactsmall.generator_matrix(env)
    L0 = exactsmall.unit_rate_generator(params.n)
    rng = auxiliary_rng(params.seed, 0)
    failures = 0
    for _ in range(DIRICHLET_FUNCTIONS):
        f = rng.standard_normal(2**params.n)
        if exactsmall.dirichlet_form(L0, f) > exactsmall.dirichlet_form(L, f) * (1.0 + rtol):
            failures += 1
    reports = [interval_check("dirichlet-comparison-violations", failures, 0.0, 0.0, DIRICHLET_FUNCTIONS)]

    small = EnergyField(replace(params, n=4), key=environment_key(params.seed, 0))
    spectrum = exactsmall.Spectrum.of(exactsmall.generator_matrix(small))
    separations = [exactsmall.separation(spectrum, t) for t in (0.0, *SEPARATION_TIMES)]
    increases = sum(b > a + 1e-12 for a, b in zip(separations, separations[1:]))
    reports.append(interval_check("separation-nonincreasing", increases, 0.0, 0.0, len(separations)))
    relation = sum(
        exactsmall.separation(spectrum, 2 * t) > 1.0 - (1.0 - exactsmall.total_variation_spread(spectrum, t)) ** 2 + 1e-12
        for t in SEPARATION_TIMES
    )
    reports.append(interval_check("separation-spread-relation", relation, 0.0, 0.0, len(SEPARATION_TIMES)))
    return reports


def _exact_exit_rate(config: ExperimentConfig, params: ModelParams) -> list[TestReport]:
    zero = exactsmall.exit_rate_H2(EnergyField.zero_disorder(params), 0)
    reports = [interval_check("exit-rate-zero-disorder", zero, params.n - 1 - 1e-9, params.n - 1 + 1e-9)]
    env = EnergyField(replace(params, n=H2_N), key=environment_key(params.seed, 0))
    samples = exactsmall.simulate_occupation_before_h2(env, 0, config.h2_runs, auxiliary_rng(params.seed, 1))
    rate = exactsmall.exit_rate_H2_first_step(env, 0)
    reports.append(ks_test(samples, Exponential(rate), level=config.tolerances.level, name="exit-time-before-h2"))
    return reports


def _exact_stationary_time(config: ExperimentConfig) -> list[TestReport]:
    tol = config.tolerances
    reports = []
    for n in SST_NS:
        params = replace(config.model, n=n)
        env = EnergyField(params, key=environment_key(params.seed, 0))
        spectrum = exactsmall.Spectrum.of(exactsmall.generator_matrix(env))
        block = exactsmall.find_block(spectrum, n)
        sampler = exactsmall.StationaryTimeSampler(spectrum, float(block))
        rng = auxiliary_rng(params.seed, 100 + n)
        blocks = np.empty(config.sst_runs, dtype=np.int64)
        states = np.empty(config.sst_runs, dtype=np.int64)
        for k in range(config.sst_runs):
            t, states[k] = sampler.sample(rng)
            blocks[k] = round(t / block)
        reports.append(
            chi_square_uniform(np.bincount(states, minlength=2**n), level=tol.level, name=f"sst-uniform-n{n}")
        )
        errors = [
            _relative(float(np.mean(blocks >= k)), math.exp(-(k - 1))) for k in range(1, SST_TAIL_K + 1)
        ]
        reports.append(interval_check(f"sst-geometric-tail-n{n}", max(errors), 0.0, tol.sst_tail_rtol, config.sst_runs))
        table = np.zeros((3, 2**n))
        np.add.at(table, (np.minimum(blocks, 3) - 1, states), 1)
        reports.append(chi_square_independence(table, level=tol.level, name=f"sst-independence-n{n}"))
    return reports


# dynamics


@dataclass(frozen=True)
class _WalkJob:
    params: ModelParams
    key: int
    horizon: float
    stream: int
    log_b_n: float
    max_events: int
    exploration: int


@dataclass
class _WalkResult:
    record: TrajectoryRecord
    exploration_energies: np.ndarray
    discovered: int
    visited: int


def _walk_job(job: _WalkJob) -> _WalkResult:
    env = EnergyField(job.params, key=job.key)
    trajectory = run_x(
        env, None, job.horizon, trajectory_rng(job.params.seed, job.stream), log_b_n=job.log_b_n, max_events=job.max_events
    )
    order = np.array(trajectory.log.order[: job.exploration], dtype=np.uint64)
    return _WalkResult(trajectory.record, env.energies(order), len(trajectory.log.order), len(trajectory.log.visited))


def _normalized_holdings(kernel: JumpKernel, sites: np.ndarray, holdings_over_b: np.ndarray, log_b_n: float) -> np.ndarray:
    """Z holdings times their total rate ω(x)·B/τ_x; Exponential(1) under the Z dynamics."""
    out = np.empty(len(sites))
    for k, site in enumerate(sites.tolist()):
        table = kernel.table(site)
        out[k] = holdings_over_b[k] * table.rate * math.exp(log_b_n - table.log_tau)
    return out


def suite_dynamics(config: ExperimentConfig, output_dir: Path) -> list[TestReport]:
    """Exploration, discovery counts, time change, and small-N reversibility."""
    tol = config.tolerances
    params = config.model
    scales = scales_for(config)
    horizon = config.horizon_t * scales.t_n
    _check_budget(params, horizon, config.max_events)
    runs = max(1, min(config.replicas, max(config.csv_replicas, 2)))
    jobs = [
        _WalkJob(params, _env_key(config, i), horizon, i, scales.log_b_n, config.max_events, EXPLORATION_SAMPLES)
        for i in range(runs)
    ]
    results = map_replicas(_walk_job, jobs, config.workers)
    for i, result in enumerate(results[: config.csv_replicas]):
        write_trajectory_csv(result.record, output_dir / f"trajectory_{i}.csv")

    energies = results[0].exploration_energies
    positive = energies[energies > 0]
    reports = [
        ks_test(positive, HalfGaussian(), level=tol.level, name="exploration-energy-law"),
        binomial_test(len(positive), len(energies), 0.5, level=tol.level, name="exploration-energy-atom"),
        rank_correlation(energies[:-1], energies[1:], bound=tol.lag_correlation_bound, name="exploration-lag1-correlation"),
    ]
    ratios = [r.discovered / (scales.d_n_asymptotic * config.horizon_t) for r in results]
    reports.append(
        interval_check("discovered-over-d_n", float(np.mean(ratios)), tol.ratio_low, tol.ratio_high, len(ratios))
    )
    if scales.d_n_estimate is not None:
        reports.append(
            interval_check(
                "d_n-estimate-over-asymptotic",
                scales.d_n_estimate.mean / scales.d_n_asymptotic,
                tol.ratio_low,
                tol.ratio_high,
                scales.d_n_estimate.n,
            )
        )

    record = results[0].record
    env = EnergyField(params, key=_env_key(config, 0))
    kernel = JumpKernel(env)
    steps = min(len(record) - 1, TIME_CHANGE_STEPS)
    if steps >= 20:
        z = time_change_z(record)
        from_x = _normalized_holdings(kernel, z.sites[:steps], z.holdings_over_b[:steps], scales.log_b_n)
        direct = run_z_direct(env, int(record.start), steps, auxiliary_rng(params.seed, 2), log_b_n=scales.log_b_n)
        from_z = _normalized_holdings(kernel, direct.sites, direct.holdings_over_b, scales.log_b_n)
        reports.append(ks_test(from_x, Empirical(from_z), level=tol.level, name="time-change-vs-direct-z"))
    else:
        reports.append(inconclusive("time-change-vs-direct-z", steps, "run too short"))

    reports.extend(_small_walk_checks(config))
    reports.append(_tail_calibration_trend(config))
    reports.append(discovery_trend(config))
    return reports


def _small_walk_checks(config: ExperimentConfig) -> list[TestReport]:
    """Uniform occupation and balanced edge flux of X at N = exact_n."""
    params = replace(config.model, n=config.exact_n)
    env = EnergyField(params, key=environment_key(params.seed, 0))
    horizon = OCCUPATION_SPACING * (OCCUPATION_SAMPLES + 1)
    _check_budget(params, horizon, config.max_events)
    trajectory = run_x(env, 0, horizon, auxiliary_rng(params.seed, 3), max_events=config.max_events)
    grid = OCCUPATION_SPACING * np.arange(1, OCCUPATION_SAMPLES + 1)
    sites = sites_at(trajectory.record, grid).astype(np.int64)
    return [
        chi_square_uniform(np.bincount(sites, minlength=2**params.n), level=config.tolerances.level, name="occupation-uniform"),
        flux_balance(edge_flux(trajectory.record), level=config.tolerances.level),
    ]


def _tail_calibration_trend(config: ExperimentConfig) -> TestReport:
    errors = []
    for n in config.n_grid:
        scales = compute_scales(replace(config.model, n=n))
        errors.append(max(_relative(scales.depth_tail(z), z ** (-scales.alpha)) for z in TAIL_POINTS))
    return decreasing_trend("depth-tail-calibration-trend", errors, config.n_grid)


def discovery_trend(config: ExperimentConfig) -> TestReport:
    """Law of large numbers for discovery: std/mean of D_N(t_N) decreases along ``n_grid``."""
    spreads = []
    for n in config.n_grid:
        estimate = estimate_d_n(
            replace(config.model, n=n),
            max(config.replicas, 2),
            max_events=config.max_events,
            fresh_env_per_replica=config.fresh_env_per_replica,
            workers=config.workers,
        )
        spreads.append(estimate.coefficient_of_variation)
        logger.debug("N=%d: D_N(t_N) mean %.6g, std/mean %.4g", n, estimate.mean, spreads[-1])
    return decreasing_trend("discovery-lln-trend", spreads, config.n_grid)


# traps


@dataclass(frozen=True)
class _TrapJob:
    params: ModelParams
    key: int
    horizon: float
    stream: int
    scales: ScaleSet
    delta: float
    green_samples: int
    escape_radius: int | None
    max_events: int


def _trap_job(job: _TrapJob) -> list[TrapEvent]:
    env = EnergyField(job.params, key=job.key)
    kernel = JumpKernel(env)
    aux = auxiliary_rng(job.params.seed, job.stream)
    _, events = detect_traps(
        env,
        job.scales,
        job.delta,
        job.horizon,
        trajectory_rng(job.params.seed, job.stream),
        aux,
        max_events=job.max_events,
        kernel=kernel,
    )
    annotate_green(events, env, job.green_samples, aux, escape_radius=job.escape_radius, kernel=kernel)
    return events


def collect_traps(config: ExperimentConfig, params: ModelParams, scales: ScaleSet) -> dict[int, list[TrapEvent]]:
    """Deep traps of every replica, Green functions filled in."""
    horizon = config.horizon_t * scales.t_n
    _check_budget(params, horizon, config.max_events)
    jobs = [
        _TrapJob(
            params,
            environment_key(params.seed, i if config.fresh_env_per_replica else None),
            horizon,
            i,
            scales,
            params.delta,
            config.green_samples,
            config.green_escape_radius,
            config.max_events,
        )
        for i in range(config.replicas)
    ]
    events = map_replicas(_trap_job, jobs, config.workers)
    logger.info("N=%d: %d deep traps over %d replicas", params.n, sum(map(len, events)), config.replicas)
    return dict(enumerate(events))


def trap_reports(events_by_replica: dict[int, list[TrapEvent]], scales: ScaleSet, config: ExperimentConfig) -> list[TestReport]:
    """Pooled statistics of deep-trap arrivals, depths, marks and Green functions."""
    tol = config.tolerances
    delta = config.model.delta
    alpha = scales.alpha
    pooled = [e for r in sorted(events_by_replica) for e in events_by_replica[r]]
    gaps = np.concatenate([spacings(events_by_replica[r]) for r in sorted(events_by_replica)] or [np.empty(0)])
    depths = np.array([e.depth_over_B for e in pooled])
    reports = [
        ks_test(gaps, Exponential(delta ** (-alpha)), level=tol.level, name="trap-spacings"),
        ks_test(depths, ParetoTail(alpha, delta), level=tol.level, name="trap-depths"),
    ]

    complete = [(g, e) for g, e in zip(gaps, pooled) if e.window_complete and e.e_mark is not None]
    marks = np.array([e.e_mark for _, e in complete])
    reports.append(ks_test(marks, Exponential(1.0), level=tol.level, name="trap-marks"))
    triples = {
        "spacing": np.array([g for g, _ in complete]),
        "depth": np.array([e.depth_over_B for _, e in complete]),
        "mark": marks,
    }
    for a, b in (("spacing", "depth"), ("spacing", "mark"), ("depth", "mark")):
        reports.append(rank_correlation(triples[a], triples[b], bound=tol.correlation_bound, name=f"correlation-{a}-{b}"))

    counts = [trap_counts(events_by_replica[r], config.horizon_t) for r in sorted(events_by_replica)]
    reports.append(dispersion_test(counts, low=tol.dispersion_low, high=tol.dispersion_high, name="trap-count-dispersion"))

    greens = np.array([scales.rescale_factor * e.green for e in pooled if e.green is not None])
    if len(greens):
        reports.append(interval_check("green-median", float(np.median(greens)), tol.green_low, tol.green_high, len(greens)))
    else:
        reports.append(inconclusive("green-median", 0, "no deep trap detected"))

    if len(depths) >= 20:
        hill = hill_alpha(depths, max(2, len(depths) // 4))
        reports.append(interval_check("trap-depth-hill-alpha", hill.alpha, alpha - tol.hill_tolerance, alpha + tol.hill_tolerance, len(depths)))
    else:
        reports.append(inconclusive("trap-depth-hill-alpha", len(depths), "need at least 20 depths"))
    return reports


def _green_iqr(events_by_replica: dict[int, list[TrapEvent]], scales: ScaleSet) -> float:
    greens = [scales.rescale_factor * e.green for es in events_by_replica.values() for e in es if e.green is not None]
    if len(greens) < 4:
        return math.nan
    q1, q3 = np.percentile(greens, [25, 75])
    return float(q3 - q1)


def suite_traps(config: ExperimentConfig, output_dir: Path) -> list[TestReport]:
    scales = scales_for(config)
    events = collect_traps(config, config.model, scales)
    write_traps_csv(events, output_dir / "traps.csv")
    reports = trap_reports(events, scales, config)
    if config.n_grid:
        iqrs = []
        for n in config.n_grid:
            if n == config.model.n:
                iqrs.append(_green_iqr(events, scales))
                continue
            params = replace(config.model, n=n)
            other = compute_scales(params)
            iqrs.append(_green_iqr(collect_traps(config, params, other), other))
        reports.append(decreasing_trend("green-iqr-trend", iqrs, config.n_grid))
    return reports


# clock


@dataclass(frozen=True)
class _ClockJob:
    params: ModelParams
    key: int
    stream: int
    scales: ScaleSet
    T: float
    deltas: tuple[float, ...]
    keep_path: bool
    max_events: int


@dataclass
class _ClockResult:
    value: float
    shallow: dict[float, float]
    path: StepPath | None


def _clock_job(job: _ClockJob) -> _ClockResult:
    env = EnergyField(job.params, key=job.key)
    horizon = job.T * job.scales.t_n
    trajectory = run_x(
        env,
        None,
        horizon,
        trajectory_rng(job.params.seed, job.stream),
        log_b_n=job.scales.log_b_n,
        max_events=job.max_events,
    )
    record = trajectory.record
    clock = rescale_clock(record, job.scales, job.T)
    shallow = {d: path_distance(clock, rescale_clock(record, job.scales, job.T, delta=d), "sup") for d in job.deltas}
    return _ClockResult(clock.final, shallow, clock if job.keep_path else None)


def suite_clock(config: ExperimentConfig, output_dir: Path) -> list[TestReport]:
    """Laplace transform and tail of C_N(T), and negligibility of shallow traps."""
    tol = config.tolerances
    params = config.model
    scales = scales_for(config)
    T = config.horizon_t
    _check_budget(params, T * scales.t_n, config.max_events)
    deltas = tuple(sorted(config.delta_grid, reverse=True))
    jobs = [
        _ClockJob(params, _env_key(config, i), i, scales, T, deltas, i < config.csv_replicas, config.max_events)
        for i in range(config.replicas)
    ]
    results = map_replicas(_clock_job, jobs, config.workers)
    write_paths_csv({i: r.path for i, r in enumerate(results) if r.path is not None}, output_dir / "clock.csv")

    values = np.array([r.value for r in results])
    alpha = _aging_alpha(scales.alpha)
    reports = [
        laplace_compare(
            values,
            lambda lam: T * psi_stable(lam, alpha),
            LAMBDAS,
            bootstrap=config.bootstrap,
            level=tol.level,
            rng=limit_rng(params.seed, 1),
            name="laplace-clock",
        )
    ]
    if len(values) >= 20 and np.all(values > 0):
        hill = hill_alpha(values, max(2, len(values) // 10))
        reports.append(interval_check("clock-hill-alpha", hill.alpha, alpha - tol.hill_tolerance, alpha + tol.hill_tolerance, len(values)))
    else:
        reports.append(inconclusive("clock-hill-alpha", len(values), "need at least 20 positive clock values"))
    shallow = [float(np.mean([r.shallow[d] for r in results])) for d in deltas]
    reports.append(decreasing_trend("shallow-clock-trend", shallow, deltas))
    slope = shallow_trap_slope(list(deltas), scales)
    reports.append(
        interval_check("shallow-mass-slope", slope, 1 - alpha - tol.slope_tolerance, 1 - alpha + tol.slope_tolerance, len(deltas))
    )
    return reports


# age


@dataclass(frozen=True)
class _AgeJob:
    params: ModelParams
    key: int
    stream: int
    scales: ScaleSet
    T_prime: float
    keep_path: bool
    max_events: int


@dataclass
class _AgeResult:
    value: float | None
    path: StepPath | None


def _age_job(job: _AgeJob) -> _AgeResult:
    env = EnergyField(job.params, key=job.key)
    stop = job.T_prime / job.scales.rescale_factor * (1.0 + 1e-12)
    trajectory = run_x(
        env,
        None,
        AGE_HORIZON_FACTOR * job.scales.t_n,
        trajectory_rng(job.params.seed, job.stream),
        log_b_n=job.scales.log_b_n,
        stop_clock_over_b=stop,
        max_events=job.max_events,
    )
    try:
        path = age_path(trajectory.record, job.scales, job.T_prime)
    except HorizonError as e:
        logger.warning("replica %d: %s", job.stream, e)
        return _AgeResult(None, None)
    return _AgeResult(float(path(job.T_prime)), path if job.keep_path else None)


def _limit_eps(config: ExperimentConfig, alpha: float, horizon: float, levy_const: float) -> float:
    return config.limit_eps if config.limit_eps is not None else default_eps(alpha, horizon, levy_const)


def age_samples(config: ExperimentConfig, params: ModelParams, scales: ScaleSet) -> list[_AgeResult]:
    _check_budget(params, config.horizon_t * scales.t_n, config.max_events)
    jobs = [
        _AgeJob(
            params,
            environment_key(params.seed, i if config.fresh_env_per_replica else None),
            i,
            scales,
            config.horizon_t,
            i < config.csv_replicas,
            config.max_events,
        )
        for i in range(config.replicas)
    ]
    return map_replicas(_age_job, jobs, config.workers)


def suite_age(config: ExperimentConfig, output_dir: Path) -> list[TestReport]:
    """A_N(T') against the age limit Z_{T'}, and the trend of their distance in N."""
    tol = config.tolerances
    params = config.model
    scales = scales_for(config)
    T_prime = config.horizon_t
    _aging_alpha(scales.alpha)
    eps = _limit_eps(config, scales.alpha, 1.0, 1.0)
    limit = sample_age_at(scales.alpha, T_prime, config.limit_paths, eps, limit_rng(params.seed, 2), levy_const=1.0)

    def compare(results: list[_AgeResult]) -> TestReport:
        values = np.array([r.value for r in results if r.value is not None])
        return ks_test(values, Empirical(limit), level=tol.age_ks_level, name="age-vs-limit")

    results = age_samples(config, params, scales)
    write_paths_csv({i: r.path for i, r in enumerate(results) if r.path is not None}, output_dir / "age.csv")
    values = [r.value for r in results if r.value is not None]
    reports = [
        compare(results),
        interval_check("age-nonnegative", min(values), 0.0, math.inf, len(values))
        if values
        else inconclusive("age-nonnegative", 0, "no replica reached the clock target"),
    ]
    if config.n_grid:
        distances = []
        for n in config.n_grid:
            if n == params.n:
                distances.append(reports[0].statistic)
                continue
            other_params = replace(params, n=n)
            distances.append(compare(age_samples(config, other_params, compute_scales(other_params))).statistic)
        reports.append(decreasing_trend("age-distance-trend", distances, config.n_grid))
    return reports


# limits


def suite_limits(config: ExperimentConfig, output_dir: Path) -> list[TestReport]:
    """Self-consistency of the limit-process samplers."""
    tol = config.tolerances
    params = config.model
    alpha = _aging_alpha(params.alpha)
    rng = limit_rng(params.seed, 3)
    count = config.limit_paths
    eps = _limit_eps(config, alpha, 1.0, math.gamma(alpha + 1.0))

    paths = [sample_stable(alpha, 1.0, eps, rng) for _ in range(count)]
    write_paths_csv({i: p.clock_path(marked=False) for i, p in enumerate(paths[: config.csv_replicas])}, output_dir / "limits_paths.csv")
    reports = [
        laplace_compare(
            np.array([float(p.value(1.0)) for p in paths]),
            lambda lam: psi_stable(lam, alpha),
            LAMBDAS,
            bootstrap=config.bootstrap,
            level=tol.level,
            rng=rng,
            name="laplace-stable",
        )
    ]
    for delta in sorted(config.delta_grid, reverse=True):
        samples = np.array([float(sample_c_delta(alpha, delta, 1.0, rng).marked_value(1.0)) for _ in range(count)])
        reports.append(
            laplace_compare(
                samples,
                lambda lam, d=delta: psi_truncated(lam, alpha, d),
                LAMBDAS,
                bootstrap=config.bootstrap,
                level=tol.level,
                rng=rng,
                name=f"laplace-truncated-delta{delta:g}",
            )
        )

    reports.append(psi_convergence(alpha, PSI_CONVERGENCE_DELTA, PSI_CONVERGENCE_LAMBDAS, tol.psi_rtol))
    gap_error = max(_psi_gap_error(lam, alpha, PSI_CONVERGENCE_DELTA) for lam in PSI_CONVERGENCE_LAMBDAS)
    reports.append(interval_check("psi-truncated-gap", gap_error, 0.0, tol.psi_rtol, len(PSI_CONVERGENCE_LAMBDAS)))

    z_one = sample_age_at(alpha, 1.0, count, eps, rng)
    z_two = sample_age_at(alpha, 2.0, count, eps, rng) / 2.0
    reports.append(ks_test(z_one, Empirical(z_two), level=tol.level, name="age-limit-self-similarity"))
    reports.append(_truncated_age_structure(alpha, config.delta_grid[0], rng, tol.exact_rtol))

    rows = [r for r in reports if r.name.startswith("laplace")]
    _write_laplace_csv(rows, output_dir / "laplace.csv")
    return reports


def psi_convergence(alpha: float, delta: float, lambdas: Sequence[float], rtol: float) -> TestReport:
    """max over ``lambdas`` of |ψ_δ(λ)/ψ(λ) - 1|, passing below ``rtol``.

    ψ - ψ_δ is at least αλδ^{1-α}/((1-α)(1+λδ)). When that floor alone
    exceeds ``rtol`` the target cannot be met at this δ and the report is
    inconclusive.
    """
    name = "psi-truncated-convergence"
    floor = max(
        alpha * lam * delta ** (1.0 - alpha) / ((1.0 - alpha) * (1.0 + lam * delta)) / psi_stable(lam, alpha)
        for lam in lambdas
    )
    if floor > rtol:
        return inconclusive(
            name,
            len(lambdas),
            f"relative error {rtol:g} unreachable at delta={delta:g} for alpha={alpha:.4g} (at least {floor:.3g})",
            alpha=alpha,
            delta=delta,
        )
    error = max(abs(psi_truncated(lam, alpha, delta) / psi_stable(lam, alpha) - 1.0) for lam in lambdas)
    return interval_check(name, error, 0.0, rtol, len(lambdas))


def _psi_gap_error(lam: float, alpha: float, delta: float) -> float:
    """Relative error of ψ - ψ_δ against αλδ^{1-α}/(1-α), its size up to a factor 1 + λδ."""
    gap = psi_stable(lam, alpha) - psi_truncated(lam, alpha, delta)
    return abs(gap / (alpha * lam * delta ** (1.0 - alpha) / (1.0 - alpha)) - 1.0)


def _truncated_age_structure(alpha: float, delta: float, rng: np.random.Generator, rtol: float) -> TestReport:
    """Z^(δ) holds each depth above δ for exactly depth × mark, in jump order."""
    path = sample_c_delta(alpha, delta, 1.0, rng)
    while len(path.sizes) < 2:
        path = path.extend(rng)
    keep = path.sizes > delta
    expected_values = path.sizes[keep]
    expected_holdings = (path.sizes * path.marks)[keep]
    # stop inside the last holding so every kept jump shows up once
    horizon = float(np.sum(expected_holdings)) - 0.5 * float(expected_holdings[-1])
    z = build_z(path, horizon, truncation=delta)
    k = len(z.values)
    # holdings are differences of running sums, so compare them on that scale
    elapsed = np.cumsum(expected_holdings)
    error = max(
        float(np.max(np.abs(z.values - expected_values[:k]) / expected_values[:k])),
        float(np.max(np.abs(holding_times(z)[:-1] - expected_holdings[: k - 1]) / elapsed[: k - 1]))
        if k > 1
        else 0.0,
    )
    return interval_check("truncated-age-holdings", error, 0.0, rtol, k)


def _write_laplace_csv(reports: list[TestReport], path: Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["test", "lambda", "estimate", "low", "high", "psi"])
        for report in reports:
            for lam, row in report.detail.items():
                writer.writerow(
                    [report.name, lam, repr(row["estimate"]), repr(row["low"]), repr(row["high"]), repr(row["psi"])]
                )


SUITES: dict[Suite, Callable[[ExperimentConfig, Path], list[TestReport]]] = {
    Suite.EXACT: suite_exact,
    Suite.DYNAMICS: suite_dynamics,
    Suite.TRAPS: suite_traps,
    Suite.CLOCK: suite_clock,
    Suite.AGE: suite_age,
    Suite.LIMITS: suite_limits,
}


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def write_json(data: Any, path: Path) -> None:
    Path(path).write_text(json.dumps(_jsonable(data), sort_keys=True, indent=2) + "\n", encoding="utf-8")


def manifest(config: ExperimentConfig) -> dict[str, Any]:
    """Everything needed to rerun ``config`` bit for bit."""
    params = config.model
    return {
        "config": config_to_dict(config),
        "config_hash": config_hash(config),
        "banda_version": banda.__version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "seeds": {
            "seed": params.seed,
            "environment": "per-replica" if config.fresh_env_per_replica else "shared",
            "environment_key": environment_key(params.seed),
            "trajectory_streams": [0, config.replicas],
        },
    }


def run_suite(config: ExperimentConfig) -> tuple[int, list[TestReport]]:
    """Run the configured suite and write its artifacts.

    Returns the exit status (0 pass or inconclusive, 2 fail) and the reports.
    """
    output_dir = Path(config.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    for message in regime_warnings(config.model):
        logger.warning(message)
    write_json(manifest(config), output_dir / MANIFEST_FILE)

    selected = list(SUITES) if config.suite is Suite.ALL else [config.suite]
    reports: list[TestReport] = []
    for suite in selected:
        logger.info("running suite %s", suite.value)
        suite_reports = SUITES[suite](config, output_dir)
        for report in suite_reports:
            logger.debug("%s: %s (statistic %.6g)", report.name, report.verdict.value, report.statistic)
        reports.extend(suite_reports)

    verdict = suite_verdict(reports, config.tolerances.suite_pass_fraction)
    write_json(
        {
            "suite": config.suite.value,
            "config_hash": config_hash(config),
            "verdict": verdict.value,
            "reports": [r.to_dict() for r in reports],
        },
        output_dir / REPORT_FILE,
    )
    failed = [r.name for r in reports if r.verdict is Verdict.FAIL]
    logger.info("suite %s: %s (%d reports, %d failed)", config.suite.value, verdict.value, len(reports), len(failed))
    if verdict is Verdict.INCONCLUSIVE:
        logger.warning("suite %s is inconclusive: no report reached a decision", config.suite.value)
    return (2 if verdict is Verdict.FAIL else 0), reports
