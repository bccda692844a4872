"""Event-driven simulation of the accelerated walk X and of its clock.

X jumps from x to a neighbor y at rate ω(x,y) = exp(a(E_x + E_y)). The clock
C(t) = ∫ τ_{X_s} ds is accumulated in units of B_N with compensated summation;
time-changing X by the inverse clock gives the Bouchaud dynamics Z.

Discovery: when the walk stands on x, every site of {x} ∪ {x ⊕ e_i} not seen
before is discovered, x first, then the neighbors by ascending bit index.
"""

from __future__ import annotations

import bisect
import csv
import functools
import logging
import math
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Protocol

import numpy as np

from banda.env import EnergyField, neighbor_array
from banda.errors import BudgetExceededError, HorizonError

logger = logging.getLogger(__name__)

_DRAW_BLOCK = 4096


class StartMode(str, Enum):
    FIXED = "fixed"
    UNIFORM = "uniform"


@dataclass(frozen=True, slots=True)
class SiteTable:
    """Jump law out of one vertex."""

    energy: float
    log_tau: float
    rate: float
    cumulative: list[float]
    neighbor_log_taus: list[float]


class JumpKernel:
    """Per-vertex jump tables of X, built on demand and cached.

    The e^{aE_x} factor cancels in the jump law, so only the cumulative
    neighbor weights e^{aE_y} are kept for choosing the target.
    """

    def __init__(self, field: EnergyField, cache_size: int = 1 << 16) -> None:
        self.field = field
        self.n = field.n
        self._bits = [1 << i for i in range(self.n)]
        self.table = functools.lru_cache(maxsize=cache_size)(self._build)

    def _build(self, x: int) -> SiteTable:
        field = self.field
        sites = np.concatenate((np.array([x], dtype=np.uint64), neighbor_array(x, self.n)))
        energies = field.energies(sites)
        weights = np.exp(field.a * energies[1:])
        cumulative = np.cumsum(weights)
        return SiteTable(
            energy=float(energies[0]),
            log_tau=field.log_tau_scale * float(energies[0]),
            rate=math.exp(field.a * float(energies[0])) * float(cumulative[-1]),
            cumulative=cumulative.tolist(),
            neighbor_log_taus=(field.log_tau_scale * energies[1:]).tolist(),
        )

    def choose(self, x: int, table: SiteTable, u: float) -> int:
        j = bisect.bisect_right(table.cumulative, u * table.cumulative[-1])
        return x ^ self._bits[min(j, self.n - 1)]

    def step(self, x: int, rng: np.random.Generator) -> tuple[float, int]:
        table = self.table(x)
        holding = rng.standard_exponential() / table.rate
        return holding, self.choose(x, table, rng.random())


class DrawBuffer:
    """Buffered standard exponentials and uniforms from one generator."""

    def __init__(self, rng: np.random.Generator) -> None:
        self.rng = rng
        self._exp: list[float] = []
        self._unif: list[float] = []

    def exponential(self) -> float:
        if not self._exp:
            self._exp = self.rng.standard_exponential(_DRAW_BLOCK).tolist()
        return self._exp.pop()

    def uniform(self) -> float:
        if not self._unif:
            self._unif = self.rng.random(_DRAW_BLOCK).tolist()
        return self._unif.pop()


class WalkObserver(Protocol):
    """Hooks invoked by ``run_x`` while the walk unfolds."""

    def on_discover(self, site: int, time: float, log_tau: float) -> None: ...

    def on_step(self, site: int, start: float, holding: float) -> None: ...


@dataclass
class TrajectoryRecord:
    """Event list of X: one entry per holding interval.

    ``times`` are the interval end points (strictly increasing); the last
    interval is truncated at the horizon. ``clock`` is the compensated running
    sum of ``clock_increments`` = holding · τ_site / B_N.
    """

    n: int
    start: int
    start_mode: StartMode
    horizon: float
    log_b_n: float
    sites: np.ndarray
    holdings: np.ndarray
    times: np.ndarray
    clock_increments: np.ndarray
    clock: np.ndarray
    log_taus: np.ndarray
    discovered: np.ndarray

    def __len__(self) -> int:
        return len(self.sites)

    @property
    def clock_over_b(self) -> float:
        return float(self.clock[-1]) if len(self.clock) else 0.0


@dataclass
class DiscoveryLog:
    """Sites in order of first discovery, plus first-visit times."""

    order: list[int]
    discovery_times: list[float]
    visited: list[int]
    visit_times: list[float]
    horizon: float

    def counts(self, t: float) -> tuple[int, int]:
        """(D(t), R(t)): discovered and visited sites by time t."""
        if t > self.horizon:
            raise HorizonError(f"time {t} lies beyond the simulated horizon {self.horizon}")
        return bisect.bisect_right(self.discovery_times, t), bisect.bisect_right(self.visit_times, t)


@dataclass
class Trajectory:
    record: TrajectoryRecord
    log: DiscoveryLog


def counts(log: DiscoveryLog, t: float) -> tuple[int, int]:
    return log.counts(t)


def sites_at(record: TrajectoryRecord, t: np.ndarray) -> np.ndarray:
    """Position of X at each time in ``t`` (all within the record's horizon)."""
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < 0) or np.any(t > record.horizon):
        raise HorizonError(f"times must lie in [0, {record.horizon}]")
    index = np.minimum(np.searchsorted(record.times, t, side="right"), len(record) - 1)
    return record.sites[index]


def step_x(field: EnergyField, state: int, rng: np.random.Generator) -> tuple[float, int]:
    """One jump of X from ``state``: Exponential(ω(x)) holding, then the target."""
    return JumpKernel(field, cache_size=1).step(state, rng)


def run_x(
    field: EnergyField,
    start: int | None,
    horizon: float,
    rng: np.random.Generator,
    *,
    log_b_n: float = 0.0,
    observers: Iterable[WalkObserver] = (),
    stop_clock_over_b: float | None = None,
    max_events: int | None = None,
    kernel: JumpKernel | None = None,
) -> Trajectory:
    """Simulate X until ``horizon`` (or until the clock reaches ``stop_clock_over_b``).

    ``start=None`` draws the initial vertex uniformly from ``rng``.
    """
    if not horizon > 0:
        raise HorizonError(f"horizon must be positive, got {horizon}")
    n = field.n
    kernel = kernel if kernel is not None else JumpKernel(field)
    observers = tuple(observers)
    draws = DrawBuffer(rng)
    if start is None:
        mode = StartMode.UNIFORM
        start = int(rng.integers(0, 2**n, dtype=np.uint64))
    else:
        mode = StartMode.FIXED
        if not 0 <= start < 2**n:
            raise ValueError(f"start vertex {start} out of range for N={n}")

    seen: set[int] = set()
    order: list[int] = []
    discovery_times: list[float] = []
    visited_set: set[int] = set()
    visited: list[int] = []
    visit_times: list[float] = []
    bits = [1 << i for i in range(n)]

    sites: list[int] = []
    holdings: list[float] = []
    times: list[float] = []
    increments: list[float] = []
    clock: list[float] = []
    log_taus: list[float] = []
    discovered: list[int] = []

    clock_sum = 0.0
    compensation = 0.0
    t = 0.0
    site = start
    while True:
        table = kernel.table(site)
        if site not in visited_set:
            visited_set.add(site)
            visited.append(site)
            visit_times.append(t)
        if site not in seen:
            seen.add(site)
            order.append(site)
            discovery_times.append(t)
            for obs in observers:
                obs.on_discover(site, t, table.log_tau)
        for bit, log_tau in zip(bits, table.neighbor_log_taus):
            z = site ^ bit
            if z not in seen:
                seen.add(z)
                order.append(z)
                discovery_times.append(t)
                for obs in observers:
                    obs.on_discover(z, t, log_tau)

        holding = draws.exponential() / table.rate
        final = t + holding >= horizon
        if final:
            holding = horizon - t
        increment = holding * math.exp(table.log_tau - log_b_n)
        y = increment - compensation
        total = clock_sum + y
        compensation = (total - clock_sum) - y
        clock_sum = total

        sites.append(site)
        holdings.append(holding)
        times.append(horizon if final else t + holding)
        increments.append(increment)
        clock.append(clock_sum)
        log_taus.append(table.log_tau)
        discovered.append(len(order))
        for obs in observers:
            obs.on_step(site, t, holding)

        t = times[-1]
        if final or (stop_clock_over_b is not None and clock_sum >= stop_clock_over_b):
            break
        if max_events is not None and len(sites) >= max_events:
            raise BudgetExceededError(
                f"event budget {max_events} exhausted at time {t:.6g} of horizon {horizon:.6g}"
            )
        site = kernel.choose(site, table, draws.uniform())

    record = TrajectoryRecord(
        n=n,
        start=start,
        start_mode=mode,
        horizon=t,
        log_b_n=log_b_n,
        sites=np.array(sites, dtype=np.uint64),
        holdings=np.array(holdings),
        times=np.array(times),
        clock_increments=np.array(increments),
        clock=np.array(clock),
        log_taus=np.array(log_taus),
        discovered=np.array(discovered, dtype=np.int64),
    )
    log = DiscoveryLog(order, discovery_times, visited, visit_times, horizon=t)
    logger.debug("run_x: %d events, D=%d, R=%d, clock/B=%.6g", len(sites), len(order), len(visited), clock_sum)
    return Trajectory(record, log)


@dataclass
class ZTrajectory:
    """Bouchaud dynamics Z: the skeleton of X with holdings in units of B_N."""

    sites: np.ndarray
    holdings_over_b: np.ndarray

    @property
    def clock(self) -> np.ndarray:
        """Z-time (over B_N) at the end of each holding."""
        return np.cumsum(self.holdings_over_b)


def time_change_z(record: TrajectoryRecord) -> ZTrajectory:
    if len(record) == 0:
        raise ValueError("cannot time-change an empty trajectory")
    return ZTrajectory(sites=record.sites.copy(), holdings_over_b=record.clock_increments.copy())


def run_z_direct(
    field: EnergyField,
    start: int,
    n_steps: int,
    rng: np.random.Generator,
    *,
    log_b_n: float = 0.0,
) -> ZTrajectory:
    """Gillespie simulation of Z with rates e^{a(E_x+E_y)}/τ_x, built from ``omega_pair``.

    Independent of the time change of X; used to cross-check ``time_change_z``.
    """
    sites = np.empty(n_steps, dtype=np.uint64)
    holdings = np.empty(n_steps)
    x = start
    for k in range(n_steps):
        nbrs = [x ^ (1 << i) for i in range(field.n)]
        tau_over_b = math.exp(field.log_tau(x) - log_b_n)
        rates = np.array([field.omega_pair(x, y) for y in nbrs]) / tau_over_b
        total = rates.sum()
        sites[k] = x
        holdings[k] = rng.standard_exponential() / total
        x = nbrs[int(rng.choice(field.n, p=rates / total))]
    return ZTrajectory(sites=sites, holdings_over_b=holdings)


def edge_flux(record: TrajectoryRecord) -> Counter[tuple[int, int]]:
    """Number of jumps along each directed edge."""
    sites = record.sites.tolist()
    return Counter(zip(sites[:-1], sites[1:]))


def write_trajectory_csv(record: TrajectoryRecord, path: Path) -> None:
    """One row per event: step, site, hold, clock_over_B, discovered_count."""
    with Path(path).open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["step", "site", "hold", "clock_over_B", "discovered_count"])
        for k in range(len(record)):
            writer.writerow(
                [
                    k,
                    int(record.sites[k]),
                    repr(float(record.holdings[k])),
                    repr(float(record.clock[k])),
                    int(record.discovered[k]),
                ]
            )
