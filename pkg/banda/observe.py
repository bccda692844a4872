"""Deep traps, Green functions and the rescaled clock and age paths.

A site is a deep trap when log τ_x >= log δ + log B_N. Traps are detected
while the walk runs (``TrapDetector`` is a walk observer); their Green
functions are estimated afterwards by independent killed runs restarted at
the trap, so the estimate never conditions on the main trajectory.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from banda.env import EnergyField
from banda.errors import HorizonError, MarkError
from banda.limitproc import StepPath, step_path_from_breaks
from banda.scales import ScaleSet
from banda.stats import Estimate
from banda.walk import DrawBuffer, JumpKernel, Trajectory, TrajectoryRecord, run_x

logger = logging.getLogger(__name__)

# Relative slack accepted between a run's horizon and the requested one.
_HORIZON_RTOL = 1e-12


@dataclass
class TrapEvent:
    """One deep trap, in order of discovery.

    Two occupation windows of length ``window`` ~ Exponential(mean N²) are
    recorded: one opened at discovery, one at the first visit.
    """

    n: int
    site: int
    discovery_time: float
    T_over_tN: float
    depth_over_B: float
    window: float
    first_visit_time: float | None = None
    visited_within_N: bool = False
    occupation_from_discovery: float = 0.0
    occupation_from_visit: float = 0.0
    window_complete: bool = False
    green: float | None = None
    green_stderr: float | None = None
    e_mark: float | None = None


class TrapDetector:
    """Walk observer that opens a ``TrapEvent`` for every deep site discovered."""

    def __init__(self, field: EnergyField, scales: ScaleSet, delta: float, rng: np.random.Generator) -> None:
        self.n = field.n
        self.scales = scales
        self.delta = delta
        self.log_threshold = scales.log_deep_threshold(delta)
        self.rng = rng
        self.events: list[TrapEvent] = []
        self._by_site: dict[int, TrapEvent] = {}
        self._offset = 0.0
        self._tracking = False

    def on_discover(self, site: int, time: float, log_tau: float) -> None:
        if self._tracking or log_tau < self.log_threshold:
            return
        event = TrapEvent(
            n=len(self.events) + 1,
            site=site,
            discovery_time=time,
            T_over_tN=time / self.scales.t_n,
            depth_over_B=math.exp(log_tau - self.scales.log_b_n),
            window=float(self.rng.exponential(self.n**2)),
        )
        self.events.append(event)
        self._by_site[site] = event
        logger.debug("deep trap %d at site %d, T/t_N=%.4g, tau/B=%.4g", event.n, site, event.T_over_tN, event.depth_over_B)

    def on_step(self, site: int, start: float, holding: float) -> None:
        event = self._by_site.get(site)
        if event is None:
            return
        start += self._offset
        if event.first_visit_time is None:
            if self._tracking:
                return
            event.first_visit_time = start
        end = start + holding
        event.occupation_from_discovery += _overlap(start, end, event.discovery_time, event.window)
        event.occupation_from_visit += _overlap(start, end, event.first_visit_time, event.window)

    def open_until(self) -> float:
        """Time at which the last window of a visited trap closes (0 if none was visited)."""
        return max((e.first_visit_time + e.window for e in self.events if e.first_visit_time is not None), default=0.0)

    def track_from(self, offset: float) -> None:
        """Stop opening events and first visits; later steps are shifted by ``offset``.

        Used to keep filling the windows of traps visited before the horizon
        with a continuation of the walk started where it stopped.
        """
        self._offset = offset
        self._tracking = True

    def finish(self, horizon: float) -> list[TrapEvent]:
        for event in self.events:
            h = event.first_visit_time
            event.visited_within_N = h is not None and h - event.discovery_time <= self.n
            event.window_complete = h is not None and h + event.window <= horizon
        incomplete = sum(not e.window_complete for e in self.events)
        if incomplete:
            logger.warning("%d of %d traps have no complete occupation window", incomplete, len(self.events))
        return self.events


def _overlap(start: float, end: float, window_start: float, length: float) -> float:
    return max(0.0, min(end, window_start + length) - max(start, window_start))


def detect_traps(
    field: EnergyField,
    scales: ScaleSet,
    delta: float,
    horizon: float,
    rng: np.random.Generator,
    aux_rng: np.random.Generator,
    *,
    start: int | None = None,
    max_events: int | None = None,
    kernel: JumpKernel | None = None,
) -> tuple[Trajectory, list[TrapEvent]]:
    """Run X on [0, horizon] and return its trajectory with the deep traps it discovered.

    Traps are those discovered and first visited before the horizon. Their
    occupation windows may close later, so the walk is continued (by the
    Markov property, from the site it occupies at the horizon) until every
    window is closed; the returned trajectory stops at the horizon.
    """
    detector = TrapDetector(field, scales, delta, aux_rng)
    trajectory = run_x(
        field,
        start,
        horizon,
        rng,
        log_b_n=scales.log_b_n,
        observers=(detector,),
        max_events=max_events,
        kernel=kernel,
    )
    end = trajectory.record.horizon
    closing = detector.open_until()
    if closing > end:
        detector.track_from(end)
        run_x(
            field,
            int(trajectory.record.sites[-1]),
            closing - end,
            rng,
            observers=(detector,),
            max_events=max_events,
            kernel=kernel,
        )
        end = closing
    return trajectory, detector.finish(end)


def green_samples(
    field: EnergyField,
    x: int,
    samples: int,
    rng: np.random.Generator,
    *,
    escape_radius: int | None = None,
    kernel: JumpKernel | None = None,
) -> np.ndarray:
    """Occupation times of ``x`` by X started at ``x`` and killed at rate 1/N².

    Each run stops at an independent Exponential(mean N²) alarm. With
    ``escape_radius`` a run also stops once it reaches Hamming distance
    ``escape_radius`` from ``x``.
    """
    if samples < 1:
        raise ValueError(f"samples must be at least 1, got {samples}")
    kernel = kernel if kernel is not None else JumpKernel(field)
    draws = DrawBuffer(rng)
    mean_alarm = float(field.n**2)
    out = np.empty(samples)
    for k in range(samples):
        alarm = draws.exponential() * mean_alarm
        t = 0.0
        occupation = 0.0
        site = x
        while True:
            table = kernel.table(site)
            holding = draws.exponential() / table.rate
            if site == x:
                occupation += min(holding, alarm - t)
            t += holding
            if t >= alarm:
                break
            site = kernel.choose(site, table, draws.uniform())
            if escape_radius is not None and (site ^ x).bit_count() >= escape_radius:
                break
        out[k] = occupation
    return out


def green_mc(
    field: EnergyField,
    x: int,
    samples: int,
    rng: np.random.Generator,
    *,
    escape_radius: int | None = None,
    kernel: JumpKernel | None = None,
) -> Estimate:
    """Monte Carlo G_N at ``x`` with its standard error."""
    return Estimate.from_samples(
        green_samples(field, x, samples, rng, escape_radius=escape_radius, kernel=kernel)
    )


def extract_mark(trap: TrapEvent, occupation: float) -> float:
    if trap.green is None or not trap.green > 0:
        raise MarkError(f"trap {trap.n} at site {trap.site} has no positive Green estimate ({trap.green})")
    return occupation / trap.green


def annotate_green(
    events: Iterable[TrapEvent],
    field: EnergyField,
    samples: int,
    rng: np.random.Generator,
    *,
    escape_radius: int | None = None,
    kernel: JumpKernel | None = None,
) -> None:
    """Fill ``green``, ``green_stderr`` and ``e_mark`` on every event in place."""
    kernel = kernel if kernel is not None else JumpKernel(field)
    for event in events:
        estimate = green_mc(field, event.site, samples, rng, escape_radius=escape_radius, kernel=kernel)
        event.green = estimate.mean
        event.green_stderr = estimate.stderr
        event.e_mark = extract_mark(event, event.occupation_from_visit)


def spacings(events: Sequence[TrapEvent]) -> np.ndarray:
    """T(n) - T(n-1) over t_N, with T(0) = 0."""
    arrivals = np.array([e.T_over_tN for e in events])
    return np.diff(arrivals, prepend=0.0)


def trap_counts(events: Sequence[TrapEvent], t: float) -> int:
    """Number of deep traps discovered by time t·t_N."""
    return sum(e.T_over_tN <= t for e in events)


def _clock_values(record: TrajectoryRecord, scales: ScaleSet, delta: float | None) -> np.ndarray:
    if delta is None:
        values = record.clock
    else:
        deep = record.log_taus >= scales.log_deep_threshold(delta)
        values = np.cumsum(np.where(deep, record.clock_increments, 0.0))
    return scales.rescale_factor * np.maximum.accumulate(values)


def rescale_clock(record: TrajectoryRecord, scales: ScaleSet, T: float, delta: float | None = None) -> StepPath:
    """C_N(t) = N²φ(a_N)²·C(t·t_N)/B_N on [0, T], evaluated on the event grid.

    With ``delta`` only increments collected at deep traps are kept (C^(δ)_N).
    """
    target = T * scales.t_n
    if record.horizon < target * (1.0 - _HORIZON_RTOL):
        raise HorizonError(f"run stops at {record.horizon:.6g}, clock needs {target:.6g}")
    ends = record.times / scales.t_n
    ends = np.where((ends > T) & (ends <= T * (1.0 + _HORIZON_RTOL)), T, ends)
    starts = np.concatenate(([0.0], ends))
    values = np.concatenate(([0.0], _clock_values(record, scales, delta)))
    return step_path_from_breaks(starts, values, T)


def age_path(record: TrajectoryRecord, scales: ScaleSet, T_prime: float) -> StepPath:
    """A_N on [0, T']: τ/B_N of the current site, indexed by the rescaled clock."""
    clock = _clock_values(record, scales, None)
    if len(clock) == 0 or clock[-1] < T_prime:
        reached = clock[-1] if len(clock) else 0.0
        raise HorizonError(f"rescaled clock reaches {reached:.6g}, age path needs {T_prime}")
    starts = np.concatenate(([0.0], clock[:-1]))
    values = np.exp(record.log_taus - scales.log_b_n)
    return step_path_from_breaks(starts, values, T_prime)


@dataclass
class RescaledPaths:
    clock: StepPath
    age: StepPath


def write_traps_csv(events_by_replica: Mapping[int, Sequence[TrapEvent]], path: Path) -> None:
    """One row per trap event, prefixed by its replica index."""
    columns = [f.name for f in fields(TrapEvent)]
    with Path(path).open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["replica", *columns])
        for replica in sorted(events_by_replica):
            for event in events_by_replica[replica]:
                writer.writerow([replica, *(_cell(getattr(event, c)) for c in columns)])


def write_paths_csv(paths: Mapping[int, StepPath], path: Path) -> None:
    """Breakpoints of each path: replica, t, value."""
    with Path(path).open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["replica", "t", "value"])
        for replica in sorted(paths):
            p = paths[replica]
            for t, v in zip(p.times.tolist(), p.values.tolist()):
                writer.writerow([replica, repr(t), repr(v)])


def _cell(value: object) -> object:
    if value is None:
        return ""
    if isinstance(value, bool):
        return int(value)
    if isinstance(value, float):
        return repr(value)
    return value


def read_traps_csv(path: Path, replicas: int | None = None) -> dict[int, list[TrapEvent]]:
    """Inverse of ``write_traps_csv``.

    Replicas without a trap leave no row; pass ``replicas`` to get them back as empty lists.
    """
    types = {f.name: f.type for f in fields(TrapEvent)}
    events: dict[int, list[TrapEvent]] = {r: [] for r in range(replicas or 0)}
    with Path(path).open(newline="", encoding="utf-8") as handle:
        for row in csv.DictReader(handle):
            replica = int(row.pop("replica"))
            values = {name: _parse(types[name], text) for name, text in row.items()}
            events.setdefault(replica, []).append(TrapEvent(**values))
    return events


def _parse(kind: str, text: str) -> object:
    if text == "":
        return None
    if kind == "int":
        return int(text)
    if kind == "bool":
        return text == "1"
    return float(text)
