"""Tests for the accelerated walk X, its clock and the time-changed dynamics Z."""

import csv
import math
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

from banda.config import ModelParams
from banda.env import EnergyField, hamming
from banda.errors import BudgetExceededError, HorizonError
from banda.walk import (
    JumpKernel,
    StartMode,
    counts,
    edge_flux,
    run_x,
    run_z_direct,
    sites_at,
    step_x,
    time_change_z,
    write_trajectory_csv,
)


@pytest.fixture
def walk_params() -> ModelParams:
    return ModelParams(n=10, beta=1.0, cbar=0.3, seed=1)


@pytest.fixture
def walk_field(walk_params: ModelParams) -> EnergyField:
    return EnergyField(walk_params)


class RecordingObserver:
    def __init__(self) -> None:
        self.discovered: list[tuple[int, float, float]] = []
        self.steps: list[tuple[int, float, float]] = []

    def on_discover(self, site: int, time: float, log_tau: float) -> None:
        self.discovered.append((site, time, log_tau))

    def on_step(self, site: int, start: float, holding: float) -> None:
        self.steps.append((site, start, holding))


class TestRunX:
    """Structure of a simulated trajectory."""

    def test_record_structure(self, walk_field: EnergyField) -> None:
        """Nearest-neighbor jumps, increasing end times, last one at the horizon."""
        record = run_x(walk_field, 0, 50.0, np.random.default_rng(1)).record
        assert len(record) > 100
        assert np.all(np.diff(record.times) > 0)
        assert record.times[-1] == 50.0
        assert record.horizon == 50.0
        assert np.sum(record.holdings) == pytest.approx(50.0)
        assert all(hamming(int(a), int(b)) == 1 for a, b in zip(record.sites[:-1], record.sites[1:]))

    def test_clock_is_compensated_sum(self, walk_field: EnergyField) -> None:
        """clock[k] is the running sum of holding·τ/B."""
        log_b = 2.5
        record = run_x(walk_field, 3, 20.0, np.random.default_rng(2), log_b_n=log_b).record
        expected = record.holdings * np.exp(record.log_taus - log_b)
        np.testing.assert_allclose(record.clock_increments, expected, rtol=1e-12)
        np.testing.assert_allclose(record.clock, np.cumsum(expected), rtol=1e-10)
        assert record.clock_over_b == pytest.approx(math.fsum(expected), rel=1e-12)

    def test_log_taus_follow_sites(self, walk_field: EnergyField) -> None:
        record = run_x(walk_field, 0, 5.0, np.random.default_rng(3)).record
        for site, log_tau in zip(record.sites[:20], record.log_taus[:20]):
            assert log_tau == pytest.approx(walk_field.log_tau(int(site)))

    def test_discovery_order(self, walk_field: EnergyField) -> None:
        """The start is discovered first, then its neighbors by ascending bit."""
        start = 37
        log = run_x(walk_field, start, 5.0, np.random.default_rng(4)).log
        assert log.order[: walk_field.n + 1] == [start, *(start ^ (1 << i) for i in range(walk_field.n))]
        assert log.visited[0] == start
        assert len(set(log.order)) == len(log.order)

    def test_counts(self, walk_field: EnergyField) -> None:
        """D(0) = N + 1 and R(0) = 1; counts never decrease."""
        log = run_x(walk_field, 0, 30.0, np.random.default_rng(5)).log
        assert counts(log, 0.0) == (walk_field.n + 1, 1)
        d_half, r_half = counts(log, 15.0)
        d_end, r_end = counts(log, 30.0)
        assert d_half <= d_end and r_half <= r_end
        assert r_end <= d_end
        assert d_end == len(log.order)

    def test_discovered_within_visited_neighborhoods(self, walk_field: EnergyField) -> None:
        """R <= D <= (N+1)R after every step."""
        record = run_x(walk_field, 0, 30.0, np.random.default_rng(21)).record
        seen: set[int] = set()
        for site, discovered in zip(record.sites.tolist(), record.discovered.tolist()):
            seen.add(site)
            assert len(seen) <= discovered <= (walk_field.n + 1) * len(seen)

    @pytest.mark.parametrize("t", [1.0, 5.0, 20.0])
    def test_mean_range_envelope(self, t: float) -> None:
        """Zero disorder, a = 0: t/2 <= E[R(t)] <= 3t(1+N)."""
        n = 10
        field = EnergyField.zero_disorder(ModelParams(n=n, beta=1.0, cbar=0.3, a=0.0))
        rng = np.random.default_rng(22)
        visited = [counts(run_x(field, None, t, rng).log, t)[1] for _ in range(200)]
        assert t / 2 <= np.mean(visited) <= 3 * t * (1 + n)

    def test_counts_beyond_horizon(self, walk_field: EnergyField) -> None:
        log = run_x(walk_field, 0, 1.0, np.random.default_rng(6)).log
        with pytest.raises(HorizonError):
            counts(log, 1.5)

    def test_nonpositive_horizon(self, walk_field: EnergyField) -> None:
        with pytest.raises(HorizonError):
            run_x(walk_field, 0, 0.0, np.random.default_rng(0))

    def test_start_out_of_range(self, walk_field: EnergyField) -> None:
        with pytest.raises(ValueError):
            run_x(walk_field, 1 << walk_field.n, 1.0, np.random.default_rng(0))

    def test_event_budget(self, walk_field: EnergyField) -> None:
        """A run that would exceed max_events stops with BudgetExceededError."""
        with pytest.raises(BudgetExceededError, match="budget"):
            run_x(walk_field, 0, 1e6, np.random.default_rng(0), max_events=10)

    def test_reproducible(self, walk_field: EnergyField) -> None:
        """Same generator seed, same trajectory."""
        a = run_x(walk_field, 0, 10.0, np.random.default_rng(7)).record
        b = run_x(walk_field, 0, 10.0, np.random.default_rng(7)).record
        np.testing.assert_array_equal(a.sites, b.sites)
        np.testing.assert_array_equal(a.clock, b.clock)

    def test_uniform_start(self, walk_field: EnergyField) -> None:
        record = run_x(walk_field, None, 1.0, np.random.default_rng(8)).record
        assert record.start_mode is StartMode.UNIFORM
        assert record.sites[0] == record.start

    def test_stop_on_clock(self, walk_field: EnergyField) -> None:
        """The run stops right after the clock reaches the requested level."""
        record = run_x(walk_field, 0, 1e4, np.random.default_rng(9), stop_clock_over_b=5.0).record
        assert record.clock_over_b >= 5.0
        assert record.clock[-2] < 5.0
        assert record.horizon < 1e4

    def test_observers(self, walk_field: EnergyField) -> None:
        """Observers see every discovery and every holding interval."""
        observer = RecordingObserver()
        trajectory = run_x(walk_field, 0, 10.0, np.random.default_rng(10), observers=(observer,))
        assert [s for s, _, _ in observer.discovered] == trajectory.log.order
        assert len(observer.steps) == len(trajectory.record)
        assert observer.steps[-1][1] + observer.steps[-1][2] == pytest.approx(10.0)


class TestJumpLaw:
    """Holding times and jump targets."""

    def test_holding_mean(self) -> None:
        """Unit edge rates: holdings are Exponential(N)."""
        field = EnergyField.zero_disorder(ModelParams(n=8, beta=1.0, cbar=0.3))
        record = run_x(field, 0, 2500.0, np.random.default_rng(11)).record
        holdings = record.holdings[:-1]
        assert len(holdings) > 15_000
        assert np.mean(holdings) == pytest.approx(1.0 / 8, rel=0.04)
        assert stats.kstest(holdings, stats.expon(scale=1.0 / 8).cdf).pvalue > 0.001

    def test_targets_uniform(self) -> None:
        """Unit edge rates: the flipped bit is uniform."""
        field = EnergyField.zero_disorder(ModelParams(n=8, beta=1.0, cbar=0.3))
        record = run_x(field, 0, 1000.0, np.random.default_rng(12)).record
        flips = (record.sites[:-1] ^ record.sites[1:]).astype(np.int64)
        bits = np.log2(flips).astype(np.int64)
        assert stats.chisquare(np.bincount(bits, minlength=8)).pvalue > 0.001

    def test_choose_first_neighbor_on_zero(self, walk_field: EnergyField) -> None:
        """u = 0 selects the lowest bit."""
        kernel = JumpKernel(walk_field)
        assert kernel.choose(6, kernel.table(6), 0.0) == 7

    def test_step_x(self, walk_field: EnergyField) -> None:
        holding, y = step_x(walk_field, 21, np.random.default_rng(13))
        assert holding > 0
        assert hamming(21, y) == 1

    def test_kernel_rate_matches_field(self, walk_field: EnergyField) -> None:
        kernel = JumpKernel(walk_field)
        assert kernel.table(99).rate == pytest.approx(walk_field.omega_site(99), rel=1e-12)

    def test_disordered_two_site_law(self) -> None:
        """N = 2, a = 1, E_01 = 1, E_10 = 0: from 00 the walk moves to 01 with probability e/(e+1)."""
        params = ModelParams(n=2, beta=1.0, cbar=0.3, a=1.0)
        field = EnergyField.from_energies(params, np.array([0.0, 1.0, 0.0, 0.0]))
        rng = np.random.default_rng(20)
        steps = [step_x(field, 0, rng) for _ in range(20_000)]
        to_01 = sum(y == 0b01 for _, y in steps)
        assert {y for _, y in steps} == {0b01, 0b10}
        p = math.e / (math.e + 1.0)
        assert stats.binomtest(to_01, len(steps), p).pvalue > 0.001
        holdings = np.array([h for h, _ in steps])
        assert np.mean(holdings) == pytest.approx(1.0 / (math.e + 1.0), rel=0.03)


class TestTimeChange:
    """Z obtained from X by the inverse clock."""

    def test_time_change_uses_clock_increments(self, walk_field: EnergyField) -> None:
        record = run_x(walk_field, 0, 20.0, np.random.default_rng(14), log_b_n=1.0).record
        z = time_change_z(record)
        np.testing.assert_array_equal(z.sites, record.sites)
        np.testing.assert_allclose(z.clock, record.clock, rtol=1e-10)

    def test_direct_z_zero_disorder(self) -> None:
        """Zero disorder: τ = 1, so Z and X share the Exponential(N) holdings."""
        field = EnergyField.zero_disorder(ModelParams(n=6, beta=1.0, cbar=0.3))
        z = run_z_direct(field, 0, 5000, np.random.default_rng(15))
        assert np.mean(z.holdings_over_b) == pytest.approx(1.0 / 6, rel=0.05)
        assert all(hamming(int(a), int(b)) == 1 for a, b in zip(z.sites[:-1], z.sites[1:]))

    def test_empty_record_rejected(self, walk_field: EnergyField) -> None:
        record = run_x(walk_field, 0, 1.0, np.random.default_rng(16)).record
        record.sites = record.sites[:0]
        with pytest.raises(ValueError):
            time_change_z(record)


class TestRecordQueries:
    """Position lookups, edge flux and CSV output."""

    def test_sites_at(self, walk_field: EnergyField) -> None:
        record = run_x(walk_field, 0, 10.0, np.random.default_rng(17)).record
        assert sites_at(record, np.array([0.0]))[0] == record.start
        middle = 0.5 * (record.times[3] + record.times[4])
        assert sites_at(record, np.array([middle]))[0] == record.sites[4]
        assert sites_at(record, np.array([10.0]))[0] == record.sites[-1]
        with pytest.raises(HorizonError):
            sites_at(record, np.array([10.5]))

    def test_edge_flux_counts_jumps(self, walk_field: EnergyField) -> None:
        record = run_x(walk_field, 0, 10.0, np.random.default_rng(18)).record
        flux = edge_flux(record)
        assert sum(flux.values()) == len(record) - 1
        assert all(hamming(x, y) == 1 for x, y in flux)

    def test_write_trajectory_csv(self, walk_field: EnergyField, tmp_path: Path) -> None:
        record = run_x(walk_field, 0, 5.0, np.random.default_rng(19)).record
        path = tmp_path / "trajectory.csv"
        write_trajectory_csv(record, path)
        with path.open(newline="") as handle:
            rows = list(csv.reader(handle))
        assert rows[0] == ["step", "site", "hold", "clock_over_B", "discovered_count"]
        assert len(rows) == len(record) + 1
        assert float(rows[-1][3]) == record.clock_over_b
        assert int(rows[1][4]) == walk_field.n + 1
