"""Random energy landscape on the hypercube {0,1}^N.

Vertices are packed into Python ints (N <= 63). Energies are produced lazily
by a counter-based generator: each vertex index is hashed together with a
64-bit key into one uniform, which is mapped through the inverse Gaussian CDF.
No run ever materializes all 2^N values unless it asks for them explicitly
(``all_energies``, used by the exact small-N oracle).
"""

from __future__ import annotations

import logging
import math

import numpy as np
from scipy.special import ndtri

from banda.config import ModelParams
from banda.errors import NotNeighborsError
from banda.streams import environment_key

logger = logging.getLogger(__name__)

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_TWO_POW_M53 = 2.0**-53

# Exact energy tables are refused above this size.
MAX_TABULATED_N = 24


def hamming(x: int, y: int) -> int:
    return (x ^ y).bit_count()


def neighbors(x: int, n: int) -> list[int]:
    """Neighbors of ``x`` in ascending bit order."""
    return [x ^ (1 << i) for i in range(n)]


def neighbor_array(x: int, n: int) -> np.ndarray:
    return np.uint64(x) ^ (np.uint64(1) << np.arange(n, dtype=np.uint64))


def _mix64(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def hashed_uniforms(key: int, sites: np.ndarray) -> np.ndarray:
    """One uniform in (0, 1) per site, a pure function of (key, site)."""
    sites = np.atleast_1d(np.asarray(sites, dtype=np.uint64))
    with np.errstate(over="ignore"):
        z = _mix64(sites * _GOLDEN + _GOLDEN)
        z = _mix64(z ^ np.uint64(key))
    return ((z >> np.uint64(11)).astype(np.float64) + 0.5) * _TWO_POW_M53


def gaussian_positive_part(uniforms: np.ndarray) -> np.ndarray:
    return np.maximum(ndtri(uniforms), 0.0)


class EnergyField:
    """Lazy landscape E_x >= 0 with Bouchaud depths τ_x = exp(β√N E_x).

    Either exclusive mutation or no mutation: the scalar memo of (E_x, log τ_x)
    pairs is filled by ``state``; an instance shared across threads must be warmed up first or
    confined to one worker. Vectorized queries never touch the memo.
    """

    def __init__(self, params: ModelParams, key: int | None = None) -> None:
        self.params = params
        self.key = environment_key(params.seed) if key is None else key
        self.a = params.a_n
        self.log_tau_scale = params.sqrt_n_beta
        self._table: np.ndarray | None = None
        self._memo: dict[int, tuple[float, float]] = {}

    @classmethod
    def from_energies(cls, params: ModelParams, energies: np.ndarray) -> EnergyField:
        """Landscape with explicitly given energies (length 2^N, all >= 0)."""
        table = np.asarray(energies, dtype=np.float64)
        if table.shape != (2**params.n,):
            raise ValueError(f"expected {2**params.n} energies, got shape {table.shape}")
        if np.any(table < 0):
            raise ValueError("energies must be nonnegative")
        field = cls(params, key=0)
        field._table = table
        return field

    @classmethod
    def zero_disorder(cls, params: ModelParams) -> EnergyField:
        return cls.from_energies(params, np.zeros(2**params.n))

    @property
    def n(self) -> int:
        return self.params.n

    def _check(self, x: int) -> None:
        if not 0 <= x < (1 << self.n):
            raise ValueError(f"vertex {x} out of range for N={self.n}")

    def state(self, x: int) -> tuple[float, float]:
        """(E_x, log τ_x), memoized."""
        self._check(x)
        value = self._memo.get(x)
        if value is None:
            energy = float(self.energies(np.array([x], dtype=np.uint64))[0])
            value = (energy, self.log_tau_scale * energy)
            self._memo[x] = value
        return value

    def energy(self, x: int) -> float:
        return self.state(x)[0]

    def energies(self, xs: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs, dtype=np.uint64)
        if self._table is not None:
            return self._table[xs.astype(np.int64)]
        return gaussian_positive_part(hashed_uniforms(self.key, xs))

    def all_energies(self) -> np.ndarray:
        if self.n > MAX_TABULATED_N:
            raise ValueError(f"refusing to tabulate 2^{self.n} energies")
        if self._table is not None:
            return self._table.copy()
        return self.energies(np.arange(2**self.n, dtype=np.uint64))

    def omega_pair(self, x: int, y: int) -> float:
        if hamming(x, y) != 1:
            raise NotNeighborsError(f"vertices {x} and {y} are not neighbors")
        return math.exp(self.a * (self.energy(x) + self.energy(y)))

    def omega_site(self, x: int) -> float:
        """Total jump rate of the accelerated walk out of ``x``."""
        self._check(x)
        weights = np.exp(self.a * self.energies(neighbor_array(x, self.n)))
        return math.exp(self.a * self.energy(x)) * math.fsum(weights)

    def log_tau(self, x: int) -> float:
        return self.state(x)[1]

    def is_deep(self, x: int, log_threshold: float) -> bool:
        """Deep-trap predicate log τ_x >= log δ + log B_N, threshold precomputed."""
        return self.log_tau(x) >= log_threshold
