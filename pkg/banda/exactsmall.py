"""Exact linear algebra for small hypercubes.

The accelerated walk X is reversible for the uniform measure, so its
generator is symmetric and everything here goes through the symmetric
eigendecomposition L = V diag(λ) Vᵀ. Dense matrices are used up to N = 10;
N = 11, 12 are accepted for the spectral gap only, via a sparse solver.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from banda.env import EnergyField
from banda.errors import BlockTooShortError, ExactComputationError
from banda.walk import DrawBuffer, JumpKernel

logger = logging.getLogger(__name__)

MAX_DENSE_N = 10
MAX_SPARSE_N = 12
MAX_SST_N = 8
SEPARATION_TARGET = math.exp(-1.0)


def _edge_lists(n: int) -> tuple[np.ndarray, np.ndarray]:
    idx = np.arange(2**n)
    rows = np.concatenate([idx] * n)
    cols = np.concatenate([idx ^ (1 << i) for i in range(n)])
    return rows, cols


def generator_matrix(env: EnergyField, sparse: bool = False) -> np.ndarray | scipy.sparse.csr_matrix:
    """Generator of X: off-diagonal ω(x,y) = exp(a(E_x+E_y)) on edges, zero row sums."""
    n = env.n
    limit = MAX_SPARSE_N if sparse else MAX_DENSE_N
    if n > limit:
        raise ValueError(f"N={n} exceeds the {'sparse' if sparse else 'dense'} limit {limit}")
    weights = np.exp(env.a * env.all_energies())
    rows, cols = _edge_lists(n)
    rates = weights[rows] * weights[cols]
    off = scipy.sparse.csr_matrix((rates, (rows, cols)), shape=(2**n, 2**n))
    diagonal = -np.asarray(off.sum(axis=1)).ravel()
    matrix = off + scipy.sparse.diags(diagonal)
    return matrix.tocsr() if sparse else matrix.toarray()


def unit_rate_generator(n: int) -> np.ndarray:
    """Generator of the comparison walk X° with every edge at rate 1."""
    if n > MAX_DENSE_N:
        raise ValueError(f"N={n} exceeds the dense limit {MAX_DENSE_N}")
    rows, cols = _edge_lists(n)
    matrix = np.zeros((2**n, 2**n))
    matrix[rows, cols] = 1.0
    matrix[np.diag_indices(2**n)] = -float(n)
    return matrix


def generator_defects(L: np.ndarray) -> tuple[float, float]:
    """(max |L - Lᵀ|, max |row sum|), both zero for a reversible generator."""
    return float(np.max(np.abs(L - L.T))), float(np.max(np.abs(L.sum(axis=1))))


@dataclass(frozen=True)
class Spectrum:
    """Symmetric eigendecomposition of a generator, eigenvalues ascending."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    _cache: dict[float, np.ndarray] = field(default_factory=dict, repr=False, compare=False)

    @classmethod
    def of(cls, L: np.ndarray) -> Spectrum:
        try:
            values, vectors = scipy.linalg.eigh(L)
        except (np.linalg.LinAlgError, ValueError) as e:
            raise ExactComputationError(f"eigendecomposition failed: {e}") from e
        return cls(values, vectors)

    @property
    def size(self) -> int:
        return len(self.eigenvalues)

    @property
    def n(self) -> int:
        return self.size.bit_length() - 1

    @property
    def gap(self) -> float:
        return float(-self.eigenvalues[-2])

    def transition_matrix(self, t: float) -> np.ndarray:
        """e^{tL}; the identity at t = 0."""
        if t < 0:
            raise ValueError(f"t must be nonnegative, got {t}")
        if t == 0:
            return np.eye(self.size)
        cached = self._cache.get(t)
        if cached is None:
            v = self.eigenvectors
            cached = (v * np.exp(t * self.eigenvalues)) @ v.T
            self._cache[t] = cached
        return cached


def _spectrum(L: np.ndarray | Spectrum) -> Spectrum:
    return L if isinstance(L, Spectrum) else Spectrum.of(L)


def spectral_gap(L: np.ndarray | scipy.sparse.spmatrix | Spectrum) -> float:
    """Second-smallest eigenvalue of -L."""
    if scipy.sparse.issparse(L):
        try:
            values = scipy.sparse.linalg.eigsh(L, k=2, which="LA", return_eigenvectors=False)
        except scipy.sparse.linalg.ArpackError as e:
            raise ExactComputationError(f"sparse eigensolver failed: {e}") from e
        return float(-np.min(values))
    if isinstance(L, Spectrum):
        return L.gap
    try:
        values = scipy.linalg.eigvalsh(L)
    except (np.linalg.LinAlgError, ValueError) as e:
        raise ExactComputationError(f"eigenvalue computation failed: {e}") from e
    return float(-values[-2])


def heat_kernel(L: np.ndarray | Spectrum, x: int, y: int, t: float) -> float:
    """P_x[X_t = y]."""
    return float(_spectrum(L).transition_matrix(t)[x, y])


def heat_kernel_violations(L: np.ndarray | Spectrum, times: list[float], slack: float = 1e-12) -> int:
    """Number of (t, x, y) with |P_x[X_t=y] - 2^-N| > e^{-2t}."""
    spectrum = _spectrum(L)
    uniform = 1.0 / spectrum.size
    return sum(
        int(np.count_nonzero(np.abs(spectrum.transition_matrix(t) - uniform) > math.exp(-2.0 * t) + slack))
        for t in times
    )


def annealed_diagonal_bound(n: int, t: float) -> float:
    """((1 + e^{-2t}) / 2)^N, the diagonal heat kernel of X°."""
    return ((1.0 + math.exp(-2.0 * t)) / 2.0) ** n


def green_exact(L: np.ndarray, t_scale: float) -> np.ndarray:
    """G^t = ((1/t) I - L)^{-1}."""
    if not t_scale > 0:
        raise ValueError(f"t_scale must be positive, got {t_scale}")
    size = L.shape[0]
    system = np.eye(size) / t_scale - L
    try:
        green = scipy.linalg.solve(system, np.eye(size), assume_a="pos")
    except np.linalg.LinAlgError as e:
        raise ExactComputationError(f"Green system is singular or ill-conditioned: {e}") from e
    return green


def expected_range(green: np.ndarray, t_scale: float) -> tuple[float, float]:
    """E_u[R(T)] for T ~ Exponential(mean t) computed two ways.

    First from hitting probabilities G(x,y)/G(y,y), then from the diagonal
    alone via Σ_x G(y,x) = t. The two agree exactly.
    """
    size = green.shape[0]
    diagonal = np.diag(green)
    via_pairs = float(np.sum(green / diagonal[np.newaxis, :]) / size)
    via_diagonal = float(np.sum(t_scale / diagonal) / size)
    return via_pairs, via_diagonal


def _level_two_weights(env: EnergyField, x: int) -> tuple[float, np.ndarray, np.ndarray]:
    if env.n < 2:
        raise ValueError(f"the exit rate to distance 2 needs N >= 2, got N={env.n}")
    n = env.n
    w_x = math.exp(env.a * env.energy(x))
    ys = [x ^ (1 << i) for i in range(n)]
    w_y = np.array([math.exp(env.a * env.energy(y)) for y in ys])
    s_y = np.array(
        [sum(math.exp(env.a * env.energy(y ^ (1 << j))) for j in range(n) if y ^ (1 << j) != x) for y in ys]
    )
    return w_x, w_y, s_y


def exit_rate_H2(env: EnergyField, x: int) -> float:
    """e^{aE_x}Σ_y e^{aE_y} · Σ_y e^{aE_y}S_y / Σ_y e^{aE_y}(e^{aE_x} + S_y).

    S_y = Σ_{z∼y, z≠x} e^{aE_z}. Equals ``exit_rate_H2_first_step`` whenever
    the S_y coincide, in particular under zero disorder where both are N - 1.
    """
    w_x, w_y, s_y = _level_two_weights(env, x)
    return w_x * w_y.sum() * float(np.sum(w_y * s_y)) / float(np.sum(w_y * (w_x + s_y)))


def exit_rate_H2_first_step(env: EnergyField, x: int) -> float:
    """Rate of the exponential time spent at x before reaching distance 2, by first-step analysis."""
    w_x, w_y, s_y = _level_two_weights(env, x)
    escape = float(np.sum(w_y * s_y / (w_x + s_y))) / w_y.sum()
    return w_x * w_y.sum() * escape


def simulate_occupation_before_h2(env: EnergyField, x: int, runs: int, rng: np.random.Generator) -> np.ndarray:
    """Time X spends at ``x`` before first reaching Hamming distance 2, per run."""
    kernel = JumpKernel(env)
    draws = DrawBuffer(rng)
    out = np.empty(runs)
    for k in range(runs):
        site = x
        occupation = 0.0
        while (site ^ x).bit_count() < 2:
            table = kernel.table(site)
            holding = draws.exponential() / table.rate
            if site == x:
                occupation += holding
            site = kernel.choose(site, table, draws.uniform())
        out[k] = occupation
    return out


def separation(L: np.ndarray | Spectrum, t: float) -> float:
    """max_{x,y} 1 - P_x[X_t=y]/u(y)."""
    spectrum = _spectrum(L)
    return float(np.max(1.0 - spectrum.size * spectrum.transition_matrix(t)))


def total_variation_spread(L: np.ndarray | Spectrum, t: float) -> float:
    """max_{x,y} ‖P_x[X_t ∈ ·] - P_y[X_t ∈ ·]‖_TV."""
    p = _spectrum(L).transition_matrix(t)
    spread = 0.0
    for x in range(len(p)):
        spread = max(spread, 0.5 * float(np.max(np.sum(np.abs(p - p[x]), axis=1))))
    return spread


def dirichlet_form(L: np.ndarray, f: np.ndarray) -> float:
    """-u(fᵀ L f) = ½ Σ_{x,y} u(x) ω(x,y) (f(x) - f(y))²."""
    f = np.asarray(f, dtype=np.float64)
    return float(-(f @ L @ f) / len(f))


def find_block(L: np.ndarray | Spectrum, n: int, max_multiple: int = 64) -> int:
    """Smallest multiple of N whose separation is at most e^{-1}."""
    spectrum = _spectrum(L)
    for k in range(1, max_multiple + 1):
        if separation(spectrum, float(k * n)) <= SEPARATION_TARGET:
            logger.debug("stationary-time block %d (= %d·N)", k * n, k)
            return k * n
    raise BlockTooShortError(f"separation stays above e^-1 up to {max_multiple}·N")


class StationaryTimeSampler:
    """Strong stationary time built from exact block transition matrices.

    At the end of every block the walk, having moved from z to y, stops with
    probability (1 - e^{-1})·u(y)/P_z[X_block = y].
    """

    def __init__(self, L: np.ndarray | Spectrum, block: float) -> None:
        spectrum = _spectrum(L)
        if spectrum.n > MAX_SST_N:
            raise ValueError(f"strong stationary times are built for N <= {MAX_SST_N}, got N={spectrum.n}")
        s = separation(spectrum, block)
        if s > SEPARATION_TARGET:
            raise BlockTooShortError(f"separation {s:.4f} at block {block} exceeds e^-1; use a longer block")
        self.block = block
        self.size = spectrum.size
        self.p = np.clip(spectrum.transition_matrix(block), 0.0, None)
        self.cumulative = np.cumsum(self.p, axis=1)
        self.accept_numerator = (1.0 - SEPARATION_TARGET) / self.size

    def sample(self, rng: np.random.Generator, start: int = 0) -> tuple[float, int]:
        z = start
        k = 0
        while True:
            k += 1
            row = self.cumulative[z]
            y = min(int(np.searchsorted(row, rng.random() * row[-1], side="right")), self.size - 1)
            if rng.random() * self.p[z, y] < self.accept_numerator:
                return k * self.block, y
            z = y


def strong_stationary_time(L: np.ndarray | Spectrum, block: float, rng: np.random.Generator, start: int = 0) -> tuple[float, int]:
    """One draw of (T, X_T) started from ``start``."""
    return StationaryTimeSampler(L, block).sample(rng, start)
