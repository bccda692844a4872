"""Model parameters and experiment configuration.

Configuration files are JSON objects. Keys mirror the dataclass fields below;
``model`` and ``tolerances`` are nested objects. Unknown keys are rejected so a
typo never silently falls back to a default.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from enum import Enum
from pathlib import Path
from typing import Any, Mapping

from banda.errors import ConfigError

MAX_N = 63


class Suite(str, Enum):
    """Named groups of checks that ``run_suite`` knows how to execute."""

    EXACT = "exact"
    DYNAMICS = "dynamics"
    TRAPS = "traps"
    CLOCK = "clock"
    AGE = "age"
    LIMITS = "limits"
    ALL = "all"


@dataclass(frozen=True)
class ModelParams:
    """Parameters of the energy landscape and of the dynamics.

    ``a`` is the explicit a_N; when it is ``None`` the default
    ā·sqrt(2 log N) is used. ``a = 0`` selects random hopping times.
    """

    n: int
    beta: float
    cbar: float
    abar: float = 0.04
    a: float | None = None
    delta: float = 0.3
    seed: int = 0

    def __post_init__(self) -> None:
        if not isinstance(self.n, int) or not 1 <= self.n <= MAX_N:
            raise ConfigError(f"n must be an integer in [1, {MAX_N}], got {self.n!r}")
        if not self.beta > 0:
            raise ConfigError(f"beta must be positive, got {self.beta}")
        if not 0 < self.cbar < math.log(2):
            raise ConfigError(f"cbar must lie in (0, log 2), got {self.cbar}")
        if self.abar < 0:
            raise ConfigError(f"abar must be nonnegative, got {self.abar}")
        if self.a is not None and self.a < 0:
            raise ConfigError(f"a must be nonnegative, got {self.a}")
        if not self.delta > 0:
            raise ConfigError(f"delta must be positive, got {self.delta}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed}")

    @property
    def a_n(self) -> float:
        if self.a is not None:
            return float(self.a)
        return self.abar * math.sqrt(2.0 * math.log(self.n))

    @property
    def alpha(self) -> float:
        return math.sqrt(2.0 * self.cbar) / self.beta

    @property
    def sqrt_n_beta(self) -> float:
        """Conversion factor from energy to log-depth: log τ = β√N·E."""
        return self.beta * math.sqrt(self.n)

    @classmethod
    def for_alpha(cls, n: int, alpha: float, beta: float, **kwargs: Any) -> ModelParams:
        """Build parameters with c̄ chosen so that √(2c̄)/β equals ``alpha``."""
        return cls(n=n, beta=beta, cbar=(alpha * beta) ** 2 / 2.0, **kwargs)


def regime_warnings(params: ModelParams) -> list[str]:
    """Messages for each asymptotic assumption the parameters do not honor."""
    messages = []
    if params.alpha >= 1:
        messages.append(f"alpha = {params.alpha:.4f} >= 1: outside the aging regime")
    if params.a_n < 1:
        messages.append(f"a_N = {params.a_n:.4f} < 1: asymptotic regime a_N >= 1 not honored")
    if params.abar >= 1 / 20:
        messages.append(f"abar = {params.abar} >= 1/20: asymptotic regime abar < 1/20 not honored")
    return messages


@dataclass(frozen=True)
class Tolerances:
    """Every threshold used to turn a statistic into a verdict."""

    level: float = 0.01
    correlation_bound: float = 0.1
    lag_correlation_bound: float = 0.05
    dispersion_low: float = 0.7
    dispersion_high: float = 1.3
    green_low: float = 0.7
    green_high: float = 1.3
    hill_tolerance: float = 0.1
    ratio_low: float = 0.2
    ratio_high: float = 5.0
    slope_tolerance: float = 0.15
    psi_rtol: float = 0.02
    sst_tail_rtol: float = 0.05
    exact_rtol: float = 1e-9
    suite_pass_fraction: float = 0.95
    age_ks_level: float = 0.001


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one experiment.

    ``horizon_t`` is expressed in units of t_N. ``delta_grid`` drives the
    shallow-trap scans; ``n_grid`` the trend checks across system sizes.
    """

    model: ModelParams
    horizon_t: float = 1.0
    replicas: int = 20
    suite: Suite = Suite.ALL
    delta_grid: tuple[float, ...] = (0.5, 0.2, 0.1)
    n_grid: tuple[int, ...] = (16, 20, 24)
    output_dir: Path = Path("banda-output")
    workers: int = 1
    max_events: int = 50_000_000
    fresh_env_per_replica: bool = False
    use_d_estimate: bool = False
    green_samples: int = 16
    green_escape_radius: int | None = 6
    exact_n: int = 6
    exact_environments: int = 20
    limit_paths: int = 2_000
    limit_eps: float | None = None
    sst_runs: int = 100_000
    h2_runs: int = 10_000
    csv_replicas: int = 3
    bootstrap: int = 1_000
    tolerances: Tolerances = field(default_factory=Tolerances)

    def __post_init__(self) -> None:
        if not self.horizon_t > 0:
            raise ConfigError(f"horizon_t must be positive, got {self.horizon_t}")
        if self.replicas < 1:
            raise ConfigError(f"replicas must be at least 1, got {self.replicas}")
        if self.workers < 1:
            raise ConfigError(f"workers must be at least 1, got {self.workers}")
        if self.max_events < 1:
            raise ConfigError(f"max_events must be positive, got {self.max_events}")
        if any(not d > 0 for d in self.delta_grid):
            raise ConfigError(f"delta_grid entries must be positive, got {self.delta_grid}")
        if any(not 1 <= n <= MAX_N for n in self.n_grid):
            raise ConfigError(f"n_grid entries must lie in [1, {MAX_N}], got {self.n_grid}")
        if self.green_samples < 1:
            raise ConfigError(f"green_samples must be at least 1, got {self.green_samples}")
        if self.green_escape_radius is not None and self.green_escape_radius < 2:
            raise ConfigError(
                f"green_escape_radius must be at least 2 or null, got {self.green_escape_radius}"
            )
        if not 2 <= self.exact_n <= 10:
            raise ConfigError(f"exact_n must lie in [2, 10], got {self.exact_n}")
        for name in ("sst_runs", "h2_runs", "limit_paths", "exact_environments"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1, got {getattr(self, name)}")
        if self.csv_replicas < 0:
            raise ConfigError(f"csv_replicas must be nonnegative, got {self.csv_replicas}")
        if self.limit_eps is not None and not self.limit_eps > 0:
            raise ConfigError(f"limit_eps must be positive or null, got {self.limit_eps}")

    def with_model(self, **changes: Any) -> ExperimentConfig:
        return replace(self, model=replace(self.model, **changes))


def _build(cls: type, data: Mapping[str, Any], where: str) -> dict[str, Any]:
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")
    return dict(data)


def config_from_dict(data: Mapping[str, Any]) -> ExperimentConfig:
    """Validate a parsed JSON mapping and build an ``ExperimentConfig``."""
    if not isinstance(data, Mapping):
        raise ConfigError("configuration must be a JSON object")
    values = _build(ExperimentConfig, data, "config")
    if "model" not in values:
        raise ConfigError("configuration is missing the 'model' section")
    try:
        values["model"] = ModelParams(**_build(ModelParams, values["model"], "model"))
        if "tolerances" in values:
            values["tolerances"] = Tolerances(**_build(Tolerances, values["tolerances"], "tolerances"))
        if "suite" in values:
            values["suite"] = Suite(values["suite"])
        if "output_dir" in values:
            values["output_dir"] = Path(values["output_dir"])
        for key in ("delta_grid", "n_grid"):
            if key in values:
                values[key] = tuple(values[key])
        return ExperimentConfig(**values)
    except (TypeError, ValueError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"invalid configuration: {e}") from e


def config_to_dict(config: ExperimentConfig) -> dict[str, Any]:
    data = asdict(config)
    data["suite"] = config.suite.value
    data["output_dir"] = config.output_dir.as_posix()
    data["delta_grid"] = list(config.delta_grid)
    data["n_grid"] = list(config.n_grid)
    return data


def dump_config(config: ExperimentConfig) -> str:
    """Canonical JSON text: sorted keys, fixed separators."""
    return json.dumps(config_to_dict(config), sort_keys=True, indent=2)


def load_config(path: Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read configuration file '{path}': {e}") from e
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"configuration file '{path}' is not valid JSON: {e}") from e
    return config_from_dict(data)


def config_hash(config: ExperimentConfig) -> str:
    canonical = json.dumps(config_to_dict(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
