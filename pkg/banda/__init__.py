"""Banda - aging of Bouchaud dynamics on the random energy model.

Simulates the accelerated walk and its clock on {0,1}^N, detects deep traps,
checks exact small-N identities, samples the limit processes and compares
everything with the predicted limit laws.
"""

from banda.config import ExperimentConfig, ModelParams, Suite, load_config
from banda.env import EnergyField
from banda.scales import ScaleSet, compute_scales
from banda.walk import run_x

__version__ = "0.1.0"
__all__ = [
    "EnergyField",
    "ExperimentConfig",
    "ModelParams",
    "ScaleSet",
    "Suite",
    "compute_scales",
    "load_config",
    "run_x",
    "__version__",
]
