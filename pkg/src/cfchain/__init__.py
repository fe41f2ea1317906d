"""Link-level simulator of uplink user-signal estimation in a cell-free
network whose access points form a daisy chain, under dithered uniform
fronthaul quantization."""

__version__ = "0.1.0"

from .config import ConfigError, ExperimentPlan, NetworkConfig, Option
from .harness import Role, SweepResult, run_experiment, seed_stream

__all__ = [
    "ConfigError",
    "ExperimentPlan",
    "NetworkConfig",
    "Option",
    "Role",
    "SweepResult",
    "run_experiment",
    "seed_stream",
    "__version__",
]
