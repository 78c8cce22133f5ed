"""swarmgrad: collective motion from per-agent sensorimotor gradients.

Agents perceive neighbors only through bearing and apparent-size cues
inside a limited field of view, track each neighbor with a recursive
Gaussian filter, and choose actions by gradient descent on the expected
deviation of the believed inter-agent distance from a desired social
distance. The package bundles the simulator, the behavioral metrics used
to characterize emergent regimes, and a Sobol sensitivity pipeline over
the sensorimotor parameter space.
"""

__version__ = "0.1.0"

from .config import ConfigError, SimParams, parse_config
from .simulate import RunRecord, run_simulation, simulate

__all__ = [
    "__version__",
    "ConfigError",
    "SimParams",
    "parse_config",
    "RunRecord",
    "run_simulation",
    "simulate",
]
