"""Channel estimation for uplinks assisted by two cascaded BD-RIS surfaces.

Submodules
----------
numkit
    complex linear algebra helpers
scenario
    configuration, channel synthesis, canonical factors
schedule
    pilot and scattering-matrix plans, rank design, overhead counts
estimator
    five-phase estimator and the unstructured least-squares benchmark
bench
    Monte-Carlo sweeps, CSV output and the command line
"""

from .metrics import nmse
from .numkit import SingularSystemError
from .scenario import SystemConfig, canonical_factors, cascaded_channels, generate_channels, reconstruct

__all__ = [
    "SingularSystemError",
    "SystemConfig",
    "canonical_factors",
    "cascaded_channels",
    "generate_channels",
    "nmse",
    "reconstruct",
]
__version__ = "0.1.0"
