"""spinphonon: driven spin-phonon cavity simulator.

Simulates N laser-driven four-level defects coupled to one truncated phonon
mode: Lindblad master-equation dynamics, Raman-facilitated spin-phonon
swaps, STIRAP pulse design with engineered geometric phases (controlled-Z
gate), process tomography and collective Dicke-state preparation.
"""

__version__ = "0.1.0"

from .algebra import HilbertLayout
from .dynamics import HamiltonianModel, IntegratorConfig, TrajectoryResult
from .models import DecoherenceSpec, DefectSpec, DriveSpec, SystemSpec

__all__ = [
    "HilbertLayout",
    "HamiltonianModel",
    "IntegratorConfig",
    "TrajectoryResult",
    "DecoherenceSpec",
    "DefectSpec",
    "DriveSpec",
    "SystemSpec",
    "__version__",
]
