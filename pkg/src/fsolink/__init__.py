"""fsolink: desk-scale simulator of a quantum-correlation free-space optical link.

Subsystems: turbulence (beam wander, drift, scintillation), plant (optics,
PSD, FSM, hexapod, fiber coupling), control (PID fine tier + coarse
aligner), netlink (wireless bridge protocol), photonics (SPDC source,
losses, detectors), correlation (coincidences and g2), harness (scenarios,
end-to-end runs, persistence).
"""

from . import control, correlation, harness, netlink, photonics, plant, streams, turbulence
from .errors import (
    ConfigError,
    DegenerateReadingError,
    FitError,
    FsoLinkError,
    PhaseMatchError,
)

__version__ = "0.1.0"
