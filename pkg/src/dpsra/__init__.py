"""Two-phase grant-free random access simulator for dense machine-type
cells: layered grouping, dynamic preamble-length planning, posterior-mean
AMP detection, and the state-evolution analysis behind the length bounds."""

from .config import ScenarioConfig, load_config

__all__ = ["ScenarioConfig", "load_config"]
__version__ = "0.1.0"
