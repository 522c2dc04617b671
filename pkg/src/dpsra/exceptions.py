"""Error types shared across the package."""


class ConfigError(ValueError):
    """Invalid or unknown scenario configuration."""


class RingInfeasibleError(ConfigError):
    """A cluster ring cannot host the requested group structure."""

    def __init__(self, ring_index: int, message: str):
        self.ring_index = ring_index
        super().__init__(f"ring {ring_index}: {message}")


class AmpDivergenceError(RuntimeError):
    """AMP produced non-finite values; carries the offending iteration."""

    def __init__(self, iteration: int):
        self.iteration = iteration
        super().__init__(f"AMP diverged (non-finite state) at iteration {iteration}")


class CalibrationError(RuntimeError):
    """Threshold calibration could not bracket a pF = pM crossing."""


class SolverError(RuntimeError):
    """Target-solution search failed; message carries bracket diagnostics."""
