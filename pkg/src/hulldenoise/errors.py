"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class DenoiseError(Exception):
    exit_code = 3


class ConfigError(DenoiseError, ValueError):
    exit_code = 2


class StageError(DenoiseError):
    """Failure inside a named pipeline stage."""

    exit_code = 3

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


class ResourceCapError(DenoiseError):
    exit_code = 4


class NetTooLargeError(ResourceCapError):
    pass


class InfeasibleSampleDemand(ResourceCapError):
    def __init__(self, message: str, demand: float, log_demand: float | None = None):
        super().__init__(message)
        self.demand = demand
        self.log_demand = log_demand


class NoOracleSamples(DenoiseError, ValueError):
    pass


class OracleSaturated(DenoiseError):
    pass


class OracleFailure(DenoiseError):
    """The nearest-point iteration did not converge."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


class OutputLocked(DenoiseError):
    """Another run holds the lock on the output directory."""
