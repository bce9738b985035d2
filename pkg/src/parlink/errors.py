"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration; message names the offending field."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class InfeasibleParameterError(ConfigError):
    """Parameter combination has no valid model (e.g. on/off pair with escape probability > 1)."""


class ModelMismatchError(ValueError):
    """Operation applied to the wrong link family."""


class CapacityError(RuntimeError):
    """State space exceeds the configured safety limit."""


class ConvergenceError(RuntimeError):
    """Iterative computation failed to reach tolerance; carries the last residual."""

    def __init__(self, message, residual):
        self.residual = residual
        super().__init__(f"{message} (residual {residual:.3e})")


class ContractError(ValueError):
    """Inputs violate an operation's contract (e.g. policy does not match the config)."""
