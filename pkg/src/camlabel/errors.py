"""Exception types shared across the package."""


class CamlabelError(Exception):
    """Base class for all package errors."""


class ConfigError(CamlabelError, ValueError):
    """Malformed or inconsistent configuration (topology, models, flags)."""


class DataError(CamlabelError, ValueError):
    """Malformed trace, model file, or event log."""


class InsufficientDataError(DataError):
    """Not enough training samples to fit a model."""


class UntrainedPairError(DataError):
    """No training pairs exist for a camera pair."""


class DegeneratePosteriorError(CamlabelError, ArithmeticError):
    """Every hypothesis received zero weight."""


class ProtocolError(CamlabelError, RuntimeError):
    """A message violated the neighborhood contract."""
