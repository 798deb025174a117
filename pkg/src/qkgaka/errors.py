"""Exception hierarchy shared by every simulation module."""


class QkgError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(QkgError, ValueError):
    """A configuration value is out of range or malformed."""


class ProtocolError(QkgError):
    """Two protocol parties disagree about the structure of an exchange."""


class EstimationError(QkgError):
    """A statistic was requested from an empty sample."""


class GridUnderflowError(QkgError):
    """Not enough key material to fill a QK-GRID."""

    def __init__(self, required: int, provided: int):
        super().__init__(
            f"QK-GRID needs {required} key bits but only {provided} were provided"
        )
        self.required = required
        self.provided = provided


class KeyEstablishmentError(QkgError):
    """Quantum key exchange kept aborting past the retry budget."""


class StateError(QkgError):
    """An object was used before it reached the required state."""


class KeyConfinementError(QkgError):
    """An entity tried to hold a key outside its role's row of the hierarchy."""


class DomainError(QkgError, ValueError):
    """A numerical routine was called outside its mathematical domain."""


class NumericalError(QkgError, ArithmeticError):
    """A numerical routine failed to converge."""


class FormatError(QkgError):
    """A serialized artifact has the wrong magic, version or length."""
