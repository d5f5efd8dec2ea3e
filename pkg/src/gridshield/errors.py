"""Exception hierarchy shared by all gridshield modules."""


class GridshieldError(Exception):
    """Base class for all package errors."""


class ValidationError(GridshieldError):
    """A configuration value violates a documented invariant."""


class ParseError(GridshieldError):
    """A scenario file is malformed (unknown key, bad type, empty file)."""


class ConfigInvalid(ValidationError):
    """Dispatch configuration cannot produce a well-formed program."""


class SpeedNearZero(GridshieldError):
    """Electrical torque is undefined near zero electrical speed."""


class GainTooSmall(GridshieldError):
    """Switching gain does not dominate the disturbance bound."""


class SocOutOfRange(GridshieldError):
    """Battery state of charge left the physical [0, 1] interval."""


class DcVoltageCollapse(GridshieldError):
    """DC-link voltage fell below the minimum operating level."""


class BusVoltageCollapse(GridshieldError):
    """AC bus voltage is too low to convert power setpoints to currents."""


class NumericalDivergence(GridshieldError):
    """A simulated state exceeded the divergence guard."""


class InfeasibleDemand(GridshieldError):
    """Requested demand lies outside the aggregate source capability."""


class EmptyWindow(GridshieldError):
    """A metrics window contains no log samples."""
