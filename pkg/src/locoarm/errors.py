"""Exception types shared across the package."""


class LocoArmError(Exception):
    """Base class for all package errors."""


class DegenerateRotation(LocoArmError):
    """Rotation matrix entries needed for angle extraction are numerically zero."""


class ParseError(LocoArmError):
    """A descriptor or config file could not be parsed."""


class ValidationError(LocoArmError):
    """A loaded structure violates one of its invariants."""


class ConfigError(LocoArmError):
    """A required config entry is missing or malformed."""


class ShapeMismatch(LocoArmError):
    """An array argument has the wrong shape for the network it feeds."""


class InterfaceMismatch(LocoArmError):
    """Two checkpoints cannot be composed; message names the offending field."""


class VersionError(LocoArmError):
    """Checkpoint format version is not supported."""


class CorruptFile(LocoArmError):
    """Checkpoint payload does not match its checksum."""


class NumericalDivergence(LocoArmError):
    """Simulator state exceeded sanity bounds; usually a config problem."""


class NonFiniteLoss(LocoArmError):
    """A training loss became NaN or infinite."""


class MissingCheckpoint(LocoArmError):
    """An expected checkpoint file is absent from the run directory."""


class DegenerateInput(LocoArmError):
    """Input set is too small or too flat for the requested computation."""
