"""Exception taxonomy shared across the package."""


class SCKDError(Exception):
    """Base class for all package errors."""


class ValidationError(SCKDError):
    """A spec/config object violates one of its invariants."""


class ContractViolation(SCKDError):
    """An operation was called with arguments outside its contract
    (shape mismatch, out-of-range step, negative loss component, ...)."""


class FrameFormatError(SCKDError):
    """A frame or manifest file is malformed.  Messages name the byte
    offset and field where parsing failed."""


class ConfigurationError(SCKDError):
    """A run was requested with missing or inconsistent inputs
    (empty split, absent checkpoint, mismatched grids)."""
