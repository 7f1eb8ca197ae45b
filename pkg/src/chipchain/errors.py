"""Error taxonomy shared by the ledger, reputation engine, simulator, and harness.

Every failure mode surfaced by the public API maps to exactly one of these
classes so callers (and the CLI) can branch on kind rather than message text.
"""


class ChipchainError(Exception):
    """Base class for all package errors."""


class PermissionDenied(ChipchainError):
    """Caller's role does not permit the operation."""


class NotOwner(ChipchainError):
    """Caller does not currently own one of the referenced parts."""


class AlreadyExists(ChipchainError):
    """Identifier collision: entity, type, device, or chain already registered."""


class NotFound(ChipchainError):
    """Referenced entity, part, type, transaction, or report does not exist."""


class Conflict(ChipchainError):
    """Operation clashes with current part or report state (e.g. already in transit)."""


class CountMismatch(ChipchainError):
    """Declared count does not match the number of ids or prices supplied."""


class InvalidArgument(ChipchainError):
    """Argument is malformed or violates a structural precondition."""


class InvalidState(ChipchainError):
    """Operation is valid in general but not for the object's current state."""


class UnknownCurrency(ChipchainError):
    """Currency code missing from the exchange table."""


class InvalidConfig(ChipchainError):
    """Simulation or experiment configuration fails validation."""
