"""Shared exception types."""


class InvldmError(Exception):
    """Base class for all library errors."""


class DimensionError(InvldmError, ValueError):
    """Operand shapes are incompatible."""


class NonHermitianError(InvldmError, ValueError):
    """Input claimed Hermitian deviates beyond the construction tolerance."""


class SingularPivotError(InvldmError, ArithmeticError):
    """A pivot / Schur complement is numerically singular."""


class AuditRegionError(InvldmError, RuntimeError):
    """Misuse of audited regions (e.g. opening a region inside another)."""
