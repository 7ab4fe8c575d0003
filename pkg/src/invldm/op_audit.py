"""Arithmetic-operation auditing.

Numeric kernels in this library route their scalar arithmetic through an
:class:`AuditContext` so that every complex multiply, add/subtract, division
and square root executed inside an audited region is tallied.  A disabled
context performs the exact same arithmetic and only skips the tally, so
audited and unaudited runs are bit-identical.

Counting convention (fixed for the whole library):

* ``cmul`` / ``cadd`` tally complex multiplications and complex
  additions/subtractions, i.e. operations where both operands are treated as
  complex.  Pure real-scalar bookkeeping (real denominators, real diagonal
  weights) and real-by-complex scalings are quarter/half-cost real flops and
  are kept out of the complex-op ledger.
* ``cdiv`` and ``csqrt`` tally *every* division and square root, whatever the
  operand types.  Division/square-root freedom claims are absolute.
* Multiplication by an exact power of two (:meth:`AuditContext.shift`) costs
  nothing: it models a binary shift.
* Comparison, negation and conjugation are never counted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .exceptions import AuditRegionError

__all__ = [
    "OpCounts",
    "AuditContext",
    "RAW",
    "audited_region",
    "assert_free_of",
    "counted_matvec",
]


@dataclass(frozen=True)
class OpCounts:
    """Tallies of complex multiplies, adds, divisions and square roots."""

    cmul: int = 0
    cadd: int = 0
    cdiv: int = 0
    csqrt: int = 0

    def __add__(self, other: "OpCounts") -> "OpCounts":
        return OpCounts(
            self.cmul + other.cmul,
            self.cadd + other.cadd,
            self.cdiv + other.cdiv,
            self.csqrt + other.csqrt,
        )

    def __sub__(self, other: "OpCounts") -> "OpCounts":
        return OpCounts(
            self.cmul - other.cmul,
            self.cadd - other.cadd,
            self.cdiv - other.cdiv,
            self.csqrt - other.csqrt,
        )

    def csv_fields(self) -> tuple:
        return (self.cmul, self.cadd, self.cdiv, self.csqrt)

    CSV_HEADER = ("cmul", "cadd", "cdiv", "csqrt")


class AuditContext:
    """Per-execution-stream tally of scalar arithmetic.

    Contexts must not be shared across concurrently running computations;
    give each stream its own context and merge the resulting
    :class:`OpCounts` by addition afterwards.
    """

    __slots__ = ("enabled", "cmul", "cadd", "cdiv", "csqrt", "_region_open")

    def __init__(self, enabled: bool = True):
        self.enabled = enabled
        self.cmul = 0
        self.cadd = 0
        self.cdiv = 0
        self.csqrt = 0
        self._region_open = False

    # -- scalar interface ---------------------------------------------------

    def mul(self, a, b):
        if self.enabled:
            self.cmul += 1
        return a * b

    def add(self, a, b):
        if self.enabled:
            self.cadd += 1
        return a + b

    def sub(self, a, b):
        if self.enabled:
            self.cadd += 1
        return a - b

    def div(self, a, b):
        if self.enabled:
            self.cdiv += 1
        return a / b

    def sqrt(self, a):
        if self.enabled:
            self.csqrt += 1
        if isinstance(a, complex) or getattr(a, "imag", 0) != 0:
            # complex square root without importing cmath at call sites
            return complex(a) ** 0.5
        return math.sqrt(a.real if hasattr(a, "real") else a)

    def shift(self, a, factor):
        """Multiply by an exact power of two.  Free (a binary shift)."""
        mantissa, _ = math.frexp(abs(factor))
        if mantissa != 0.5:
            raise ValueError(f"shift factor {factor!r} is not a power of two")
        return a * factor

    # -- bookkeeping ----------------------------------------------------------

    def snapshot(self) -> OpCounts:
        return OpCounts(self.cmul, self.cadd, self.cdiv, self.csqrt)

    def reset(self) -> None:
        self.cmul = self.cadd = self.cdiv = self.csqrt = 0


#: Shared disabled context used as the default for every kernel.
RAW = AuditContext(enabled=False)


def audited_region(ctx: AuditContext, computation):
    """Run ``computation()`` and return ``(result, OpCounts)`` for the region.

    The context must not already be inside an open region on this execution
    stream; nesting raises :class:`AuditRegionError`.  The numeric result is
    bit-identical to running the computation unaudited.
    """
    if ctx._region_open:
        raise AuditRegionError("audited region already open on this context")
    ctx._region_open = True
    before = ctx.snapshot()
    try:
        result = computation()
    finally:
        ctx._region_open = False
    return result, ctx.snapshot() - before


def assert_free_of(counts: OpCounts, kinds) -> bool:
    """True iff every named kind in ``kinds`` (subset of {'div','sqrt'}) is zero."""
    lookup = {"div": counts.cdiv, "sqrt": counts.csqrt}
    for kind in kinds:
        if kind not in lookup:
            raise ValueError(f"unknown op kind {kind!r}")
        if lookup[kind] != 0:
            return False
    return True


def counted_matvec(ctx: AuditContext, a, x):
    """Dense audited matrix-vector product: n*m multiplies, n*(m-1) adds."""
    n = len(a)
    out = []
    for i in range(n):
        row = a[i]
        acc = ctx.mul(row[0], x[0])
        for j in range(1, len(row)):
            acc = ctx.add(acc, ctx.mul(row[j], x[j]))
        out.append(acc)
    return out
