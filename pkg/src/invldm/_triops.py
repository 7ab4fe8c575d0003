"""Audited triangular micro-kernels shared by the factorization modules.

All loops index ndarrays of complex128 and route complex-by-complex
arithmetic through the audit context.  Structural zeros of triangular
operands are never touched.
"""

from __future__ import annotations

import numpy as np

from .op_audit import AuditContext

__all__ = [
    "upper_matvec",
    "upper_h_matvec",
    "lower_matvec",
    "dot_conj",
    "scale_vec",
    "sandwich_product",
]


def upper_matvec(ctx: AuditContext, u: np.ndarray, x: np.ndarray) -> np.ndarray:
    """y = U x for upper-triangular U (diagonal included)."""
    n = u.shape[0]
    y = np.zeros(n, dtype=u.dtype)
    for i in range(n):
        acc = ctx.mul(u[i, i], x[i])
        for j in range(i + 1, n):
            acc = ctx.add(acc, ctx.mul(u[i, j], x[j]))
        y[i] = acc
    return y


def upper_h_matvec(ctx: AuditContext, u: np.ndarray, x: np.ndarray) -> np.ndarray:
    """y = U^H x for upper-triangular U (U^H is lower-triangular)."""
    n = u.shape[0]
    y = np.zeros(n, dtype=u.dtype)
    for j in range(n):
        acc = ctx.mul(u[0, j].conjugate(), x[0])
        for i in range(1, j + 1):
            acc = ctx.add(acc, ctx.mul(u[i, j].conjugate(), x[i]))
        y[j] = acc
    return y


def lower_matvec(ctx: AuditContext, lo: np.ndarray, x: np.ndarray) -> np.ndarray:
    """y = L x for lower-triangular L (diagonal included)."""
    n = lo.shape[0]
    y = np.zeros(n, dtype=lo.dtype)
    for i in range(n):
        acc = ctx.mul(lo[i, 0], x[0])
        for j in range(1, i + 1):
            acc = ctx.add(acc, ctx.mul(lo[i, j], x[j]))
        y[i] = acc
    return y


def dot_conj(ctx: AuditContext, x: np.ndarray, y: np.ndarray):
    """x^H y."""
    acc = ctx.mul(x[0].conjugate(), y[0])
    for i in range(1, len(x)):
        acc = ctx.add(acc, ctx.mul(x[i].conjugate(), y[i]))
    return acc


def scale_vec(ctx: AuditContext, d: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Elementwise d * x, counted as complex multiplies."""
    out = np.zeros(len(x), dtype=x.dtype)
    for i in range(len(x)):
        out[i] = ctx.mul(d[i], x[i])
    return out


def sandwich_product(
    ctx: AuditContext,
    left: np.ndarray,
    diag: np.ndarray,
    right: np.ndarray,
    hermitian: bool,
    diag_is_real: bool = False,
) -> np.ndarray:
    """Q = left * diag * right^H for upper-triangular left/right.

    Entry (i, j) only involves columns l >= max(i, j).  When ``hermitian``
    only the upper triangle is computed; the lower one is mirrored by
    conjugation.  A real ``diag`` is folded in as an uncounted scaling,
    otherwise the scaling is a complex multiply.
    """
    n = left.shape[0]
    if diag_is_real:
        scaled = left * diag[np.newaxis, :]  # real-by-complex, not tallied
    else:
        scaled = np.zeros_like(left)
        for i in range(n):
            for l in range(i, n):
                scaled[i, l] = ctx.mul(left[i, l], diag[l])
    q = np.zeros((n, n), dtype=left.dtype)
    for i in range(n):
        j_start = i if hermitian else 0
        for j in range(j_start, n):
            lo = max(i, j)
            acc = ctx.mul(scaled[i, lo], right[j, lo].conjugate())
            for l in range(lo + 1, n):
                acc = ctx.add(acc, ctx.mul(scaled[i, l], right[j, l].conjugate()))
            q[i, j] = acc
            if hermitian and j > i:
                q[j, i] = acc.conjugate()
    return q
