"""Inverse LDM^H and inverse LU factorizations of a bordered matrix.

These factor the *inverse*: the produced triangles satisfy
``L @ diag(d) @ M^H == inv(R)`` (respectively ``L @ U == inv(R)``) without
ever forming ``inv(R)`` densely.  Factors of order ``k`` extend to order
``k + i`` in one bordering step, where the border is the 2x2 block split
``[[R_k, V], [Y^H, T]]``.

Naming note: the "LU" factors keep the historical name although the
shapes are swapped relative to a textbook LU of ``R`` itself -- here ``L``
is unit *upper*-triangular and ``U`` *lower*-triangular, so that their
product is the inverse.

This is the division-using reference; the division-free variant lives in
:mod:`invldm.inv_ldm_divfree` and is validated against this module.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _triops as tri
from .exceptions import DimensionError, SingularPivotError
from .matrix_core import COMPLEX_DTYPE, as_array
from .op_audit import RAW, AuditContext

__all__ = [
    "InvLdmFactors",
    "InvLuFactors",
    "inv_ldm_base",
    "inv_ldm_extend",
    "inv_ldm_factorize",
    "inv_lu_base",
    "inv_lu_extend",
    "inv_lu_factorize",
    "assemble_inverse",
]

#: |pivot| <= PIVOT_RTOL * max(1, norm) flags a singular Schur complement.
PIVOT_RTOL = 1e-13


@dataclass(frozen=True)
class InvLdmFactors:
    """Unit upper-triangular L, M and diagonal d with L diag(d) M^H = inv(R)."""

    L: np.ndarray
    d: np.ndarray
    M: np.ndarray
    order: int


@dataclass(frozen=True)
class InvLuFactors:
    """Unit upper-triangular L and lower-triangular U with L U = inv(R)."""

    L: np.ndarray
    U: np.ndarray
    order: int


def _pivot_threshold(scale: float) -> float:
    return PIVOT_RTOL * max(1.0, scale)


def _check_schedule(schedule, order: int):
    if schedule is None:
        return (1,) * order
    schedule = tuple(int(s) for s in schedule)
    if not schedule or schedule[0] != 1:
        raise ValueError("extension schedule must start with the order-1 seed")
    if any(s < 1 for s in schedule) or sum(schedule) != order:
        raise ValueError(f"schedule {schedule} does not sum to order {order}")
    return schedule


# -- inverse LDM^H ---------------------------------------------------------


def inv_ldm_base(r11, ctx: AuditContext = RAW) -> InvLdmFactors:
    """Order-1 seed: L = M = [1], d = [1/r11].  The one division per seed."""
    r11 = complex(r11)
    if abs(r11) <= _pivot_threshold(abs(r11)):
        raise SingularPivotError("order-1 pivot is zero")
    one = np.ones((1, 1), dtype=COMPLEX_DTYPE)
    d = np.array([ctx.div(1.0 + 0.0j, r11)], dtype=COMPLEX_DTYPE)
    return InvLdmFactors(L=one, d=d, M=one.copy(), order=1)


def _product_columns(ctx, f: InvLdmFactors, v_block: np.ndarray) -> np.ndarray:
    """C = (L diag(d) M^H) V, one triangular pass per column."""
    k, i = v_block.shape
    c = np.zeros((k, i), dtype=COMPLEX_DTYPE)
    for col in range(i):
        w = tri.upper_h_matvec(ctx, f.M, v_block[:, col])
        u = tri.scale_vec(ctx, f.d, w)
        c[:, col] = tri.upper_matvec(ctx, f.L, u)
    return c


def _product_rows(ctx, f: InvLdmFactors, y_h: np.ndarray) -> np.ndarray:
    """B_h = Y^H (L diag(d) M^H), one triangular pass per row."""
    i, k = y_h.shape
    out = np.zeros((i, k), dtype=COMPLEX_DTYPE)
    for row in range(i):
        y = y_h[row, :].conjugate()
        a = tri.upper_h_matvec(ctx, f.L, y)
        u = tri.scale_vec(ctx, f.d.conjugate(), a)
        out[row, :] = tri.upper_matvec(ctx, f.M, u).conjugate()
    return out


def inv_ldm_extend(
    f: InvLdmFactors, v_block, y_h, t_block, ctx: AuditContext = RAW
) -> InvLdmFactors:
    """Extend order-k factors to order k+i across the border (V, Y^H, T)."""
    v_block = np.atleast_2d(as_array(v_block))
    y_h = np.atleast_2d(as_array(y_h))
    t_block = np.atleast_2d(as_array(t_block))
    k, i = f.order, t_block.shape[0]
    if v_block.shape != (k, i) or y_h.shape != (i, k) or t_block.shape != (i, i):
        raise DimensionError(
            f"border shapes {v_block.shape}/{y_h.shape}/{t_block.shape} "
            f"inconsistent with k={k}"
        )

    c = _product_columns(ctx, f, v_block)
    b_h = _product_rows(ctx, f, y_h)

    # Schur complement of the leading block: S = T - Y^H (L d M^H) V
    s = np.zeros((i, i), dtype=COMPLEX_DTYPE)
    for r in range(i):
        for cc in range(i):
            acc = ctx.mul(y_h[r, 0], c[0, cc])
            for m in range(1, k):
                acc = ctx.add(acc, ctx.mul(y_h[r, m], c[m, cc]))
            s[r, cc] = ctx.sub(t_block[r, cc], acc)

    inner = _factorize_array(s, (1,) * i, ctx)

    # A = -C F  and  B = -B_h^H E, exploiting the unit diagonals of F and E.
    a = np.zeros((k, i), dtype=COMPLEX_DTYPE)
    b = np.zeros((k, i), dtype=COMPLEX_DTYPE)
    for cc in range(i):
        for r in range(k):
            acc = c[r, cc]
            for m in range(cc):
                acc = ctx.add(acc, ctx.mul(c[r, m], inner.L[m, cc]))
            a[r, cc] = -acc
            acc = b_h[cc, r].conjugate()
            for m in range(cc):
                acc = ctx.add(acc, ctx.mul(b_h[m, r].conjugate(), inner.M[m, cc]))
            b[r, cc] = -acc

    n = k + i
    big_l = np.zeros((n, n), dtype=COMPLEX_DTYPE)
    big_m = np.zeros((n, n), dtype=COMPLEX_DTYPE)
    big_l[:k, :k] = f.L
    big_l[:k, k:] = a
    big_l[k:, k:] = inner.L
    big_m[:k, :k] = f.M
    big_m[:k, k:] = b
    big_m[k:, k:] = inner.M
    return InvLdmFactors(
        L=big_l, d=np.concatenate([f.d, inner.d]), M=big_m, order=n
    )


def _factorize_array(r: np.ndarray, schedule, ctx: AuditContext) -> InvLdmFactors:
    n = r.shape[0]
    thr = _pivot_threshold(np.abs(r).max(initial=0.0))
    if abs(r[0, 0]) <= thr:
        raise SingularPivotError("leading pivot below threshold")
    f = inv_ldm_base(r[0, 0], ctx)
    k = 1
    for i in schedule[1:]:
        f = inv_ldm_extend(f, r[:k, k : k + i], r[k : k + i, :k], r[k : k + i, k : k + i], ctx)
        k += i
    return f


def inv_ldm_factorize(r, schedule=None, ctx: AuditContext = RAW) -> InvLdmFactors:
    """Factorize inv(R) as L diag(d) M^H along an extension schedule.

    The schedule lists block sizes (first entry the order-1 seed); the
    result is schedule-independent up to roundoff.
    """
    arr = as_array(r)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise DimensionError(f"square matrix required, got {arr.shape}")
    schedule = _check_schedule(schedule, arr.shape[0])
    return _factorize_array(arr, schedule, ctx)


# -- inverse LU --------------------------------------------------------------


def inv_lu_base(r11, ctx: AuditContext = RAW) -> InvLuFactors:
    r11 = complex(r11)
    if abs(r11) <= _pivot_threshold(abs(r11)):
        raise SingularPivotError("order-1 pivot is zero")
    one = np.ones((1, 1), dtype=COMPLEX_DTYPE)
    u = np.array([[ctx.div(1.0 + 0.0j, r11)]], dtype=COMPLEX_DTYPE)
    return InvLuFactors(L=one, U=u, order=1)


def inv_lu_extend(
    f: InvLuFactors, v_block, y_h, t_block, ctx: AuditContext = RAW
) -> InvLuFactors:
    """Extend inverse-LU factors across the border (V, Y^H, T)."""
    v_block = np.atleast_2d(as_array(v_block))
    y_h = np.atleast_2d(as_array(y_h))
    t_block = np.atleast_2d(as_array(t_block))
    k, i = f.order, t_block.shape[0]
    if v_block.shape != (k, i) or y_h.shape != (i, k) or t_block.shape != (i, i):
        raise DimensionError("border shapes inconsistent with current order")

    # C = (L U) V
    c = np.zeros((k, i), dtype=COMPLEX_DTYPE)
    for col in range(i):
        w = tri.lower_matvec(ctx, f.U, v_block[:, col])
        c[:, col] = tri.upper_matvec(ctx, f.L, w)

    # W = Y^H (L U), unit diagonal of L skipped
    z = np.zeros((i, k), dtype=COMPLEX_DTYPE)
    for r in range(i):
        for j in range(k):
            acc = y_h[r, j]
            for m in range(j):
                acc = ctx.add(acc, ctx.mul(y_h[r, m], f.L[m, j]))
            z[r, j] = acc
    w_blk = np.zeros((i, k), dtype=COMPLEX_DTYPE)
    for r in range(i):
        for j in range(k):
            acc = ctx.mul(z[r, j], f.U[j, j])
            for m in range(j + 1, k):
                acc = ctx.add(acc, ctx.mul(z[r, m], f.U[m, j]))
            w_blk[r, j] = acc

    s = np.zeros((i, i), dtype=COMPLEX_DTYPE)
    for r in range(i):
        for cc in range(i):
            acc = ctx.mul(y_h[r, 0], c[0, cc])
            for m in range(1, k):
                acc = ctx.add(acc, ctx.mul(y_h[r, m], c[m, cc]))
            s[r, cc] = ctx.sub(t_block[r, cc], acc)

    inner = _lu_factorize_array(s, ctx)

    top_right = np.zeros((k, i), dtype=COMPLEX_DTYPE)
    for cc in range(i):
        for r in range(k):
            acc = c[r, cc]
            for m in range(cc):
                acc = ctx.add(acc, ctx.mul(c[r, m], inner.L[m, cc]))
            top_right[r, cc] = -acc

    bottom_left = np.zeros((i, k), dtype=COMPLEX_DTYPE)
    for r in range(i):
        for j in range(k):
            acc = ctx.mul(inner.U[r, 0], w_blk[0, j])
            for m in range(1, r + 1):
                acc = ctx.add(acc, ctx.mul(inner.U[r, m], w_blk[m, j]))
            bottom_left[r, j] = -acc

    n = k + i
    big_l = np.zeros((n, n), dtype=COMPLEX_DTYPE)
    big_u = np.zeros((n, n), dtype=COMPLEX_DTYPE)
    big_l[:k, :k] = f.L
    big_l[:k, k:] = top_right
    big_l[k:, k:] = inner.L
    big_u[:k, :k] = f.U
    big_u[k:, :k] = bottom_left
    big_u[k:, k:] = inner.U
    return InvLuFactors(L=big_l, U=big_u, order=n)


def _lu_factorize_array(r: np.ndarray, ctx: AuditContext) -> InvLuFactors:
    n = r.shape[0]
    thr = _pivot_threshold(np.abs(r).max(initial=0.0))
    if abs(r[0, 0]) <= thr:
        raise SingularPivotError("leading pivot below threshold")
    f = inv_lu_base(r[0, 0], ctx)
    for k in range(1, n):
        f = inv_lu_extend(f, r[:k, k : k + 1], r[k : k + 1, :k], r[k : k + 1, k : k + 1], ctx)
    return f


def inv_lu_factorize(r, schedule=None, ctx: AuditContext = RAW) -> InvLuFactors:
    arr = as_array(r)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise DimensionError(f"square matrix required, got {arr.shape}")
    schedule = _check_schedule(schedule, arr.shape[0])
    if schedule == (1,) * arr.shape[0]:
        return _lu_factorize_array(arr, ctx)
    f = inv_lu_base(arr[0, 0], ctx)
    k = 1
    for i in schedule[1:]:
        f = inv_lu_extend(f, arr[:k, k : k + i], arr[k : k + i, :k], arr[k : k + i, k : k + i], ctx)
        k += i
    return f


# -- assembly ---------------------------------------------------------------


def assemble_inverse(f, ctx: AuditContext = RAW) -> np.ndarray:
    """Explicit Q = inv(R) from either factor type."""
    if isinstance(f, InvLdmFactors):
        return tri.sandwich_product(ctx, f.L, f.d, f.M, hermitian=False)
    if isinstance(f, InvLuFactors):
        n = f.order
        q = np.zeros((n, n), dtype=COMPLEX_DTYPE)
        for i in range(n):
            for j in range(n):
                if i >= j:
                    acc = f.U[i, j]  # L[i, i] == 1
                    lo = i + 1
                else:
                    acc = ctx.mul(f.L[i, j], f.U[j, j])
                    lo = j + 1
                for l in range(lo, n):
                    acc = ctx.add(acc, ctx.mul(f.L[i, l], f.U[l, j]))
                q[i, j] = acc
        return q
    raise TypeError(f"unsupported factor type {type(f).__name__}")
