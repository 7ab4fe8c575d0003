"""Division- and square-root-free inverse LDM^H factorization.

The factors here are scaled: ``L (diag(d)/delta) M^H == inv(R)`` with a
scalar denominator ``delta`` carried alongside, so every stored entry is
produced by multiplications and additions only.  The lone reciprocal in the
whole pipeline is taken by :func:`assemble_q` when an explicit inverse is
requested.

Bordering updates follow the same 2x2 block split as the reference module.
For a one-column border the growth scalar is

    eta = delta * t - y^H (L diag(d) M^H) v

i.e. the old denominator times the Schur complement; the new denominator is
``delta * eta``.  The appended column of ``L`` is ``-(L diag(d) M^H) v``
with corner entry ``delta``, so the triangles accumulate non-unit diagonals
by design (each diagonal entry is the denominator at the step that created
it).  Correctness is enforced by the representation identity, not by a
normalization convention; the reference factors agree column-by-column up
to a per-column scale.

Because ``delta`` roughly squares at every step, chains beyond order ~10
overflow double precision unless power-of-2 rescaling is enabled; rescaling
multiplies ``delta`` and ``d`` by exact binary shifts (free, and exact in
floating point) and leaves the represented inverse bit-for-bit unchanged.

Hermitian inputs take a specialized path: ``M`` aliases ``L`` (never
recomputed), the diagonal and denominator are kept in real arithmetic, and
``delta`` stays exactly real and strictly positive for positive definite
inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _triops as tri
from .exceptions import DimensionError, NonHermitianError, SingularPivotError
from .matrix_core import COMPLEX_DTYPE, ComplexMatrix, as_array, format_complex
from .op_audit import RAW, AuditContext

__all__ = [
    "DivFreeFactors",
    "RescalePolicy",
    "divfree_init",
    "divfree_extend_vector",
    "divfree_extend_block",
    "divfree_factorize",
    "divfree_ldl_hermitian",
    "rescale",
    "assemble_q",
    "save_factors",
    "load_factors",
]

#: |eta| below this times |delta|*scale flags a singular extension.
ETA_RTOL = 1e-13


@dataclass(frozen=True)
class DivFreeFactors:
    """Scaled factors L (diag(d)/delta) M^H = inv(R), built without division.

    ``hermitian`` instances share one triangle (``M is L``), keep ``d`` as a
    real array and ``delta`` as a real, strictly positive scalar.  ``shift``
    accumulates log2 of all power-of-2 rescales applied so far.
    """

    L: np.ndarray
    d: np.ndarray
    M: np.ndarray
    delta: complex
    order: int
    hermitian: bool
    shift: int = 0

    def __post_init__(self):
        if self.hermitian and self.M is not self.L:
            raise ValueError("hermitian factors must alias M to L")


@dataclass
class RescalePolicy:
    """Power-of-2 rescaling switch plus the running log2 of applied factors."""

    enabled: bool = True
    accumulated_shift: int = 0


def divfree_init(r11, ctx: AuditContext = RAW, hermitian: bool = False) -> DivFreeFactors:
    """Order-1 factors: L = M = [1], d = [1], delta = r11.  No divisions."""
    r11_c = complex(r11)
    if r11_c == 0:
        raise SingularPivotError("order-1 pivot is zero")
    if hermitian:
        if r11_c.imag != 0:
            raise NonHermitianError(f"diagonal entry {r11!r} is not real")
        one = np.ones((1, 1), dtype=COMPLEX_DTYPE)
        return DivFreeFactors(
            L=one, d=np.ones(1), M=one, delta=float(r11_c.real), order=1,
            hermitian=True,
        )
    one = np.ones((1, 1), dtype=COMPLEX_DTYPE)
    return DivFreeFactors(
        L=one, d=np.ones(1, dtype=COMPLEX_DTYPE), M=one.copy(), delta=r11_c,
        order=1, hermitian=False,
    )


def _as_general(f: DivFreeFactors) -> DivFreeFactors:
    """Drop the Hermitian specialization (used when an extension breaks it)."""
    if not f.hermitian:
        return f
    return DivFreeFactors(
        L=f.L, d=f.d.astype(COMPLEX_DTYPE), M=f.L.copy(),
        delta=complex(f.delta), order=f.order, hermitian=False, shift=f.shift,
    )


def _eta_threshold(delta, t, v, y) -> float:
    scale = max(1.0, abs(t), np.abs(v).max(initial=0.0), np.abs(y).max(initial=0.0))
    return ETA_RTOL * abs(delta) * scale


def _extend_vector_hermitian(f, v, t, ctx) -> DivFreeFactors:
    k = f.order
    w = tri.upper_h_matvec(ctx, f.L, v)
    u = f.d * w  # real-by-complex scaling
    z = tri.upper_matvec(ctx, f.L, u)
    # y^H (L d L^H) v with y == v reduces to sum d_j |w_j|^2, exactly real:
    # the conj(w)*w product has an identically zero imaginary part in IEEE.
    s = 0.0
    for j in range(k):
        s += f.d[j] * ctx.mul(w[j].conjugate(), w[j]).real
    eta = f.delta * float(t) - s
    if eta <= _eta_threshold(f.delta, t, v, v):
        raise SingularPivotError(
            "extension pivot not positive (input not positive definite?)"
        )
    big = np.zeros((k + 1, k + 1), dtype=COMPLEX_DTYPE)
    big[:k, :k] = f.L
    big[:k, k] = -z
    big[k, k] = f.delta
    d_new = np.empty(k + 1)
    d_new[:k] = eta * f.d
    d_new[k] = 1.0
    return DivFreeFactors(
        L=big, d=d_new, M=big, delta=f.delta * eta, order=k + 1,
        hermitian=True, shift=f.shift,
    )


def _extend_vector_general(f, v, y, t, ctx) -> DivFreeFactors:
    k = f.order
    wv = tri.upper_h_matvec(ctx, f.M, v)
    uv = tri.scale_vec(ctx, f.d, wv)
    z = tri.upper_matvec(ctx, f.L, uv)  # (L d M^H) v, the new L column negated
    wy = tri.upper_h_matvec(ctx, f.L, y)
    uy = tri.scale_vec(ctx, f.d.conjugate(), wy)
    g = tri.upper_matvec(ctx, f.M, uy)  # (y^H L d M^H)^H, new M column negated
    s = tri.dot_conj(ctx, y, z)
    eta = ctx.sub(ctx.mul(f.delta, complex(t)), s)
    if abs(eta) <= _eta_threshold(f.delta, t, v, y):
        raise SingularPivotError("singular extension (eta ~ 0)")
    big_l = np.zeros((k + 1, k + 1), dtype=COMPLEX_DTYPE)
    big_m = np.zeros((k + 1, k + 1), dtype=COMPLEX_DTYPE)
    big_l[:k, :k] = f.L
    big_l[:k, k] = -z
    big_l[k, k] = f.delta
    big_m[:k, :k] = f.M
    big_m[:k, k] = -g
    big_m[k, k] = complex(f.delta).conjugate()
    d_new = np.empty(k + 1, dtype=COMPLEX_DTYPE)
    for j in range(k):
        d_new[j] = ctx.mul(eta, f.d[j])
    d_new[k] = 1.0
    return DivFreeFactors(
        L=big_l, d=d_new, M=big_m, delta=ctx.mul(f.delta, eta), order=k + 1,
        hermitian=False, shift=f.shift,
    )


def divfree_extend_vector(f: DivFreeFactors, v, y, t, ctx: AuditContext = RAW) -> DivFreeFactors:
    """Extend order-k factors by one row/column, division-free.

    ``v`` and ``y`` are the border column/row of the enlarged matrix and
    ``t`` its new diagonal entry.  Hermitian factors stay on the shared-
    triangle real-arithmetic path when the border is symmetric (``y`` the
    same vector as ``v`` and ``t`` real); otherwise they are widened first.
    """
    v = np.asarray(v, dtype=COMPLEX_DTYPE).reshape(-1)
    y = np.asarray(y, dtype=COMPLEX_DTYPE).reshape(-1)
    if len(v) != f.order or len(y) != f.order:
        raise DimensionError(
            f"border vectors must have length {f.order}, got {len(v)}/{len(y)}"
        )
    t_c = complex(t)
    if f.hermitian:
        if (y is v or np.array_equal(y, v)) and t_c.imag == 0:
            return _extend_vector_hermitian(f, v, t_c.real, ctx)
        f = _as_general(f)
    return _extend_vector_general(f, v, y, t_c, ctx)


def _product_block_cols(ctx, f, v_block):
    """(L diag(d) M^H) V column by column."""
    k, i = v_block.shape
    c = np.zeros((k, i), dtype=COMPLEX_DTYPE)
    real_d = f.hermitian
    for col in range(i):
        w = tri.upper_h_matvec(ctx, f.M, v_block[:, col])
        u = f.d * w if real_d else tri.scale_vec(ctx, f.d, w)
        c[:, col] = tri.upper_matvec(ctx, f.L, u)
    return c


def _extend_block_hermitian(f, v_block, t_block, ctx) -> DivFreeFactors:
    k, i = f.order, t_block.shape[0]
    c = _product_block_cols(ctx, f, v_block)
    # inner matrix N = delta*T - V^H (L d L^H) V, forced exactly Hermitian
    n_mat = np.zeros((i, i), dtype=COMPLEX_DTYPE)
    for r in range(i):
        for cc in range(r, i):
            acc = ctx.mul(v_block[0, r].conjugate(), c[0, cc])
            for m in range(1, k):
                acc = ctx.add(acc, ctx.mul(v_block[m, r].conjugate(), c[m, cc]))
            val = f.delta * t_block[r, cc] - acc  # real delta: free scaling
            if cc == r:
                n_mat[r, r] = complex(val.real, 0.0)
            else:
                n_mat[r, cc] = val
                n_mat[cc, r] = val.conjugate()
    inner = _chain_hermitian(n_mat, ctx)
    eta = inner.delta
    big = np.zeros((k + i, k + i), dtype=COMPLEX_DTYPE)
    big[:k, :k] = f.L
    big[k:, k:] = f.delta * inner.L  # real-by-complex scaling
    for cc in range(i):  # -C F, inner triangle has a non-unit diagonal
        for r in range(k):
            acc = ctx.mul(c[r, cc], inner.L[cc, cc])
            for m in range(cc):
                acc = ctx.add(acc, ctx.mul(c[r, m], inner.L[m, cc]))
            big[r, k + cc] = -acc
    d_new = np.empty(k + i)
    d_new[:k] = eta * f.d
    d_new[k:] = inner.d
    return DivFreeFactors(
        L=big, d=d_new, M=big, delta=f.delta * eta, order=k + i,
        hermitian=True, shift=f.shift,
    )


def _extend_block_general(f, v_block, y_h, t_block, ctx) -> DivFreeFactors:
    k, i = f.order, t_block.shape[0]
    c = _product_block_cols(ctx, f, v_block)
    # Y^H (L d M^H) row by row
    bl = np.zeros((i, k), dtype=COMPLEX_DTYPE)
    for row in range(i):
        y = y_h[row, :].conjugate()
        a = tri.upper_h_matvec(ctx, f.L, y)
        u = tri.scale_vec(ctx, f.d.conjugate(), a)
        bl[row, :] = tri.upper_matvec(ctx, f.M, u).conjugate()
    n_mat = np.zeros((i, i), dtype=COMPLEX_DTYPE)
    for r in range(i):
        for cc in range(i):
            acc = ctx.mul(y_h[r, 0], c[0, cc])
            for m in range(1, k):
                acc = ctx.add(acc, ctx.mul(y_h[r, m], c[m, cc]))
            n_mat[r, cc] = ctx.sub(ctx.mul(f.delta, t_block[r, cc]), acc)
    inner = _chain_general(n_mat, ctx)
    eta = inner.delta
    big_l = np.zeros((k + i, k + i), dtype=COMPLEX_DTYPE)
    big_m = np.zeros((k + i, k + i), dtype=COMPLEX_DTYPE)
    big_l[:k, :k] = f.L
    big_m[:k, :k] = f.M
    for cc in range(i):  # -C F into L's border block
        for r in range(k):
            acc = ctx.mul(c[r, cc], inner.L[cc, cc])
            for m in range(cc):
                acc = ctx.add(acc, ctx.mul(c[r, m], inner.L[m, cc]))
            big_l[r, k + cc] = -acc
    # M^H border block is -(E^H (Y^H L d M^H)); keeping the inner left
    # triangle in the product is what makes the block update exact when the
    # inner factors carry non-unit diagonals.
    for r in range(i):
        for col in range(k):
            acc = ctx.mul(inner.M[r, r].conjugate(), bl[r, col])
            for m in range(r):
                acc = ctx.add(acc, ctx.mul(inner.M[m, r].conjugate(), bl[m, col]))
            big_m[col, k + r] = -acc.conjugate()
    for r in range(i):
        for cc in range(r, i):
            big_l[k + r, k + cc] = ctx.mul(f.delta, inner.L[r, cc])
            big_m[k + r, k + cc] = ctx.mul(f.delta, inner.M[r, cc])
    d_new = np.empty(k + i, dtype=COMPLEX_DTYPE)
    for j in range(k):
        d_new[j] = ctx.mul(eta, f.d[j])
    d_new[k:] = inner.d
    return DivFreeFactors(
        L=big_l, d=d_new, M=big_m, delta=ctx.mul(f.delta, eta), order=k + i,
        hermitian=False, shift=f.shift,
    )


def divfree_extend_block(
    f: DivFreeFactors, v_block, y_h, t_block, ctx: AuditContext = RAW
) -> DivFreeFactors:
    """Extend order-k factors by an i-by-i border, division-free.

    The inner i-by-i matrix ``delta*T - Y^H (L d M^H) V`` is factorized by
    this same machinery along an all-ones schedule.  ``i == 1`` reduces
    bit-identically to :func:`divfree_extend_vector`.
    """
    v_block = np.atleast_2d(as_array(v_block))
    y_h = np.atleast_2d(as_array(y_h))
    t_block = np.atleast_2d(as_array(t_block))
    k, i = f.order, t_block.shape[0]
    if v_block.shape != (k, i) or y_h.shape != (i, k) or t_block.shape != (i, i):
        raise DimensionError("border shapes inconsistent with current order")
    if i == 1:
        return divfree_extend_vector(
            f, v_block[:, 0], y_h[0, :].conjugate(), t_block[0, 0], ctx
        )
    if f.hermitian:
        symmetric = np.array_equal(y_h, v_block.conj().T) and np.array_equal(
            t_block, t_block.conj().T
        )
        if symmetric:
            return _extend_block_hermitian(f, v_block, t_block, ctx)
        f = _as_general(f)
    return _extend_block_general(f, v_block, y_h, t_block, ctx)


def _chain_hermitian(arr, ctx, policy=None) -> DivFreeFactors:
    f = divfree_init(arr[0, 0], ctx, hermitian=True)
    if policy is not None:
        f = rescale(f, policy)
    for k in range(1, arr.shape[0]):
        f = _extend_vector_hermitian(f, arr[:k, k], arr[k, k].real, ctx)
        if policy is not None:
            f = rescale(f, policy)
    return f


def _chain_general(arr, ctx, policy=None) -> DivFreeFactors:
    f = divfree_init(arr[0, 0], ctx, hermitian=False)
    if policy is not None:
        f = rescale(f, policy)
    for k in range(1, arr.shape[0]):
        f = _extend_vector_general(f, arr[:k, k], arr[k, :k].conjugate(), arr[k, k], ctx)
        if policy is not None:
            f = rescale(f, policy)
    return f


def _is_exactly_hermitian(r) -> bool:
    if isinstance(r, ComplexMatrix) and r.hermitian:
        return True
    arr = as_array(r)
    return arr.shape[0] == arr.shape[1] and np.array_equal(arr, arr.conj().T)


def divfree_factorize(
    r, schedule=None, policy: RescalePolicy | None = None, ctx: AuditContext = RAW
) -> DivFreeFactors:
    """Division-free factorization of inv(R) along an extension schedule."""
    arr = as_array(r)
    n = arr.shape[0]
    if arr.ndim != 2 or arr.shape[1] != n:
        raise DimensionError(f"square matrix required, got {arr.shape}")
    if schedule is None:
        schedule = (1,) * n
    schedule = tuple(int(s) for s in schedule)
    if not schedule or schedule[0] != 1 or sum(schedule) != n or min(schedule) < 1:
        raise ValueError(f"bad schedule {schedule} for order {n}")
    hermitian = _is_exactly_hermitian(r)
    f = divfree_init(arr[0, 0], ctx, hermitian=hermitian)
    if policy is not None:
        f = rescale(f, policy)
    k = 1
    for i in schedule[1:]:
        f = divfree_extend_block(
            f, arr[:k, k : k + i], arr[k : k + i, :k], arr[k : k + i, k : k + i], ctx
        )
        k += i
        if policy is not None:
            f = rescale(f, policy)
    return f


def divfree_ldl_hermitian(
    r, policy: RescalePolicy | None = None, ctx: AuditContext = RAW
) -> DivFreeFactors:
    """LDL^H-style chain for Hermitian positive definite input.

    Only one triangle is computed (``M`` aliases ``L``); the denominator
    stays exactly real and strictly positive.  Zero divisions, zero square
    roots.
    """
    if not _is_exactly_hermitian(r):
        raise NonHermitianError("divfree_ldl_hermitian requires Hermitian input")
    arr = as_array(r)
    return _chain_hermitian(arr, ctx, policy)


def _rescale_factor(delta) -> float:
    """Power of two c with |delta*c|^2 in (1, 4]; 1.0 when already in window."""
    delta = complex(delta)
    m2 = delta.real * delta.real + delta.imag * delta.imag
    if 0.25 <= m2 <= 4.0:
        return 1.0
    if m2 == 0.0 or not math.isfinite(m2):
        raise SingularPivotError(f"cannot rescale denominator {delta!r}")
    frac, e = math.frexp(m2)  # m2 = frac * 2^e, frac in [0.5, 1)
    ceil_log2 = e - 1 if frac == 0.5 else e
    n = -(-ceil_log2 // 2) - 1  # ceil(log2(m2)/2) - 1
    return 2.0 ** (-n)


def rescale(f: DivFreeFactors, policy: RescalePolicy) -> DivFreeFactors:
    """Confine |delta|^2 to the [0.25, 4] window by exact binary shifts.

    delta and every diagonal entry are multiplied by the same power of two,
    so the represented inverse is unchanged exactly.  Costs nothing in the
    op ledger (shifts).
    """
    if not policy.enabled:
        return f
    c = _rescale_factor(f.delta)
    if c == 1.0:
        return f
    m = int(math.log2(c))
    policy.accumulated_shift += m
    return DivFreeFactors(
        L=f.L,
        d=f.d * c,
        M=f.L if f.hermitian else f.M,
        delta=f.delta * c,
        order=f.order,
        hermitian=f.hermitian,
        shift=f.shift + m,
    )


def assemble_q(f: DivFreeFactors, ctx: AuditContext = RAW) -> np.ndarray:
    """Explicit Q = L (diag(d)/delta) M^H.

    Takes the single reciprocal ``1/delta`` (the only division in the whole
    division-free pipeline) and finishes with triangular products; for
    Hermitian factors only the upper triangle is computed and mirrored.
    """
    if f.delta == 0:
        raise SingularPivotError("zero denominator")
    if f.hermitian:
        rho = ctx.div(1.0, float(f.delta))
        return tri.sandwich_product(
            ctx, f.L, f.d * rho, f.L, hermitian=True, diag_is_real=True
        )
    rho = ctx.div(1.0 + 0.0j, complex(f.delta))
    scaled = tri.scale_vec(ctx, f.d, np.full(f.order, rho, dtype=COMPLEX_DTYPE))
    return tri.sandwich_product(ctx, f.L, scaled, f.M, hermitian=False)


# -- serialization ---------------------------------------------------------
#
# Header line: delta_re,delta_im,shift,hermitian,order
# followed by `order` rows of L, one row of d, and (unless hermitian)
# `order` rows of M, all in the matrix CSV entry format.


def save_factors(f: DivFreeFactors, path) -> None:
    delta = complex(f.delta)
    lines = [f"{delta.real!r},{delta.imag!r},{f.shift},{int(f.hermitian)},{f.order}"]
    for row in f.L:
        lines.append(",".join(format_complex(z) for z in row))
    lines.append(",".join(format_complex(z) for z in np.asarray(f.d, dtype=COMPLEX_DTYPE)))
    if not f.hermitian:
        for row in f.M:
            lines.append(",".join(format_complex(z) for z in row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_factors(path) -> DivFreeFactors:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    re_s, im_s, shift_s, herm_s, order_s = lines[0].split(",")
    hermitian = bool(int(herm_s))
    order = int(order_s)
    delta = complex(float(re_s), float(im_s))
    rows = lines[1:]
    l_arr = np.array(
        [[complex(tok) for tok in rows[i].split(",")] for i in range(order)],
        dtype=COMPLEX_DTYPE,
    )
    d_row = np.array([complex(tok) for tok in rows[order].split(",")], dtype=COMPLEX_DTYPE)
    if hermitian:
        return DivFreeFactors(
            L=l_arr, d=d_row.real.copy(), M=l_arr, delta=delta.real,
            order=order, hermitian=True, shift=int(shift_s),
        )
    m_arr = np.array(
        [[complex(tok) for tok in rows[order + 1 + i].split(",")] for i in range(order)],
        dtype=COMPLEX_DTYPE,
    )
    return DivFreeFactors(
        L=l_arr, d=d_row, M=m_arr, delta=delta, order=order,
        hermitian=False, shift=int(shift_s),
    )
