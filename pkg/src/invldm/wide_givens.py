"""Division- and square-root-free 2x2 column transforms ("wide-sense"
Givens rotations) and the block triangularization they implement.

A weighted triangular form ``L (diag(d)/delta) L^H`` (d, delta real
positive) is transformed by non-unitary 2x2 column operations that zero a
target entry while preserving the represented Hermitian matrix.  For a row
pair ``(a, b)`` with column weights ``(d_a, d_b)`` the transform

    theta = [[conj(a)*d_a, -b],
             [conj(b)*d_b,  a]],    tau = d_a|a|^2 + d_b|b|^2

maps the row to ``(tau, 0)``; the touched weights become ``(1, d_a*d_b)``,
every other weight picks up the factor ``tau`` and the denominator becomes
``delta*tau``.  No division, no square root.

:func:`block_triangularize` sweeps adjacent column pairs left to right to
clear a dense bottom row (the state after a detected stream's row is
cyclically shifted to the bottom), restoring the leading block to upper
triangular shape with the bottom row exactly ``[0, ..., 0, lambda]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionError
from .inv_ldm_divfree import RescalePolicy, _rescale_factor
from .matrix_core import COMPLEX_DTYPE
from .op_audit import RAW, AuditContext

__all__ = [
    "WideRotation",
    "WeightedTriangular",
    "make_wide_rotation",
    "block_triangularize",
]


@dataclass(frozen=True)
class WideRotation:
    """A 2x2 wide-sense rotation acting on an ordered pair of columns."""

    theta: np.ndarray  # 2x2
    tau: complex  # d_a|a|^2 + d_b|b|^2 (real positive for valid weights)
    target_cols: tuple
    identity: bool = False


@dataclass
class WeightedTriangular:
    """L with per-column real weights d and shared denominator delta.

    Represents the Hermitian form L (diag(d)/delta) L^H.  ``L`` is upper
    triangular except that the bottom row may be dense (the post-permutation
    state handled by :func:`block_triangularize`).
    """

    L: np.ndarray
    d: np.ndarray
    delta: float

    def represented(self) -> np.ndarray:
        return (self.L * (self.d / self.delta)) @ self.L.conj().T

    def copy(self) -> "WeightedTriangular":
        return WeightedTriangular(self.L.copy(), self.d.copy(), float(self.delta))


def make_wide_rotation(a, b, d_a: float, d_b: float, ctx: AuditContext = RAW):
    """Build the rotation zeroing ``b`` in the row pair ``(a, b)``.

    Returns ``(rotation, new_weights, tau)``.  The caller must multiply all
    *other* column weights by ``tau`` and the denominator by ``tau`` to keep
    the represented Hermitian form unchanged.  ``b == 0`` yields an identity
    rotation with ``tau = 1`` and unchanged weights.
    """
    a = complex(a)
    b = complex(b)
    if a == 0 and b == 0:
        raise ValueError("wide rotation undefined for a zero row pair")
    if d_a <= 0 or d_b <= 0:
        raise ValueError("weights must be strictly positive")
    if b == 0:
        theta = np.eye(2, dtype=COMPLEX_DTYPE)
        return WideRotation(theta, 1.0, (0, 1), identity=True), (d_a, d_b), 1.0
    # tau = d_a|a|^2 + d_b|b|^2; the |.|^2 products are complex multiplies,
    # the real weight scalings are free bookkeeping.
    aa = ctx.mul(a.conjugate(), a).real
    bb = ctx.mul(b.conjugate(), b).real
    tau = d_a * aa + d_b * bb
    theta = np.array(
        [[a.conjugate() * d_a, -b], [b.conjugate() * d_b, a]], dtype=COMPLEX_DTYPE
    )
    return WideRotation(theta, tau, (0, 1)), (1.0, d_a * d_b), tau


def _apply_rotation_rows(ctx, l_arr, rot: WideRotation, col_first, col_second, n_rows):
    """Transform columns (col_first, col_second) of the first n_rows rows."""
    t00, t01 = rot.theta[0, 0], rot.theta[0, 1]
    t10, t11 = rot.theta[1, 0], rot.theta[1, 1]
    for r in range(n_rows):
        x = l_arr[r, col_first]
        y = l_arr[r, col_second]
        l_arr[r, col_first] = ctx.add(ctx.mul(x, t00), ctx.mul(y, t10))
        l_arr[r, col_second] = ctx.add(ctx.mul(x, t01), ctx.mul(y, t11))


def block_triangularize(
    w: WeightedTriangular,
    policy: RescalePolicy | None = None,
    ctx: AuditContext = RAW,
):
    """Clear the dense bottom row of ``w.L`` by adjacent-column rotations.

    Input: ``w.L`` upper triangular except for a dense bottom row whose
    nonzeros start at some column p (rows p..k-2 have a structurally zero
    diagonal -- the state after cyclically shifting row p to the bottom).

    Output ``(w', mu, lam)`` where ``w'.L`` is upper triangular with bottom
    row exactly ``[0, ..., 0, lam]``, ``mu`` is the last column above
    ``lam``, and the represented Hermitian form is preserved.  With a
    rescale policy the denominator is re-windowed after every rotation and
    the weights are renormalized (with exact compensating column shifts)
    after the sweep.
    """
    k = w.L.shape[0]
    if w.L.shape[1] != k or len(w.d) != k:
        raise DimensionError("weighted triangular blocks are inconsistent")
    out = w.copy()
    l_arr, d, delta = out.L, out.d, out.delta

    bottom = l_arr[k - 1, :]
    nz = np.nonzero(bottom)[0]
    if nz.size == 0:
        raise ValueError("degenerate all-zero bottom row")
    p = int(nz[0])

    for j in range(p, k - 1):
        # ordered pair (first=j+1, second=j): zero the bottom entry at j,
        # accumulate into j+1, restoring row j's diagonal on the way.
        a = bottom[j + 1]
        b = bottom[j]
        if b == 0:
            continue
        rot, (w_first, w_second), tau = make_wide_rotation(a, b, d[j + 1], d[j], ctx)
        _apply_rotation_rows(ctx, l_arr, rot, j + 1, j, j + 1)
        l_arr[k - 1, j + 1] = tau  # real positive by construction
        l_arr[k - 1, j] = 0.0  # zero assigned, never computed
        d[j + 1] = w_first
        d[j] = w_second
        for m in range(k):
            if m != j and m != j + 1:
                d[m] *= tau
        delta *= tau
        if policy is not None and policy.enabled:
            c = _rescale_factor(delta)
            if c != 1.0:
                policy.accumulated_shift += int(math.log2(c))
                delta *= c
                d *= c

    if policy is not None and policy.enabled:
        _renormalize_weights(l_arr, d)

    out.d = d
    out.delta = float(delta)
    mu = l_arr[: k - 1, k - 1].copy()
    lam = l_arr[k - 1, k - 1]
    return out, mu, lam


def _renormalize_weights(l_arr: np.ndarray, d: np.ndarray) -> None:
    """Shift each weight into [0.5, 2), compensating in its L column.

    d_j *= 2^(-2m) paired with column_j *= 2^m leaves d_j |L._j|^2 and hence
    the represented form exactly unchanged.
    """
    for j in range(len(d)):
        if 0.5 <= d[j] < 2.0 or d[j] <= 0 or not math.isfinite(d[j]):
            continue
        _, e = math.frexp(d[j])  # d = f * 2^e, f in [0.5, 1)
        m = e // 2 if e % 2 == 0 else (e - 1) // 2
        if m == 0:
            continue
        d[j] *= 2.0 ** (-2 * m)
        l_arr[:, j] *= 2.0**m
