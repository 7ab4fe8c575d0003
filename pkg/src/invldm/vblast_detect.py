"""Ordered successive interference cancellation (OSIC) detection for
V-BLAST MIMO, in three variants.

* :func:`detect_recursive` -- initializes the error-covariance matrix Q
  from the division-free factorization (a single division for the whole
  initialization) and downdates Q by a Schur complement after each
  cancelled stream.
* :func:`detect_sqrtfree` -- never forms Q: it carries the weighted
  triangular form ``L (diag(d)/delta) L^H`` and updates it with wide-sense
  Givens rotations.  The entire detection loop performs zero divisions and
  zero square roots; decisions are taken on denominator-scaled quantities
  (valid because the shared denominator is real positive).
* :func:`detect_oracle` -- a deliberately naive reference that re-inverts
  the Gram matrix from scratch every iteration; ground truth for
  equivalence tests.

All three order streams by the smallest diagonal of Q (highest
post-detection SNR), breaking ties toward the lowest stream index, and
subtract each detected symbol's contribution from the received vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _triops as tri
from .exceptions import DimensionError, SingularPivotError
from .inv_ldm import assemble_inverse, inv_ldm_factorize
from .inv_ldm_divfree import RescalePolicy, assemble_q, divfree_ldl_hermitian
from .matrix_core import COMPLEX_DTYPE, as_array, gram_regularized
from .op_audit import RAW, AuditContext, OpCounts
from .wide_givens import WeightedTriangular, block_triangularize

__all__ = [
    "Constellation",
    "MimoInstance",
    "IterationDiag",
    "DetectionResult",
    "mmse_estimate",
    "sic_cancel",
    "detect_recursive",
    "detect_sqrtfree",
    "detect_oracle",
]


@dataclass(frozen=True)
class Constellation:
    """Symbol alphabet with unit average energy; the slicer returns the
    nearest point, ties broken toward the lowest point index."""

    name: str
    points: tuple

    def __post_init__(self):
        energy = sum(abs(p) ** 2 for p in self.points) / len(self.points)
        if abs(energy - 1.0) > 1e-12:
            raise ValueError(f"mean symbol energy {energy!r} is not 1")

    @classmethod
    def qpsk(cls) -> "Constellation":
        s = 2.0**-0.5
        return cls("QPSK", (s + s * 1j, -s + s * 1j, -s - s * 1j, s - s * 1j))

    def slice(self, z) -> tuple:
        """(index, point) of the nearest constellation point."""
        z = complex(z)
        best_i, best_d = 0, abs(z - self.points[0]) ** 2
        for i in range(1, len(self.points)):
            d = abs(z - self.points[i]) ** 2
            if d < best_d:
                best_i, best_d = i, d
        return best_i, self.points[best_i]

    def slice_scaled(self, z, scale: float, ctx: AuditContext = RAW) -> tuple:
        """Slice a scale*estimate value against scale-multiplied points.

        ``scale`` must be real positive, so the decision equals
        ``slice(z/scale)`` without performing the division.
        """
        z = complex(z)
        best_i = 0
        best_d = None
        for i, p in enumerate(self.points):
            diff = ctx.sub(z, scale * p)  # real-by-complex scaling is free
            d = ctx.mul(diff.conjugate(), diff).real
            if best_d is None or d < best_d:
                best_i, best_d = i, d
        return best_i, self.points[best_i]


@dataclass(frozen=True)
class MimoInstance:
    """Channel H (N x K, N >= K), received vector x and regularizer alpha
    (noise-to-signal variance ratio; 0 selects pure zero forcing)."""

    H: np.ndarray
    x: np.ndarray
    alpha: float

    def __post_init__(self):
        h = as_array(self.H)
        x = np.asarray(self.x, dtype=COMPLEX_DTYPE).reshape(-1)
        if h.ndim != 2 or h.shape[0] < h.shape[1]:
            raise DimensionError(f"channel must be N x K with N >= K, got {h.shape}")
        if x.shape[0] != h.shape[0]:
            raise DimensionError(
                f"received vector length {x.shape[0]} != N = {h.shape[0]}"
            )
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")
        object.__setattr__(self, "H", h)
        object.__setattr__(self, "x", x)

    @property
    def n_rx(self) -> int:
        return self.H.shape[0]

    @property
    def n_streams(self) -> int:
        return self.H.shape[1]


@dataclass(frozen=True)
class IterationDiag:
    chosen: int  # original stream index detected this iteration
    scale: float  # denominator the soft estimate is scaled by (1.0 if none)
    gap: float  # runner-up minus minimum of diag(Q), in Q units
    counts: OpCounts
    q_snapshot: np.ndarray | None = None
    undetected: tuple = ()


@dataclass
class DetectionResult:
    """Detection order plus per-stream decisions and diagnostics."""

    order: list
    symbols: list  # by stream index; entries are constellation points
    symbol_indices: list  # by stream index
    soft_estimates: list  # by stream index, scaled by iteration scale
    iterations: list = field(default_factory=list)
    init_counts: OpCounts = OpCounts()
    osic_counts: OpCounts = OpCounts()

    def write_csv(self, path) -> None:
        lines = ["position,stream,estimate_re,estimate_im,symbol_index"]
        for pos, stream in enumerate(self.order):
            est = complex(self.soft_estimates[stream])
            lines.append(
                f"{pos},{stream},{est.real!r},{est.imag!r},{self.symbol_indices[stream]}"
            )
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")


def mmse_estimate(inst: MimoInstance, ctx: AuditContext = RAW) -> np.ndarray:
    """Linear MMSE estimate via the inverse-factor reference path."""
    r = gram_regularized(inst.H, inst.alpha)
    q = assemble_inverse(inv_ldm_factorize(r, ctx=ctx), ctx)
    return q @ (inst.H.conj().T @ inst.x)


def sic_cancel(x, h_col, symbol, ctx: AuditContext = RAW) -> np.ndarray:
    """x - h * symbol, the interference cancellation step."""
    x = np.asarray(x, dtype=COMPLEX_DTYPE)
    h_col = np.asarray(h_col, dtype=COMPLEX_DTYPE)
    if x.shape != h_col.shape:
        raise DimensionError("cancel operands must have equal length")
    out = np.zeros_like(x)
    for i in range(len(x)):
        out[i] = ctx.sub(x[i], ctx.mul(h_col[i], symbol))
    return out


def _argmin_with_gap(values, streams):
    """Minimum by (value, stream-index); returns (local_pos, gap)."""
    best = 0
    for i in range(1, len(values)):
        if values[i] < values[best] or (
            values[i] == values[best] and streams[i] < streams[best]
        ):
            best = i
    if len(values) == 1:
        return 0, float("inf")
    runner = min(values[i] for i in range(len(values)) if i != best)
    return best, float(runner - values[best])


def _received_products(ctx, h, streams, x):
    """h_j^H x for each selected column, counted as complex ops."""
    return [tri.dot_conj(ctx, h[:, s], x) for s in streams]


def detect_recursive(
    inst: MimoInstance,
    constellation: Constellation | None = None,
    ctx: AuditContext = RAW,
    policy: RescalePolicy | None = None,
    collect_q: bool = False,
) -> DetectionResult:
    """OSIC with Q initialized division-free and Schur-downdated per step.

    The initialization (factor chain plus Q assembly) performs exactly one
    division; the cancellation loop uses one reciprocal per downdate.
    """
    c = constellation or Constellation.qpsk()
    k_total = inst.n_streams
    if policy is None:
        policy = RescalePolicy(enabled=True)

    before_init = ctx.snapshot()
    r = gram_regularized(inst.H, inst.alpha)
    f = divfree_ldl_hermitian(r, policy, ctx)
    q = assemble_q(f, ctx)
    init_counts = ctx.snapshot() - before_init

    h = inst.H
    x = inst.x.copy()
    streams = list(range(k_total))
    order: list = []
    symbols: list = [None] * k_total
    symbol_indices: list = [0] * k_total
    soft: list = [0j] * k_total
    iterations: list = []
    before_osic = ctx.snapshot()

    while streams:
        k = len(streams)
        it_before = ctx.snapshot()
        streams_at_start = tuple(streams)
        diag = [q[i, i].real for i in range(k)]
        p, gap = _argmin_with_gap(diag, streams)
        snapshot = q.copy() if collect_q else None

        hx = _received_products(ctx, h, streams, x)
        est = ctx.mul(q[p, 0], hx[0])
        for j in range(1, k):
            est = ctx.add(est, ctx.mul(q[p, j], hx[j]))
        stream = streams[p]
        idx, point = c.slice(est)
        order.append(stream)
        symbols[stream] = point
        symbol_indices[stream] = idx
        soft[stream] = complex(est)
        x = sic_cancel(x, h[:, stream], point, ctx)

        if k > 1:
            keep = [i for i in range(k) if i != p] + [p]
            q = q[np.ix_(keep, keep)]
            streams = [streams[i] for i in keep]
            corner = q[k - 1, k - 1]
            if abs(corner) <= 1e-13 * max(1.0, float(np.abs(q).max())):
                raise SingularPivotError("singular corner in Q downdate")
            rho = ctx.div(1.0 + 0.0j, corner)
            col = q[: k - 1, k - 1]
            scaled = [ctx.mul(col[i], rho) for i in range(k - 1)]
            q_next = np.zeros((k - 1, k - 1), dtype=COMPLEX_DTYPE)
            for i in range(k - 1):
                for j in range(k - 1):
                    q_next[i, j] = ctx.sub(
                        q[i, j], ctx.mul(scaled[i], col[j].conjugate())
                    )
            q = q_next
        streams = streams[: k - 1]
        iterations.append(
            IterationDiag(
                chosen=stream,
                scale=1.0,
                gap=gap,
                counts=ctx.snapshot() - it_before,
                q_snapshot=snapshot,
                undetected=streams_at_start,
            )
        )

    osic_counts = ctx.snapshot() - before_osic
    return DetectionResult(
        order=order,
        symbols=symbols,
        symbol_indices=symbol_indices,
        soft_estimates=soft,
        iterations=iterations,
        init_counts=init_counts,
        osic_counts=osic_counts,
    )


def detect_sqrtfree(
    inst: MimoInstance,
    constellation: Constellation | None = None,
    ctx: AuditContext = RAW,
    policy: RescalePolicy | None = None,
    collect_q: bool = False,
) -> DetectionResult:
    """Fully division- and square-root-free OSIC detection.

    Carries (L, d, delta) with ``L (diag(d)/delta) L^H`` equal to the error
    covariance of the undetected streams.  Ordering compares the
    denominator-scaled diagonal numerators, nulling reads the last row of
    the represented Q after block triangularization, and slicing compares
    against denominator-scaled decision points.  Soft estimates are
    reported delta-scaled with the scale recorded per iteration.
    """
    c = constellation or Constellation.qpsk()
    k_total = inst.n_streams
    if policy is None:
        policy = RescalePolicy(enabled=True)

    before_init = ctx.snapshot()
    r = gram_regularized(inst.H, inst.alpha)
    f = divfree_ldl_hermitian(r, policy, ctx)
    init_counts = ctx.snapshot() - before_init

    l_arr = f.L.copy()
    d = f.d.copy()
    delta = float(f.delta)
    h = inst.H
    x = inst.x.copy()
    streams = list(range(k_total))
    order: list = []
    symbols: list = [None] * k_total
    symbol_indices: list = [0] * k_total
    soft: list = [0j] * k_total
    scales: list = [1.0] * k_total
    iterations: list = []
    before_osic = ctx.snapshot()

    while streams:
        k = len(streams)
        it_before = ctx.snapshot()
        streams_at_start = tuple(streams)
        # delta-scaled diagonal of Q: n_i = sum_j |L_ij|^2 d_j, real positive
        numer = []
        for i in range(k):
            acc = 0.0
            for j in range(i, k):
                acc += d[j] * ctx.mul(l_arr[i, j].conjugate(), l_arr[i, j]).real
            numer.append(acc)
        p, raw_gap = _argmin_with_gap(numer, streams)
        gap = raw_gap / delta if raw_gap != float("inf") else raw_gap
        snapshot = (
            (l_arr * (d / delta)) @ l_arr.conj().T if collect_q else None
        )

        # cyclic shift: detected stream's row to the bottom
        keep = [i for i in range(k) if i != p] + [p]
        l_arr = l_arr[keep, :]
        streams = [streams[i] for i in keep]
        wt, _, lam = block_triangularize(
            WeightedTriangular(l_arr, d, delta), policy, ctx
        )
        l_arr, d, delta = wt.L, wt.d, wt.delta

        stream = streams[-1]
        hx = _received_products(ctx, h, streams, x)
        acc = ctx.mul(l_arr[0, k - 1].conjugate(), hx[0])
        for j in range(1, k):
            acc = ctx.add(acc, ctx.mul(l_arr[j, k - 1].conjugate(), hx[j]))
        z = ctx.mul(complex(lam), acc) * d[k - 1]  # real weight: free scaling
        idx, point = c.slice_scaled(z, delta, ctx)
        order.append(stream)
        symbols[stream] = point
        symbol_indices[stream] = idx
        soft[stream] = complex(z)
        scales[stream] = float(delta)
        x = sic_cancel(x, h[:, stream], point, ctx)

        l_arr = l_arr[: k - 1, : k - 1].copy()
        d = d[: k - 1].copy()
        streams = streams[:-1]
        iterations.append(
            IterationDiag(
                chosen=stream,
                scale=float(delta),
                gap=gap,
                counts=ctx.snapshot() - it_before,
                q_snapshot=snapshot,
                undetected=streams_at_start,
            )
        )

    osic_counts = ctx.snapshot() - before_osic
    return DetectionResult(
        order=order,
        symbols=symbols,
        symbol_indices=symbol_indices,
        soft_estimates=soft,
        iterations=iterations,
        init_counts=init_counts,
        osic_counts=osic_counts,
    )


def detect_oracle(
    inst: MimoInstance,
    constellation: Constellation | None = None,
    collect_q: bool = False,
) -> DetectionResult:
    """Textbook OSIC recomputing Q densely each iteration (ground truth)."""
    c = constellation or Constellation.qpsk()
    k_total = inst.n_streams
    h = inst.H
    x = inst.x.copy()
    streams = list(range(k_total))
    order: list = []
    symbols: list = [None] * k_total
    symbol_indices: list = [0] * k_total
    soft: list = [0j] * k_total
    iterations: list = []

    while streams:
        h_u = h[:, streams]
        k = len(streams)
        streams_at_start = tuple(streams)
        r_u = h_u.conj().T @ h_u + inst.alpha * np.eye(k, dtype=COMPLEX_DTYPE)
        try:
            q = np.linalg.inv(r_u)
        except np.linalg.LinAlgError as exc:
            raise SingularPivotError(str(exc)) from exc
        diag = [q[i, i].real for i in range(k)]
        p, gap = _argmin_with_gap(diag, streams)
        est = q[p, :] @ (h_u.conj().T @ x)
        stream = streams[p]
        idx, point = c.slice(est)
        order.append(stream)
        symbols[stream] = point
        symbol_indices[stream] = idx
        soft[stream] = complex(est)
        x = x - h[:, stream] * point
        streams = [s for s in streams if s != stream]
        iterations.append(
            IterationDiag(
                chosen=stream,
                scale=1.0,
                gap=gap,
                counts=OpCounts(),
                q_snapshot=q.copy() if collect_q else None,
                undetected=tuple([stream] + streams),
            )
        )

    return DetectionResult(
        order=order,
        symbols=symbols,
        symbol_indices=symbol_indices,
        soft_estimates=soft,
        iterations=iterations,
    )
