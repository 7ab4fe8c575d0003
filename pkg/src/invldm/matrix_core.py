"""Dense complex matrices, block partitioning and Gram construction.

Everything downstream consumes the types defined here.  Matrices are
immutable after construction (the backing array is write-protected), so
instances are safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionError, NonHermitianError

__all__ = [
    "COMPLEX_DTYPE",
    "ComplexMatrix",
    "BlockPartition",
    "as_array",
    "gram_regularized",
    "partition",
    "reassemble",
    "append_column_blocks",
    "write_matrix_csv",
    "read_matrix_csv",
    "format_complex",
]

#: Module-wide scalar precision.  Swap for an extended-precision dtype to
#: build a higher-precision oracle variant of the library.
COMPLEX_DTYPE = np.complex128

#: Relative Frobenius asymmetry beyond which a Hermitian construction fails.
HERMITIAN_ASYMMETRY_TOL = 1e-10


class ComplexMatrix:
    """Immutable dense complex matrix with (row, col) indexed access."""

    __slots__ = ("_data", "hermitian")

    def __init__(self, data, hermitian: bool = False, _trusted: bool = False):
        arr = np.array(data, dtype=COMPLEX_DTYPE, copy=not _trusted)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DimensionError(f"expected a 2-D matrix, got shape {arr.shape}")
        if hermitian and not _trusted:
            raise ValueError("use ComplexMatrix.make_hermitian for flagged instances")
        arr.flags.writeable = False
        self._data = arr
        self.hermitian = hermitian

    # -- constructors -------------------------------------------------------

    @classmethod
    def make_hermitian(cls, data) -> "ComplexMatrix":
        """Symmetrize ``(A + A^H)/2`` and flag the result Hermitian.

        Raises :class:`NonHermitianError` when the pre-symmetrization
        asymmetry exceeds the relative tolerance; the symmetrized result is
        exactly equal to its own conjugate transpose.
        """
        arr = np.array(data, dtype=COMPLEX_DTYPE)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise DimensionError(f"Hermitian matrix must be square, got {arr.shape}")
        asym = np.linalg.norm(arr - arr.conj().T)
        scale = max(1.0, np.linalg.norm(arr))
        if asym > HERMITIAN_ASYMMETRY_TOL * scale:
            raise NonHermitianError(
                f"asymmetry {asym:.3e} exceeds {HERMITIAN_ASYMMETRY_TOL:.0e} "
                f"relative tolerance"
            )
        sym = (arr + arr.conj().T) / 2
        return cls(sym, hermitian=True, _trusted=True)

    @classmethod
    def identity(cls, n: int) -> "ComplexMatrix":
        return cls(np.eye(n, dtype=COMPLEX_DTYPE), hermitian=True, _trusted=True)

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "ComplexMatrix":
        return cls(np.zeros((rows, cols), dtype=COMPLEX_DTYPE), _trusted=True)

    # -- access ---------------------------------------------------------------

    @property
    def data(self) -> np.ndarray:
        """Read-only view of the backing array."""
        return self._data

    @property
    def rows(self) -> int:
        return self._data.shape[0]

    @property
    def cols(self) -> int:
        return self._data.shape[1]

    @property
    def shape(self) -> tuple:
        return self._data.shape

    def __getitem__(self, key):
        return self._data[key]

    def to_array(self) -> np.ndarray:
        return self._data.copy()

    def __repr__(self):
        flag = ", hermitian" if self.hermitian else ""
        return f"ComplexMatrix({self.rows}x{self.cols}{flag})"


@dataclass(frozen=True)
class BlockPartition:
    """The four blocks of a square matrix split after its first k rows/cols.

    ``bottom_left_h`` stores the bottom-left block directly (an i-by-k
    matrix); for a Hermitian source it equals the conjugate transpose of
    ``top_right`` bit-for-bit.
    """

    top_left: ComplexMatrix
    top_right: ComplexMatrix
    bottom_left_h: ComplexMatrix
    bottom_right: ComplexMatrix

    @property
    def k(self) -> int:
        return self.top_left.rows

    @property
    def i(self) -> int:
        return self.bottom_right.rows


def as_array(m) -> np.ndarray:
    """Coerce a ComplexMatrix or array-like to a complex ndarray."""
    if isinstance(m, ComplexMatrix):
        return m.data
    return np.asarray(m, dtype=COMPLEX_DTYPE)


def gram_regularized(h, alpha: float) -> ComplexMatrix:
    """Regularized Gram matrix ``H^H H + alpha*I``, flagged Hermitian.

    ``alpha`` must be nonnegative; choose ``alpha > 0`` whenever positive
    definiteness is required downstream.
    """
    arr = as_array(h)
    if arr.ndim != 2:
        raise DimensionError(f"channel matrix must be 2-D, got {arr.shape}")
    n, k = arr.shape
    if n < k:
        raise DimensionError(f"need at least as many rows as columns, got {n}x{k}")
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    g = arr.conj().T @ arr + alpha * np.eye(k, dtype=COMPLEX_DTYPE)
    # zgemm leaves roundoff-level asymmetry; the flagged constructor removes it
    return ComplexMatrix.make_hermitian(g)


def partition(r, k: int) -> BlockPartition:
    """Split a square matrix into 2x2 blocks after its first ``k`` rows/cols."""
    arr = as_array(r)
    n = arr.shape[0]
    if arr.ndim != 2 or arr.shape[1] != n:
        raise DimensionError(f"partition needs a square matrix, got {arr.shape}")
    if not 1 <= k < n:
        raise DimensionError(f"split index k={k} out of range for order {n}")
    return BlockPartition(
        top_left=ComplexMatrix(arr[:k, :k]),
        top_right=ComplexMatrix(arr[:k, k:]),
        bottom_left_h=ComplexMatrix(arr[k:, :k]),
        bottom_right=ComplexMatrix(arr[k:, k:]),
    )


def reassemble(blocks: BlockPartition) -> ComplexMatrix:
    """Inverse of :func:`partition`; exact (no arithmetic on the entries)."""
    top = np.hstack([blocks.top_left.data, blocks.top_right.data])
    bottom = np.hstack([blocks.bottom_left_h.data, blocks.bottom_right.data])
    return ComplexMatrix(np.vstack([top, bottom]))


#: Relative imaginary residue beyond which a supposedly-real scalar errors.
REAL_SCALAR_TOL = 1e-12


def append_column_blocks(h_k, h_next, alpha: float):
    """Border blocks produced by appending one channel column.

    Returns ``(v, t)`` with ``v = H_k^H h_next`` and the real scalar
    ``t = h_next^H h_next + alpha``.  A suspicious imaginary part of ``t``
    signals corrupted input.
    """
    hk = as_array(h_k)
    col = np.asarray(h_next, dtype=COMPLEX_DTYPE).reshape(-1)
    if col.shape[0] != hk.shape[0]:
        raise DimensionError(
            f"column has {col.shape[0]} rows, channel has {hk.shape[0]}"
        )
    v = hk.conj().T @ col
    t_c = np.vdot(col, col) + alpha
    if abs(t_c.imag) > REAL_SCALAR_TOL * max(1.0, abs(t_c)):
        raise ValueError(f"t = {t_c!r} has a non-negligible imaginary part")
    return v, float(t_c.real)


# -- CSV I/O -------------------------------------------------------------------
#
# One matrix row per line; entries comma-separated, written as "re+imj"
# (e.g. "1.5-0.25j").  Values use shortest round-trip formatting, so a
# write/read cycle reproduces every entry bit-for-bit.


def format_complex(z: complex) -> str:
    z = complex(z)
    im = z.imag
    sign = "+" if im >= 0 else "-"
    return f"{z.real!r}{sign}{abs(im)!r}j"


def write_matrix_csv(m, path) -> None:
    arr = as_array(m)
    lines = [",".join(format_complex(z) for z in row) for row in arr]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_matrix_csv(path) -> ComplexMatrix:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rows.append([complex(tok) for tok in line.split(",")])
    if not rows:
        raise DimensionError(f"no matrix data in {path}")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise DimensionError(f"ragged rows in {path}")
    return ComplexMatrix(np.array(rows, dtype=COMPLEX_DTYPE))
