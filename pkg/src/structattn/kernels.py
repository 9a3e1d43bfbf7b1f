"""Spatial kernels and their token-grid matrix representations.

A kernel h of odd size f acting on an rows-by-cols token grid is
represented by an N-by-N matrix H (N = rows*cols, row-major
vectorization) such that H @ vec(x) equals sliding the kernel over x:

    (h * x)[r, c] = sum_{a,b} h[c0 + a, c0 + b] * x[r + a, c + b],

with c0 = (f - 1) // 2 and out-of-grid reads either dropped ("zero"
padding) or wrapped ("circular"). An impulse kernel, a single 1 at
offset (dr, dc) from the center, therefore shifts the grid: row i of H
picks out the token dr rows down and dc columns right of token i, so H
is a (sub-)permutation and, under circular padding, a true permutation.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ConfigurationError
from .validation import check_odd_filter_size, check_positive_int

__all__ = [
    "PADDING_MODES",
    "GridShape",
    "ImpulseOffset",
    "Kernel2D",
    "ConvMatrix",
    "make_impulse_kernel",
    "make_box_kernel",
    "sample_random_kernel",
    "sample_impulse_bank",
    "all_offsets",
    "make_conv_matrix",
]

PADDING_MODES = ("zero", "circular")


@dataclass(frozen=True)
class GridShape:
    """Token grid of `rows` x `cols` positions, vectorized row-major."""

    rows: int
    cols: int

    def __post_init__(self):
        check_positive_int(self.rows, "rows")
        check_positive_int(self.cols, "cols")

    @property
    def n_tokens(self):
        return self.rows * self.cols

    def flat_index(self, r, c):
        return r * self.cols + c


class ImpulseOffset(NamedTuple):
    """Displacement of an impulse from the kernel center, in (row, col)."""

    dr: int
    dc: int

    def flattened(self, grid):
        """Diagonal index of this offset on `grid`: dr*cols + dc."""
        return self.dr * grid.cols + self.dc


@dataclass(frozen=True)
class Kernel2D:
    """An f-by-f spatial filter with a record of how it was built."""

    weights: np.ndarray
    kind: str
    offset: ImpulseOffset | None = None

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] != w.shape[1] or w.shape[0] % 2 == 0:
            raise ConfigurationError(f"kernel weights must be square with odd size, got {w.shape}")
        if not np.all(np.isfinite(w)):
            raise ConfigurationError("kernel weights must be finite")
        object.__setattr__(self, "weights", w)

    @property
    def size(self):
        return self.weights.shape[0]

    @property
    def reach(self):
        return (self.size - 1) // 2

    def vectorized(self):
        return self.weights.ravel().copy()


@dataclass(frozen=True)
class ConvMatrix:
    """Matrix form of a kernel on a grid; `data` is N x N, row-major."""

    grid: GridShape
    data: np.ndarray
    source: Kernel2D
    padding: str

    def interior_row_mask(self):
        """Rows whose full kernel support lies inside the grid.

        Under zero padding an impulse row whose shifted source falls
        outside the grid is all-zero; those rows are the boundary.
        Under circular padding every row is interior.
        """
        return np.any(self.data != 0.0, axis=1)


def _check_offset(f, offset):
    reach = (f - 1) // 2
    if abs(offset[0]) > reach or abs(offset[1]) > reach:
        raise ConfigurationError(
            f"impulse offset {tuple(offset)} out of bounds for f={f} (|d| <= {reach})"
        )
    return ImpulseOffset(int(offset[0]), int(offset[1]))


def make_impulse_kernel(f, offset):
    """Kernel with a single 1 at center + (dr, dc), zeros elsewhere."""
    f = check_odd_filter_size(f)
    offset = _check_offset(f, offset)
    w = np.zeros((f, f))
    c = (f - 1) // 2
    w[c + offset.dr, c + offset.dc] = 1.0
    return Kernel2D(w, "impulse", offset)


def make_box_kernel(f):
    """All-ones averaging kernel; every box kernel spans the same line."""
    f = check_odd_filter_size(f)
    return Kernel2D(np.ones((f, f)), "box")


def sample_random_kernel(f, rng_seed):
    """Dense i.i.d. normal kernel, entries scaled by 1/f so total energy is O(1)."""
    f = check_odd_filter_size(f)
    rng = np.random.default_rng(rng_seed)
    return Kernel2D(rng.normal(0.0, 1.0, (f, f)) / f, "random")


def all_offsets(f):
    """The f*f impulse offsets in row-major order."""
    f = check_odd_filter_size(f)
    c = (f - 1) // 2
    return [ImpulseOffset(a, b) for a in range(-c, c + 1) for b in range(-c, c + 1)]


def sample_impulse_bank(count, f, rng_seed, strategy="coverage_first"):
    """Draw `count` impulse kernels.

    strategy "uniform" samples offsets independently; "coverage_first"
    concatenates random permutations of all f*f offsets, so every offset
    appears once before any repeats (and exactly `count / f**2` times
    when that ratio is an integer).
    """
    count = check_positive_int(count, "count")
    f = check_odd_filter_size(f)
    if strategy not in ("uniform", "coverage_first"):
        raise ConfigurationError(f"unknown impulse sampling strategy {strategy!r}")
    rng = np.random.default_rng(rng_seed)
    offsets = all_offsets(f)
    chosen = []
    if strategy == "uniform":
        idx = rng.integers(0, len(offsets), size=count)
        chosen = [offsets[i] for i in idx]
    else:
        while len(chosen) < count:
            for i in rng.permutation(len(offsets)):
                chosen.append(offsets[i])
        chosen = chosen[:count]
    return [make_impulse_kernel(f, off) for off in chosen]


def make_conv_matrix(kernel, grid, padding="zero"):
    """Build the N x N matrix H with H @ vec(x) == kernel slid over x.

    Parameters
    ----------
    kernel : Kernel2D
    grid : GridShape
    padding : {"zero", "circular"}
        "zero" drops reads outside the grid (boundary rows of an impulse
        matrix become all-zero); "circular" wraps them.

    Returns
    -------
    ConvMatrix
    """
    if padding not in PADDING_MODES:
        raise ConfigurationError(f"padding must be one of {PADDING_MODES}, got {padding!r}")
    f = kernel.size
    if f > 2 * min(grid.rows, grid.cols):
        raise ConfigurationError(
            f"kernel size {f} exceeds twice the smaller grid side of {grid.rows}x{grid.cols}"
        )
    n = grid.n_tokens
    rows = np.repeat(np.arange(grid.rows), grid.cols)
    cols = np.tile(np.arange(grid.cols), grid.rows)
    out = np.arange(n)
    data = np.zeros((n, n))
    c = kernel.reach
    for a in range(-c, c + 1):
        for b in range(-c, c + 1):
            w = kernel.weights[c + a, c + b]
            if w == 0.0:
                continue
            src_r = rows + a
            src_c = cols + b
            if padding == "circular":
                src = (src_r % grid.rows) * grid.cols + (src_c % grid.cols)
                data[out, src] += w
            else:
                ok = (src_r >= 0) & (src_r < grid.rows) & (src_c >= 0) & (src_c < grid.cols)
                data[out[ok], src_r[ok] * grid.cols + src_c[ok]] += w
    return ConvMatrix(grid=grid, data=data, source=kernel, padding=padding)
