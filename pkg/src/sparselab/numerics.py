"""Dense-matrix and scalar-function kernels used by the rest of the package.

Matrices are two-dimensional C-order float64 numpy arrays.  All public
operations reject NaN inputs and validate shapes, and repeated calls on the
same operands return bit-identical results (fixed BLAS dispatch for a given
shape on a given platform).
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ShapeError

__all__ = [
    "as_matrix",
    "matmul",
    "argmax_col",
    "relu",
    "PiecewiseLinear",
    "eval_pwl",
]


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Validate and return `a` as a 2-D C-order float64 array."""
    m = np.ascontiguousarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got ndim={m.ndim}")
    if np.isnan(m).any():
        raise ParameterError(f"{name} contains NaN")
    return m


def matmul(a, b) -> np.ndarray:
    """Matrix product a @ b with shape validation."""
    am = as_matrix(a, "a")
    bm = as_matrix(b, "b")
    if am.shape[1] != bm.shape[0]:
        raise ShapeError(f"inner dimensions differ: {am.shape} @ {bm.shape}")
    return am @ bm


def argmax_col(v) -> int:
    """Index of the largest entry of a vector; ties go to the lowest index."""
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ShapeError("argmax_col expects a nonempty 1-D vector")
    if np.isnan(arr).any():
        raise ParameterError("argmax_col input contains NaN")
    # np.argmax already returns the first maximal index.
    return int(np.argmax(arr))


def relu(t):
    """Elementwise max(0, t) for scalars or arrays."""
    arr = np.asarray(t, dtype=np.float64)
    if np.isnan(arr).any():
        raise ParameterError("relu input contains NaN")
    out = np.maximum(arr, 0.0)
    return float(out) if np.isscalar(t) or arr.ndim == 0 else out


@dataclass(frozen=True)
class PiecewiseLinear:
    """Piecewise-linear scalar function, right-continuous at breakpoints.

    With B breakpoints b_0 < ... < b_{B-1} there are B+1 pieces; piece i
    applies on [b_{i-1}, b_i) (piece 0 on (-inf, b_0), piece B on
    [b_{B-1}, inf)).  Each piece is slope*t + intercept.
    """

    breakpoints: tuple[float, ...]
    slopes: tuple[float, ...]
    intercepts: tuple[float, ...]

    def __post_init__(self):
        bp, sl, ic = self.breakpoints, self.slopes, self.intercepts
        if len(sl) != len(bp) + 1 or len(ic) != len(bp) + 1:
            raise ShapeError("need exactly len(breakpoints)+1 pieces")
        vals = bp + sl + ic
        if any(np.isnan(v) for v in vals):
            raise ParameterError("PiecewiseLinear parameters contain NaN")
        if any(b2 <= b1 for b1, b2 in zip(bp, bp[1:])):
            raise ParameterError("breakpoints must be strictly increasing")

    def __call__(self, t):
        return eval_pwl(self, t)


def eval_pwl(pwl: PiecewiseLinear, t):
    """Evaluate a PiecewiseLinear at scalar or array `t` (right-continuous)."""
    arr = np.asarray(t, dtype=np.float64)
    if np.isnan(arr).any():
        raise ParameterError("eval_pwl input contains NaN")
    if arr.ndim == 0:
        i = bisect.bisect_right(pwl.breakpoints, float(arr))
        return pwl.slopes[i] * float(arr) + pwl.intercepts[i]
    idx = np.searchsorted(np.asarray(pwl.breakpoints), arr, side="right")
    slopes = np.asarray(pwl.slopes)[idx]
    intercepts = np.asarray(pwl.intercepts)[idx]
    return slopes * arr + intercepts
