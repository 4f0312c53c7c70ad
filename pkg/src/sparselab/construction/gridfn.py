"""Piecewise-constant grid functions on the input cube [0, 1)^(d x n).

The cube is split into delta-cells; a grid function assigns one arbitrary
(d, n) output matrix per cell.  These serve both as approximation targets
and as the table the value map reproduces.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ParameterError, ShapeError
from ..numerics import as_matrix
from .exact import snap_floor

__all__ = ["GridFunction", "piecewise_constant_approx", "dp_distance"]


@dataclass(frozen=True)
class GridFunction:
    """A function constant on each delta-cell of [0, 1)^(d x n).

    table has shape (delta_inv^(d*n), d, n); row index encodes the cell in
    mixed radix: digit (i*n + k) of the index, base delta_inv, is the cell
    coordinate of entry (i, k).
    """

    n: int
    d: int
    delta_inv: int
    table: np.ndarray

    def __post_init__(self):
        expect = (self.delta_inv ** (self.d * self.n), self.d, self.n)
        if self.table.shape != expect:
            raise ShapeError(f"table shape {self.table.shape}, expected {expect}")

    @property
    def num_cells(self) -> int:
        return self.delta_inv ** (self.d * self.n)

    @classmethod
    def from_function(cls, fn, n: int, d: int, delta_inv: int) -> "GridFunction":
        """Tabulate fn at the lower-left corner of every cell."""
        num_cells = delta_inv ** (d * n)
        table = np.empty((num_cells, d, n))
        for idx in range(num_cells):
            corners = cls._corner_grid(idx, n, d, delta_inv) / delta_inv
            out = as_matrix(fn(corners), "fn output")
            if out.shape != (d, n):
                raise ShapeError(f"fn returned {out.shape}, expected {(d, n)}")
            table[idx] = out
        return cls(n=n, d=d, delta_inv=delta_inv, table=table)

    @classmethod
    def random(cls, n: int, d: int, delta_inv: int, seed: int = 0,
               scale: float = 1.0) -> "GridFunction":
        rng = np.random.default_rng(seed)
        num_cells = delta_inv ** (d * n)
        table = scale * rng.standard_normal((num_cells, d, n))
        return cls(n=n, d=d, delta_inv=delta_inv, table=table)

    @staticmethod
    def _corner_grid(idx: int, n: int, d: int, delta_inv: int) -> np.ndarray:
        g = np.empty((d, n))
        for i in range(d):
            for k in range(n):
                g[i, k] = idx % delta_inv
                idx //= delta_inv
        return g

    def corner_units(self, idx: int) -> np.ndarray:
        """Integer cell coordinates (d, n) of cell idx."""
        return self._corner_grid(idx, self.n, self.d, self.delta_inv)

    def cell_index_of(self, x) -> int:
        """Mixed-radix index of the cell containing x (entries in [0, 1))."""
        x = as_matrix(x, "x")
        if x.shape != (self.d, self.n):
            raise ShapeError(f"x shape {x.shape}, expected {(self.d, self.n)}")
        idx = 0
        weight = 1
        for i in range(self.d):
            for k in range(self.n):
                g = snap_floor(x[i, k] * self.delta_inv)
                if not 0 <= g < self.delta_inv:
                    raise ParameterError(
                        f"entry ({i}, {k}) = {x[i, k]} outside [0, 1)"
                    )
                idx += g * weight
                weight *= self.delta_inv
        return idx

    def __call__(self, x) -> np.ndarray:
        return self.table[self.cell_index_of(x)]


def piecewise_constant_approx(fn, n: int, d: int,
                              delta_inv: int) -> GridFunction:
    """Piecewise-constant approximation of fn on the delta-grid: each cell
    takes the value of fn at its lower-left corner."""
    return GridFunction.from_function(fn, n, d, delta_inv)


def dp_distance(f, g, p: float = 2.0, samples: int = 4096, seed: int = 0,
                shape: tuple[int, int] | None = None):
    """Monte-Carlo estimate of the L^p distance between f and g on the cube.

    Returns (estimate, standard_error).  f and g map (d, n) arrays in
    [0, 1)^(d x n) to (d, n) arrays; shape is inferred from GridFunction
    arguments when omitted.
    """
    if p <= 0:
        raise ParameterError("p must be positive")
    if shape is None:
        for h in (f, g):
            if isinstance(h, GridFunction):
                shape = (h.d, h.n)
                break
        else:
            raise ParameterError("pass shape=(d, n) for plain callables")
    d, n = shape
    rng = np.random.default_rng(seed)
    vals = np.empty(samples)
    for t in range(samples):
        x = rng.random((d, n))
        diff = np.asarray(f(x), dtype=float) - np.asarray(g(x), dtype=float)
        vals[t] = np.sum(np.abs(diff) ** p)
    mean = float(np.mean(vals))
    var = float(np.var(vals, ddof=1)) if samples > 1 else 0.0
    est = mean ** (1.0 / p)
    if mean > 0:
        stderr = (var / samples) ** 0.5 / (p * mean ** (1.0 - 1.0 / p))
    else:
        stderr = 0.0
    return est, stderr
