"""Exact pipeline: quantization, contextual map, value map.

Downstream of quantization everything runs in integer delta-units (entry
value = units / delta_inv), so the distinctness and equality claims are
checked with integer comparisons, never float tolerances.  Window bounds
sit on the half-delta grid and ids on the delta grid, which keeps every
comparison strict.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import floor

import numpy as np

from ..errors import ConfigError, IntegrityError, ParameterError, ShapeError
from ..numerics import PiecewiseLinear, as_matrix
from ..patterns import SparsityPattern
from .config import (
    ConstructionConfig,
    positional_embedding,
    positional_embedding_units,
    u_vector,
)

__all__ = [
    "snap_floor",
    "phi_quantize",
    "quantize_oracle",
    "build_gq_layers",
    "apply_gq",
    "to_units",
    "units_to_float",
    "column_ids",
    "selective_shift",
    "all_max_shift",
    "enumerate_h",
    "ContextualMapResult",
    "contextual_map",
    "ConstructionReport",
    "verify_contextual_map",
    "ValueMapLayer",
    "value_map_build",
    "value_map_apply",
    "end_to_end",
]

SNAP_REL = 1e-9


def snap_floor(x: float) -> int:
    """floor(x), treating values within 1e-9 (relative) of an integer as
    that integer, so on-grid floats that picked up rounding dust do not
    fall into the neighboring cell."""
    r = round(x)
    if abs(x - r) <= SNAP_REL * max(1.0, abs(x)):
        return int(r)
    return int(floor(x))


def phi_quantize(delta: float) -> PiecewiseLinear:
    """The flooring activation: phi(t) = -t on [0, delta), 0 elsewhere."""
    if delta <= 0:
        raise ParameterError("delta must be positive")
    return PiecewiseLinear(
        breakpoints=(0.0, delta),
        slopes=(0.0, -1.0, 0.0),
        intercepts=(0.0, 0.0, 0.0),
    )


def quantize_oracle(t, delta_inv: int, n: int) -> Fraction:
    """Reference quantizer: floor t to the delta grid on [0, n), identity
    elsewhere.  Exact rational arithmetic; t may be int, float, Fraction."""
    tf = Fraction(t)
    if 0 <= tf < n:
        return Fraction(floor(tf * delta_inv), delta_inv)
    return tf


def build_gq_layers(cfg: ConstructionConfig) -> tuple[tuple[int, int], ...]:
    """(row, cell) pairs, one feed-forward layer each, grouped by row.
    Layer (i, k) maps entry t of row i to t + phi(t - k*delta)."""
    return tuple(
        (row, cell)
        for row in range(cfg.d)
        for cell in range(cfg.n * cfg.delta_inv)
    )


def apply_gq(x, cfg: ConstructionConfig) -> np.ndarray:
    """Run the quantization layer stack on a (d, n) float matrix."""
    z = as_matrix(x, "x").copy()
    if z.shape != (cfg.d, cfg.n):
        raise ShapeError(f"x shape {z.shape}, expected {(cfg.d, cfg.n)}")
    for row, cell in build_gq_layers(cfg):
        for col in range(cfg.n):
            if snap_floor(z[row, col] * cfg.delta_inv) == cell:
                z[row, col] = cell / cfg.delta_inv
    return z


def to_units(x, delta_inv: int) -> list[list[int]]:
    """Convert an on-grid float matrix to integer delta-units."""
    z = as_matrix(x, "x")
    units: list[list[int]] = []
    for row in z:
        urow = []
        for v in row:
            scaled = v * delta_inv
            u = round(scaled)
            if abs(scaled - u) > SNAP_REL * max(1.0, abs(scaled)):
                raise IntegrityError(f"value {v} is not on the delta lattice")
            urow.append(int(u))
        units.append(urow)
    return units


def units_to_float(units, delta_inv: int) -> np.ndarray:
    return np.asarray(units, dtype=float) / delta_inv


def column_ids(units, u_units) -> list[int]:
    """Column ids in delta-scale: id_k = sum_i delta_inv^i * units[i][k],
    i.e. the real value u^T Z_k divided by delta."""
    d = len(units)
    n = len(units[0])
    return [sum(u_units[i] * units[i][k] for i in range(d)) for k in range(n)]


def selective_shift(z_units, pattern: SparsityPattern, l: int, c: int,
                    b_lo, b_hi, delta_inv: int):
    """Shift row 0 of every column whose id value lies strictly inside
    (b_lo, b_hi) by c * (max - min of the id values over the column's
    attendable set); leave all other entries untouched.

    b_lo and b_hi are real values (exact rationals); ids landing exactly
    on a bound are rejected, since behavior there is undefined.
    Returns (new_units, fired_columns).
    """
    if not isinstance(c, int):
        raise ParameterError("c must be an integer for exact arithmetic")
    blo, bhi = Fraction(b_lo), Fraction(b_hi)
    if not blo < bhi:
        raise ParameterError("need b_lo < b_hi")
    d = len(z_units)
    n = len(z_units[0])
    if pattern.n != n:
        raise ShapeError(f"pattern has n={pattern.n}, matrix has n={n}")
    fam = pattern.family(l)
    ids = column_ids(z_units, u_vector(d, delta_inv))
    new = [list(row) for row in z_units]
    fired = []
    for k in range(n):
        zk = Fraction(ids[k], delta_inv)
        if zk == blo or zk == bhi:
            raise IntegrityError(f"column {k} id sits exactly on a window bound")
        if blo < zk < bhi:
            mx = max(ids[j] for j in fam[k])
            mn = min(ids[j] for j in fam[k])
            new[0][k] += c * (mx - mn)
            fired.append(k)
    return new, fired


def all_max_shift(z_units, pattern: SparsityPattern, l: int, c: int,
                  delta_inv: int):
    """Shift row 0 of every column by c * (max id value over the column's
    attendable set).  Requires all id values strictly positive."""
    if not isinstance(c, int):
        raise ParameterError("c must be an integer for exact arithmetic")
    d = len(z_units)
    n = len(z_units[0])
    if pattern.n != n:
        raise ShapeError(f"pattern has n={pattern.n}, matrix has n={n}")
    fam = pattern.family(l)
    ids = column_ids(z_units, u_vector(d, delta_inv))
    if min(ids) <= 0:
        raise ParameterError("all-max shift requires positive column values")
    new = [list(row) for row in z_units]
    for k in range(n):
        new[0][k] += c * max(ids[j] for j in fam[k])
    return new


def enumerate_h(cfg: ConstructionConfig):
    """Yield (cell_index, H_units) over every quantized input plus the
    positional embedding.  Digit (i*n + k) of the mixed-radix cell index,
    base delta_inv, is the grid coordinate of entry (i, k)."""
    base = positional_embedding_units(cfg.n, cfg.d, cfg.gamma, cfg.delta_inv)
    for idx in range(cfg.num_cells):
        units = [row.copy() for row in base]
        rem = idx
        for i in range(cfg.d):
            for k in range(cfg.n):
                units[i][k] += rem % cfg.delta_inv
                rem //= cfg.delta_inv
        yield idx, units


@dataclass(frozen=True)
class ContextualMapResult:
    """Outcome of the contextual-map layer stack on one input."""

    input_ids: tuple[int, ...]
    shifted_units: tuple[tuple[int, ...], ...]
    shifted_ids: tuple[int, ...]
    output_units: tuple[tuple[int, ...], ...]
    output_ids: tuple[int, ...]
    num_attention_layers: int
    fired_b: tuple[int, ...]


def _check_h_precondition(units, cfg: ConstructionConfig):
    e_units = positional_embedding_units(cfg.n, cfg.d, cfg.gamma, cfg.delta_inv)
    for i in range(cfg.d):
        for k in range(cfg.n):
            lo = e_units[i][k]
            if not lo <= units[i][k] < lo + cfg.delta_inv:
                raise ConfigError(
                    f"entry ({i}, {k}) is not a quantized grid value plus "
                    "the positional embedding"
                )


def contextual_map(h_units, cfg: ConstructionConfig) -> ContextualMapResult:
    """Run the selective-shift stages and all-max layers on one input.

    Every internal invariant is asserted: per stage exactly one column
    (the scheduled one) takes a strictly positive shift, ids stay strictly
    increasing along the ordering, and the pre-all-max ids stay inside
    (0, n/delta^(nd+1)) so the mod identity can recover them.
    """
    n, d, p, dinv = cfg.n, cfg.d, cfg.p, cfg.delta_inv
    z = [[int(v) for v in row] for row in h_units]
    if len(z) != d or any(len(row) != n for row in z):
        raise ShapeError(f"H has shape ({len(z)}, {len(z[0])}), expected ({d}, {n})")
    _check_h_precondition(z, cfg)

    u = u_vector(d, dinv)
    input_ids = column_ids(z, u)
    gamma = cfg.gamma
    c = dinv ** d
    layers = 0
    fired_b = []
    for i0 in range(1, n):
        l = cfg.step_families[i0 - 1]
        base = (i0 - 1) * cfg.delta_units
        before = column_ids(z, u)
        stage_fires = []
        for off in range(dinv ** d):
            b_center = base + off
            b_lo = Fraction(b_center, dinv) - Fraction(1, 2 * dinv)
            b_hi = Fraction(b_center, dinv) + Fraction(1, 2 * dinv)
            for slot in range(p):
                if slot == l:
                    z, fired = selective_shift(
                        z, cfg.pattern, l, c, b_lo, b_hi, dinv
                    )
                    stage_fires.extend((b_center, k) for k in fired)
                layers += 1
        if len(stage_fires) != 1 or stage_fires[0][1] != gamma[i0]:
            raise IntegrityError(
                f"stage {i0}: expected one shift at column {gamma[i0]}, "
                f"observed {stage_fires}"
            )
        after = column_ids(z, u)
        if after[gamma[i0]] <= before[gamma[i0]]:
            raise IntegrityError(f"stage {i0}: shift amount was not positive")
        if after[gamma[i0]] <= after[gamma[i0 - 1]]:
            raise IntegrityError(
                f"stage {i0}: ids not strictly increasing along the ordering"
            )
        fired_b.append(stage_fires[0][0])

    shifted_units = tuple(tuple(row) for row in z)
    shifted_ids = tuple(column_ids(z, u))
    id_cap = n * dinv ** (n * d + 1)
    for k, zid in enumerate(shifted_ids):
        if not 0 < zid < id_cap:
            raise IntegrityError(
                f"pre-all-max id of column {k} outside (0, n/delta^(nd+1))"
            )

    for t in range(cfg.s):
        z = all_max_shift(z, cfg.pattern, t % p, cfg.omega_mult, dinv)
        layers += 1
    if layers != cfg.gc_depth:
        raise IntegrityError(
            f"layer count {layers} != expected depth {cfg.gc_depth}"
        )

    return ContextualMapResult(
        input_ids=tuple(input_ids),
        shifted_units=shifted_units,
        shifted_ids=shifted_ids,
        output_units=tuple(tuple(row) for row in z),
        output_ids=tuple(column_ids(z, u)),
        num_attention_layers=layers,
        fired_b=tuple(fired_b),
    )


@dataclass(frozen=True)
class ConstructionReport:
    """Verification outcome over the exhaustive input enumeration."""

    n: int
    d: int
    delta_inv: int
    p: int
    s: int
    num_sequences: int
    num_ids: int
    within_sequence_distinct: bool
    distinct: bool
    min_gap_delta_units: int | None
    mod_check: bool
    depth_counts: dict
    soft_max_deviation: float | None = None

    @property
    def passed(self) -> bool:
        return self.within_sequence_distinct and self.distinct and self.mod_check

    def to_json_dict(self) -> dict:
        return {
            "config": {
                "n": self.n,
                "d": self.d,
                "delta_inv": self.delta_inv,
                "p": self.p,
                "s": self.s,
            },
            "num_sequences": self.num_sequences,
            "num_ids": self.num_ids,
            "distinct": self.distinct and self.within_sequence_distinct,
            "min_gap_delta_units": self.min_gap_delta_units,
            "depth_counts": dict(self.depth_counts),
            "mod_check": self.mod_check,
            "soft_max_deviation": self.soft_max_deviation,
        }


def verify_contextual_map(cfg: ConstructionConfig,
                          budget: int = 10 ** 6) -> ConstructionReport:
    """Enumerate every quantized input and check the id claims:
    per-input distinctness, global distinctness of all n * delta^(-dn)
    ids, and recovery of the pre-all-max ids via mod omega."""
    if cfg.num_cells > budget:
        raise ConfigError(
            f"enumeration size {cfg.num_cells} exceeds budget {budget}"
        )
    all_ids: list[int] = []
    within_ok = True
    mod_ok = True
    contextual_depth = None
    for _, units in enumerate_h(cfg):
        res = contextual_map(units, cfg)
        contextual_depth = res.num_attention_layers
        if len(set(res.output_ids)) != cfg.n:
            within_ok = False
        for out_id, shifted_id in zip(res.output_ids, res.shifted_ids):
            if out_id % cfg.omega_mult != shifted_id:
                mod_ok = False
        all_ids.extend(res.output_ids)

    distinct = len(set(all_ids)) == len(all_ids)
    min_gap = None
    if distinct and len(all_ids) > 1:
        ordered = sorted(all_ids)
        min_gap = min(b - a for a, b in zip(ordered, ordered[1:]))
    return ConstructionReport(
        n=cfg.n,
        d=cfg.d,
        delta_inv=cfg.delta_inv,
        p=cfg.p,
        s=cfg.s,
        num_sequences=cfg.num_cells,
        num_ids=len(all_ids),
        within_sequence_distinct=within_ok,
        distinct=distinct,
        min_gap_delta_units=min_gap,
        mod_check=mod_ok,
        depth_counts={
            "quantize": len(build_gq_layers(cfg)),
            "contextual": contextual_depth,
            "value": cfg.gv_depth,
        },
    )


@dataclass(frozen=True)
class ValueMapLayer:
    """One feed-forward layer of the value map: when a column's id value
    falls in [id - 1/2, id + 1/2) delta-units, add (target - current);
    the additive constant is carried in exact real arithmetic by storing
    both the current column and the target it must become."""

    id_units: int
    current_units: tuple[int, ...]
    target: tuple[float, ...]


def value_map_build(cfg: ConstructionConfig, fbar,
                    contexts=None) -> tuple[ValueMapLayer, ...]:
    """One layer per (input, column) pair, in enumeration order.

    Refuses duplicate ids, and refuses any table whose output columns
    could land inside another layer's firing window after replacement
    (checked in exact rational arithmetic), so no column ever fires twice.
    """
    if fbar.table.shape != (cfg.num_cells, cfg.d, cfg.n):
        raise ShapeError(
            f"table shape {fbar.table.shape}, expected "
            f"{(cfg.num_cells, cfg.d, cfg.n)}"
        )
    if contexts is None:
        contexts = [contextual_map(units, cfg) for _, units in enumerate_h(cfg)]
    layers: list[ValueMapLayer] = []
    seen: set[int] = set()
    for cell, res in enumerate(contexts):
        for k in range(cfg.n):
            zid = res.output_ids[k]
            if zid in seen:
                raise IntegrityError(f"duplicate context id {zid}")
            seen.add(zid)
            layers.append(ValueMapLayer(
                id_units=zid,
                current_units=tuple(res.output_units[i][k] for i in range(cfg.d)),
                target=tuple(float(fbar.table[cell][i, k]) for i in range(cfg.d)),
            ))
    if len(layers) != cfg.gv_depth:
        raise IntegrityError(
            f"built {len(layers)} value layers, expected {cfg.gv_depth}"
        )

    u = u_vector(cfg.d, cfg.delta_inv)
    half = Fraction(1, 2)
    target_ids = [
        sum(Fraction(lay.target[i]) * u[i] for i in range(cfg.d)) * cfg.delta_inv
        for lay in layers
    ]
    for tid in target_ids:
        for lay in layers:
            if lay.id_units - half <= tid < lay.id_units + half:
                raise IntegrityError(
                    "a target column would land inside the firing window of "
                    f"id {lay.id_units}; table not representable"
                )
    return tuple(layers)


def value_map_apply(z_units, layers, cfg: ConstructionConfig) -> np.ndarray:
    """Run the value-map layer stack on one contextual-map output."""
    n, d, dinv = cfg.n, cfg.d, cfg.delta_inv
    u = u_vector(d, dinv)
    ids = column_ids(z_units, u)
    replaced: list[np.ndarray | None] = [None] * n
    for lay in layers:
        for k in range(n):
            col = replaced[k]
            if col is None:
                if ids[k] == lay.id_units:
                    current = tuple(z_units[i][k] for i in range(d))
                    if current != lay.current_units:
                        raise IntegrityError(
                            f"column {k} matches id {lay.id_units} but not "
                            "the column recorded for it"
                        )
                    replaced[k] = np.array(lay.target)
            else:
                zval = sum(float(u[i]) * col[i] for i in range(d)) * dinv
                if lay.id_units - 0.5 <= zval < lay.id_units + 0.5:
                    raise IntegrityError(
                        f"replaced column {k} re-entered the window of id "
                        f"{lay.id_units}"
                    )
    if any(col is None for col in replaced):
        raise IntegrityError("some columns were never matched by a value layer")
    return np.stack(replaced, axis=1)


def end_to_end(cfg: ConstructionConfig, fbar, points_per_cell: int = 10,
               seed: int = 0) -> dict:
    """Compose quantization, contextual map, and value map, and compare
    with the target table on every cell corner plus random interior
    points.  Reports mismatches instead of raising."""
    rng = np.random.default_rng(seed)
    e_real = positional_embedding(cfg.n, cfg.d, cfg.gamma)
    e_units = positional_embedding_units(cfg.n, cfg.d, cfg.gamma, cfg.delta_inv)
    contexts = [contextual_map(units, cfg) for _, units in enumerate_h(cfg)]
    vmap = value_map_build(cfg, fbar, contexts=contexts)

    points_checked = 0
    mismatches = 0
    quantize_mismatches = 0
    oracle_mismatches = 0
    for cell in range(cfg.num_cells):
        grid = fbar.corner_units(cell)
        expected_units = [
            [int(grid[i, k]) + e_units[i][k] for k in range(cfg.n)]
            for i in range(cfg.d)
        ]
        xs = [grid / cfg.delta_inv]
        for _ in range(points_per_cell):
            xs.append((grid + rng.random((cfg.d, cfg.n))) / cfg.delta_inv)
        for which, x in enumerate(xs):
            xe = x + e_real
            q = apply_gq(xe, cfg)
            units = to_units(q, cfg.delta_inv)
            if units != expected_units:
                quantize_mismatches += 1
                continue
            if which > 0:
                for i in range(cfg.d):
                    for k in range(cfg.n):
                        want = quantize_oracle(Fraction(xe[i, k]),
                                               cfg.delta_inv, cfg.n)
                        if Fraction(units[i][k], cfg.delta_inv) != want:
                            oracle_mismatches += 1
            out = value_map_apply(contexts[cell].output_units, vmap, cfg)
            if not np.array_equal(out, fbar.table[cell]):
                mismatches += 1
            points_checked += 1

    return {
        "cells": cfg.num_cells,
        "points_checked": points_checked,
        "quantize_mismatches": quantize_mismatches,
        "oracle_mismatches": oracle_mismatches,
        "value_mismatches": mismatches,
        "exact": (mismatches == 0 and quantize_mismatches == 0
                  and oracle_mismatches == 0),
    }
