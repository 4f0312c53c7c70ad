"""Softmax-based approximations of the construction layers.

The exact pipeline gates and selects with hardmax.  Here the same layer
schedule runs with temperature-scaled softmax instead, using per-stage
temperatures derived from the error budget, and the deviation from the
exact integer pipeline is measured layer by layer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from ..errors import ParameterError
from ..numerics import PiecewiseLinear, relu
from ..probmaps import MapKind, ProbabilityMapSpec, assumption2_t, softmax
from .config import ConstructionConfig, u_vector
from .exact import (
    all_max_shift,
    contextual_map,
    enumerate_h,
    selective_shift,
    units_to_float,
)

__all__ = [
    "eval_relu_combination",
    "phi_relu_approx",
    "phi_prime_relu_approx",
    "ApproximationBudget",
    "approximation_budget",
    "SoftContextualResult",
    "soft_contextual_map",
    "verify_soft_contextual_map",
]

_SOFTMAX = ProbabilityMapSpec(kind=MapKind.SOFTMAX)


def eval_relu_combination(combo, t):
    """Evaluate sum_i coef_i * relu(t - shift_i) for combo = ((coef, shift), ...)."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    for coef, shift in combo:
        out += coef * relu(t - shift)
    return out if out.ndim else float(out)


def phi_relu_approx(delta: float, alpha: float):
    """Three-ReLU approximation of the flooring activation phi.

    Agrees with phi everywhere except on ((1-alpha)*delta, delta), an
    interval of length alpha*delta.  Returns (relu_combination,
    PiecewiseLinear) computing the same function two ways.
    """
    if not 0 < alpha < 1:
        raise ParameterError("alpha must lie in (0, 1)")
    if delta <= 0:
        raise ParameterError("delta must be positive")
    combo = (
        (-1.0, 0.0),
        (1.0 / alpha, (1.0 - alpha) * delta),
        (-(1.0 - alpha) / alpha, delta),
    )
    pwl = PiecewiseLinear(
        breakpoints=(0.0, (1.0 - alpha) * delta, delta),
        slopes=(0.0, -1.0, (1.0 - alpha) / alpha, 0.0),
        intercepts=(0.0, 0.0, -((1.0 - alpha) / alpha) * delta, 0.0),
    )
    return combo, pwl


def phi_prime_relu_approx(delta: float):
    """Four-ReLU trapezoid approximating the width-delta indicator bump:
    1 on [-delta/4, delta/4], linear ramps out to zero at +-delta/2."""
    if delta <= 0:
        raise ParameterError("delta must be positive")
    q = delta / 4.0
    combo = (
        (4.0 / delta, -2.0 * q),
        (-4.0 / delta, -q),
        (-4.0 / delta, q),
        (4.0 / delta, 2.0 * q),
    )
    pwl = PiecewiseLinear(
        breakpoints=(-2.0 * q, -q, q, 2.0 * q),
        slopes=(0.0, 4.0 / delta, 0.0, -4.0 / delta, 0.0),
        intercepts=(0.0, 2.0, 1.0, 2.0, 0.0),
    )
    return combo, pwl


@dataclass(frozen=True)
class ApproximationBudget:
    """Error budget: target resolution, margin, and per-stage softmax
    temperatures for the contextual-map approximation."""

    eps: float
    p_norm: float
    delta_tilde: float
    zeta: float
    stage_etas: tuple[float, ...]
    stage_ts: tuple[float, ...]
    allmax_eta: float
    allmax_t: float

    @property
    def deviation_bound(self) -> float:
        return self.delta_tilde / 4.0


def approximation_budget(cfg: ConstructionConfig, eps: float,
                         p_norm: float = 1.0) -> ApproximationBudget:
    """Split an output tolerance eps into per-stage mass budgets eta and
    the softmax temperatures t that achieve them."""
    if eps <= 0:
        raise ParameterError("eps must be positive")
    if p_norm < 1:
        raise ParameterError("p_norm must be >= 1")
    n, d, s = cfg.n, cfg.d, cfg.s
    delta = cfg.delta
    delta_tilde = min(delta, 2.0 ** (1.0 - 1.0 / p_norm) * eps / n ** (1.0 / p_norm))
    zeta = delta / 2.0

    stage_etas = []
    stage_ts = []
    for j in range(1, n):
        eta = 0.5 * delta ** (2 * d) * math.log(
            1.0 + delta ** ((j + 1) * d) * delta_tilde / (8.0 * n ** 2)
        )
        stage_etas.append(eta)
        stage_ts.append(assumption2_t(_SOFTMAX, zeta, eta, n))
    allmax_eta = delta ** (n * d) / (s * n) * math.log(
        1.0 + delta ** (s * (n * d + 1) + n * d) * delta_tilde
        / (2.0 ** (s + 3) * s ** s * n ** (s + 1))
    )
    allmax_t = assumption2_t(_SOFTMAX, zeta, allmax_eta, n)
    return ApproximationBudget(
        eps=eps,
        p_norm=p_norm,
        delta_tilde=delta_tilde,
        zeta=zeta,
        stage_etas=tuple(stage_etas),
        stage_ts=tuple(stage_ts),
        allmax_eta=allmax_eta,
        allmax_t=allmax_t,
    )


@dataclass(frozen=True)
class SoftContextualResult:
    matrix: np.ndarray
    ids: tuple[float, ...]
    max_first_row_deviation: float
    other_rows_exact: bool
    first_layer_exceeding: int | None
    num_attention_layers: int


def _soft_psi(zvals: np.ndarray, fam, b: float, t: float,
              norm: float) -> np.ndarray:
    """Column-wise soft selector: for each column k, a softmax-weighted
    average of the id values over its attendable set, with scores
    t * norm * z_j * (z_k - b).  Positive (z_k - b) pulls toward the max,
    negative toward the min."""
    out = np.empty(zvals.shape[0])
    for k in range(zvals.shape[0]):
        vals = zvals[list(fam[k])]
        scores = t * norm * vals * (zvals[k] - b)
        out[k] = float(vals @ softmax(scores))
    return out


def soft_contextual_map(h_units, cfg: ConstructionConfig,
                        budget: ApproximationBudget,
                        t_scale: float = 1.0) -> SoftContextualResult:
    """Run the contextual-map schedule with softmax in place of hardmax.

    The exact integer pipeline advances in lockstep, and the first-row
    deviation (real scale) is tracked after every attention layer.  Score
    vectors are normalized by 2/delta so that the id gap (at least delta)
    and the query offset (at least delta/2) guarantee a top-score margin
    of at least zeta = delta/2, the margin the temperatures were sized
    for.  Rows other than the first are never touched by either pipeline.
    """
    n, d, p, dinv = cfg.n, cfg.d, cfg.p, cfg.delta_inv
    # Full invariant checking on the exact path happens here as well.
    exact_final = contextual_map(h_units, cfg)

    u_real = np.asarray(u_vector(d, dinv), dtype=float)
    z_int = [[int(v) for v in row] for row in h_units]
    z_soft = units_to_float(h_units, dinv)
    norm = 2.0 * dinv
    c_real = float(dinv ** d)
    omega_real = float(cfg.omega_mult)
    bound = budget.deviation_bound

    layer = 0
    max_dev = 0.0
    first_exceed: int | None = None
    other_exact = True

    def sync(dev_candidate: float):
        nonlocal max_dev, first_exceed
        if dev_candidate > max_dev:
            max_dev = dev_candidate
        if first_exceed is None and dev_candidate > bound:
            first_exceed = layer

    for i0 in range(1, n):
        l = cfg.step_families[i0 - 1]
        fam = cfg.pattern.family(l)
        t_stage = budget.stage_ts[i0 - 1] * t_scale
        base = (i0 - 1) * cfg.delta_units
        for off in range(dinv ** d):
            b_center = base + off
            b_lo = Fraction(b_center, dinv) - Fraction(1, 2 * dinv)
            b_hi = Fraction(b_center, dinv) + Fraction(1, 2 * dinv)
            for slot in range(p):
                if slot == l:
                    z_int, _ = selective_shift(
                        z_int, cfg.pattern, l, dinv ** d, b_lo, b_hi, dinv
                    )
                    zvals = u_real @ z_soft
                    psi_lo = _soft_psi(zvals, fam, float(b_lo), t_stage, norm)
                    psi_hi = _soft_psi(zvals, fam, float(b_hi), t_stage, norm)
                    z_soft = z_soft.copy()
                    z_soft[0] += c_real * (psi_lo - psi_hi)
                layer += 1
            exact_row0 = np.asarray(z_int[0], dtype=float) / dinv
            sync(float(np.max(np.abs(z_soft[0] - exact_row0))))

    for step in range(cfg.s):
        l = step % p
        fam = cfg.pattern.family(l)
        z_int = all_max_shift(z_int, cfg.pattern, l, cfg.omega_mult, dinv)
        zvals = u_real @ z_soft
        psi = _soft_psi(zvals, fam, 0.0, budget.allmax_t * t_scale, norm)
        z_soft = z_soft.copy()
        z_soft[0] += omega_real * psi
        layer += 1
        exact_row0 = np.asarray(z_int[0], dtype=float) / dinv
        sync(float(np.max(np.abs(z_soft[0] - exact_row0))))

    if tuple(tuple(row) for row in z_int) != exact_final.output_units:
        raise ParameterError("exact replay diverged from the reference run")
    for i in range(1, d):
        expected = np.asarray(z_int[i], dtype=float) / dinv
        if not np.array_equal(z_soft[i], expected):
            other_exact = False

    ids = tuple(float(v) for v in (u_real @ z_soft))
    return SoftContextualResult(
        matrix=z_soft,
        ids=ids,
        max_first_row_deviation=max_dev,
        other_rows_exact=other_exact,
        first_layer_exceeding=first_exceed,
        num_attention_layers=layer,
    )


def verify_soft_contextual_map(cfg: ConstructionConfig,
                               budget: ApproximationBudget,
                               t_scale: float = 1.0) -> dict:
    """Exhaustively run the soft pipeline and report whether the budget
    bound held, whether untouched rows stayed exact, and whether the
    soft ids remain globally distinct."""
    max_dev = 0.0
    worst_layer = None
    other_exact = True
    all_ids: list[float] = []
    for _, units in enumerate_h(cfg):
        res = soft_contextual_map(units, cfg, budget, t_scale=t_scale)
        if res.max_first_row_deviation > max_dev:
            max_dev = res.max_first_row_deviation
        if res.first_layer_exceeding is not None and worst_layer is None:
            worst_layer = res.first_layer_exceeding
        other_exact = other_exact and res.other_rows_exact
        all_ids.extend(res.ids)
    distinct = len(set(all_ids)) == len(all_ids)
    return {
        "max_deviation": max_dev,
        "bound": budget.deviation_bound,
        "bound_ok": max_dev <= budget.deviation_bound,
        "first_layer_exceeding": worst_layer,
        "other_rows_exact": other_exact,
        "num_ids": len(all_ids),
        "ids_distinct": distinct,
    }
