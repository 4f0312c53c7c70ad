"""Column-stochastic probability maps and their saturation scaling.

Every map sends a score vector to the probability simplex.  For each map
kind there is a closed-form scaling t(zeta, eta, n) such that whenever the
top score leads the rest by at least zeta, the map applied to t*v puts at
least 1 - eta of the mass on the top entry.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError

__all__ = [
    "MapKind",
    "ProbabilityMapSpec",
    "softmax",
    "hardmax",
    "topk_softmax",
    "sparselin_gen",
    "entmax",
    "apply_map",
    "apply_columns",
    "assumption2_t",
    "check_assumption2",
]


class MapKind(enum.Enum):
    SOFTMAX = "softmax"
    HARDMAX = "hardmax"
    TOPK = "topk"
    SPARSELIN = "sparselin"
    ENTMAX = "entmax"


@dataclass(frozen=True)
class ProbabilityMapSpec:
    """A map kind plus its parameter (k, lam, or alpha where applicable)."""

    kind: MapKind
    k: int | None = None
    lam: float | None = None
    alpha: float | None = None

    def __post_init__(self):
        if self.kind is MapKind.TOPK:
            if self.k is None or self.k < 1:
                raise ParameterError("topk needs k >= 1")
        if self.kind is MapKind.SPARSELIN:
            if self.lam is None or not 0.0 <= self.lam < 1.0:
                raise ParameterError("sparselin needs lam in [0, 1)")
        if self.kind is MapKind.ENTMAX:
            if self.alpha is None or self.alpha < 1.0:
                raise ParameterError("entmax needs alpha >= 1")


def _as_columns(v) -> tuple[np.ndarray, bool]:
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim == 1:
        return arr[:, None], True
    if arr.ndim == 2:
        return arr, False
    raise ParameterError("expected a vector or a matrix of columns")


def _validate(arr: np.ndarray):
    if arr.shape[0] == 0:
        raise ParameterError("empty score vector")
    if not np.isfinite(arr).all():
        raise ParameterError("scores must be finite")


def _ret(out: np.ndarray, was_vec: bool):
    return out[:, 0] if was_vec else out


def softmax(v):
    """exp(v - max) normalized, columnwise for matrix input."""
    arr, was_vec = _as_columns(v)
    _validate(arr)
    e = np.exp(arr - arr.max(axis=0, keepdims=True))
    return _ret(e / e.sum(axis=0, keepdims=True), was_vec)


def hardmax(v):
    """One-hot at the largest entry; ties go to the lowest index."""
    arr, was_vec = _as_columns(v)
    _validate(arr)
    out = np.zeros_like(arr)
    out[np.argmax(arr, axis=0), np.arange(arr.shape[1])] = 1.0
    return _ret(out, was_vec)


def topk_softmax(v, k: int):
    """Softmax restricted to the k largest entries (ties: lowest index)."""
    if k < 1:
        raise ParameterError("k must be >= 1")
    arr, was_vec = _as_columns(v)
    _validate(arr)
    n = arr.shape[0]
    kk = min(k, n)
    # Stable sort of -v puts equal values in index order.
    order = np.argsort(-arr, axis=0, kind="stable")
    keep = np.zeros_like(arr, dtype=bool)
    np.put_along_axis(keep, order[:kk], True, axis=0)
    shifted = arr - arr.max(axis=0, keepdims=True)
    e = np.where(keep, np.exp(shifted), 0.0)
    return _ret(e / e.sum(axis=0, keepdims=True), was_vec)


def sparselin_gen(v, lam: float):
    """Thresholded-linear map: max(0, (v_j - tau)/(1 - lam)) summing to 1.

    tau is found by the sort-based support search; lam = 0 recovers the
    Euclidean projection onto the simplex.
    """
    if not 0.0 <= lam < 1.0:
        raise ParameterError("lam must lie in [0, 1)")
    arr, was_vec = _as_columns(v)
    _validate(arr)
    n = arr.shape[0]
    budget = 1.0 - lam
    vs = -np.sort(-arr, axis=0)
    css = np.cumsum(vs, axis=0)
    ranks = np.arange(1, n + 1, dtype=np.float64)[:, None]
    cond = vs > (css - budget) / ranks
    m = cond.sum(axis=0)  # support size; the condition is prefix-closed
    cols = np.arange(arr.shape[1])
    tau = (css[m - 1, cols] - budget) / m
    out = np.maximum(0.0, (arr - tau[None, :]) / budget)
    return _ret(out, was_vec)


def entmax(v, alpha: float, iters: int = 120):
    """Power-law map [max(0, (alpha-1) v_j - tau)]^(1/(alpha-1)) summing
    to 1; tau located by bisection.  alpha = 1 falls back to softmax;
    alpha = 2 is the simplex projection."""
    if alpha < 1.0:
        raise ParameterError("alpha must be >= 1")
    if alpha == 1.0:
        return softmax(v)
    arr, was_vec = _as_columns(v)
    _validate(arr)
    a1 = alpha - 1.0
    expo = 1.0 / a1
    scaled = a1 * arr
    lo = scaled.min(axis=0) - 1.0
    hi = scaled.max(axis=0)
    # f(tau) = sum max(0, scaled - tau)^expo - 1 is decreasing with
    # f(lo) >= 0 >= f(hi); bisect the bracket down to float resolution.
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        f = np.power(np.maximum(0.0, scaled - mid[None, :]), expo).sum(axis=0)
        take_hi = f > 1.0
        lo = np.where(take_hi, mid, lo)
        hi = np.where(take_hi, hi, mid)
    tau = 0.5 * (lo + hi)
    out = np.power(np.maximum(0.0, scaled - tau[None, :]), expo)
    return _ret(out, was_vec)


def apply_map(spec: ProbabilityMapSpec, v):
    """Apply the map described by `spec` to a score vector."""
    return apply_columns(spec, v)


def apply_columns(spec: ProbabilityMapSpec, m):
    """Apply the map columnwise (vector input gives vector output)."""
    if spec.kind is MapKind.SOFTMAX:
        return softmax(m)
    if spec.kind is MapKind.HARDMAX:
        return hardmax(m)
    if spec.kind is MapKind.TOPK:
        return topk_softmax(m, spec.k)
    if spec.kind is MapKind.SPARSELIN:
        return sparselin_gen(m, spec.lam)
    if spec.kind is MapKind.ENTMAX:
        return entmax(m, spec.alpha)
    raise ParameterError(f"unknown map kind {spec.kind!r}")


def assumption2_t(spec: ProbabilityMapSpec, zeta: float, eta: float, n: int) -> float:
    """Scaling t such that a zeta-separated maximum receives mass >= 1 - eta.

    Softmax/top-k: ln((n-1)(1-eta)/eta)/zeta (clamped at 0; for eta >=
    1 - 1/n even t = 0 meets the bound).  Thresholded-linear: (1-eta)/zeta.
    Entmax with alpha > 1: 1/(zeta (alpha-1)), independent of eta.
    Hardmax: 1.
    """
    if zeta <= 0:
        raise ParameterError("zeta must be > 0")
    if not 0.0 < eta < 1.0:
        raise ParameterError("eta must lie in (0, 1)")
    if n < 2:
        raise ParameterError("n must be >= 2")
    if spec.kind is MapKind.HARDMAX:
        return 1.0
    if spec.kind in (MapKind.SOFTMAX, MapKind.TOPK):
        return max(0.0, math.log((n - 1) * (1.0 - eta) / eta) / zeta)
    if spec.kind is MapKind.SPARSELIN:
        return (1.0 - eta) / zeta
    if spec.kind is MapKind.ENTMAX:
        if spec.alpha == 1.0:
            return max(0.0, math.log((n - 1) * (1.0 - eta) / eta) / zeta)
        return 1.0 / (zeta * (spec.alpha - 1.0))
    raise ParameterError(f"unknown map kind {spec.kind!r}")


def check_assumption2(
    spec: ProbabilityMapSpec,
    zeta: float,
    eta: float,
    n: int,
    trials: int = 10_000,
    seed: int = 0,
    t: float | None = None,
    slack: float = 1e-9,
) -> dict:
    """Empirical check that rho[t v] concentrates on a zeta-separated max.

    Random score vectors are drawn with the designated entry leading the
    rest by at least zeta (half the trials sit exactly on the boundary).
    The slack absorbs float rounding in the boundary-tight cases.
    """
    if t is None:
        t = assumption2_t(spec, zeta, eta, n)
    rng = np.random.default_rng(seed)
    v = rng.normal(0.0, 1.0, size=(n, trials))
    stars = rng.integers(0, n, size=trials)
    cols = np.arange(trials)
    extra = np.where(cols % 2 == 0, 0.0, rng.exponential(1.0, size=trials))
    v[stars, cols] = v.max(axis=0) + zeta * (1.0 + extra)
    probs = apply_columns(spec, t * v)
    star_mass = probs[stars, cols]
    ok = star_mass >= 1.0 - eta - slack
    worst = float(star_mass.min())
    return {
        "kind": spec.kind.value,
        "t": float(t),
        "zeta": zeta,
        "eta": eta,
        "n": n,
        "trials": trials,
        "failures": int((~ok).sum()),
        "worst_mass": worst,
        "passed": bool(ok.all()),
    }
