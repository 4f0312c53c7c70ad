"""Configuration and exact-integer conventions for the construction.

All matrices inside the construction pipeline are stored as nested lists of
Python ints counting delta-units (entry value = units / delta_inv), so every
intermediate is exact and cannot overflow.  A representability guard still
bounds configurations to a 126-bit envelope so the same configs remain
portable to fixed-width integer implementations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, ParameterError
from ..patterns import SparsityPattern
from ..verify import PROVEN, check_self_inclusion, find_gamma, min_coverage_s, union_family

__all__ = [
    "ConstructionConfig",
    "build_config",
    "u_vector",
    "positional_embedding",
    "positional_embedding_units",
]


def u_vector(d: int, delta_inv: int) -> tuple[int, ...]:
    """Column-id weights (1, 1/delta, ..., 1/delta^(d-1)); exact ints."""
    if d < 1 or delta_inv < 2:
        raise ParameterError("need d >= 1 and delta_inv >= 2")
    return tuple(delta_inv ** i for i in range(d))


def positional_embedding(n: int, d: int, gamma) -> np.ndarray:
    """Constant columns separating positions along the ordering gamma.

    Column gamma[0] is (n-1) * ones(d); column gamma[i] is (i-1) * ones(d)
    for i >= 1.  Every entry is an integer, exact in float64.
    """
    if sorted(gamma) != list(range(n)):
        raise ParameterError("gamma must be a permutation of 0..n-1")
    e = np.empty((d, n))
    e[:, gamma[0]] = n - 1
    for i in range(1, n):
        e[:, gamma[i]] = i - 1
    return e


def positional_embedding_units(n: int, d: int, gamma, delta_inv: int):
    """Same embedding in delta-units (nested lists of ints)."""
    vals = [0] * n
    vals[gamma[0]] = (n - 1) * delta_inv
    for i in range(1, n):
        vals[gamma[i]] = (i - 1) * delta_inv
    return [list(vals) for _ in range(d)]


@dataclass(frozen=True)
class ConstructionConfig:
    """Validated inputs of the construction.

    step_families[i-1] is the 0-based pattern family used when stage i
    shifts column gamma[i] (i = 1..n-1; the smallest family containing
    gamma[i-1] among gamma[i]'s attendable sets).
    """

    pattern: SparsityPattern
    d: int
    delta_inv: int
    gamma: tuple[int, ...]
    s: int
    step_families: tuple[int, ...]

    @property
    def n(self) -> int:
        return self.pattern.n

    @property
    def p(self) -> int:
        return self.pattern.p

    @property
    def delta(self) -> float:
        return 1.0 / self.delta_inv

    @property
    def u_units(self) -> tuple[int, ...]:
        return u_vector(self.d, self.delta_inv)

    @property
    def delta_units(self) -> int:
        """The column-id spacing Delta = sum_i delta^-i, in delta-units."""
        return sum(self.delta_inv ** i for i in range(1, self.d + 1))

    @property
    def omega_mult(self) -> int:
        """All-max-shift multiplier 2 s n / delta^(nd+1); also the modulus
        (in delta-units) of the mod identity."""
        return 2 * self.s * self.n * self.delta_inv ** (self.n * self.d + 1)

    @property
    def num_cells(self) -> int:
        return self.delta_inv ** (self.d * self.n)

    @property
    def gq_depth(self) -> int:
        return self.d * self.n * self.delta_inv

    @property
    def gc_depth(self) -> int:
        return self.p * (self.n - 1) * self.delta_inv ** self.d + self.s

    @property
    def gv_depth(self) -> int:
        return self.n * self.num_cells


def build_config(
    pattern: SparsityPattern,
    d: int,
    delta_inv: int,
    gamma=None,
    s_cap: int | None = None,
) -> ConstructionConfig:
    """Validate a pattern for the construction and freeze the choices.

    Requires self-inclusion, a proven ordering gamma, and finite coverage.
    """
    n = pattern.n
    if n < 2:
        raise ConfigError("construction needs n >= 2")
    if d < 1:
        raise ConfigError("construction needs d >= 1")
    if not isinstance(delta_inv, int) or delta_inv < 2:
        raise ConfigError("delta_inv must be an integer >= 2")
    if not check_self_inclusion(pattern):
        raise ConfigError("pattern must include every position in its own sets")

    unions = union_family(pattern)
    if gamma is None:
        status, gamma = find_gamma(pattern)
        if status != PROVEN:
            raise ConfigError(f"no ordering gamma available (status: {status})")
    else:
        gamma = tuple(gamma)
        if sorted(gamma) != list(range(n)):
            raise ConfigError("gamma must be a permutation of 0..n-1")
        for i in range(1, n):
            if gamma[i - 1] not in unions[gamma[i]]:
                raise ConfigError(
                    f"gamma[{i - 1}] not attendable from gamma[{i}]"
                )

    s = min_coverage_s(pattern, cap=s_cap)
    if s is None:
        raise ConfigError("coverage never reaches the full position set")

    step_families = []
    for i in range(1, n):
        fam_idx = next(
            l for l in range(pattern.p)
            if gamma[i - 1] in pattern.family(l)[gamma[i]]
        )
        step_families.append(fam_idx)

    cfg = ConstructionConfig(
        pattern=pattern,
        d=d,
        delta_inv=delta_inv,
        gamma=tuple(gamma),
        s=s,
        step_families=tuple(step_families),
    )
    guard = cfg.omega_mult ** s * n * delta_inv ** (n * d) * delta_inv
    if guard >= 2 ** 126:
        raise ConfigError("configuration exceeds the 126-bit value envelope")
    return cfg
