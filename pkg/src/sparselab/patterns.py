"""Sparsity patterns: which positions each position may attend to.

A pattern is a cycle of p index-set families; layer l of a deep stack uses
family (l mod p) + 1.  Indices are 0-based internally; the JSON interchange
format is 1-based.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError

__all__ = [
    "SparsityPattern",
    "HeadConfig",
    "strided",
    "fixed",
    "star",
    "random_pattern",
    "window_global",
    "dense",
    "apply_head_config",
    "sparsity_level",
    "connection_count",
    "pattern_to_json_dict",
    "pattern_from_json_dict",
    "save_pattern",
    "load_pattern",
]


@dataclass(frozen=True)
class SparsityPattern:
    """Immutable cycle of per-position attendable-index sets.

    sets[l][k] is the sorted tuple of positions that position k may attend
    to in cycle slot l.  Every sets[l][k] must be nonempty.
    """

    n: int
    sets: tuple[tuple[tuple[int, ...], ...], ...]

    def __post_init__(self):
        if self.n < 1:
            raise ParameterError("n must be >= 1")
        if len(self.sets) < 1:
            raise ParameterError("pattern needs at least one set family")
        for fam in self.sets:
            if len(fam) != self.n:
                raise ParameterError("each family needs one set per position")
            for k, s in enumerate(fam):
                if len(s) == 0:
                    raise ParameterError(f"A_{k} is empty")
                if any(not (0 <= j < self.n) for j in s):
                    raise ParameterError(f"A_{k} has out-of-range indices")
                if tuple(sorted(set(s))) != tuple(s):
                    raise ParameterError(f"A_{k} must be sorted and duplicate-free")

    @property
    def p(self) -> int:
        return len(self.sets)

    def family(self, l: int) -> tuple[tuple[int, ...], ...]:
        """Index sets for cycle slot l (0-based: 0 <= l < p)."""
        return self.sets[l]

    def family_for_layer(self, layer: int) -> tuple[tuple[int, ...], ...]:
        """Index sets used by 0-based layer `layer` of a deep stack."""
        return self.sets[layer % self.p]


class HeadConfig(enum.Enum):
    SEQUENTIAL = "sequential"
    UNION = "union"
    MULTIHEAD = "multihead"


def _make(n, families) -> SparsityPattern:
    return SparsityPattern(
        n=n,
        sets=tuple(tuple(tuple(sorted(s)) for s in fam) for fam in families),
    )


def strided(n: int, w: int) -> SparsityPattern:
    """Window family plus stride-w family (p=2)."""
    if n < 1 or w < 1:
        raise ParameterError("strided requires n >= 1 and w >= 1")
    half_up = -(-w // 2)  # ceil(w/2)
    a1 = [
        [j for j in range(max(0, k - half_up), min(n, k + w // 2 + 1))]
        for k in range(n)
    ]
    a2 = [[j for j in range(n) if (j - k) % w == 0] for k in range(n)]
    return _make(n, [a1, a2])


def fixed(n: int, w: int) -> SparsityPattern:
    """Own-segment family plus segment-anchor family (p=2).

    Segments are the w-aligned blocks [mw, (m+1)w); anchors are the last
    position of every segment.
    """
    if n < 1 or w < 1:
        raise ParameterError("fixed requires n >= 1 and w >= 1")
    a1 = []
    for k in range(n):
        seg = k // w
        a1.append([j for j in range(seg * w, min(n, (seg + 1) * w))])
    anchors = [j for j in range(n) if (j + 1) % w == 0]
    a2 = [sorted(set(anchors) | {k}) for k in range(n)]
    return _make(n, [a1, a2])


def star(n: int, w: int) -> SparsityPattern:
    """Relay topology (p=1): a wrapped +-w window over the first n-1
    positions, everyone sees the relay position n-1, and the relay sees all.

    When n-1 <= 2w the wrapped window already covers all of the first n-1
    positions and the pattern degenerates toward dense; this is allowed.
    """
    if n < 2 or w < 1:
        raise ParameterError("star requires n >= 2 and w >= 1")
    fam = []
    for k in range(n - 1):
        s = {n - 1} | {(j % (n - 1)) for j in range(k - w, k + w + 1)}
        fam.append(sorted(s))
    fam.append(list(range(n)))
    return _make(n, [fam])


def random_pattern(
    n: int,
    target_sparsity: float,
    seed: int,
    include_self: bool = True,
) -> SparsityPattern:
    """Independent Bernoulli connections with expected density
    1 - target_sparsity (p=1).

    With include_self the diagonal is forced in.  Without it, a position
    whose draws all came up empty gets one uniformly drawn connection so
    the nonempty-set invariant holds (self-inclusion may still fail).
    """
    if n < 1:
        raise ParameterError("n must be >= 1")
    if not 0.0 <= target_sparsity < 1.0:
        raise ParameterError("target_sparsity must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    keep = rng.random((n, n)) < (1.0 - target_sparsity)
    fam = []
    for k in range(n):
        s = set(np.nonzero(keep[k])[0].tolist())
        if include_self:
            s.add(k)
        if not s:
            s.add(int(rng.integers(n)))
        fam.append(sorted(s))
    return _make(n, [fam])


def window_global(n: int, w: int, g: int) -> SparsityPattern:
    """Local +-w window plus g global positions that see and are seen by
    everyone (p=1)."""
    if n < 1 or w < 0 or g < 0 or g > n:
        raise ParameterError("window_global requires n >= 1, w >= 0, 0 <= g <= n")
    fam = []
    for k in range(n):
        if k < g:
            fam.append(list(range(n)))
        else:
            s = set(range(max(0, k - w), min(n, k + w + 1)))
            s.add(k)
            s.update(range(g))
            fam.append(sorted(s))
    return _make(n, [fam])


def dense(n: int) -> SparsityPattern:
    """Every position attends to every position (p=1)."""
    if n < 1:
        raise ParameterError("n must be >= 1")
    return _make(n, [[list(range(n))] * n])


def apply_head_config(pat: SparsityPattern, config: HeadConfig):
    """Resolve a head configuration against a pattern.

    SEQUENTIAL returns the pattern unchanged (layers cycle through the
    families).  UNION merges all families into a single p=1 pattern.
    MULTIHEAD returns a tuple of p single-family patterns, one per head
    group.
    """
    if config is HeadConfig.SEQUENTIAL:
        return pat
    if config is HeadConfig.UNION:
        merged = []
        for k in range(pat.n):
            s = set()
            for fam in pat.sets:
                s.update(fam[k])
            merged.append(sorted(s))
        return _make(pat.n, [merged])
    if config is HeadConfig.MULTIHEAD:
        return tuple(_make(pat.n, [fam]) for fam in pat.sets)
    raise ParameterError(f"unknown head config {config!r}")


def sparsity_level(pat: SparsityPattern) -> float:
    """1 - mean over families of (total connections / n^2)."""
    n2 = pat.n * pat.n
    dens = [sum(len(s) for s in fam) / n2 for fam in pat.sets]
    return 1.0 - sum(dens) / len(dens)


def connection_count(pat: SparsityPattern) -> int:
    """Largest per-family number of (position, attended) pairs — the
    connections one attention layer evaluates."""
    return max(sum(len(s) for s in fam) for fam in pat.sets)


def pattern_to_json_dict(pat: SparsityPattern) -> dict:
    """JSON form; indices are 1-based in the file format."""
    return {
        "n": pat.n,
        "p": pat.p,
        "sets": [[[j + 1 for j in s] for s in fam] for fam in pat.sets],
    }


def pattern_from_json_dict(d: dict) -> SparsityPattern:
    n = int(d["n"])
    sets = d["sets"]
    if int(d.get("p", len(sets))) != len(sets):
        raise ParameterError("p does not match the number of set families")
    fams = [[[int(j) - 1 for j in s] for s in fam] for fam in sets]
    return _make(n, fams)


def save_pattern(pat: SparsityPattern, path) -> None:
    with open(path, "w") as f:
        json.dump(pattern_to_json_dict(pat), f, indent=1, sort_keys=True)
        f.write("\n")


def load_pattern(path) -> SparsityPattern:
    with open(path) as f:
        return pattern_from_json_dict(json.load(f))
