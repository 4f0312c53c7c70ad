"""Checks that a sparsity pattern supports full information flow.

Three conditions are verified: every position attends to itself; the
"attends-to" digraph (edge j -> k iff j is in some A^l_k) has a Hamiltonian
path; and the coverage recursion

    S^1_k = A^1_k,   S^t_k = union over j in A^{lt}_k of S^{t-1}_j,

with lt cycling through the families, reaches the full position set for
every k after finitely many steps.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .errors import ParameterError
from .patterns import SparsityPattern

__all__ = [
    "check_self_inclusion",
    "union_family",
    "find_gamma",
    "coverage_sets",
    "min_coverage_s",
    "assumption_report",
    "AssumptionReport",
    "report_to_json_dict",
    "save_report",
]

PROVEN = "proven"
REFUTED = "refuted"
UNKNOWN = "unknown"


def check_self_inclusion(pat: SparsityPattern) -> bool:
    """True iff k is in A^l_k for every position k and every family l."""
    return all(k in fam[k] for fam in pat.sets for k in range(pat.n))


def union_family(pat: SparsityPattern) -> list[set[int]]:
    """Per-position union of attendable sets over all families."""
    out = []
    for k in range(pat.n):
        s = set()
        for fam in pat.sets:
            s.update(fam[k])
        out.append(s)
    return out


def _pred_masks(pat: SparsityPattern) -> list[int]:
    # pred[k] has bit j set iff j -> k is an edge (j attendable from k).
    return [sum(1 << j for j in s) for s in union_family(pat)]


def _check_path(path, preds) -> bool:
    return all(preds[path[i + 1]] >> path[i] & 1 for i in range(len(path) - 1))


def _exact_dp(n: int, preds):
    # Held-Karp style reachability: for each visited-set bitmask, the bitmask
    # of positions a Hamiltonian path over that set can end at.
    full = (1 << n) - 1
    ends = {1 << v: 1 << v for v in range(n)}
    frontier = list(ends.keys())
    for _ in range(n - 1):
        nxt = {}
        for mask in frontier:
            lasts = ends[mask]
            for v in range(n):
                bit = 1 << v
                if mask & bit:
                    continue
                if lasts & preds[v]:
                    key = mask | bit
                    nxt[key] = nxt.get(key, 0) | bit
        ends.update(nxt)
        frontier = list(nxt.keys())
        if not frontier:
            break
    if full not in ends:
        return None
    # Backtrack one witness path.
    path = []
    mask, lasts = full, ends[full]
    last = (lasts & -lasts).bit_length() - 1
    path.append(last)
    while mask != 1 << last:
        prev_mask = mask ^ (1 << last)
        cands = ends[prev_mask] & preds[last]
        last = (cands & -cands).bit_length() - 1
        path.append(last)
        mask = prev_mask
    path.reverse()
    return path


def _dfs_heuristic(n: int, preds, budget: int):
    # succ[v] = positions reachable from v in one step.
    succ = [0] * n
    for k in range(n):
        m = preds[k]
        while m:
            j = (m & -m).bit_length() - 1
            succ[j] |= 1 << k
            m &= m - 1

    def popcount(x):
        return bin(x).count("1")

    order = sorted(range(n), key=lambda v: popcount(succ[v]), reverse=True)
    expansions = 0
    path = []

    def dfs(v, visited):
        nonlocal expansions
        expansions += 1
        if expansions > budget:
            return None
        path.append(v)
        visited |= 1 << v
        if len(path) == n:
            return list(path)
        nxt = succ[v] & ~visited
        # Fewest-onward-options first keeps the search from painting itself
        # into a corner on structured patterns.
        cands = []
        m = nxt
        while m:
            w = (m & -m).bit_length() - 1
            cands.append(w)
            m &= m - 1
        cands.sort(key=lambda w: popcount(succ[w] & ~visited))
        for w in cands:
            got = dfs(w, visited)
            if got is not None:
                return got
        path.pop()
        return False  # exhausted this subtree within budget

    for start in order:
        got = dfs(start, 0)
        if isinstance(got, list):
            return got
        if got is None:
            return None  # budget exhausted
        path.clear()
    return False


def find_gamma(pat: SparsityPattern, budget: int = 200_000):
    """Search for an ordering gamma with gamma(i) attendable from gamma(i+1).

    Returns (status, gamma) with status 'proven' (gamma is a valid order),
    'refuted' (an exhaustive search found none: the subset DP for n <= 20,
    or a backtracking search that ran to completion within its budget), or
    'unknown' (the search space was not exhausted before the budget ran
    out).  'refuted' is only ever returned from a completed search.
    """
    n = pat.n
    preds = _pred_masks(pat)
    if n == 1:
        return PROVEN, (0,)

    identity = list(range(n))
    if _check_path(identity, preds):
        return PROVEN, tuple(identity)
    reverse = identity[::-1]
    if _check_path(reverse, preds):
        return PROVEN, tuple(reverse)

    # Cheap refutations: at most one position may lack incoming edges from
    # others (the path start), and at most one may lack outgoing ones.
    no_in = [k for k in range(n) if preds[k] & ~(1 << k) == 0]
    if len(no_in) >= 2:
        return REFUTED, None
    succ_empty = 0
    for v in range(n):
        if not any(preds[k] >> v & 1 for k in range(n) if k != v):
            succ_empty += 1
    if succ_empty >= 2:
        return REFUTED, None

    if n <= 20:
        path = _exact_dp(n, preds)
        if path is None:
            return REFUTED, None
        return PROVEN, tuple(path)

    got = _dfs_heuristic(n, preds, budget)
    if isinstance(got, list):
        return PROVEN, tuple(got)
    return UNKNOWN, None


def coverage_sets(pat: SparsityPattern, t: int) -> list[frozenset[int]]:
    """S^t_k for every position k (t >= 1)."""
    if t < 1:
        raise ParameterError("t must be >= 1")
    masks = _coverage_masks(pat, t)
    return [frozenset(_bits(m)) for m in masks]


def _bits(mask: int):
    while mask:
        yield (mask & -mask).bit_length() - 1
        mask &= mask - 1


def _coverage_masks(pat: SparsityPattern, t: int) -> list[int]:
    fam_masks = [
        [sum(1 << j for j in s) for s in fam] for fam in pat.sets
    ]
    cur = list(fam_masks[0])  # S^1 = A^1
    for step in range(2, t + 1):
        fam = pat.sets[(step - 1) % pat.p]
        prev = cur
        cur = []
        for k in range(pat.n):
            m = 0
            for j in fam[k]:
                m |= prev[j]
            cur.append(m)
    return cur


def min_coverage_s(pat: SparsityPattern, cap: int | None = None):
    """Smallest t with S^t_k = [n] for all k, or None if not reached by cap.

    The default cap is 2n.
    """
    if cap is None:
        cap = 2 * pat.n
    full = (1 << pat.n) - 1
    fam_masks = [
        [sum(1 << j for j in s) for s in fam] for fam in pat.sets
    ]
    cur = list(fam_masks[0])
    if all(m == full for m in cur):
        return 1
    for t in range(2, cap + 1):
        fam = pat.sets[(t - 1) % pat.p]
        prev = cur
        cur = []
        for k in range(pat.n):
            m = 0
            for j in fam[k]:
                m |= prev[j]
            cur.append(m)
        if all(m == full for m in cur):
            return t
    return None


@dataclass(frozen=True)
class AssumptionReport:
    n: int
    p: int
    self_inclusion: bool
    gamma_status: str
    gamma: tuple[int, ...] | None
    coverage_s: int | None
    s_cap: int
    holds: bool


def assumption_report(
    pat: SparsityPattern,
    cap: int | None = None,
    budget: int = 200_000,
) -> AssumptionReport:
    """Run all three checks and bundle the outcome."""
    if cap is None:
        cap = 2 * pat.n
    self_inc = check_self_inclusion(pat)
    status, gamma = find_gamma(pat, budget=budget)
    s = min_coverage_s(pat, cap=cap)
    holds = self_inc and status == PROVEN and s is not None
    return AssumptionReport(
        n=pat.n,
        p=pat.p,
        self_inclusion=self_inc,
        gamma_status=status,
        gamma=gamma,
        coverage_s=s,
        s_cap=cap,
        holds=holds,
    )


def report_to_json_dict(rep: AssumptionReport) -> dict:
    """JSON form; gamma is 1-based in the file format."""
    return {
        "n": rep.n,
        "p": rep.p,
        "self_inclusion": rep.self_inclusion,
        "gamma_status": rep.gamma_status,
        "gamma": None if rep.gamma is None else [i + 1 for i in rep.gamma],
        "coverage_s": rep.coverage_s,
        "s_cap": rep.s_cap,
        "holds": rep.holds,
    }


def save_report(rep: AssumptionReport, path) -> None:
    with open(path, "w") as f:
        json.dump(report_to_json_dict(rep), f, indent=1, sort_keys=True)
        f.write("\n")
