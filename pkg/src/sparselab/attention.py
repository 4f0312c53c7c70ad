"""Sparse attention blocks over column-convention matrices.

The input is a d x n matrix whose k-th column is the embedding of position
k.  A head gathers the columns its pattern allows, scores them against the
query column, pushes the scores through a probability map, and averages
the gathered value vectors.  A block is attention with a skip connection
followed by a position-wise feed-forward layer with a skip connection.

Score scaling by 1/sqrt(m) is off by default (the framework form carries
no scaling); the trainer switches it on.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ParameterError, ShapeError
from .numerics import PiecewiseLinear, as_matrix, eval_pwl, relu
from .patterns import HeadConfig, SparsityPattern, apply_head_config
from .probmaps import MapKind, ProbabilityMapSpec, apply_map

__all__ = [
    "BlockWeights",
    "StackConfig",
    "random_block_weights",
    "shead",
    "sattn",
    "ffn",
    "stb",
    "forward_stack",
    "reference_dense_block",
    "save_weights",
    "load_weights",
]


@dataclass(frozen=True)
class BlockWeights:
    """Parameters of one block: h heads of width m, model width d, hidden
    width r.  Per-head arrays are stacked along the leading axis."""

    wq: np.ndarray  # (h, m, d)
    wk: np.ndarray  # (h, m, d)
    wv: np.ndarray  # (h, m, d)
    bq: np.ndarray  # (h, m)
    bk: np.ndarray  # (h, m)
    bv: np.ndarray  # (h, m)
    wo: np.ndarray  # (d, h*m)
    bo: np.ndarray  # (d,)
    w1: np.ndarray  # (r, d)
    b1: np.ndarray  # (r,)
    w2: np.ndarray  # (d, r)
    b2: np.ndarray  # (d,)

    def __post_init__(self):
        h, m, d = self.wq.shape
        r = self.w1.shape[0]
        checks = [
            (self.wk.shape, (h, m, d)),
            (self.wv.shape, (h, m, d)),
            (self.bq.shape, (h, m)),
            (self.bk.shape, (h, m)),
            (self.bv.shape, (h, m)),
            (self.wo.shape, (d, h * m)),
            (self.bo.shape, (d,)),
            (self.w1.shape, (r, d)),
            (self.b1.shape, (r,)),
            (self.w2.shape, (d, r)),
            (self.b2.shape, (d,)),
        ]
        for got, want in checks:
            if got != want:
                raise ShapeError(f"inconsistent block weights: {got} != {want}")

    @property
    def h(self) -> int:
        return self.wq.shape[0]

    @property
    def m(self) -> int:
        return self.wq.shape[1]

    @property
    def d(self) -> int:
        return self.wq.shape[2]

    @property
    def r(self) -> int:
        return self.w1.shape[0]

    def named_arrays(self):
        for name in ("wq", "wk", "wv", "bq", "bk", "bv",
                     "wo", "bo", "w1", "b1", "w2", "b2"):
            yield name, getattr(self, name)


def random_block_weights(d: int, h: int, m: int, r: int, rng, std: float = 0.02) -> BlockWeights:
    """Gaussian init with a small std; biases start at zero."""
    return BlockWeights(
        wq=rng.normal(0.0, std, (h, m, d)),
        wk=rng.normal(0.0, std, (h, m, d)),
        wv=rng.normal(0.0, std, (h, m, d)),
        bq=np.zeros((h, m)),
        bk=np.zeros((h, m)),
        bv=np.zeros((h, m)),
        wo=rng.normal(0.0, std, (d, h * m)),
        bo=np.zeros(d),
        w1=rng.normal(0.0, std, (r, d)),
        b1=np.zeros(r),
        w2=rng.normal(0.0, std, (d, r)),
        b2=np.zeros(d),
    )


@dataclass(frozen=True)
class StackConfig:
    """How a stack of blocks resolves patterns and scores.

    SEQUENTIAL cycles the pattern families across blocks; UNION merges
    them; MULTIHEAD splits the heads evenly across families (h must be a
    multiple of p).  `causal` intersects every attendable set with the
    positions at or before the query.
    """

    pattern: SparsityPattern
    head_config: HeadConfig = HeadConfig.SEQUENTIAL
    rho: ProbabilityMapSpec = field(
        default_factory=lambda: ProbabilityMapSpec(MapKind.SOFTMAX)
    )
    scale_scores: bool = False
    activation: str | PiecewiseLinear = "relu"
    causal: bool = False


def _act(activation, u: np.ndarray) -> np.ndarray:
    if isinstance(activation, PiecewiseLinear):
        return eval_pwl(activation, u)
    if activation == "relu":
        return relu(u)
    raise ParameterError(f"unknown activation {activation!r}")


def _causal_family(family):
    return tuple(tuple(j for j in s if j <= k) for k, s in enumerate(family))


def shead(X, wq, wk, wv, bq, bk, bv, family, rho: ProbabilityMapSpec,
          scale: bool = False) -> np.ndarray:
    """One head: for each column k, attend to the columns in family[k]."""
    X = as_matrix(X, "X")
    d, n = X.shape
    m = wq.shape[0]
    if len(family) != n:
        raise ShapeError("family size does not match sequence length")
    alpha = 1.0 / np.sqrt(m) if scale else 1.0
    out = np.empty((m, n))
    q_all = wq @ X + bq[:, None]
    k_all = wk @ X + bk[:, None]
    v_all = wv @ X + bv[:, None]
    for k in range(n):
        idx = list(family[k])
        scores = alpha * (k_all[:, idx].T @ q_all[:, k])
        weights = apply_map(rho, scores)
        out[:, k] = v_all[:, idx] @ weights
    return out


def _resolve_families(pattern: SparsityPattern, head_config: HeadConfig,
                      h: int, layer: int, causal: bool):
    """Per-head families for one block, plus the 1-based log entry."""
    if head_config is HeadConfig.SEQUENTIAL:
        fam = pattern.family_for_layer(layer)
        fams = [fam] * h
        log = layer % pattern.p + 1
    elif head_config is HeadConfig.UNION:
        merged = apply_head_config(pattern, HeadConfig.UNION)
        fams = [merged.family(0)] * h
        log = 1
    elif head_config is HeadConfig.MULTIHEAD:
        if h % pattern.p != 0:
            raise ConfigError("multihead needs h divisible by p")
        per = h // pattern.p
        fams = [pattern.family(i // per) for i in range(h)]
        log = tuple(i // per + 1 for i in range(h))
    else:
        raise ParameterError(f"unknown head config {head_config!r}")
    if causal:
        fams = [_causal_family(f) for f in fams]
    return fams, log


def sattn(X, bw: BlockWeights, families, rho: ProbabilityMapSpec,
          scale: bool = False) -> np.ndarray:
    """Multi-head attention with skip connection; families is per-head."""
    X = as_matrix(X, "X")
    heads = [
        shead(X, bw.wq[i], bw.wk[i], bw.wv[i], bw.bq[i], bw.bk[i], bw.bv[i],
              families[i], rho, scale)
        for i in range(bw.h)
    ]
    stacked = np.concatenate(heads, axis=0)
    return X + bw.wo @ stacked + bw.bo[:, None]


def ffn(A, bw: BlockWeights, activation="relu") -> np.ndarray:
    """Position-wise feed-forward with skip connection."""
    A = as_matrix(A, "A")
    hidden = _act(activation, bw.w1 @ A + bw.b1[:, None])
    return A + bw.w2 @ hidden + bw.b2[:, None]


def stb(X, bw: BlockWeights, families, rho: ProbabilityMapSpec,
        scale: bool = False, activation="relu") -> np.ndarray:
    """One block: sparse attention then feed-forward."""
    return ffn(sattn(X, bw, families, rho, scale), bw, activation)


def forward_stack(X, blocks, cfg: StackConfig, E=None, trace: bool = False):
    """Run a stack of blocks; block l uses pattern family (l mod p) + 1
    under SEQUENTIAL.  With trace=True also return the per-block 1-based
    family log."""
    Z = as_matrix(X, "X")
    if E is not None:
        E = as_matrix(E, "E")
        if E.shape != Z.shape:
            raise ShapeError("E must match X")
        Z = Z + E
    if cfg.pattern.n != Z.shape[1]:
        raise ShapeError("pattern length does not match sequence length")
    log = []
    for layer, bw in enumerate(blocks):
        fams, entry = _resolve_families(
            cfg.pattern, cfg.head_config, bw.h, layer, cfg.causal
        )
        Z = stb(Z, bw, fams, cfg.rho, cfg.scale_scores, cfg.activation)
        log.append(entry)
    return (Z, log) if trace else Z


def reference_dense_block(X, bw: BlockWeights, rho: ProbabilityMapSpec,
                          scale: bool = False, activation="relu") -> np.ndarray:
    """Dense block computed with whole-matrix products (no per-column
    gathers); the oracle for dense-equivalence tests."""
    X = as_matrix(X, "X")
    d, n = X.shape
    alpha = 1.0 / np.sqrt(bw.m) if scale else 1.0
    heads = []
    for i in range(bw.h):
        q = bw.wq[i] @ X + bw.bq[i][:, None]
        k = bw.wk[i] @ X + bw.bk[i][:, None]
        v = bw.wv[i] @ X + bw.bv[i][:, None]
        scores = alpha * (k.T @ q)  # (keys, queries)
        weights = np.stack([apply_map(rho, scores[:, c]) for c in range(n)], axis=1)
        heads.append(v @ weights)
    attn = X + bw.wo @ np.concatenate(heads, axis=0) + bw.bo[:, None]
    hidden = _act(activation, bw.w1 @ attn + bw.b1[:, None])
    return attn + bw.w2 @ hidden + bw.b2[:, None]


def save_weights(path, blocks) -> None:
    """Write a block list to an .npz archive with declared shapes."""
    payload = {"num_blocks": np.asarray(len(blocks))}
    for i, bw in enumerate(blocks):
        for name, arr in bw.named_arrays():
            payload[f"block{i}.{name}"] = arr
    np.savez(path, **payload)


def load_weights(path) -> list[BlockWeights]:
    with np.load(path) as z:
        count = int(z["num_blocks"])
        blocks = []
        for i in range(count):
            kw = {name: z[f"block{i}.{name}"] for name, _ in _FIELDS}
            blocks.append(BlockWeights(**kw))
    return blocks


_FIELDS = [(name, None) for name in (
    "wq", "wk", "wv", "bq", "bk", "bv", "wo", "bo", "w1", "b1", "w2", "b2")]
