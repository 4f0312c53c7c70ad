"""Micro-scale trainable sparse Transformer with hand-derived gradients,
plus the synthetic copying task it is trained on.

The trainer runs a batched fast path (stacked matmuls with additive score
masks).  The per-column attention module is the semantics authority; an
equivalence test pins the two implementations against each other.
"""

from __future__ import annotations

import csv
import functools
from dataclasses import dataclass, replace

import numpy as np

from .attention import BlockWeights, _resolve_families, random_block_weights
from .errors import ConfigError, ParameterError, ShapeError, TrainingError
from .patterns import HeadConfig, SparsityPattern

__all__ = [
    "TrainConfig",
    "CopyBatch",
    "ModelParams",
    "Adam",
    "copy_task_gen",
    "init_params",
    "forward_logits",
    "loss_and_grads",
    "eval_accuracy",
    "train",
    "gradcheck",
    "metrics_to_csv",
    "save_checkpoint",
    "load_checkpoint",
]


@dataclass(frozen=True)
class TrainConfig:
    """Model shape, pattern deployment, and optimization settings.

    Only softmax scores are trainable, so the probability map is fixed;
    scale_scores defaults to on for training (it is off in the
    pure-framework attention tests)."""

    pattern: SparsityPattern
    head_config: HeadConfig = HeadConfig.UNION
    n: int = 32
    vocab: int = 16
    d: int = 64
    h: int = 4
    m: int = 16
    r: int = 128
    num_layers: int = 2
    causal: bool = False
    scale_scores: bool = True
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    steps: int = 3000
    batch_size: int = 64
    eval_size: int = 256
    eval_every: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.pattern.n != self.n:
            raise ConfigError("pattern length must equal n")
        if self.n % 2 != 0 or self.n < 4:
            raise ConfigError("copy task needs even n >= 4")
        if self.vocab < 2:
            raise ConfigError("vocab must be >= 2")


@dataclass(frozen=True)
class CopyBatch:
    """Sequences in the format 0 s 0 s with the whole second half masked.

    tokens are the ground-truth sequences; inputs have every masked
    position replaced by token 0; mask flags the prediction targets."""

    tokens: np.ndarray  # (count, n) int
    inputs: np.ndarray  # (count, n) int
    mask: np.ndarray  # (n,) bool

    def __post_init__(self):
        n = self.tokens.shape[1]
        if self.inputs.shape != self.tokens.shape or self.mask.shape != (n,):
            raise ShapeError("inconsistent batch shapes")


def copy_task_gen(n: int, vocab: int, count: int, seed: int) -> CopyBatch:
    """Sample copy-task sequences: a payload drawn uniformly from
    [1, vocab) appears after a 0 separator and is repeated after a second
    separator at position n/2; the second half is the prediction target."""
    if n % 2 != 0 or n < 4:
        raise ParameterError("copy task needs even n >= 4")
    if vocab < 2:
        raise ParameterError("vocab must be >= 2")
    if count < 1:
        raise ParameterError("count must be >= 1")
    rng = np.random.default_rng(seed)
    half = n // 2
    payload = rng.integers(1, vocab, size=(count, half - 1))
    tokens = np.zeros((count, n), dtype=np.int64)
    tokens[:, 1:half] = payload
    tokens[:, half + 1:] = payload
    mask = np.zeros(n, dtype=bool)
    mask[half:] = True
    inputs = tokens.copy()
    inputs[:, mask] = 0
    return CopyBatch(tokens=tokens, inputs=inputs, mask=mask)


@dataclass
class ModelParams:
    """Trainable state: token embedding, positional embedding, block
    weights, and the output projection to vocabulary logits."""

    tok_emb: np.ndarray  # (d, vocab)
    pos_emb: np.ndarray  # (d, n)
    blocks: list[BlockWeights]
    out_proj: np.ndarray  # (vocab, d)

    def named_parameters(self):
        yield "tok_emb", self.tok_emb
        yield "pos_emb", self.pos_emb
        for l, bw in enumerate(self.blocks):
            for name, arr in bw.named_arrays():
                yield f"block{l}.{name}", arr
        yield "out_proj", self.out_proj

    def with_updates(self, updates: dict) -> "ModelParams":
        blocks = []
        for l, bw in enumerate(self.blocks):
            changed = {
                name: updates[f"block{l}.{name}"]
                for name, _ in bw.named_arrays()
                if f"block{l}.{name}" in updates
            }
            blocks.append(replace(bw, **changed) if changed else bw)
        return ModelParams(
            tok_emb=updates.get("tok_emb", self.tok_emb),
            pos_emb=updates.get("pos_emb", self.pos_emb),
            blocks=blocks,
            out_proj=updates.get("out_proj", self.out_proj),
        )


def init_params(cfg: TrainConfig, rng) -> ModelParams:
    """Gaussian init (std 0.02) for weights, zero biases; there is no
    layer normalization, so the small init keeps early scores tame."""
    std = 0.02
    return ModelParams(
        tok_emb=rng.normal(0.0, std, (cfg.d, cfg.vocab)),
        pos_emb=rng.normal(0.0, std, (cfg.d, cfg.n)),
        blocks=[
            random_block_weights(cfg.d, cfg.h, cfg.m, cfg.r, rng, std=std)
            for _ in range(cfg.num_layers)
        ],
        out_proj=rng.normal(0.0, std, (cfg.vocab, cfg.d)),
    )


@functools.lru_cache(maxsize=8)
def _layer_masks(cfg: TrainConfig) -> list[np.ndarray]:
    """Additive score masks, one (h, n, n) array per layer:
    masks[l][i, j, k] is 0 where head i's column k may attend to j and
    -inf where it may not.  Cached per config; callers only read them."""
    out = []
    for layer in range(cfg.num_layers):
        fams, _ = _resolve_families(
            cfg.pattern, cfg.head_config, cfg.h, layer, cfg.causal
        )
        mask = np.full((cfg.h, cfg.n, cfg.n), -np.inf)
        for i, fam in enumerate(fams):
            for k, sets in enumerate(fam):
                mask[i, list(sets), k] = 0.0
        out.append(mask)
    return out


def _to_heads(flat: np.ndarray, h: int, m: int, b: int, n: int) -> np.ndarray:
    """(h*m, b*n) -> (h*b, m, n) so scores batch over head x sequence."""
    return flat.reshape(h, m, b, n).transpose(0, 2, 1, 3).reshape(h * b, m, n)


def _from_heads(r: np.ndarray, h: int, m: int, b: int, n: int) -> np.ndarray:
    """(h*b, m, n) -> (h*m, b*n), inverse of _to_heads."""
    return r.reshape(h, b, m, n).transpose(0, 2, 1, 3).reshape(h * m, b * n)


def _forward(params: ModelParams, inputs: np.ndarray, cfg: TrainConfig,
             masks: list[np.ndarray]):
    """Batched forward pass.  Returns (logits, caches); caches hold the
    intermediates the backward pass needs.

    Sequences are flattened to a (d, batch*n) layout so every projection
    and the feed-forward run as one large matmul; only the score/softmax
    step batches per (head, sequence)."""
    b, n = inputs.shape
    h, m = cfg.h, cfg.m
    z = params.tok_emb[:, inputs.reshape(-1)] + np.tile(params.pos_emb, (1, b))
    caches = []
    alpha = 1.0 / np.sqrt(m) if cfg.scale_scores else 1.0
    for bw, mask in zip(params.blocks, masks):
        wq, wk, wv = (w.reshape(h * m, -1) for w in (bw.wq, bw.wk, bw.wv))
        qr = _to_heads(wq @ z + bw.bq.reshape(-1, 1), h, m, b, n)
        kr = _to_heads(wk @ z + bw.bk.reshape(-1, 1), h, m, b, n)
        vr = _to_heads(wv @ z + bw.bv.reshape(-1, 1), h, m, b, n)
        scores = alpha * np.matmul(kr.transpose(0, 2, 1), qr)
        scores.reshape(h, b, n, n)[:] += mask[:, None]
        scores -= scores.max(axis=1, keepdims=True)
        e = np.exp(scores)
        p = e / e.sum(axis=1, keepdims=True)
        concat = _from_heads(np.matmul(vr, p), h, m, b, n)
        attn = z + bw.wo @ concat + bw.bo[:, None]
        pre = bw.w1 @ attn + bw.b1[:, None]
        hidden = np.maximum(pre, 0.0)
        out = attn + bw.w2 @ hidden + bw.b2[:, None]
        caches.append((z, qr, kr, vr, p, concat, attn, pre, hidden))
        z = out
    logits = (params.out_proj @ z).reshape(-1, b, n).transpose(1, 0, 2)
    return logits, z, caches


def forward_logits(params: ModelParams, batch, cfg: TrainConfig) -> np.ndarray:
    """Logits (batch, vocab, n) for a CopyBatch or raw token array."""
    inputs = batch.inputs if isinstance(batch, CopyBatch) else np.asarray(batch)
    if inputs.ndim != 2 or inputs.shape[1] != cfg.n:
        raise ShapeError(f"inputs must be (batch, {cfg.n})")
    logits, _, _ = _forward(params, inputs, cfg, _layer_masks(cfg))
    return logits


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def loss_and_grads(params: ModelParams, batch: CopyBatch, cfg: TrainConfig):
    """Masked cross-entropy and its analytic gradients for every
    parameter, including both embeddings."""
    masks = _layer_masks(cfg)
    inputs, targets = batch.inputs, batch.tokens
    b, n = inputs.shape
    h, m = cfg.h, cfg.m
    logits, z_final, caches = _forward(params, inputs, cfg, masks)

    logp = _log_softmax(logits)
    mask_idx = np.nonzero(batch.mask)[0]
    denom = b * len(mask_idx)
    rows = np.arange(b)[:, None]
    loss = -logp[rows, targets[:, mask_idx], mask_idx[None, :]].sum() / denom
    if not np.isfinite(loss):
        raise TrainingError(f"non-finite loss {loss!r}")

    dlogits = np.zeros_like(logits)
    dlogits[:, :, mask_idx] = np.exp(logp[:, :, mask_idx]) / denom
    dlogits[rows, targets[:, mask_idx], mask_idx[None, :]] -= 1.0 / denom
    dl2 = dlogits.transpose(1, 0, 2).reshape(-1, b * n)

    grads = {"out_proj": dl2 @ z_final.T}
    dz = params.out_proj.T @ dl2
    alpha = 1.0 / np.sqrt(m) if cfg.scale_scores else 1.0

    for l in range(cfg.num_layers - 1, -1, -1):
        bw = params.blocks[l]
        z, qr, kr, vr, p, concat, attn, pre, hidden = caches[l]
        # feed-forward
        dhidden = bw.w2.T @ dz
        dpre = dhidden * (pre > 0.0)
        grads[f"block{l}.w2"] = dz @ hidden.T
        grads[f"block{l}.b2"] = dz.sum(axis=1)
        grads[f"block{l}.w1"] = dpre @ attn.T
        grads[f"block{l}.b1"] = dpre.sum(axis=1)
        dattn = dz + bw.w1.T @ dpre
        # attention output mix
        grads[f"block{l}.wo"] = dattn @ concat.T
        grads[f"block{l}.bo"] = dattn.sum(axis=1)
        dor = _to_heads(bw.wo.T @ dattn, h, m, b, n)
        # concat heads were vr @ p
        dvr = np.matmul(dor, p.transpose(0, 2, 1))
        dp = np.matmul(vr.transpose(0, 2, 1), dor)
        # softmax over the key axis; masked entries have p = 0, so their
        # score gradient vanishes on its own
        dscores = p * (dp - (dp * p).sum(axis=1, keepdims=True))
        dkr = alpha * np.matmul(qr, dscores.transpose(0, 2, 1))
        dqr = alpha * np.matmul(kr, dscores)
        # projections back to the block input
        dzin = dattn.copy()
        for name, dproj, w in (("q", dqr, bw.wq), ("k", dkr, bw.wk),
                               ("v", dvr, bw.wv)):
            flat = _from_heads(dproj, h, m, b, n)
            grads[f"block{l}.w{name}"] = (flat @ z.T).reshape(h, m, -1)
            grads[f"block{l}.b{name}"] = flat.sum(axis=1).reshape(h, m)
            dzin += w.reshape(h * m, -1).T @ flat
        dz = dzin

    grads["pos_emb"] = dz.reshape(-1, b, n).sum(axis=1)
    onehot = np.zeros((b * n, cfg.vocab))
    onehot[np.arange(b * n), inputs.reshape(-1)] = 1.0
    grads["tok_emb"] = dz @ onehot
    return float(loss), grads


class Adam:
    """Standard Adam with bias correction; state keyed by parameter name
    in a fixed iteration order, so updates are deterministic."""

    def __init__(self, params: ModelParams, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {name: np.zeros_like(a) for name, a in params.named_parameters()}
        self.v = {name: np.zeros_like(a) for name, a in params.named_parameters()}

    def step(self, params: ModelParams, grads: dict) -> ModelParams:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        updates = {}
        for name, arr in params.named_parameters():
            g = grads[name]
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            mhat = self.m[name] / c1
            vhat = self.v[name] / c2
            updates[name] = arr - self.lr * mhat / (np.sqrt(vhat) + self.eps)
        return params.with_updates(updates)


def eval_accuracy(params: ModelParams, dataset: CopyBatch, cfg: TrainConfig,
                  masked_only: bool = True) -> float:
    """Fraction of positions where the argmax prediction matches the
    ground truth; by default only masked positions count."""
    logits = forward_logits(params, dataset, cfg)
    preds = logits.argmax(axis=1)
    hits = preds == dataset.tokens
    if masked_only:
        return float(hits[:, dataset.mask].mean())
    return float(hits.mean())


def train(cfg: TrainConfig, checkpoints: tuple[int, ...] = ()):
    """Adam training loop on freshly sampled copy-task batches.

    Returns (params, trace) where trace rows are dicts with step, loss,
    masked_accuracy, and all_accuracy, evaluated on a held-out set every
    eval_every steps (plus the half-budget point, any requested
    checkpoints, and the final step).  Deterministic given cfg.seed.
    """
    ss = np.random.SeedSequence(cfg.seed)
    init_rng, data_rng, eval_seed = ss.spawn(3)
    params = init_params(cfg, np.random.default_rng(init_rng))
    eval_set = copy_task_gen(
        cfg.n, cfg.vocab, cfg.eval_size,
        int(np.random.default_rng(eval_seed).integers(2 ** 31)),
    )
    opt = Adam(params, cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps)
    rng = np.random.default_rng(data_rng)
    eval_at = {cfg.steps, max(1, cfg.steps // 2), *checkpoints}
    trace: list[dict] = []
    half = cfg.n // 2
    mask = np.zeros(cfg.n, dtype=bool)
    mask[half:] = True

    for step in range(1, cfg.steps + 1):
        payload = rng.integers(1, cfg.vocab, size=(cfg.batch_size, half - 1))
        tokens = np.zeros((cfg.batch_size, cfg.n), dtype=np.int64)
        tokens[:, 1:half] = payload
        tokens[:, half + 1:] = payload
        inputs = tokens.copy()
        inputs[:, mask] = 0
        batch = CopyBatch(tokens=tokens, inputs=inputs, mask=mask)
        try:
            loss, grads = loss_and_grads(params, batch, cfg)
        except TrainingError as err:
            raise TrainingError(f"diverged at step {step}: {err}", trace) from err
        params = opt.step(params, grads)
        if step % cfg.eval_every == 0 or step in eval_at:
            trace.append({
                "step": step,
                "loss": loss,
                "masked_accuracy": eval_accuracy(params, eval_set, cfg),
                "all_accuracy": eval_accuracy(params, eval_set, cfg,
                                              masked_only=False),
            })
    return params, trace


def _gradcheck_params(cfg: TrainConfig, rng) -> ModelParams:
    """Init for finite-difference checking: larger weights and random
    biases keep hidden pre-activations away from the ReLU kink."""
    std = 0.2
    blocks = []
    for _ in range(cfg.num_layers):
        bw = random_block_weights(cfg.d, cfg.h, cfg.m, cfg.r, rng, std=std)
        blocks.append(replace(
            bw,
            bq=rng.normal(0.0, 0.1, bw.bq.shape),
            bk=rng.normal(0.0, 0.1, bw.bk.shape),
            bv=rng.normal(0.0, 0.1, bw.bv.shape),
            bo=rng.normal(0.0, 0.1, bw.bo.shape),
            b1=rng.normal(0.0, 0.1, bw.b1.shape),
            b2=rng.normal(0.0, 0.1, bw.b2.shape),
        ))
    return ModelParams(
        tok_emb=rng.normal(0.0, std, (cfg.d, cfg.vocab)),
        pos_emb=rng.normal(0.0, std, (cfg.d, cfg.n)),
        blocks=blocks,
        out_proj=rng.normal(0.0, std, (cfg.vocab, cfg.d)),
    )


def gradcheck(cfg: TrainConfig, seed: int = 0, step: float = 1e-5,
              batch_size: int = 2) -> dict:
    """Compare analytic gradients against central finite differences on
    every parameter entry.  Relative error uses the denominator
    max(|analytic|, |numeric|, 1e-6) so near-zero entries compare on an
    absolute scale.  Returns {"max_rel_err", "worst", "per_param"}.

    The ReLU derivative jumps at 0, so a pre-activation within the
    finite-difference step of 0 would corrupt the numeric estimate;
    init draws are redrawn (deterministically) until all pre-activations
    clear a 10-step margin."""
    batch = copy_task_gen(cfg.n, cfg.vocab, batch_size, seed)
    masks = _layer_masks(cfg)
    params = None
    for attempt in range(64):
        rng = np.random.default_rng([seed, attempt])
        candidate = _gradcheck_params(cfg, rng)
        _, _, caches = _forward(candidate, batch.inputs, cfg, masks)
        margin = min(float(np.abs(c[7]).min()) for c in caches)
        if margin > 10.0 * step:
            params = candidate
            break
    if params is None:
        raise ConfigError("could not place pre-activations away from the "
                          "ReLU kink; reduce the step")
    _, grads = loss_and_grads(params, batch, cfg)

    per_param = {}
    worst = (0.0, "")
    for name, arr in params.named_parameters():
        num = np.zeros_like(arr)
        flat = arr.reshape(-1)
        nflat = num.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            lo_p, _ = loss_and_grads(params, batch, cfg)
            flat[i] = orig - step
            lo_m, _ = loss_and_grads(params, batch, cfg)
            flat[i] = orig
            nflat[i] = (lo_p - lo_m) / (2.0 * step)
        denom = np.maximum(np.maximum(np.abs(grads[name]), np.abs(num)), 1e-6)
        rel = float((np.abs(grads[name] - num) / denom).max())
        per_param[name] = rel
        if rel > worst[0]:
            worst = (rel, name)
    return {"max_rel_err": worst[0], "worst": worst[1], "per_param": per_param}


def metrics_to_csv(trace, path) -> None:
    """Write the metrics trace as CSV with columns step, loss,
    masked_accuracy."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["step", "loss", "masked_accuracy"])
        for row in trace:
            writer.writerow([row["step"], repr(row["loss"]),
                             repr(row["masked_accuracy"])])


def save_checkpoint(path, params: ModelParams, opt: Adam | None = None) -> None:
    """Serialize model parameters (and optimizer moments if given) to .npz."""
    arrays = {name: arr for name, arr in params.named_parameters()}
    arrays["_num_blocks"] = np.array(len(params.blocks))
    if opt is not None:
        arrays["_adam_t"] = np.array(opt.t)
        for name, arr in opt.m.items():
            arrays[f"_adam_m.{name}"] = arr
        for name, arr in opt.v.items():
            arrays[f"_adam_v.{name}"] = arr
    np.savez(path, **arrays)


def load_checkpoint(path) -> ModelParams:
    """Rebuild ModelParams from a checkpoint written by save_checkpoint."""
    data = np.load(path)
    num_blocks = int(data["_num_blocks"])
    blocks = []
    for l in range(num_blocks):
        fields_l = {
            name: data[f"block{l}.{name}"]
            for name in ("wq", "wk", "wv", "bq", "bk", "bv",
                         "wo", "bo", "w1", "b1", "w2", "b2")
        }
        blocks.append(BlockWeights(**fields_l))
    return ModelParams(
        tok_emb=data["tok_emb"],
        pos_emb=data["pos_emb"],
        blocks=blocks,
        out_proj=data["out_proj"],
    )
