"""Masked transformer encoder classifier in its three configurations.

A: segmented raw audio in, linear projection to d_model 512, MLP head.
B: frame-difference features in, otherwise identical to A.
C: log mel input, no projection (d_model = mel bins), no MLP head.

The class token is prepended before any projection, starts at all-ones and
is trained like any other parameter. Invalid (zero-padding) frames are
excluded from attention with an additive -inf mask, so their contents can
never reach the class-token embedding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np

from . import autodiff as ad
from .errors import NonFiniteActivation, ShapeMismatch
from .features import FeatureMatrix

MODE_TRAIN = "train"
MODE_EVAL = "eval"


@dataclass
class ModelConfig:
    config_id: str            # "A", "B" or "C"
    input_dim: int
    d_model: int = 512
    n_layers: int = 12
    n_heads: int = 12
    ff_dim: int = 0           # 0 -> 2 * d_model
    dropout: float = 0.1
    mlp_head: tuple = (265, 64, 10)
    n_classes: int = 2
    use_projection: bool = True
    max_frames: int = 512
    norm_first: bool = True   # pre-norm residual blocks

    def __post_init__(self):
        if self.ff_dim == 0:
            self.ff_dim = 2 * self.d_model
        self.mlp_head = tuple(self.mlp_head)
        if self.n_heads < 1 or self.d_model < self.n_heads:
            raise ShapeMismatch(
                f"cannot split d_model {self.d_model} across {self.n_heads} heads"
            )

    @property
    def cls_dim(self):
        # the class token is prepended before projection
        return self.input_dim if self.use_projection else self.d_model

    @property
    def head_dim(self):
        # rounded up so d_model need not divide evenly (64 across 6 heads);
        # the output projection maps n_heads*head_dim back to d_model, and
        # when it does divide this is the ordinary equal split
        return -(-self.d_model // self.n_heads)

    @property
    def attn_dim(self):
        return self.n_heads * self.head_dim


def config_a(input_dim=1600, **kw):
    return ModelConfig("A", input_dim, **kw)


def config_b(input_dim=1600, **kw):
    return ModelConfig("B", input_dim, **kw)


def config_c(input_dim=64, d_model=None, **kw):
    kw.setdefault("n_heads", 6)
    return ModelConfig(
        "C", input_dim, d_model=d_model or input_dim,
        mlp_head=(), use_projection=False, **kw,
    )


def init_params(cfg: ModelConfig, seed: int = 0, dtype=np.float32) -> dict:
    """Xavier-uniform linear maps, zero biases, unit layer norms, all-ones CLS."""
    rng = np.random.default_rng(seed)

    def xavier(n_in, n_out):
        bound = math.sqrt(6.0 / (n_in + n_out))
        return rng.uniform(-bound, bound, (n_in, n_out)).astype(dtype)

    def param(arr):
        return ad.Tensor(np.asarray(arr, dtype=dtype), requires_grad=True)

    d = cfg.d_model
    p = {"cls": param(np.ones(cfg.cls_dim))}
    if cfg.use_projection:
        p["proj.w"] = param(xavier(cfg.input_dim, d))
        p["proj.b"] = param(np.zeros(d))
    elif cfg.input_dim != d:
        raise ShapeMismatch("config without projection needs input_dim == d_model")
    da = cfg.attn_dim
    for i in range(cfg.n_layers):
        lp = f"layer{i}"
        for name in ("q", "k", "v"):
            p[f"{lp}.attn.w{name}"] = param(xavier(d, da))
            p[f"{lp}.attn.b{name}"] = param(np.zeros(da))
        p[f"{lp}.attn.wo"] = param(xavier(da, d))
        p[f"{lp}.attn.bo"] = param(np.zeros(d))
        p[f"{lp}.ln1.g"] = param(np.ones(d))
        p[f"{lp}.ln1.b"] = param(np.zeros(d))
        p[f"{lp}.ff.w1"] = param(xavier(d, cfg.ff_dim))
        p[f"{lp}.ff.b1"] = param(np.zeros(cfg.ff_dim))
        p[f"{lp}.ff.w2"] = param(xavier(cfg.ff_dim, d))
        p[f"{lp}.ff.b2"] = param(np.zeros(d))
        p[f"{lp}.ln2.g"] = param(np.ones(d))
        p[f"{lp}.ln2.b"] = param(np.zeros(d))
    width = d
    for j, h in enumerate(cfg.mlp_head):
        p[f"mlp{j}.w"] = param(xavier(width, h))
        p[f"mlp{j}.b"] = param(np.zeros(h))
        width = h
    p["head.w"] = param(xavier(width, cfg.n_classes))
    p["head.b"] = param(np.zeros(cfg.n_classes))
    return p


def parameter_count(cfg: ModelConfig) -> int:
    """Closed-form parameter total for a configuration."""
    d, ff, da = cfg.d_model, cfg.ff_dim, cfg.attn_dim
    total = cfg.cls_dim
    if cfg.use_projection:
        total += cfg.input_dim * d + d
    per_layer = (3 * (d * da + da) + (da * d + d)
                 + (d * ff + ff) + (ff * d + d) + 4 * d)
    total += cfg.n_layers * per_layer
    width = d
    for h in cfg.mlp_head:
        total += width * h + h
        width = h
    total += width * cfg.n_classes + cfg.n_classes
    return total


def positional_encoding(n_pos: int, d: int, dtype=np.float32) -> np.ndarray:
    """Standard sinusoidal encoding: sin on even dims, cos on odd dims."""
    pos = np.arange(n_pos)[:, None].astype(np.float64)
    i = np.arange(d // 2)[None, :]
    angles = pos / np.power(10000.0, 2 * i / d)
    pe = np.zeros((n_pos, d))
    pe[:, 0::2] = np.sin(angles)
    pe[:, 1::2] = np.cos(angles[:, : d - d // 2])
    return pe.astype(dtype)


def _linear(x, params, name):
    return ad.add(ad.matmul(x, params[f"{name}.w"]), params[f"{name}.b"])


def _attention(h, params, cfg, prefix, key_invalid, collect=None):
    b, l, _ = h.shape
    nh, dh = cfg.n_heads, cfg.head_dim

    def split_heads(t):
        return ad.transpose(ad.reshape(t, (b, l, nh, dh)), (0, 2, 1, 3))

    q = split_heads(ad.add(ad.matmul(h, params[f"{prefix}.wq"]), params[f"{prefix}.bq"]))
    k = split_heads(ad.add(ad.matmul(h, params[f"{prefix}.wk"]), params[f"{prefix}.bk"]))
    v = split_heads(ad.add(ad.matmul(h, params[f"{prefix}.wv"]), params[f"{prefix}.bv"]))
    scores = ad.scale(ad.matmul(q, ad.transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(dh))
    # mask invalid key columns for every query row
    neg = key_invalid[:, None, None, :]
    attn = ad.masked_softmax(scores, neg_mask=neg)
    if collect is not None:
        collect.append(attn.data)
    ctx = ad.matmul(attn, v)
    merged = ad.reshape(ad.transpose(ctx, (0, 2, 1, 3)), (b, l, nh * dh))
    return ad.add(ad.matmul(merged, params[f"{prefix}.wo"]), params[f"{prefix}.bo"])


def forward_batch(params: dict, cfg: ModelConfig, x: np.ndarray, mask: np.ndarray,
                  mode: str = MODE_EVAL, dropout_rng=None, collect_attn=None):
    """Class probabilities for a batch.

    x: (B, N, input_dim), mask: (B, N) with True = valid frame. Returns a
    Tensor of shape (B, 2) whose rows sum to 1.
    """
    if x.ndim != 3 or x.shape[2] != cfg.input_dim:
        raise ShapeMismatch(f"input {x.shape} does not match input_dim {cfg.input_dim}")
    if x.shape[1] > cfg.max_frames:
        raise ShapeMismatch(f"{x.shape[1]} frames exceeds max_frames {cfg.max_frames}")
    train = mode == MODE_TRAIN
    p_drop = cfg.dropout if train else 0.0
    if train and p_drop > 0 and dropout_rng is None:
        dropout_rng = np.random.default_rng(0)
    dtype = params["cls"].data.dtype
    x = np.ascontiguousarray(x, dtype=dtype)

    h = ad.prepend_row(params["cls"], ad.Tensor(x))
    key_invalid = np.concatenate(
        [np.zeros((x.shape[0], 1), bool), ~np.asarray(mask, bool)], axis=1
    )
    if cfg.use_projection:
        h = _linear(h, params, "proj")
    pe = positional_encoding(h.shape[1], cfg.d_model, dtype)
    h = ad.add(h, ad.Tensor(pe))

    for i in range(cfg.n_layers):
        lp = f"layer{i}"
        if cfg.norm_first:
            a = ad.layer_norm(h, params[f"{lp}.ln1.g"], params[f"{lp}.ln1.b"])
            a = _attention(a, params, cfg, f"{lp}.attn", key_invalid, collect_attn)
            h = ad.add(h, ad.dropout(a, p_drop, dropout_rng))
            f = ad.layer_norm(h, params[f"{lp}.ln2.g"], params[f"{lp}.ln2.b"])
            f = ad.add(ad.matmul(ad.relu(ad.add(ad.matmul(f, params[f"{lp}.ff.w1"]),
                                                params[f"{lp}.ff.b1"])),
                                 params[f"{lp}.ff.w2"]), params[f"{lp}.ff.b2"])
            h = ad.add(h, ad.dropout(f, p_drop, dropout_rng))
        else:
            a = _attention(h, params, cfg, f"{lp}.attn", key_invalid, collect_attn)
            h = ad.layer_norm(ad.add(h, ad.dropout(a, p_drop, dropout_rng)),
                              params[f"{lp}.ln1.g"], params[f"{lp}.ln1.b"])
            f = ad.add(ad.matmul(ad.relu(ad.add(ad.matmul(h, params[f"{lp}.ff.w1"]),
                                                params[f"{lp}.ff.b1"])),
                                 params[f"{lp}.ff.w2"]), params[f"{lp}.ff.b2"])
            h = ad.layer_norm(ad.add(h, ad.dropout(f, p_drop, dropout_rng)),
                              params[f"{lp}.ln2.g"], params[f"{lp}.ln2.b"])

    cls_out = ad.first_row(h)
    width_in = cls_out
    for j in range(len(cfg.mlp_head)):
        width_in = ad.relu(_linear(width_in, params, f"mlp{j}"))
    logits = _linear(width_in, params, "head")
    if not np.all(np.isfinite(logits.data)):
        raise NonFiniteActivation("non-finite logits; training diverged")
    return ad.masked_softmax(logits)


def forward(params, cfg, fm: FeatureMatrix, mode: str = MODE_EVAL,
            dropout_rng=None, collect_attn=None) -> np.ndarray:
    """Single-clip convenience wrapper; returns a length-2 probability array."""
    probs = forward_batch(
        params, cfg, fm.data[None, :, :], fm.mask[None, :], mode,
        dropout_rng=dropout_rng, collect_attn=collect_attn,
    )
    return probs.data[0]


# fall is class index 1, no-fall is class index 0
CLASS_NOFALL, CLASS_FALL = 0, 1


def class_weights(n_fall: int, n_nofall: int) -> tuple:
    """Inverse-frequency weights, majority class pinned at 1."""
    if n_fall <= 0 or n_nofall <= 0:
        return (1.0, 1.0)
    if n_fall < n_nofall:
        return (1.0, n_nofall / n_fall)
    return (n_fall / n_nofall, 1.0)


def weighted_cross_entropy(probs, labels, weights=(1.0, 1.0)):
    """Mean over the batch of -w[y] * log(p[y]); log floored at 1e-12.

    probs: Tensor (B, 2); labels: int array (B,). Returns a scalar Tensor.
    """
    labels = np.asarray(labels)
    b = probs.shape[0]
    dtype = probs.data.dtype
    onehot = np.zeros((b, probs.shape[1]), dtype=dtype)
    onehot[np.arange(b), labels] = np.asarray(weights, dtype=dtype)[labels]
    picked = ad.mul(ad.log(probs, floor=1e-12), ad.Tensor(onehot))
    return ad.scale(ad.sum_all(picked), -1.0 / b)
