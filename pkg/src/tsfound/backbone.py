"""Encoder-decoder transformer stacks in the T5 style.

Pre-norm blocks with RMS normalization (no bias terms anywhere in the
stacks), bucketed relative position bias computed once per stack and shared
across its layers, causal self-attention plus bias-free cross-attention in
the decoder, and patch-level key masking realized as a large negative
additive penalty before the softmax.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

MASK_PENALTY = -1e9
RMSNORM_EPS = 1e-6


@dataclass(frozen=True)
class BackboneConfig:
    enc_layers: int = 2
    dec_layers: int = 2
    d_model: int = 128
    n_heads: int = 4
    d_ff: int = 0                 # 0 -> 4 * d_model
    rel_buckets: int = 32
    rel_max_distance: int = 128
    dropout: float = 0.0

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ValueError(f"d_model {self.d_model} not divisible by heads {self.n_heads}")
        if self.enc_layers < 1 or self.dec_layers < 1:
            raise ValueError("need at least one layer per stack")
        if self.rel_buckets < 2:
            raise ValueError("need at least two relative-position buckets")
        if self.rel_max_distance <= self.rel_buckets // 2:
            raise ValueError("relative max distance must exceed half the bucket count")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")

    @property
    def ffn_width(self) -> int:
        return self.d_ff if self.d_ff else 4 * self.d_model

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads


# -- relative position buckets -------------------------------------------------


def relative_bucket(relative_position: np.ndarray, bidirectional: bool,
                    num_buckets: int, max_distance: int) -> np.ndarray:
    """Bucket index for each (key - query) distance.

    Half the buckets hold exact small distances, the other half cover larger
    distances logarithmically up to `max_distance`; anything farther clamps to
    the final bucket. Bidirectional mode splits the budget by sign.
    """
    rp = np.asarray(relative_position, dtype=np.int64)
    buckets = np.zeros_like(rp)
    if bidirectional:
        num_buckets //= 2
        buckets += (rp > 0).astype(np.int64) * num_buckets
        rp = np.abs(rp)
    else:
        rp = -np.minimum(rp, 0)
    max_exact = num_buckets // 2
    is_small = rp < max_exact
    with np.errstate(divide="ignore"):
        log_ratio = np.log(np.maximum(rp, 1) / max_exact) / math.log(max_distance / max_exact)
    large = max_exact + (log_ratio * (num_buckets - max_exact)).astype(np.int64)
    large = np.minimum(large, num_buckets - 1)
    buckets += np.where(is_small, rp, large)
    return buckets


_BUCKET_CACHE: dict[tuple, np.ndarray] = {}


def bucket_matrix(n_query: int, n_key: int, bidirectional: bool,
                  num_buckets: int, max_distance: int) -> np.ndarray:
    key = (n_query, n_key, bidirectional, num_buckets, max_distance)
    if key not in _BUCKET_CACHE:
        rel = np.arange(n_key)[None, :] - np.arange(n_query)[:, None]
        _BUCKET_CACHE[key] = relative_bucket(rel, bidirectional, num_buckets, max_distance)
    return _BUCKET_CACHE[key]


def position_bias(table: Tensor, n_query: int, n_key: int, bidirectional: bool,
                  cfg: BackboneConfig) -> Tensor:
    """(1, heads, n_query, n_key) bias shared by every layer of a stack."""
    idx = bucket_matrix(n_query, n_key, bidirectional, cfg.rel_buckets, cfg.rel_max_distance)
    values = ad.take(table, idx)                    # (Tq, Tk, h)
    return values.transpose((2, 0, 1)).reshape((1, cfg.n_heads, n_query, n_key))


# -- masks -----------------------------------------------------------------------


def key_mask_penalty(mask: np.ndarray, dtype) -> np.ndarray:
    """(B, 1, 1, T) additive penalty excluding masked keys for every query."""
    m = np.asarray(mask, dtype=dtype)
    return ((1.0 - m) * MASK_PENALTY)[:, None, None, :].astype(dtype)


def causal_penalty(n: int, dtype) -> np.ndarray:
    """(1, 1, n, n) additive penalty admitting only keys at or before the query."""
    tri = np.triu(np.ones((n, n), dtype=dtype), k=1)
    return (tri * MASK_PENALTY)[None, None, :, :]


# -- attention and blocks ----------------------------------------------------------


def split_heads(x: Tensor, n_heads: int) -> Tensor:
    b, t, d = x.shape
    return x.reshape((b, t, n_heads, d // n_heads)).transpose((0, 2, 1, 3))


def merge_heads(x: Tensor) -> Tensor:
    b, h, t, hd = x.shape
    return x.transpose((0, 2, 1, 3)).reshape((b, t, h * hd))


def attention(params: dict[str, Tensor], prefix: str, x_query: Tensor, x_kv: Tensor,
              cfg: BackboneConfig, bias: Tensor | None, penalty: np.ndarray | None) -> Tensor:
    """Multi-head scaled dot-product attention with additive bias and mask."""
    q = split_heads(x_query @ params[prefix + "wq"], cfg.n_heads)
    k = split_heads(x_kv @ params[prefix + "wk"], cfg.n_heads)
    v = split_heads(x_kv @ params[prefix + "wv"], cfg.n_heads)
    scores = (q @ k.swapaxes(-1, -2)) * (1.0 / math.sqrt(cfg.head_dim))
    if bias is not None:
        scores = scores + bias
    if penalty is not None:
        scores = scores + penalty
    weights = ad.softmax(scores, axis=-1)
    return merge_heads(weights @ v) @ params[prefix + "wo"]


def rmsnorm(x: Tensor, gain: Tensor) -> Tensor:
    ms = (x * x).mean(axis=-1, keepdims=True)
    return x * ((ms + RMSNORM_EPS) ** -0.5) * gain


def ffn(params: dict[str, Tensor], prefix: str, x: Tensor) -> Tensor:
    return ad.gelu(x @ params[prefix + "w1"]) @ params[prefix + "w2"]


def _maybe_drop(x: Tensor, rate: float, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout on a residual branch; identity unless training with rate > 0."""
    if rng is None or rate <= 0.0:
        return x
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / (1.0 - rate)
    return x * Tensor(keep)


def encode(params: dict[str, Tensor], cfg: BackboneConfig, fused: Tensor,
           patch_mask: np.ndarray, drop_rng: np.random.Generator | None = None) -> Tensor:
    """Bidirectional encoder over the fused patch embeddings."""
    n = fused.shape[-2]
    dtype = fused.dtype
    bias = position_bias(params["enc.rel_bias"], n, n, bidirectional=True, cfg=cfg)
    penalty = key_mask_penalty(patch_mask, dtype)
    h = fused
    for i in range(cfg.enc_layers):
        p = f"enc.layer{i}."
        attn_in = rmsnorm(h, params[p + "attn_norm"])
        attn_out = attention(params, p + "attn.", attn_in, attn_in, cfg, bias, penalty)
        h = h + _maybe_drop(attn_out, cfg.dropout, drop_rng)
        ffn_in = rmsnorm(h, params[p + "ffn_norm"])
        h = h + _maybe_drop(ffn(params, p + "ffn.", ffn_in), cfg.dropout, drop_rng)
    return rmsnorm(h, params["enc.final_norm"])


def decode(params: dict[str, Tensor], cfg: BackboneConfig, tokens: Tensor,
           memory: Tensor, memory_mask: np.ndarray,
           drop_rng: np.random.Generator | None = None) -> Tensor:
    """Causal decoder with cross-attention into the encoder memory."""
    t = tokens.shape[-2]
    dtype = tokens.dtype
    bias = position_bias(params["dec.rel_bias"], t, t, bidirectional=False, cfg=cfg)
    self_penalty = causal_penalty(t, dtype)
    cross_penalty = key_mask_penalty(memory_mask, dtype)
    h = tokens
    for i in range(cfg.dec_layers):
        p = f"dec.layer{i}."
        self_in = rmsnorm(h, params[p + "self_norm"])
        self_out = attention(params, p + "self_attn.", self_in, self_in, cfg, bias, self_penalty)
        h = h + _maybe_drop(self_out, cfg.dropout, drop_rng)
        cross_in = rmsnorm(h, params[p + "cross_norm"])
        cross_out = attention(params, p + "cross_attn.", cross_in, memory, cfg, None, cross_penalty)
        h = h + _maybe_drop(cross_out, cfg.dropout, drop_rng)
        ffn_in = rmsnorm(h, params[p + "ffn_norm"])
        h = h + _maybe_drop(ffn(params, p + "ffn.", ffn_in), cfg.dropout, drop_rng)
    return rmsnorm(h, params["dec.final_norm"])
