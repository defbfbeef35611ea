"""Multi-resolution patching: division, projection, upsampling, fusion.

A context of length C is divided K times with patch sizes P_1 < ... < P_K
(powers of two, each dividing the next). Every (patch, mask-segment) pair is
projected to the model width by a per-resolution residual MLP, coarser groups
are upsampled by consecutive replication to the finest group's length, and
the groups are summed into one fused embedding sequence.

Decoder inputs reuse the same projectors: the future prefix is patched at
every resolution, embeddings are averaged within each output-patch-sized
token, and a learned start token occupies position 0. Averaging (instead of
replication) keeps each token a function of points no later than its own
span, which causal attention requires.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


@dataclass(frozen=True)
class PatchConfig:
    """Patch sizes for the input divisions plus the output patch size."""

    patch_sizes: tuple[int, ...] = (16, 32)
    output_patch_size: int = 32

    def __post_init__(self):
        ps = self.patch_sizes
        if not ps:
            raise ValueError("at least one patch size required")
        if list(ps) != sorted(set(ps)):
            raise ValueError("patch sizes must be strictly increasing")
        for p in ps + (self.output_patch_size,):
            if p < 1 or (p & (p - 1)) != 0:
                raise ValueError(f"patch size {p} is not a power of 2")
        for p in ps:
            if ps[-1] % p != 0:
                raise ValueError(f"patch size {p} must divide the coarsest size {ps[-1]}")
        if self.output_patch_size < ps[-1] or self.output_patch_size % ps[-1] != 0:
            raise ValueError("output patch size must be a multiple of the coarsest input size")

    @property
    def finest(self) -> int:
        return self.patch_sizes[0]

    @property
    def coarsest(self) -> int:
        return self.patch_sizes[-1]


@dataclass
class PatchGroup:
    """One division: contiguous non-overlapping patches plus mask segments."""

    resolution: int          # index k into the patch-size list
    patch_size: int
    patches: np.ndarray      # (..., N_k, P_k)
    mask_segments: np.ndarray


@dataclass
class FusedEmbedding:
    """Finest-resolution embedding sequence and its patch-level mask."""

    embeddings: Tensor       # (..., N_1, d)
    patch_mask: np.ndarray   # (..., N_1); 0 iff the fine patch is all padding


def patch_divide(seq: np.ndarray, mask: np.ndarray, patch_size: int,
                 resolution: int = 0) -> PatchGroup:
    """Split the last axis into contiguous patches of `patch_size`."""
    seq = np.asarray(seq)
    mask = np.asarray(mask)
    length = seq.shape[-1]
    if length % patch_size != 0:
        raise ValueError(f"length {length} not divisible by patch size {patch_size}; pad first")
    n = length // patch_size
    new_shape = seq.shape[:-1] + (n, patch_size)
    return PatchGroup(resolution=resolution, patch_size=patch_size,
                      patches=seq.reshape(new_shape), mask_segments=mask.reshape(new_shape))


def patch_level_mask(mask: np.ndarray, fine_patch_size: int) -> np.ndarray:
    """1 where a fine patch contains at least one valid point, else 0."""
    mask = np.asarray(mask)
    n = mask.shape[-1] // fine_patch_size
    segs = mask.reshape(mask.shape[:-1] + (n, fine_patch_size))
    return segs.max(axis=-1)


def upsample_group(embeddings: Tensor, target_len: int) -> Tensor:
    """Replicate each embedding N_1/N_k consecutive times along the patch axis.

    Equivalent to indexing source position ceil(j * N_k / N_1) for output
    position j (1-based), given that N_k divides N_1.
    """
    n_k = embeddings.shape[-2]
    if target_len % n_k != 0:
        raise ValueError(f"group length {n_k} must divide target length {target_len}")
    ratio = target_len // n_k
    if ratio == 1:
        return embeddings
    return ad.repeat(embeddings, ratio, axis=embeddings.ndim - 2)


def fuse_groups(upsampled: Sequence[Tensor], point_mask: np.ndarray,
                fine_patch_size: int) -> FusedEmbedding:
    """Sum aligned groups elementwise and attach the fine-grained patch mask."""
    lengths = {g.shape[-2] for g in upsampled}
    if len(lengths) != 1:
        raise ValueError(f"groups not aligned: lengths {sorted(lengths)}")
    total = upsampled[0]
    for g in upsampled[1:]:
        total = total + g
    return FusedEmbedding(embeddings=total,
                          patch_mask=patch_level_mask(point_mask, fine_patch_size))


# -- learned projection ---------------------------------------------------------


def projector_shapes(patch_size: int, d_model: int) -> dict[str, tuple]:
    """Residual-MLP projector for one resolution: (patch ++ mask) -> d_model."""
    shapes = {
        "w_in": (2 * patch_size, d_model),
        "b_in": (d_model,),
    }
    for i in range(2):
        shapes[f"block{i}.w1"] = (d_model, d_model)
        shapes[f"block{i}.b1"] = (d_model,)
        shapes[f"block{i}.w2"] = (d_model, d_model)
        shapes[f"block{i}.b2"] = (d_model,)
    return shapes


def residual_mlp(params: dict[str, Tensor], prefix: str, h: Tensor, n_blocks: int = 2) -> Tensor:
    """h <- h + W2 gelu(W1 h + b1) + b2, applied `n_blocks` times."""
    for i in range(n_blocks):
        inner = ad.gelu(h @ params[f"{prefix}block{i}.w1"] + params[f"{prefix}block{i}.b1"])
        h = h + (inner @ params[f"{prefix}block{i}.w2"] + params[f"{prefix}block{i}.b2"])
    return h


def project_patches(params: dict[str, Tensor], resolution: int, patches: np.ndarray,
                    mask_segments: np.ndarray) -> Tensor:
    """Project every (patch ++ mask) pair of one group into the latent space."""
    prefix = f"proj{resolution}."
    joint = np.concatenate([patches, mask_segments], axis=-1)
    x = Tensor(np.ascontiguousarray(joint, dtype=params[prefix + "w_in"].dtype))
    h = x @ params[prefix + "w_in"] + params[prefix + "b_in"]
    return residual_mlp(params, prefix, h)


def embed_context(params: dict[str, Tensor], cfg: PatchConfig, seq: np.ndarray,
                  mask: np.ndarray) -> FusedEmbedding:
    """Full input pipeline: divide at every resolution, project, upsample, fuse."""
    n_fine = seq.shape[-1] // cfg.finest
    groups = []
    for k, p in enumerate(cfg.patch_sizes):
        g = patch_divide(seq, mask, p, resolution=k)
        z = project_patches(params, k, g.patches, g.mask_segments)
        groups.append(upsample_group(z, n_fine))
    return fuse_groups(groups, mask, cfg.finest)


def embed_decoder_tokens(params: dict[str, Tensor], cfg: PatchConfig,
                         prefix: np.ndarray, mask: np.ndarray | None = None) -> Tensor:
    """Start token plus one token per output patch of the future prefix.

    `prefix` has shape (batch, L) with L a multiple of the output patch size
    (L may be 0). Token t >= 1 covers points ((t-1) * P_o, t * P_o]; within a
    token each resolution contributes the mean of its projected patches, and
    resolutions are summed.
    """
    p_o = cfg.output_patch_size
    batch = prefix.shape[0]
    length = prefix.shape[-1]
    if length % p_o != 0:
        raise ValueError(f"decoder prefix length {length} is not a multiple of {p_o}")
    if mask is None:
        mask = np.ones_like(prefix)
    start = ad.broadcast_to(params["start_token"].reshape(1, 1, -1),
                            (batch, 1, params["start_token"].shape[0]))
    if length == 0:
        return start
    n_tokens = length // p_o
    token_emb: Tensor | None = None
    for k, p in enumerate(cfg.patch_sizes):
        g = patch_divide(prefix, mask, p, resolution=k)
        z = project_patches(params, k, g.patches, g.mask_segments)   # (B, L/P_k, d)
        d = z.shape[-1]
        pooled = z.reshape((batch, n_tokens, p_o // p, d)).mean(axis=2)
        token_emb = pooled if token_emb is None else token_emb + pooled
    return ad.concat([start, token_emb], axis=1)
