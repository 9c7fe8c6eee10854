"""Text tower: masked transformer emitting the global feature and corner features.

The encoder embeds tokens and positions, applies `depth` pre-norm blocks
under the corner attention mask, and pools positions 0..m (CLS plus corner
tokens). Pooled states go through one shared projection and are
L2-normalized: position 0 is the global text feature, positions 1..m the
corner features.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import masks, transformer
from .autodiff import Tensor, l2_normalize, layer_norm, matmul, take_rows
from .tokenizer import ROLE_SEP, ROLE_TEXT, TokenSequence, Vocabulary

CORNER_ID_BASE = 4  # reserved corner token ids start here (see Vocabulary)


@dataclass
class TextEncoderConfig:
    vocab_size: int
    limit: int = 32
    m: int = 2
    depth: int = 2
    width: int = 64
    heads: int = 4
    mlp_ratio: int = 4
    projection_dim: int = 32
    mask_mode: str = "corner"

    def __post_init__(self):
        if self.width % self.heads != 0:
            raise ValueError("width must be divisible by heads")
        if self.limit < self.m + 2:
            raise ValueError("limit too small for corner tokens")
        if self.projection_dim < 1:
            raise ValueError("projection_dim must be >= 1")
        if self.mask_mode not in ("corner", "full"):
            raise ValueError(f"unknown mask_mode {self.mask_mode!r}")


@dataclass
class TextFeatures:
    t_g: np.ndarray                     # (p,) unit vector
    corners: np.ndarray                 # (m, p) unit vectors
    hidden: np.ndarray | None = None    # (L, d) final-norm states, pre-projection


def init_params(config: TextEncoderConfig, seed: int, prefix: str = "text.") -> dict:
    """Seed-deterministic init; corner embedding rows get distinct constant offsets."""
    rng = np.random.default_rng(seed)
    d = config.width
    params: dict[str, Tensor] = {}

    tok = rng.normal(0.0, 0.02, size=(config.vocab_size, d))
    # distinct per-corner offsets so corner rows start apart from one another
    for i in range(config.m):
        tok[CORNER_ID_BASE + i] += 0.25 * (i + 1)
    params[f"{prefix}tok_emb"] = Tensor(tok, requires_grad=True, name=f"{prefix}tok_emb")
    params[f"{prefix}pos_emb"] = Tensor(
        rng.normal(0.0, 0.02, size=(config.limit, d)), requires_grad=True,
        name=f"{prefix}pos_emb")
    for layer in range(config.depth):
        transformer.init_block_params(rng, d, config.mlp_ratio, f"{prefix}L{layer}.", params)
    params[f"{prefix}lnf.g"] = Tensor(np.ones(d), requires_grad=True, name=f"{prefix}lnf.g")
    params[f"{prefix}lnf.b"] = Tensor(np.zeros(d), requires_grad=True, name=f"{prefix}lnf.b")
    params[f"{prefix}proj"] = Tensor(
        rng.normal(0.0, d ** -0.5, size=(d, config.projection_dim)),
        requires_grad=True, name=f"{prefix}proj")
    return params


def param_count(config: TextEncoderConfig) -> int:
    """Closed-form trainable parameter count; audited against array sizes in tests."""
    d = config.width
    return (
        config.vocab_size * d
        + config.limit * d
        + config.depth * transformer.block_param_count(d, config.mlp_ratio)
        + 2 * d
        + d * config.projection_dim
    )


def _batch_bias(roles: np.ndarray, mask_mode: str) -> np.ndarray:
    per_seq = np.stack([masks.mask_bias(masks.full_mask(r, mask_mode)) for r in roles])
    return per_seq[:, None, :, :]


def encode_text_graph(ids: np.ndarray, roles: np.ndarray, params: dict,
                      config: TextEncoderConfig, prefix: str = "text.",
                      collect_attn: list | None = None):
    """Batched forward. Returns (features (B, 1+m, p), hidden (B, L, d)) Tensors."""
    ids = np.atleast_2d(np.asarray(ids, dtype=np.int64))
    roles = np.atleast_2d(np.asarray(roles, dtype=np.int64))
    L = ids.shape[1]
    if L > config.limit or L < config.m + 1:
        raise ValueError(f"sequence length {L} outside [m+1, limit {config.limit}]")
    if ids.min() < 0 or ids.max() >= config.vocab_size:
        raise ValueError("token id out of vocabulary range")
    bias = _batch_bias(roles, config.mask_mode)
    pos = params[f"{prefix}pos_emb"]
    if L < config.limit:
        # trailing PAD positions carry no information and attract no attention
        # weight, so a batch may be trimmed to its longest true length
        pos = pos[np.arange(L)]
    x = take_rows(params[f"{prefix}tok_emb"], ids) + pos
    for layer in range(config.depth):
        x = transformer.block_forward(x, params, f"{prefix}L{layer}.", config.heads,
                                      bias, collect_attn)
    hidden = layer_norm(x, params[f"{prefix}lnf.g"], params[f"{prefix}lnf.b"])
    pooled = hidden[:, :config.m + 1, :]
    feats = l2_normalize(matmul(pooled, params[f"{prefix}proj"]))
    return feats, hidden


def encode_text(seq: TokenSequence, params: dict, config: TextEncoderConfig,
                prefix: str = "text.", with_hidden: bool = False) -> TextFeatures:
    feats, hidden = encode_text_graph(seq.ids, seq.roles, params, config, prefix)
    f = feats.value[0]
    return TextFeatures(
        t_g=f[0],
        corners=f[1:config.m + 1],
        hidden=hidden.value[0] if with_hidden else None,
    )


def encode_text_batch(seqs: list[TokenSequence], params: dict,
                      config: TextEncoderConfig, prefix: str = "text.") -> np.ndarray:
    """Global features for a list of sequences, shape (B, p)."""
    ids = np.stack([s.ids for s in seqs])
    roles = np.stack([s.roles for s in seqs])
    feats, _ = encode_text_graph(ids, roles, params, config, prefix)
    return feats.value[:, 0, :]


def dump_attention(seq: TokenSequence, params: dict, config: TextEncoderConfig,
                   layer: int, prefix: str = "text.") -> np.ndarray:
    """Head-averaged (L, L) attention weights for one layer; rows sum to 1."""
    if not 0 <= layer < config.depth:
        raise ValueError(f"layer {layer} out of range [0, {config.depth})")
    collect: list = []
    encode_text_graph(seq.ids, seq.roles, params, config, prefix, collect_attn=collect)
    return collect[layer][0].mean(axis=0)


def text_hidden_states(seq: TokenSequence, params: dict, config: TextEncoderConfig,
                       prefix: str = "text.") -> np.ndarray:
    """Final-norm pre-projection hidden states (L, d) for one sequence."""
    _, hidden = encode_text_graph(seq.ids, seq.roles, params, config, prefix)
    return hidden.value[0]


def content_positions(seq: TokenSequence) -> np.ndarray:
    """Indices of TEXT and SEP positions."""
    return np.where((seq.roles == ROLE_TEXT) | (seq.roles == ROLE_SEP))[0]


def default_toy_config(vocab: Vocabulary, m: int = 2, limit: int = 32,
                       mask_mode: str = "corner", projection_dim: int = 32,
                       depth: int = 2, width: int = 64, heads: int = 4) -> TextEncoderConfig:
    return TextEncoderConfig(
        vocab_size=len(vocab), limit=limit, m=m, depth=depth, width=width,
        heads=heads, projection_dim=projection_dim, mask_mode=mask_mode)
