"""Image tower: unit-normalized global image embedding.

Two modes share the same output sphere: a small patch transformer with CLS
pooling on pixel inputs, or a linear projection of precomputed features
(locked-tower style training keeps this side frozen).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import transformer
from .autodiff import Tensor, concat, l2_normalize, layer_norm, matmul


@dataclass
class ImageEncoderConfig:
    mode: str = "precomputed"            # {"vit", "precomputed"}
    projection_dim: int = 32
    # precomputed mode
    input_feature_dim: int = 16
    trainable_projection: bool = True
    # vit mode
    image_size: int = 32
    patch_size: int = 8
    channels: int = 3
    depth: int = 2
    width: int = 64
    heads: int = 4
    mlp_ratio: int = 4
    preset: str = "from_scratch"         # {"lit", "from_scratch"}

    def __post_init__(self):
        if self.mode not in ("vit", "precomputed"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "vit":
            if self.image_size % self.patch_size != 0:
                raise ValueError("image_size must be divisible by patch_size")
            if self.width % self.heads != 0:
                raise ValueError("width must be divisible by heads")
        if self.preset not in ("lit", "from_scratch"):
            raise ValueError(f"unknown preset {self.preset!r}")

    @property
    def n_patches(self) -> int:
        return (self.image_size // self.patch_size) ** 2

    @property
    def patch_dim(self) -> int:
        return self.patch_size * self.patch_size * self.channels


@dataclass
class ImageFeature:
    v: np.ndarray  # (p,) unit vector


def freeze_flag(config: ImageEncoderConfig) -> bool:
    """Whether the image tower is excluded from gradient updates."""
    if config.mode == "precomputed":
        return not config.trainable_projection
    return config.preset == "lit"


def init_params(config: ImageEncoderConfig, seed: int, prefix: str = "img.") -> dict:
    rng = np.random.default_rng(seed)
    params: dict[str, Tensor] = {}

    def p(name, value):
        params[f"{prefix}{name}"] = Tensor(value, requires_grad=True, name=f"{prefix}{name}")

    if config.mode == "precomputed":
        p("proj", rng.normal(0.0, config.input_feature_dim ** -0.5,
                             size=(config.input_feature_dim, config.projection_dim)))
        return params
    d = config.width
    p("patch_emb", rng.normal(0.0, config.patch_dim ** -0.5, size=(config.patch_dim, d)))
    p("patch_bias", np.zeros(d))
    p("cls_emb", rng.normal(0.0, 0.02, size=(1, d)))
    p("pos_emb", rng.normal(0.0, 0.02, size=(config.n_patches + 1, d)))
    for layer in range(config.depth):
        transformer.init_block_params(rng, d, config.mlp_ratio, f"{prefix}L{layer}.", params)
    p("lnf.g", np.ones(d))
    p("lnf.b", np.zeros(d))
    p("proj", rng.normal(0.0, d ** -0.5, size=(d, config.projection_dim)))
    return params


def patchify(images: np.ndarray, config: ImageEncoderConfig) -> np.ndarray:
    """(B, H, W, C) pixels -> (B, n_patches, patch_dim), row-major patch order."""
    B, H, W, C = images.shape
    ps = config.patch_size
    if H != config.image_size or W != config.image_size or C != config.channels:
        raise ValueError(f"image shape {images.shape[1:]} does not match config")
    x = images.reshape(B, H // ps, ps, W // ps, ps, C)
    return x.transpose(0, 1, 3, 2, 4, 5).reshape(B, config.n_patches, config.patch_dim)


def encode_image_graph(inputs: np.ndarray, params: dict, config: ImageEncoderConfig,
                       prefix: str = "img.") -> Tensor:
    """Batched forward to unit-normalized global features, shape (B, p)."""
    inputs = np.asarray(inputs, dtype=np.float64)
    if config.mode == "precomputed":
        if inputs.ndim == 1:
            inputs = inputs[None, :]
        if inputs.shape[1] != config.input_feature_dim:
            raise ValueError(
                f"feature width {inputs.shape[1]} != input_feature_dim "
                f"{config.input_feature_dim}")
        return l2_normalize(matmul(Tensor(inputs), params[f"{prefix}proj"]))

    if inputs.ndim == 3:
        inputs = inputs[None]
    patches = patchify(inputs, config)
    B = patches.shape[0]
    x = matmul(Tensor(patches), params[f"{prefix}patch_emb"]) + params[f"{prefix}patch_bias"]
    cls = params[f"{prefix}cls_emb"]
    cls_tiled = cls.reshape(1, 1, config.width) * np.ones((B, 1, 1))
    x = concat([cls_tiled, x], axis=1) + params[f"{prefix}pos_emb"]
    L = config.n_patches + 1
    bias = np.zeros((B, 1, L, L))
    for layer in range(config.depth):
        x = transformer.block_forward(x, params, f"{prefix}L{layer}.", config.heads, bias)
    hidden = layer_norm(x, params[f"{prefix}lnf.g"], params[f"{prefix}lnf.b"])
    return l2_normalize(matmul(hidden[:, 0, :], params[f"{prefix}proj"]))


def encode_image(inputs: np.ndarray, params: dict, config: ImageEncoderConfig,
                 prefix: str = "img.") -> ImageFeature:
    return ImageFeature(v=encode_image_graph(inputs, params, config, prefix).value[0])


def image_hidden_states(pixels: np.ndarray, params: dict, config: ImageEncoderConfig,
                        prefix: str = "img.") -> np.ndarray:
    """Pre-pooling hidden states (n_patches+1, d) for one image (vit mode)."""
    if config.mode != "vit":
        raise ValueError("hidden states exist only in vit mode")
    patches = patchify(np.asarray(pixels, dtype=np.float64)[None], config)
    x = matmul(Tensor(patches), params[f"{prefix}patch_emb"]) + params[f"{prefix}patch_bias"]
    cls = params[f"{prefix}cls_emb"].reshape(1, 1, config.width) * np.ones((1, 1, 1))
    x = concat([cls, x], axis=1) + params[f"{prefix}pos_emb"]
    L = config.n_patches + 1
    bias = np.zeros((1, 1, L, L))
    for layer in range(config.depth):
        x = transformer.block_forward(x, params, f"{prefix}L{layer}.", config.heads, bias)
    hidden = layer_norm(x, params[f"{prefix}lnf.g"], params[f"{prefix}lnf.b"])
    return hidden.value[0]
