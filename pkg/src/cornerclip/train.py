"""Training engine: batch assembly, gradients, AdamW updates, checkpointing.

Everything downstream of (seed, corpus, config) is deterministic: each
step draws its batch from a stateless per-step generator, so resuming
from a checkpoint reproduces the uninterrupted metrics stream exactly.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import checkpoint as ckpt
from . import image_encoder, objective, text_encoder
from .corpus import ManifestRecord
from .image_encoder import ImageEncoderConfig
from .objective import ObjectiveParams
from .text_encoder import TextEncoderConfig
from .tokenizer import Vocabulary, sample_consecutive_rng, split_subcaptions, tokenize

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    batch_size: int = 32
    steps: int = 600
    lr: float = 1e-3
    weight_decay: float = 0.01
    warmup_steps: int = 50
    lr_schedule: str = "constant"        # {"constant", "cosine"}
    seed: int = 0
    k_subcaptions: int = 3               # 0 means short-only training
    use_long_texts: bool = True
    mask_mode: str = "corner"
    m: int = 2
    freeze_image: bool = False
    tau_init: float = 0.07
    # model shape
    limit: int = 32
    text_depth: int = 2
    text_width: int = 64
    text_heads: int = 4
    projection_dim: int = 32
    image_mode: str = "precomputed"
    # bookkeeping
    checkpoint_every: int = 0            # 0 disables periodic checkpoints

    def __post_init__(self):
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if self.k_subcaptions < 0:
            raise ValueError("k_subcaptions must be >= 0")
        if self.lr_schedule not in ("constant", "cosine"):
            raise ValueError(f"unknown lr_schedule {self.lr_schedule!r}")

    @property
    def long_branch_active(self) -> bool:
        return self.use_long_texts and self.k_subcaptions > 0


def make_configs(vocab: Vocabulary, cfg: TrainConfig, feature_dim: int):
    text_cfg = TextEncoderConfig(
        vocab_size=len(vocab), limit=cfg.limit, m=cfg.m, depth=cfg.text_depth,
        width=cfg.text_width, heads=cfg.text_heads,
        projection_dim=cfg.projection_dim, mask_mode=cfg.mask_mode)
    image_cfg = ImageEncoderConfig(
        mode=cfg.image_mode, projection_dim=cfg.projection_dim,
        input_feature_dim=feature_dim,
        trainable_projection=not cfg.freeze_image,
        preset="lit" if cfg.freeze_image else "from_scratch")
    return text_cfg, image_cfg


def build_model(text_cfg: TextEncoderConfig, image_cfg: ImageEncoderConfig,
                seed: int, tau_init: float = 0.07):
    """Flat parameter dict (text.*, img.*, obj.s) plus the objective wrapper."""
    params = text_encoder.init_params(text_cfg, seed, prefix="text.")
    params.update(image_encoder.init_params(image_cfg, seed + 1, prefix="img."))
    obj = ObjectiveParams.create(tau_init)
    params["obj.s"] = obj.s
    return params


def objective_params(params: dict) -> ObjectiveParams:
    return ObjectiveParams(s=params["obj.s"])


@dataclass
class Batch:
    indices: np.ndarray
    image_inputs: np.ndarray
    short_ids: np.ndarray
    short_roles: np.ndarray
    long_ids: np.ndarray | None = None
    long_roles: np.ndarray | None = None
    n_long_fallback: int = 0


def _image_input(rec: ManifestRecord, image_cfg: ImageEncoderConfig) -> np.ndarray:
    if image_cfg.mode == "precomputed":
        if rec.image_feature is None:
            raise ValueError(f"record {rec.id}: precomputed mode needs image_feature")
        return rec.image_feature
    if rec.image_path is None:
        raise ValueError(f"record {rec.id}: vit mode needs image_path")
    return np.load(rec.image_path)


def _trim(stacked: np.ndarray, seqs) -> np.ndarray:
    """Cut trailing all-PAD columns; pads attract exactly zero attention, so
    the batch's loss is unchanged while attention cost drops sharply."""
    return stacked[:, :max(s.true_length for s in seqs)]


def assemble_batch(records: list[ManifestRecord], vocab: Vocabulary,
                   text_cfg: TextEncoderConfig, cfg: TrainConfig,
                   rng: np.random.Generator,
                   image_cfg: ImageEncoderConfig) -> Batch:
    if len(records) < cfg.batch_size:
        raise ValueError(f"manifest has {len(records)} records < batch_size {cfg.batch_size}")
    idx = rng.choice(len(records), size=cfg.batch_size, replace=False)
    chosen = [records[int(i)] for i in idx]

    images = np.stack([_image_input(r, image_cfg) for r in chosen])
    short_seqs = [tokenize(r.short_text, text_cfg.limit, text_cfg.m, vocab) for r in chosen]
    batch = Batch(
        indices=idx,
        image_inputs=images,
        short_ids=_trim(np.stack([s.ids for s in short_seqs]), short_seqs),
        short_roles=_trim(np.stack([s.roles for s in short_seqs]), short_seqs),
    )
    if not cfg.long_branch_active:
        return batch
    long_seqs = []
    for r in chosen:
        if r.long_texts:
            pick = int(rng.integers(0, len(r.long_texts)))
            subs = split_subcaptions(r.long_texts[pick])
            text = sample_consecutive_rng(subs, cfg.k_subcaptions, rng)
        else:
            text = r.short_text
            batch.n_long_fallback += 1
        long_seqs.append(tokenize(text, text_cfg.limit, text_cfg.m, vocab))
    batch.long_ids = _trim(np.stack([s.ids for s in long_seqs]), long_seqs)
    batch.long_roles = _trim(np.stack([s.roles for s in long_seqs]), long_seqs)
    return batch


def compute_loss(params: dict, batch: Batch, text_cfg: TextEncoderConfig,
                 image_cfg: ImageEncoderConfig, cfg: TrainConfig):
    """Build the loss graph; returns (breakdown, tau tensor)."""
    tau = objective_params(params).tau()
    v = image_encoder.encode_image_graph(batch.image_inputs, params, image_cfg)
    short_feats, _ = text_encoder.encode_text_graph(
        batch.short_ids, batch.short_roles, params, text_cfg)
    t_short = short_feats[:, 0, :]
    if batch.long_ids is None:
        return objective.total_loss(v, t_short, tau), tau
    long_feats, _ = text_encoder.encode_text_graph(
        batch.long_ids, batch.long_roles, params, text_cfg)
    t_g = long_feats[:, 0, :]
    corners = [long_feats[:, 1 + k, :] for k in range(text_cfg.m)]
    return objective.total_loss(v, t_short, tau, t_g=t_g, corners=corners), tau


def trainable_names(params: dict, cfg: TrainConfig) -> list[str]:
    names = []
    for name in sorted(params):
        if cfg.freeze_image and name.startswith("img."):
            continue
        names.append(name)
    return names


def gradients(params: dict, batch: Batch, text_cfg: TextEncoderConfig,
              image_cfg: ImageEncoderConfig, cfg: TrainConfig):
    """Exact gradients of the total loss for every trainable parameter."""
    for t in params.values():
        t.grad = None
    breakdown, tau = compute_loss(params, batch, text_cfg, image_cfg, cfg)
    for label, term in (("loss_short", breakdown.short), ("loss_long", breakdown.long)):
        if term is not None and not np.isfinite(term.value):
            raise FloatingPointError(f"non-finite loss term: {label}")
    breakdown.total.backward()
    grads = {}
    for name in trainable_names(params, cfg):
        g = params[name].grad
        grads[name] = np.zeros_like(params[name].value) if g is None else g.copy()
    return grads, breakdown, float(np.asarray(tau.value).reshape(-1)[0])


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def create(cls, params: dict, names: list[str]) -> "AdamState":
        return cls(m={n: np.zeros_like(params[n].value) for n in names},
                   v={n: np.zeros_like(params[n].value) for n in names})


def lr_at(cfg: TrainConfig, step: int) -> float:
    """Learning rate at 1-based step: linear warmup, then constant or cosine."""
    if cfg.warmup_steps > 0 and step <= cfg.warmup_steps:
        return cfg.lr * step / cfg.warmup_steps
    if cfg.lr_schedule == "constant":
        return cfg.lr
    span = max(cfg.steps - cfg.warmup_steps, 1)
    progress = min((step - cfg.warmup_steps) / span, 1.0)
    return cfg.lr * 0.5 * (1.0 + np.cos(np.pi * progress))


def _decays(name: str, arr: np.ndarray) -> bool:
    # decay matrices only; gains, biases, and the temperature are exempt
    return arr.ndim >= 2


def train_step(params: dict, opt: AdamState, batch: Batch,
               text_cfg: TextEncoderConfig, image_cfg: ImageEncoderConfig,
               cfg: TrainConfig, step: int) -> dict:
    """One AdamW update (decoupled weight decay); returns the step metrics."""
    t0 = time.perf_counter()
    grads, breakdown, tau_val = gradients(params, batch, text_cfg, image_cfg, cfg)
    opt.step += 1
    lr = lr_at(cfg, step)
    gnorm_sq = 0.0
    for name in sorted(grads):
        g = grads[name]
        gnorm_sq += float((g * g).sum())
        opt.m[name] = opt.beta1 * opt.m[name] + (1 - opt.beta1) * g
        opt.v[name] = opt.beta2 * opt.v[name] + (1 - opt.beta2) * g * g
        mhat = opt.m[name] / (1 - opt.beta1 ** opt.step)
        vhat = opt.v[name] / (1 - opt.beta2 ** opt.step)
        p = params[name]
        update = mhat / (np.sqrt(vhat) + opt.eps)
        if cfg.weight_decay and _decays(name, p.value):
            update = update + cfg.weight_decay * p.value
        p.value = p.value - lr * update
    metrics = {
        "step": step,
        "loss_total": float(breakdown.total.value),
        "loss_short": float(breakdown.short.value),
        "loss_long": float(breakdown.long.value) if breakdown.long is not None else 0.0,
        "tau": tau_val,
        "grad_norm": float(np.sqrt(gnorm_sq)),
        "lr": float(lr),
        "n_long_fallback": batch.n_long_fallback,
    }
    metrics.update(breakdown.per_pair(cfg.batch_size, cfg.m, batch.long_ids is not None))
    log.debug("step %d: loss=%.4f (%.3fs)", step, metrics["loss_total"],
              time.perf_counter() - t0)
    return metrics


def step_rng(seed: int, step: int) -> np.random.Generator:
    """Stateless per-step generator; resuming needs no carried RNG state."""
    return np.random.default_rng([seed, step])


def metrics_line(rec: dict) -> str:
    return json.dumps(rec, sort_keys=True)


@dataclass
class TrainResult:
    params: dict
    opt: AdamState
    metrics: list[dict]
    text_cfg: TextEncoderConfig
    image_cfg: ImageEncoderConfig
    vocab: Vocabulary


def checkpoint_meta(cfg: TrainConfig, text_cfg: TextEncoderConfig,
                    image_cfg: ImageEncoderConfig, vocab: Vocabulary) -> dict:
    return {
        "m": cfg.m,
        "mask_mode": cfg.mask_mode,
        "train_config": dataclasses.asdict(cfg),
        "text_config": dataclasses.asdict(text_cfg),
        "image_config": dataclasses.asdict(image_cfg),
        "vocab": {"m_max": vocab.m_max, "token_to_id": vocab.token_to_id},
    }


def vocab_from_meta(meta: dict) -> Vocabulary:
    v = meta["vocab"]
    return Vocabulary(m_max=v["m_max"], token_to_id=dict(v["token_to_id"]))


def run_training(records: list[ManifestRecord], vocab: Vocabulary, cfg: TrainConfig,
                 out_dir: str | None = None, resume_from: str | None = None,
                 stop_after: int | None = None) -> TrainResult:
    """Train for cfg.steps steps (or up to `stop_after`), streaming metrics.

    With `resume_from`, continues from the checkpointed step and reproduces
    the uninterrupted run's remaining metrics exactly.
    """
    if cfg.image_mode == "precomputed":
        feature_dim = int(records[0].image_feature.shape[0])
    else:
        feature_dim = 0
    text_cfg, image_cfg = make_configs(vocab, cfg, feature_dim)

    start_step = 0
    if resume_from is not None:
        params, opt_raw, start_step, meta = ckpt.load_checkpoint(resume_from)
        ckpt.check_meta_field(meta, "m", cfg.m)
        ckpt.check_meta_field(meta, "mask_mode", cfg.mask_mode)
        names = trainable_names(params, cfg)
        if opt_raw is not None:
            adam_m, adam_v, opt_step = opt_raw
            opt = AdamState(m=adam_m, v=adam_v, step=opt_step)
        else:
            opt = AdamState.create(params, names)
    else:
        params = build_model(text_cfg, image_cfg, cfg.seed, cfg.tau_init)
        opt = AdamState.create(params, trainable_names(params, cfg))

    metrics_file = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        mode = "a" if resume_from is not None else "w"
        metrics_file = open(os.path.join(out_dir, "metrics.jsonl"), mode)

    end_step = cfg.steps if stop_after is None else min(stop_after, cfg.steps)
    metrics: list[dict] = []
    try:
        for step in range(start_step + 1, end_step + 1):
            rng = step_rng(cfg.seed, step)
            batch = assemble_batch(records, vocab, text_cfg, cfg, rng, image_cfg)
            rec = train_step(params, opt, batch, text_cfg, image_cfg, cfg, step)
            metrics.append(rec)
            if metrics_file is not None:
                metrics_file.write(metrics_line(rec) + "\n")
            if (out_dir is not None and cfg.checkpoint_every
                    and step % cfg.checkpoint_every == 0):
                ckpt.save_checkpoint(
                    os.path.join(out_dir, f"ckpt_{step:06d}.bin"), params, opt,
                    step, checkpoint_meta(cfg, text_cfg, image_cfg, vocab))
    finally:
        if metrics_file is not None:
            metrics_file.close()

    if out_dir is not None:
        ckpt.save_checkpoint(os.path.join(out_dir, "ckpt_final.bin"), params, opt,
                             end_step, checkpoint_meta(cfg, text_cfg, image_cfg, vocab))
    return TrainResult(params, opt, metrics, text_cfg, image_cfg, vocab)
