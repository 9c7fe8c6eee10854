"""Zero-shot evaluation: retrieval recall, prompt classification, FLOPs.

Retrieval uses the global text feature only. The image-to-text rule is
any-hit: an image scores when any of its paired texts lands in its top-k.
All ties break toward the lower index so results are platform-stable, and
every metric is invariant to positive rescaling of the similarity matrix.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import image_encoder, text_encoder
from .autodiff import count_macs
from .corpus import ManifestRecord
from .image_encoder import ImageEncoderConfig
from .text_encoder import TextEncoderConfig
from .tokenizer import Vocabulary, tokenize

DEFAULT_TEMPLATES = ["a photo of a {}."]


@dataclass
class RetrievalGroundTruth:
    image_to_texts: list[list[int]]   # per image, indices of its paired texts
    text_to_image: list[int]          # per text, index of its single image

    def __post_init__(self):
        for img, texts in enumerate(self.image_to_texts):
            if not texts:
                raise ValueError(f"image {img} has no paired texts")
            for t in texts:
                if self.text_to_image[t] != img:
                    raise ValueError("ground truth is not bidirectionally consistent")
        for t, img in enumerate(self.text_to_image):
            if t not in self.image_to_texts[img]:
                raise ValueError("ground truth is not bidirectionally consistent")

    @classmethod
    def one_to_one(cls, n: int) -> "RetrievalGroundTruth":
        return cls([[i] for i in range(n)], list(range(n)))


@dataclass
class EvalReport:
    task: str
    metrics: dict = field(default_factory=dict)
    n_images: int = 0
    n_texts: int = 0

    def to_dict(self) -> dict:
        return {"task": self.task, "n_images": self.n_images,
                "n_texts": self.n_texts, **self.metrics}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def has_nan(self) -> bool:
        return any(isinstance(v, float) and not np.isfinite(v)
                   for v in self.metrics.values())


def _top_indices(scores: np.ndarray, k: int) -> np.ndarray:
    # stable sort on negated scores: ties resolve to the lower index
    return np.argsort(-scores, kind="stable")[:k]


def recall_at_k(S: np.ndarray, gt: RetrievalGroundTruth, k: int, direction: str) -> float:
    """Fraction of queries whose match ranks in the top k (any-hit for i2t)."""
    S = np.asarray(S, dtype=np.float64)
    if not np.all(np.isfinite(S)):
        raise ValueError("similarity matrix has non-finite entries")
    if k < 1:
        raise ValueError("k must be >= 1")
    if not gt.image_to_texts or not gt.text_to_image:
        raise ValueError("empty ground truth")
    if direction == "i2t":
        hits = 0
        for img, paired in enumerate(gt.image_to_texts):
            top = _top_indices(S[img], k)
            if any(t in paired for t in top):
                hits += 1
        return hits / len(gt.image_to_texts)
    if direction == "t2i":
        hits = 0
        for t, img in enumerate(gt.text_to_image):
            top = _top_indices(S[:, t], k)
            if img in top:
                hits += 1
        return hits / len(gt.text_to_image)
    raise ValueError(f"unknown direction {direction!r}")


def embed_eval_set(records: list[ManifestRecord], params: dict,
                   text_cfg: TextEncoderConfig, image_cfg: ImageEncoderConfig,
                   vocab: Vocabulary, text_kind: str = "long_full",
                   batch_size: int = 64):
    """Unit-norm embedding arrays for a manifest.

    text_kind "short" embeds the short texts; "long_full" embeds the ENTIRE
    first long text (truncated to the limit) - evaluation never samples
    sub-captions. Returns (ids, image array (n,p), text array (n,p)).
    """
    if text_kind not in ("short", "long_full"):
        raise ValueError(f"unknown text_kind {text_kind!r}")
    texts = []
    for rec in records:
        if text_kind == "short":
            texts.append(rec.short_text or rec.long_texts[0])
        else:
            texts.append(rec.long_texts[0] if rec.long_texts else rec.short_text)
    seqs = [tokenize(t, text_cfg.limit, text_cfg.m, vocab) for t in texts]
    text_feats = []
    for i in range(0, len(seqs), batch_size):
        text_feats.append(text_encoder.encode_text_batch(
            seqs[i:i + batch_size], params, text_cfg))
    image_feats = []
    for i in range(0, len(records), batch_size):
        chunk = records[i:i + batch_size]
        if image_cfg.mode == "precomputed":
            inputs = np.stack([r.image_feature for r in chunk])
        else:
            inputs = np.stack([np.load(r.image_path) for r in chunk])
        image_feats.append(image_encoder.encode_image_graph(inputs, params, image_cfg).value)
    ids = [r.id for r in records]
    return ids, np.concatenate(image_feats), np.concatenate(text_feats)


def evaluate_retrieval(image_feats: np.ndarray, text_feats: np.ndarray,
                       gt: RetrievalGroundTruth, task: str = "retrieval",
                       ks=(1, 5)) -> EvalReport:
    S = image_feats @ text_feats.T
    metrics = {}
    for k in ks:
        metrics[f"i2t_r@{k}"] = recall_at_k(S, gt, k, "i2t")
        metrics[f"t2i_r@{k}"] = recall_at_k(S, gt, k, "t2i")
    return EvalReport(task=task, metrics=metrics,
                      n_images=image_feats.shape[0], n_texts=text_feats.shape[0])


def class_prototypes(class_names: list[str], templates: list[str], params: dict,
                     text_cfg: TextEncoderConfig, vocab: Vocabulary) -> np.ndarray:
    """Per class: embed each filled template, average, re-normalize."""
    if not class_names:
        raise ValueError("empty class list")
    if not templates:
        raise ValueError("need at least one template")
    protos = []
    for name in class_names:
        seqs = [tokenize(t.format(name), text_cfg.limit, text_cfg.m, vocab)
                for t in templates]
        embs = text_encoder.encode_text_batch(seqs, params, text_cfg)
        mean = embs.mean(axis=0)
        protos.append(mean / np.linalg.norm(mean))
    return np.stack(protos)


def zero_shot_classify(image_feats: np.ndarray, labels: np.ndarray,
                       prototypes: np.ndarray) -> float:
    """Acc@1 of argmax-cosine prediction; ties break to the lower class index."""
    scores = image_feats @ prototypes.T
    pred = np.argmax(scores, axis=1)
    return float(np.mean(pred == np.asarray(labels)))


def classification_task(records: list[ManifestRecord]):
    """(class_names, labels) for the synthetic salient-attribute task."""
    label_names: dict[int, str] = {}
    for rec in records:
        if rec.label is None or not rec.attributes:
            raise ValueError(f"record {rec.id} carries no label")
        label_names[rec.label] = rec.attributes[0]
    classes = sorted(label_names)
    remap = {lab: i for i, lab in enumerate(classes)}
    names = [label_names[lab] for lab in classes]
    labels = np.array([remap[rec.label] for rec in records])
    return names, labels


def short_text_groups(records: list[ManifestRecord]):
    """Deduplicated short texts with any-hit ground truth.

    Returns (unique_texts, image_to_texts, text_to_image): each image's
    paired-text set is the single deduplicated text matching its short
    caption; the t2i side maps each unique text to its first image and is
    only meaningful when short texts are unique.
    """
    unique: dict[str, int] = {}
    image_to_texts = []
    for rec in records:
        t = rec.short_text
        if t not in unique:
            unique[t] = len(unique)
        image_to_texts.append([unique[t]])
    texts = list(unique)
    text_to_image = [-1] * len(texts)
    for img, paired in enumerate(image_to_texts):
        if text_to_image[paired[0]] == -1:
            text_to_image[paired[0]] = img
    return texts, image_to_texts, text_to_image


def short_retrieval_r1(records: list[ManifestRecord], params: dict,
                       text_cfg: TextEncoderConfig, image_cfg: ImageEncoderConfig,
                       vocab: Vocabulary) -> float:
    """i2t R@1 over the deduplicated short-text candidate set."""
    texts, image_to_texts, _ = short_text_groups(records)
    seqs = [tokenize(t, text_cfg.limit, text_cfg.m, vocab) for t in texts]
    text_feats = text_encoder.encode_text_batch(seqs, params, text_cfg)
    _, image_feats, _ = embed_eval_set(records, params, text_cfg, image_cfg, vocab,
                                       text_kind="short")
    S = image_feats @ text_feats.T
    hits = sum(int(_top_indices(S[i], 1)[0] in paired)
               for i, paired in enumerate(image_to_texts))
    return hits / len(records)


def flops_estimate(config: TextEncoderConfig, L_effective: int) -> int:
    """Forward-pass FLOPs (2 per multiply-accumulate) of the text encoder.

    Counts every matrix product: QKV/output projections, attention scores
    and mixing, the MLP, and the shared output projection of the 1+m pooled
    positions. Embedding lookups and normalizations are free.
    """
    if L_effective > config.limit:
        raise ValueError("L_effective exceeds the configured limit")
    L, d = L_effective, config.width
    dm = d * config.mlp_ratio
    macs_per_layer = 4 * L * d * d + 2 * L * L * d + 2 * L * d * dm
    macs = config.depth * macs_per_layer + (1 + config.m) * d * config.projection_dim
    return 2 * macs


def measured_text_flops(config: TextEncoderConfig, params: dict,
                        vocab: Vocabulary) -> int:
    """Instrumented matmul counter over one real forward pass (oracle)."""
    seq = tokenize("a b c d e f g h i j.", config.limit, config.m, vocab)
    with count_macs() as counter:
        text_encoder.encode_text_graph(seq.ids, seq.roles, params, config)
    return 2 * counter[0]


def export_embeddings(path, ids: list[str], image_feats: np.ndarray,
                      text_feats: np.ndarray) -> None:
    """Array dump with record ids, loadable via numpy."""
    np.savez(path, ids=np.array(ids), image=image_feats, text=text_feats)
