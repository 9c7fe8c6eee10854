"""Corpus records, manifest I/O, statistics, and a synthetic toy generator.

A manifest is a JSONL stream, one record per line, with fields
``id``, ``image_path`` OR ``image_feature`` (list of reals),
``short_text``, ``long_texts`` (list of strings).

The synthetic generator builds records whose image feature is a
salience-weighted sum of latent attribute vectors: the short text names
only the first (dominant) attribute, while the long texts describe one
attribute per sentence, so long captions are strictly more informative.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .tokenizer import split_subcaptions, word_tokenize

log = logging.getLogger(__name__)

ATTRIBUTE_WORDS = [
    "red", "blue", "green", "amber", "violet", "teal", "coral", "ivory",
    "round", "square", "striped", "dotted", "glossy", "matte", "woven", "carved",
    "wooden", "metal", "glass", "stone", "paper", "ceramic", "velvet", "copper",
    "tiny", "huge", "curved", "jagged", "smooth", "hollow", "bright", "faded",
]

_LONG_TEMPLATES = [
    "a {} thing.",
    "it is {}.",
]

SHORT_TEMPLATE = "a photo of a {}."


@dataclass
class ManifestRecord:
    id: str
    short_text: str = ""
    long_texts: list[str] = field(default_factory=list)
    image_path: str | None = None
    image_feature: np.ndarray | None = None
    label: int | None = None          # salient-attribute class, synthetic corpora only
    attributes: list[str] | None = None

    def __post_init__(self):
        if self.image_feature is not None:
            self.image_feature = np.asarray(self.image_feature, dtype=np.float64)
        if not self.short_text and not self.long_texts:
            raise ValueError(f"record {self.id}: needs short_text or long_texts")
        if self.image_path is None and self.image_feature is None:
            raise ValueError(f"record {self.id}: needs image_path or image_feature")

    def to_json(self) -> str:
        d = {"id": self.id, "short_text": self.short_text, "long_texts": self.long_texts}
        if self.image_path is not None:
            d["image_path"] = self.image_path
        if self.image_feature is not None:
            d["image_feature"] = [float(x) for x in self.image_feature]
        if self.label is not None:
            d["label"] = self.label
        if self.attributes is not None:
            d["attributes"] = self.attributes
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "ManifestRecord":
        d = json.loads(line)
        return cls(
            id=d["id"],
            short_text=d.get("short_text", ""),
            long_texts=d.get("long_texts", []),
            image_path=d.get("image_path"),
            image_feature=d.get("image_feature"),
            label=d.get("label"),
            attributes=d.get("attributes"),
        )


def save_manifest(records: list[ManifestRecord], path) -> None:
    with open(path, "w") as f:
        for rec in records:
            f.write(rec.to_json() + "\n")


def load_manifest(path) -> list[ManifestRecord]:
    """Load a JSONL manifest; unreadable lines are skipped with a warning."""
    records = []
    skipped = 0
    with open(path) as f:
        for i, line in enumerate(f):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(ManifestRecord.from_json(line))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                skipped += 1
                log.warning("skipping manifest line %d: %s", i + 1, exc)
    if skipped:
        log.warning("skipped %d unreadable manifest records", skipped)
    return records


@dataclass
class CorpusStats:
    n_images: int
    n_texts: int
    avg_subcaptions_per_text: float
    avg_tokens_per_text: float
    n_skipped: int = 0

    def to_dict(self) -> dict:
        return {
            "n_images": self.n_images,
            "n_texts": self.n_texts,
            "avg_subcaptions_per_text": self.avg_subcaptions_per_text,
            "avg_tokens_per_text": self.avg_tokens_per_text,
            "n_skipped": self.n_skipped,
        }


def text_token_count(text: str) -> int:
    """Word tokens plus one separator per sub-caption (the per-text token count)."""
    subs = split_subcaptions(text)
    return sum(len(word_tokenize(s)) for s in subs) + len(subs)


def corpus_stats(records) -> CorpusStats:
    """Counts and means over all texts (short and long) of a record stream."""
    n_images = 0
    n_texts = 0
    sub_total = 0
    tok_total = 0
    for rec in records:
        n_images += 1
        texts = ([rec.short_text] if rec.short_text else []) + list(rec.long_texts)
        for t in texts:
            n_texts += 1
            sub_total += len(split_subcaptions(t))
            tok_total += text_token_count(t)
    if n_texts == 0:
        return CorpusStats(n_images, 0, 0.0, 0.0)
    return CorpusStats(n_images, n_texts, sub_total / n_texts, tok_total / n_texts)


def generate_synthetic_corpus(
    seed: int,
    n: int,
    n_attributes: int,
    feature_dim: int,
    pool_size: int | None = None,
) -> list[ManifestRecord]:
    """Generate `n` records, each with `n_attributes` latent attributes.

    Every attribute in the pool gets a random unit vector. A record's image
    feature is the normalized salience-weighted sum of its attribute vectors
    (weight 1/(j+1) for position j). Attribute tuples are distinct across
    records whenever enough ordered tuples exist. Deterministic in `seed`.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    if n_attributes < 2:
        raise ValueError("n_attributes must be >= 2")
    if pool_size is None:
        pool_size = 8 * n_attributes
    if pool_size < n_attributes:
        raise ValueError("pool_size must be >= n_attributes")
    rng = np.random.default_rng(seed)

    pool = list(ATTRIBUTE_WORDS)
    while len(pool) < pool_size:
        pool.append(f"attr{len(pool)}")
    pool = pool[:pool_size]

    vectors = rng.normal(size=(pool_size, feature_dim))
    vectors /= np.linalg.norm(vectors, axis=1, keepdims=True)

    n_tuples = math.perm(pool_size, n_attributes)
    seen: set[tuple] = set()
    records = []
    weights = 1.0 / (1.0 + np.arange(n_attributes))
    for i in range(n):
        while True:
            idx = tuple(rng.choice(pool_size, size=n_attributes, replace=False).tolist())
            if n >= n_tuples or idx not in seen:
                seen.add(idx)
                break
        attrs = [pool[j] for j in idx]
        feat = (weights[:, None] * vectors[list(idx)]).sum(axis=0)
        feat /= np.linalg.norm(feat)
        short = SHORT_TEMPLATE.format(attrs[0])
        longs = [
            " ".join(tpl.format(a) for a in attrs)
            for tpl in _LONG_TEMPLATES
        ]
        records.append(ManifestRecord(
            id=f"syn{i:05d}",
            short_text=short,
            long_texts=longs,
            image_feature=feat,
            label=int(idx[0]),
            attributes=attrs,
        ))
    return records


def synthetic_class_names(records: list[ManifestRecord]) -> list[str]:
    """Class names for the salient-attribute classification task (index = label)."""
    names: dict[int, str] = {}
    for rec in records:
        if rec.label is not None and rec.attributes:
            names[rec.label] = rec.attributes[0]
    if not names:
        raise ValueError("manifest carries no labels")
    return [names[k] for k in sorted(names)]
