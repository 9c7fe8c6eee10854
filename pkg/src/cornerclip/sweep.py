"""Sweep harness over sub-caption count, token limit, or corner count.

Each cell (axis value x seed) trains a fresh model and evaluates it; rows
are appended to a CSV as cells complete, so an interrupted sweep resumes
from the finished cells. Aggregates report mean and stddev over seeds.
"""

from __future__ import annotations

import copy
import csv
import io
import logging
import os
import time
from dataclasses import dataclass, field

from . import evaluation
from .corpus import ManifestRecord
from .evaluation import RetrievalGroundTruth
from .tokenizer import Vocabulary
from .train import TrainConfig, run_training

log = logging.getLogger(__name__)

AXES = ("k_subcaptions", "token_limit", "m_corners")

ROW_FIELDS = [
    "axis", "value", "seed", "long_i2t_r@1", "long_i2t_r@5",
    "long_t2i_r@1", "long_t2i_r@5", "short_r@1", "cls_acc@1",
    "flops", "wall_time_s",
]


@dataclass
class SweepSpec:
    axis: str
    values: list[int]
    base: TrainConfig = field(default_factory=TrainConfig)
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2])

    def __post_init__(self):
        if self.axis not in AXES:
            raise ValueError(f"axis must be one of {AXES}")
        if not self.values or any(v < 0 for v in self.values):
            raise ValueError("values must be nonempty and nonnegative")


def cell_config(spec: SweepSpec, value: int, seed: int) -> TrainConfig:
    cfg = copy.deepcopy(spec.base)
    cfg.seed = seed
    if spec.axis == "k_subcaptions":
        cfg.k_subcaptions = value
        cfg.use_long_texts = value > 0
    elif spec.axis == "token_limit":
        cfg.limit = value
    else:
        cfg.m = value
    return cfg


def run_cell(spec: SweepSpec, value: int, seed: int,
             records: list[ManifestRecord], vocab: Vocabulary) -> dict:
    """Train + evaluate one cell; rerunning a cell reproduces its row."""
    cfg = cell_config(spec, value, seed)
    t0 = time.perf_counter()
    result = run_training(records, vocab, cfg)
    _, img, txt = evaluation.embed_eval_set(
        records, result.params, result.text_cfg, result.image_cfg, vocab, "long_full")
    gt = RetrievalGroundTruth.one_to_one(len(records))
    report = evaluation.evaluate_retrieval(img, txt, gt, task="long")
    short_r1 = evaluation.short_retrieval_r1(
        records, result.params, result.text_cfg, result.image_cfg, vocab)
    names, labels = evaluation.classification_task(records)
    protos = evaluation.class_prototypes(
        names, evaluation.DEFAULT_TEMPLATES, result.params, result.text_cfg, vocab)
    acc = evaluation.zero_shot_classify(img, labels, protos)
    flops = evaluation.flops_estimate(result.text_cfg, result.text_cfg.limit)
    return {
        "axis": spec.axis, "value": value, "seed": seed,
        "long_i2t_r@1": report.metrics["i2t_r@1"],
        "long_i2t_r@5": report.metrics["i2t_r@5"],
        "long_t2i_r@1": report.metrics["t2i_r@1"],
        "long_t2i_r@5": report.metrics["t2i_r@5"],
        "short_r@1": short_r1,
        "cls_acc@1": acc,
        "flops": flops,
        "wall_time_s": round(time.perf_counter() - t0, 3),
    }


def _load_done(path) -> set[tuple]:
    done = set()
    if os.path.exists(path):
        with open(path) as f:
            for row in csv.DictReader(f):
                done.add((row["axis"], int(row["value"]), int(row["seed"])))
    return done


def run_sweep(spec: SweepSpec, records: list[ManifestRecord], vocab: Vocabulary,
              out_dir: str) -> list[dict]:
    """All cells of the sweep; completed cells in rows.csv are skipped."""
    os.makedirs(out_dir, exist_ok=True)
    rows_path = os.path.join(out_dir, "rows.csv")
    done = _load_done(rows_path)
    write_header = not os.path.exists(rows_path)
    rows = []
    with open(rows_path, "a", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=ROW_FIELDS)
        if write_header:
            writer.writeheader()
        for value in spec.values:
            for seed in spec.seeds:
                key = (spec.axis, value, seed)
                if key in done:
                    log.info("skipping completed cell %s", key)
                    continue
                try:
                    row = run_cell(spec, value, seed, records, vocab)
                except Exception:
                    log.exception("cell %s failed; continuing", key)
                    continue
                writer.writerow(row)
                f.flush()
                rows.append(row)
    with open(rows_path) as f:
        all_rows = list(csv.DictReader(f))
    return all_rows


def emit_plot_data(rows: list[dict], path) -> None:
    """Tidy per-cell CSV plus a per-axis-value aggregate (mean, stddev over seeds)."""
    buf = io.StringIO()
    buf.write("# one row per sweep cell; columns: " + ", ".join(ROW_FIELDS) + "\n")
    writer = csv.DictWriter(buf, fieldnames=ROW_FIELDS)
    writer.writeheader()
    for row in rows:
        writer.writerow({k: row[k] for k in ROW_FIELDS})
    with open(path, "w", newline="") as f:
        f.write(buf.getvalue())

    metric_cols = [c for c in ROW_FIELDS if c not in ("axis", "value", "seed")]
    groups: dict[tuple, list[dict]] = {}
    for row in rows:
        groups.setdefault((row["axis"], row["value"]), []).append(row)
    agg_path = os.path.splitext(str(path))[0] + "_agg.csv"
    with open(agg_path, "w", newline="") as f:
        f.write("# per-axis-value aggregates over seeds: mean and stddev\n")
        fields = ["axis", "value", "n_seeds"]
        for c in metric_cols:
            fields += [f"{c}_mean", f"{c}_std"]
        writer = csv.DictWriter(f, fieldnames=fields)
        writer.writeheader()
        for (axis, value), grp in sorted(groups.items(), key=lambda kv: (kv[0][0], float(kv[0][1]))):
            out = {"axis": axis, "value": value, "n_seeds": len(grp)}
            for c in metric_cols:
                xs = [float(r[c]) for r in grp]
                mean = sum(xs) / len(xs)
                var = sum((x - mean) ** 2 for x in xs) / len(xs)
                out[f"{c}_mean"] = mean
                out[f"{c}_std"] = var ** 0.5
            writer.writerow(out)
