"""Single command-line entrypoint for corpus, debug, training, and evaluation.

Precedence for train/sweep settings: built-in defaults < config file
(flat key=value lines, default path from $CORNERCLIP_CONFIG) < flags.
Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys

import numpy as np

from . import checkpoint as ckpt
from . import corpus, evaluation, masks, sweep as sweep_mod, text_encoder, train as train_mod
from .tokenizer import ROLE_CORNER, ROLE_TEXT, Vocabulary, detokenize, tokenize
from .train import TrainConfig

CONFIG_ENV = "CORNERCLIP_CONFIG"


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _emit(args, payload: dict, text: str | None = None):
    if getattr(args, "json", False):
        print(json.dumps(payload, sort_keys=True))
    else:
        print(text if text is not None else json.dumps(payload, sort_keys=True, indent=2))


def _load_config_file(path) -> dict:
    values = {}
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise UsageError(f"bad config line: {line!r}")
            key, val = (s.strip() for s in line.split("=", 1))
            values[key] = val
    return values


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(TrainConfig)}


def _coerce(name: str, raw: str):
    ftype = _FIELD_TYPES.get(name)
    if ftype is None:
        raise UsageError(f"unknown config field {name!r}")
    if ftype == "bool":
        if raw.lower() in ("1", "true", "yes"):
            return True
        if raw.lower() in ("0", "false", "no"):
            return False
        raise UsageError(f"bad boolean for {name}: {raw!r}")
    if ftype == "int":
        return int(raw)
    if ftype == "float":
        return float(raw)
    return raw


def resolve_train_config(args) -> TrainConfig:
    values = dataclasses.asdict(TrainConfig())
    cfg_path = args.config or os.environ.get(CONFIG_ENV)
    if cfg_path:
        for key, raw in _load_config_file(cfg_path).items():
            values[key] = _coerce(key, raw)
    for name in _FIELD_TYPES:
        flag = getattr(args, name, None)
        if flag is not None:
            values[name] = flag
    return TrainConfig(**values)


def _add_train_flags(p: Parser):
    p.add_argument("--config", help=f"flat key=value config file (default ${CONFIG_ENV})")
    p.add_argument("--print-config", action="store_true",
                   help="dump the fully resolved configuration and exit")
    for f in dataclasses.fields(TrainConfig):
        flag = "--" + f.name.replace("_", "-")
        if f.type == "bool":
            p.add_argument(flag, dest=f.name, default=None,
                           type=lambda s: _coerce("use_long_texts", s),
                           metavar="BOOL", help=f"{f.name} (default {f.default})")
        elif f.type == "int":
            p.add_argument(flag, dest=f.name, default=None, type=int,
                           help=f"{f.name} (default {f.default})")
        elif f.type == "float":
            p.add_argument(flag, dest=f.name, default=None, type=float,
                           help=f"{f.name} (default {f.default})")
        else:
            p.add_argument(flag, dest=f.name, default=None,
                           help=f"{f.name} (default {f.default})")


def build_parser() -> Parser:
    parser = Parser(prog="cornerclip", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("gen-corpus", help="generate a synthetic manifest",
                       parents=[], add_help=True)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--n", type=int, default=256)
    p.add_argument("--attributes", type=int, default=4)
    p.add_argument("--feature-dim", type=int, default=16)
    p.add_argument("--pool-size", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("stats", help="corpus statistics")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", help="also write stats to this file")
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("tokenize", help="debug-tokenize a text")
    p.add_argument("--text", required=True)
    p.add_argument("--limit", type=int, default=32)
    p.add_argument("--corners", type=int, default=2)
    p.add_argument("--corpus", help="build the vocabulary from this manifest")
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("mask", help="print a corner attention mask as a 0/1 grid")
    p.add_argument("--len", type=int, required=True, dest="length")
    p.add_argument("--corners", type=int, required=True)
    p.add_argument("--mode", choices=["corner", "full"], default="corner")
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("train", help="train on a manifest")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--json", action="store_true")
    _add_train_flags(p)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a manifest")
    p.add_argument("--corpus", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--text-kind", choices=["short", "long_full"], default="long_full")
    p.add_argument("--export-embeddings", help="write an embedding dump (npz)")
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("flops", help="text-encoder FLOPs estimate")
    p.add_argument("--limit", type=int, required=True)
    p.add_argument("--depth", type=int, default=12)
    p.add_argument("--dim", type=int, default=512)
    p.add_argument("--heads", type=int, default=8)
    p.add_argument("--corners", type=int, default=2)
    p.add_argument("--mlp-ratio", type=int, default=4)
    p.add_argument("--proj-dim", type=int, default=512)
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("sweep", help="axis sweep: fresh train + eval per cell")
    p.add_argument("--axis", choices=list(sweep_mod.AXES), required=True)
    p.add_argument("--values", required=True, help="comma-separated integers")
    p.add_argument("--seeds", type=int, default=3, help="number of repeat seeds")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True, dest="out_dir")
    p.add_argument("--json", action="store_true")
    _add_train_flags(p)

    p = sub.add_parser("inspect", help="show checkpoint metadata")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--json", action="store_true")
    return parser


def _cmd_gen_corpus(args) -> int:
    records = corpus.generate_synthetic_corpus(
        args.seed, args.n, args.attributes, args.feature_dim, args.pool_size)
    corpus.save_manifest(records, args.out)
    _emit(args, {"written": len(records), "path": args.out},
          f"wrote {len(records)} records to {args.out}")
    return 0


def _cmd_stats(args) -> int:
    records = corpus.load_manifest(args.corpus)
    stats = corpus.corpus_stats(records)
    text = "\n".join(f"{k}: {v}" for k, v in stats.to_dict().items())
    _emit(args, stats.to_dict(), text)
    if args.out:
        with open(args.out, "w") as f:
            json.dump(stats.to_dict(), f, sort_keys=True, indent=2)
    return 0


def _cmd_tokenize(args) -> int:
    if args.corpus:
        records = corpus.load_manifest(args.corpus)
        texts = [r.short_text for r in records] + [t for r in records for t in r.long_texts]
        vocab = Vocabulary.build(texts)
    else:
        vocab = Vocabulary.build([args.text])
    seq = tokenize(args.text, args.limit, args.corners, vocab)
    tokens = detokenize(seq, vocab)
    payload = {"tokens": tokens, "ids": seq.ids.tolist(),
               "roles": seq.roles.tolist(), "true_length": seq.true_length}
    _emit(args, payload, " ".join(tokens))
    return 0


def _cmd_mask(args) -> int:
    if args.length < args.corners + 2:
        raise UsageError("--len must be at least corners + 2")
    roles = np.array([0] + [ROLE_CORNER] * args.corners
                     + [ROLE_TEXT] * (args.length - args.corners - 1))
    mask = masks.build_corner_mask(roles, enabled=args.mode == "corner")
    _emit(args, {"mask": mask.tolist()}, masks.format_mask(mask))
    return 0


def _corpus_vocab(records):
    texts = [r.short_text for r in records] + [t for r in records for t in r.long_texts]
    return Vocabulary.build(texts)


def _cmd_train(args) -> int:
    cfg = resolve_train_config(args)
    if args.print_config:
        _emit(args, dataclasses.asdict(cfg),
              "\n".join(f"{k} = {v}" for k, v in dataclasses.asdict(cfg).items()))
        return 0
    records = corpus.load_manifest(args.corpus)
    vocab = _corpus_vocab(records)
    result = train_mod.run_training(records, vocab, cfg, out_dir=args.out_dir)
    last = result.metrics[-1] if result.metrics else {}
    _emit(args, {"steps": len(result.metrics), "final": last, "out_dir": args.out_dir},
          f"trained {len(result.metrics)} steps; final loss "
          f"{last.get('loss_total', float('nan')):.4f}; artifacts in {args.out_dir}")
    return 0


def _cmd_eval(args) -> int:
    records = corpus.load_manifest(args.corpus)
    params, _, _, meta = ckpt.load_checkpoint(args.checkpoint)
    text_cfg = text_encoder.TextEncoderConfig(**meta["text_config"])
    from .image_encoder import ImageEncoderConfig
    image_cfg = ImageEncoderConfig(**meta["image_config"])
    vocab = train_mod.vocab_from_meta(meta)
    ids, img, txt = evaluation.embed_eval_set(
        records, params, text_cfg, image_cfg, vocab, args.text_kind)
    gt = evaluation.RetrievalGroundTruth.one_to_one(len(records))
    report = evaluation.evaluate_retrieval(img, txt, gt, task=args.text_kind)
    if args.export_embeddings:
        evaluation.export_embeddings(args.export_embeddings, ids, img, txt)
    _emit(args, report.to_dict(),
          "\n".join(f"{k}: {v}" for k, v in report.to_dict().items()))
    return 2 if report.has_nan() else 0


def _cmd_flops(args) -> int:
    cfg = text_encoder.TextEncoderConfig(
        vocab_size=2, limit=args.limit, m=args.corners, depth=args.depth,
        width=args.dim, heads=args.heads, mlp_ratio=args.mlp_ratio,
        projection_dim=args.proj_dim)
    flops = evaluation.flops_estimate(cfg, args.limit)
    _emit(args, {"flops": flops}, str(flops))
    return 0


def _cmd_sweep(args) -> int:
    try:
        values = [int(v) for v in args.values.split(",") if v.strip() != ""]
    except ValueError as exc:
        raise UsageError(f"bad --values: {exc}")
    cfg = resolve_train_config(args)
    records = corpus.load_manifest(args.corpus)
    vocab = _corpus_vocab(records)
    spec = sweep_mod.SweepSpec(axis=args.axis, values=values, base=cfg,
                               seeds=list(range(args.seeds)))
    rows = sweep_mod.run_sweep(spec, records, vocab, args.out_dir)
    sweep_mod.emit_plot_data(rows, os.path.join(args.out_dir, "plot_data.csv"))
    _emit(args, {"cells": len(rows), "out_dir": args.out_dir},
          f"{len(rows)} cells complete; tables in {args.out_dir}")
    return 0


def _cmd_inspect(args) -> int:
    params, opt, step, meta = ckpt.load_checkpoint(args.checkpoint)
    payload = {
        "step": step,
        "n_parameters": int(sum(t.value.size for t in params.values())),
        "arrays": {name: list(t.value.shape) for name, t in sorted(params.items())},
        "has_opt_state": opt is not None,
        "m": meta.get("m"),
        "mask_mode": meta.get("mask_mode"),
    }
    text = "\n".join([f"step: {step}", f"parameters: {payload['n_parameters']}"]
                     + [f"  {n}: {s}" for n, s in payload["arrays"].items()])
    _emit(args, payload, text)
    return 0


_COMMANDS = {
    "gen-corpus": _cmd_gen_corpus,
    "stats": _cmd_stats,
    "tokenize": _cmd_tokenize,
    "mask": _cmd_mask,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "flops": _cmd_flops,
    "sweep": _cmd_sweep,
    "inspect": _cmd_inspect,
}


def dispatch(argv: list[str]) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            return 1
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except SystemExit as exc:
        # argparse --help exits 0; propagate its code
        return int(exc.code or 0)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
