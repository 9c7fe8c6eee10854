"""Acceptance gate: one test per release criterion, one printed line each.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
pass/fail lines. The slow criteria (6 and 7) train real models and dominate
the suite's runtime.
"""

import math
import time

import numpy as np
import pytest

from cornerclip import evaluation as ev
from cornerclip import masks, objective, train
from cornerclip import text_encoder as te
from cornerclip.corpus import generate_synthetic_corpus
from cornerclip.evaluation import RetrievalGroundTruth
from cornerclip.tokenizer import (
    ROLE_CLS, ROLE_CORNER, ROLE_PAD, ROLE_SEP, ROLE_TEXT, Vocabulary, tokenize,
)
from cornerclip.train import TrainConfig


def report(criterion: int, description: str, ok: bool, detail: str = ""):
    status = "PASS" if ok else "FAIL"
    suffix = f" ({detail})" if detail else ""
    print(f"[criterion {criterion}] {status}: {description}{suffix}")
    assert ok, f"criterion {criterion} failed: {description}{suffix}"


def build_corpus(seed, n, n_attributes, feature_dim=16):
    recs = generate_synthetic_corpus(seed, n, n_attributes, feature_dim)
    texts = [r.short_text for r in recs] + [t for r in recs for t in r.long_texts]
    return recs, Vocabulary.build(texts)


# --------------------------------------------------------------- criterion 1

def test_c1_mask_oracle():
    """build_corner_mask equals the brute-force piecewise rule, L<=16, m<=4."""

    def oracle(roles):
        L = len(roles)
        out = np.ones((L, L), dtype=np.int8)
        group = {ROLE_CLS, ROLE_CORNER}
        for q in range(L):
            for k in range(L):
                if q == k:
                    continue
                if roles[k] == ROLE_CORNER or (roles[q] in group and roles[k] in group):
                    out[q, k] = 0
        return out

    checked = 0
    ok = True
    for L in range(1, 17):
        for m in range(0, 5):
            body = L - 1 - m
            if body < 0:
                continue
            for n_pad in range(body + 1):
                content = body - n_pad
                roles = [ROLE_CLS] + [ROLE_CORNER] * m
                roles += [ROLE_SEP if i % 3 == 2 else ROLE_TEXT for i in range(content)]
                roles += [ROLE_PAD] * n_pad
                roles = np.array(roles)
                ok &= np.array_equal(masks.build_corner_mask(roles), oracle(roles))
                checked += 1
    report(1, "corner mask equals brute-force oracle for all L<=16, m<=4", ok,
           f"{checked} layouts, exact")


# --------------------------------------------------------------- criterion 2

def test_c2_corner_isolation():
    """Corner perturbations never leak into t_g or TEXT/SEP states."""
    phrases = ["a red vase on a table. the table is wooden.",
               "light from a window. a small bird sings. trees sway."]
    vocab = Vocabulary.build(phrases)
    depths = [1, 2, 4]
    max_leak = 0.0
    max_full_effect = 0.0
    rng = np.random.default_rng(0)
    for i in range(20):
        depth = depths[i % 3]
        cfg = te.TextEncoderConfig(vocab_size=len(vocab), limit=20, m=2,
                                   depth=depth, width=32, heads=4,
                                   projection_dim=16)
        full_cfg = te.TextEncoderConfig(vocab_size=len(vocab), limit=20, m=2,
                                        depth=depth, width=32, heads=4,
                                        projection_dim=16, mask_mode="full")
        params = te.init_params(cfg, seed=100 + i)
        seq = tokenize(phrases[i % 2], 20, 2, vocab)
        base = te.encode_text(seq, params, cfg, with_hidden=True)
        base_full = te.encode_text(seq, params, full_cfg)
        params["text.tok_emb"].value[te.CORNER_ID_BASE:te.CORNER_ID_BASE + 2] += \
            rng.normal(size=(2, cfg.width))
        pert = te.encode_text(seq, params, cfg, with_hidden=True)
        pert_full = te.encode_text(seq, params, full_cfg)
        content = te.content_positions(seq)
        leak = max(float(np.max(np.abs(base.t_g - pert.t_g))),
                   float(np.max(np.abs(base.hidden[content] - pert.hidden[content]))))
        max_leak = max(max_leak, leak)
        max_full_effect = max(max_full_effect,
                              float(np.max(np.abs(base_full.t_g - pert_full.t_g))))
    ok = max_leak <= 1e-12 and max_full_effect > 1e-6
    report(2, "corner isolation <=1e-12 under corner mask, >1e-6 under full mask",
           ok, f"max leak {max_leak:.2e}, full-mask effect {max_full_effect:.2e}")


# --------------------------------------------------------------- criterion 3

def test_c3_closed_form_losses():
    """Uniform batches give N log N per direction; identity N=2 gives 1.253046."""
    rng = np.random.default_rng(0)
    v = rng.normal(size=(1, 8))
    v /= np.linalg.norm(v)
    worst = 0.0
    for N in (2, 4, 8):
        V = np.repeat(v, N, axis=0)
        for d in ("i2t", "t2i"):
            val = float(objective.info_nce(V @ V.T, 0.07, d).value)
            worst = max(worst, abs(val - N * math.log(N)))
        for m in (0, 1, 2, 4):
            val = float(objective.long_loss(V, V, [V] * m, 0.07).value)
            worst = max(worst, abs(val - (1 + m) * 2 * N * math.log(N)))
    identity = float(objective.short_loss(np.eye(2), np.eye(2), 1.0).value)
    id_err = abs(identity - 1.253046)
    ok = worst < 1e-9 and id_err < 1e-5
    report(3, "closed-form loss values (uniform and identity batches)", ok,
           f"uniform max err {worst:.1e}, identity err {id_err:.1e}")


# --------------------------------------------------------------- criterion 4

def test_c4_gradient_finite_differences():
    """200 sampled gradient coordinates match central differences, rel err < 1e-4."""
    recs, vocab = build_corpus(0, 8, 2, feature_dim=8)
    cfg = TrainConfig(batch_size=4, steps=1, warmup_steps=1, seed=0, limit=16,
                      text_depth=1, text_width=16, text_heads=2,
                      projection_dim=8, k_subcaptions=2, m=2)
    text_cfg, image_cfg = train.make_configs(vocab, cfg, 8)
    params = train.build_model(text_cfg, image_cfg, cfg.seed, cfg.tau_init)
    batch = train.assemble_batch(recs, vocab, text_cfg, cfg,
                                 train.step_rng(0, 1), image_cfg)
    grads, _, _ = train.gradients(params, batch, text_cfg, image_cfg, cfg)

    def loss_value():
        bd, _ = train.compute_loss(params, batch, text_cfg, image_cfg, cfg)
        return float(bd.total.value)

    names = sorted(grads)
    sizes = np.array([params[n].value.size for n in names])
    rng = np.random.default_rng(1)
    picks = rng.choice(int(sizes.sum()), size=200, replace=False)
    offsets = np.cumsum(sizes) - sizes
    eps = 1e-5
    max_rel = 0.0
    for pick in picks:
        which = int(np.searchsorted(offsets, pick, side="right") - 1)
        name, idx = names[which], int(pick - offsets[which])
        flat = params[name].value.reshape(-1)
        old = flat[idx]
        flat[idx] = old + eps
        up = loss_value()
        flat[idx] = old - eps
        down = loss_value()
        flat[idx] = old
        fd = (up - down) / (2 * eps)
        an = float(grads[name].reshape(-1)[idx])
        scale = max(abs(fd), abs(an))
        if scale > 1e-6:
            max_rel = max(max_rel, abs(fd - an) / scale)
        else:
            assert abs(fd - an) < 1e-6, (name, idx)
    ok = max_rel < 1e-4
    report(4, "200 gradient coordinates vs central finite differences", ok,
           f"max relative error {max_rel:.2e}")


# --------------------------------------------------------------- criterion 5

def test_c5_retrieval_oracle():
    """recall_at_k equals the exhaustive oracle on 100 random matrices."""

    def oracle(S, gt, k, direction):
        hits = 0
        if direction == "i2t":
            for img, paired in enumerate(gt.image_to_texts):
                order = sorted(range(S.shape[1]), key=lambda j: (-S[img, j], j))
                hits += int(any(j in paired for j in order[:k]))
            return hits / len(gt.image_to_texts)
        for t, img in enumerate(gt.text_to_image):
            order = sorted(range(S.shape[0]), key=lambda i: (-S[i, t], i))
            hits += int(img in order[:k])
        return hits / len(gt.text_to_image)

    rng = np.random.default_rng(2)
    ok = True
    for trial in range(100):
        if trial % 4 == 3:  # grouped ground truth: 5 texts per image
            n_img = int(rng.integers(2, 5))
            gt = RetrievalGroundTruth(
                [[5 * i + j for j in range(5)] for i in range(n_img)],
                [t // 5 for t in range(5 * n_img)])
            S = rng.normal(size=(n_img, 5 * n_img))
        else:
            n = int(rng.integers(2, 21))
            gt = RetrievalGroundTruth.one_to_one(n)
            S = rng.normal(size=(n, n))
            if trial % 3 == 0:
                S = np.round(S)  # force ties
        for k in (1, 5):
            for d in ("i2t", "t2i"):
                ok &= ev.recall_at_k(S, gt, k, d) == oracle(S, gt, k, d)
    report(5, "recall@k equals exhaustive oracle on 100 random matrices", ok,
           "exact, incl. 5-texts-per-image and tied scores")


# --------------------------------------------------------------- criterion 6

@pytest.mark.slow
def test_c6_toy_training_convergence():
    """Seed-1 corpus (256 records, 4 attributes), default config, <=2000 steps."""
    recs, vocab = build_corpus(1, 256, 4)
    cfg = TrainConfig(steps=2000, seed=0)
    t0 = time.perf_counter()
    res = train.run_training(recs, vocab, cfg)
    _, img, txt = ev.embed_eval_set(recs, res.params, res.text_cfg,
                                    res.image_cfg, vocab, "long_full")
    gt = RetrievalGroundTruth.one_to_one(len(recs))
    r1 = ev.recall_at_k(img @ txt.T, gt, 1, "i2t")
    names, labels = ev.classification_task(recs)
    protos = ev.class_prototypes(names, ev.DEFAULT_TEMPLATES, res.params,
                                 res.text_cfg, vocab)
    acc = ev.zero_shot_classify(img, labels, protos)
    wall = time.perf_counter() - t0
    chance = 1 / len(names)
    ok = r1 >= 0.9 and acc >= chance + 0.2 and wall < 300
    report(6, "toy convergence: long R@1 >= 0.9, Acc@1 >= chance+0.2, < 5 min",
           ok, f"R@1={r1:.3f}, Acc@1={acc:.3f} (chance {chance:.3f}), {wall:.0f}s")


# --------------------------------------------------------------- criterion 7

@pytest.mark.slow
def test_c7_long_text_benefit_direction():
    """Long-text training beats short-only on long R@1; corners don't hurt short."""
    recs, vocab = build_corpus(1, 64, 2)
    gt = RetrievalGroundTruth.one_to_one(len(recs))
    variants = {
        "long_m2": dict(use_long_texts=True, m=2, mask_mode="corner"),
        "short_only": dict(use_long_texts=False, m=0),
        "long_m0": dict(use_long_texts=True, m=0),
    }
    t0 = time.perf_counter()
    long_r1 = {k: [] for k in variants}
    short_r1 = {k: [] for k in variants}
    for name, kw in variants.items():
        for seed in (0, 1, 2):
            cfg = TrainConfig(steps=600, seed=seed, **kw)
            res = train.run_training(recs, vocab, cfg)
            _, img, txt = ev.embed_eval_set(recs, res.params, res.text_cfg,
                                            res.image_cfg, vocab, "long_full")
            long_r1[name].append(ev.recall_at_k(img @ txt.T, gt, 1, "i2t"))
            short_r1[name].append(ev.short_retrieval_r1(
                recs, res.params, res.text_cfg, res.image_cfg, vocab))
    wall = time.perf_counter() - t0
    mean = lambda xs: sum(xs) / len(xs)
    gain = mean(long_r1["long_m2"]) > mean(long_r1["short_only"])
    no_harm = mean(short_r1["long_m2"]) >= mean(short_r1["long_m0"])
    ok = gain and no_harm and wall < 1200
    report(7, "long-text gain on long R@1 and no short R@1 regression from corners",
           ok, f"long R@1 {mean(long_r1['long_m2']):.3f} vs "
               f"{mean(long_r1['short_only']):.3f} (short-only); short R@1 "
               f"{mean(short_r1['long_m2']):.3f} vs "
               f"{mean(short_r1['long_m0']):.3f} (m=0); {wall:.0f}s")


# --------------------------------------------------------------- criterion 8

def test_c8_flops_estimator():
    """Closed form equals instrumented count; superlinear but subquadratic."""
    vocab = Vocabulary.build(["a b c d e f g h i j."])
    ok = True
    for depth, width, heads, m, proj in [
        (1, 8, 2, 0, 4), (1, 16, 2, 2, 8), (2, 16, 4, 1, 8),
        (2, 32, 4, 2, 16), (3, 8, 1, 4, 4),
    ]:
        cfg = te.TextEncoderConfig(vocab_size=len(vocab), limit=16, m=m,
                                   depth=depth, width=width, heads=heads,
                                   projection_dim=proj)
        params = te.init_params(cfg, 0, prefix="text.")
        ok &= ev.measured_text_flops(cfg, params, vocab) == \
            ev.flops_estimate(cfg, cfg.limit)
    ratios = []
    for L in (32, 64, 128, 256, 512):
        cfg = te.TextEncoderConfig(vocab_size=2, limit=2 * L, m=2, depth=12,
                                   width=512, heads=8, projection_dim=512)
        ratios.append(ev.flops_estimate(cfg, 2 * L) / ev.flops_estimate(cfg, L))
    ok &= all(2.0 < r < 4.0 for r in ratios)
    report(8, "FLOPs closed form exact on 5 configs; flops(2L)/flops(L) in (2,4)",
           ok, "ratios " + ", ".join(f"{r:.2f}" for r in ratios))


# --------------------------------------------------------------- criterion 9

def test_c9_determinism_and_resume(tmp_path):
    """Same seed -> byte-identical metrics; resume reproduces the tail exactly."""
    recs, vocab = build_corpus(0, 16, 2, feature_dim=8)
    cfg = TrainConfig(batch_size=8, steps=8, warmup_steps=2, seed=0, limit=16,
                      text_depth=1, text_width=16, text_heads=2,
                      projection_dim=8, k_subcaptions=2)
    a = train.run_training(recs, vocab, cfg)
    b = train.run_training(recs, vocab, cfg)
    identical = [train.metrics_line(m) for m in a.metrics] == \
        [train.metrics_line(m) for m in b.metrics]

    part = str(tmp_path / "part")
    train.run_training(recs, vocab, cfg, out_dir=part, stop_after=4)
    resumed = train.run_training(recs, vocab, cfg, out_dir=part,
                                 resume_from=f"{part}/ckpt_final.bin")
    tail_ok = [train.metrics_line(m) for m in resumed.metrics] == \
        [train.metrics_line(m) for m in a.metrics[4:]]
    weights_ok = all(np.array_equal(resumed.params[k].value, a.params[k].value)
                     for k in a.params)
    ok = identical and tail_ok and weights_ok
    report(9, "byte-identical reruns and exact checkpoint-resume equivalence", ok,
           f"rerun identical={identical}, resumed tail identical={tail_ok}")
