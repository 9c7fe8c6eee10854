"""Attention masks: the corner-isolation rule plus padding.

Entry (q, k) = 1 means query position q may attend to key position k.
The corner rule blocks (q, k) iff (k is a corner, or q and k are both in
the corner-or-CLS group) and q != k: corner tokens and CLS neglect each
other but read all sub-caption tokens, and nothing reads a corner.
"""

from __future__ import annotations

import numpy as np

from .tokenizer import ROLE_CLS, ROLE_CORNER, ROLE_PAD, ROLE_SEP, ROLE_TEXT

MASK_NEG = -1e9


def validate_role_layout(roles: np.ndarray) -> None:
    """Check the CLS CORNER* (TEXT|SEP)* PAD* layout; raise on violation."""
    roles = np.asarray(roles)
    if roles.ndim != 1 or roles.size == 0:
        raise ValueError("roles must be a nonempty 1-D array")
    if roles[0] != ROLE_CLS:
        raise ValueError("position 0 must be CLS")
    allowed = {
        ROLE_CLS: {ROLE_CORNER, ROLE_TEXT, ROLE_SEP, ROLE_PAD},
        ROLE_CORNER: {ROLE_CORNER, ROLE_TEXT, ROLE_SEP, ROLE_PAD},
        ROLE_TEXT: {ROLE_TEXT, ROLE_SEP, ROLE_PAD},
        ROLE_SEP: {ROLE_TEXT, ROLE_SEP, ROLE_PAD},
        ROLE_PAD: {ROLE_PAD},
    }
    for prev, cur in zip(roles[:-1], roles[1:]):
        if int(cur) not in allowed[int(prev)]:
            raise ValueError("malformed role layout")
    if np.any(roles[1:] == ROLE_CLS):
        raise ValueError("CLS may only appear at position 0")


def build_corner_mask(roles: np.ndarray, enabled: bool = True) -> np.ndarray:
    """L x L binary mask for the corner rule; padding is ignored here.

    With enabled=False (register-token ablation) the mask is all ones.
    """
    validate_role_layout(roles)
    roles = np.asarray(roles)
    L = roles.size
    if not enabled:
        return np.ones((L, L), dtype=np.int8)
    is_corner = roles == ROLE_CORNER
    in_group = is_corner | (roles == ROLE_CLS)
    blocked = is_corner[None, :] | (in_group[:, None] & in_group[None, :])
    np.fill_diagonal(blocked, False)
    return (~blocked).astype(np.int8)


def apply_padding(mask: np.ndarray, roles: np.ndarray) -> np.ndarray:
    """Zero every PAD-key column except its own diagonal entry."""
    roles = np.asarray(roles)
    if mask.shape != (roles.size, roles.size):
        raise ValueError("mask/roles length mismatch")
    out = mask.copy()
    pad = roles == ROLE_PAD
    out[:, pad] = 0
    idx = np.where(pad)[0]
    out[idx, idx] = 1
    return out


def full_mask(roles: np.ndarray, mask_mode: str = "corner") -> np.ndarray:
    """Corner (or all-ones) mask with padding applied; mask_mode in {corner, full}."""
    if mask_mode not in ("corner", "full"):
        raise ValueError(f"unknown mask_mode {mask_mode!r}")
    return apply_padding(build_corner_mask(roles, enabled=mask_mode == "corner"), roles)


def mask_bias(mask: np.ndarray) -> np.ndarray:
    """Additive logit bias: 0 where attending is allowed, MASK_NEG where blocked."""
    return (mask.astype(np.float64) - 1.0) * (-MASK_NEG)


def format_mask(mask: np.ndarray) -> str:
    """Render a mask as a 0/1 grid, one row per line."""
    return "\n".join(" ".join(str(int(v)) for v in row) for row in mask)
