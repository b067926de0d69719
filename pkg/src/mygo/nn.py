"""Transformer building blocks: multi-head self-attention and one post-norm
encoder layer. Sequences carry no positional encoding, so the layer is
permutation-equivariant over rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

from .autodiff import (Tensor, add, affine, concat, dropout, layer_norm,
                       matmul, relu, scale, slice_axis, softmax,
                       transpose_last)

LN_EPS = 1e-5


@dataclass
class EncoderLayer:
    """Learnable pieces of one encoder layer (attention + feed-forward)."""

    wq: Tensor
    bq: Tensor
    wk: Tensor
    bk: Tensor
    wv: Tensor
    bv: Tensor
    wo: Tensor
    bo: Tensor
    ln1_gain: Tensor
    ln1_bias: Tensor
    ff1_w: Tensor
    ff1_b: Tensor
    ff2_w: Tensor
    ff2_b: Tensor
    ln2_gain: Tensor
    ln2_bias: Tensor

    def named(self, prefix):
        return {f"{prefix}.{f.name}": getattr(self, f.name) for f in fields(self)}


def multi_head_attention(x, layer, heads, attn_dropout=0.0, train=False, rng=None):
    """Self-attention over rows of x: (B, s, d) -> (B, s, d).

    Heads are contiguous column slices of the joint q/k/v projections; scores
    are scaled by 1/sqrt(d/heads); dropout (when active) hits the attention
    weights after softmax.
    """
    d = x.data.shape[-1]
    if d % heads != 0:
        raise ValueError(f"model dim {d} not divisible by heads {heads}")
    head_dim = d // heads
    q = affine(x, layer.wq, layer.bq)
    k = affine(x, layer.wk, layer.bk)
    v = affine(x, layer.wv, layer.bv)
    outs = []
    for h in range(heads):
        lo, hi = h * head_dim, (h + 1) * head_dim
        qh = slice_axis(q, -1, lo, hi)
        kh = slice_axis(k, -1, lo, hi)
        vh = slice_axis(v, -1, lo, hi)
        scores = scale(matmul(qh, transpose_last(kh)), 1.0 / math.sqrt(head_dim))
        weights = softmax(scores)
        weights = dropout(weights, attn_dropout, train, rng)
        outs.append(matmul(weights, vh))
    merged = outs[0] if heads == 1 else concat(outs, axis=-1)
    return affine(merged, layer.wo, layer.bo)


def encoder_layer_forward(x, layer, heads, dropout_rate=0.0, train=False, rng=None):
    """One post-norm block: attn -> dropout -> add -> LN -> FFN -> dropout -> add -> LN."""
    attn = multi_head_attention(x, layer, heads, dropout_rate, train, rng)
    attn = dropout(attn, dropout_rate, train, rng)
    x = layer_norm(add(x, attn), layer.ln1_gain, layer.ln1_bias, eps=LN_EPS)
    hidden = relu(affine(x, layer.ff1_w, layer.ff1_b))
    out = affine(hidden, layer.ff2_w, layer.ff2_b)
    out = dropout(out, dropout_rate, train, rng)
    return layer_norm(add(x, out), layer.ln2_gain, layer.ln2_bias, eps=LN_EPS)
