"""The multi-modal link prediction model.

Entities are encoded from a token sequence
  [ENT] + structural embedding + m projected visual tokens + n projected
  textual tokens
by one transformer layer; the [ENT] output row is the entity embedding e.
A second transformer layer contextualizes a query
  [CXT] + known-entity embedding + directed-relation embedding
and its [CXT] output row (plus the relation output row) feed a Tucker-style
trilinear scorer against every candidate entity. Head queries use reciprocal
relation ids (R + r), so the relation table has 2R rows.

Training combines cross entropy over all candidates (both directions) with an
InfoNCE term over four views of each batch entity: a second encoder pass with
fresh dropout, the mean over all output rows, and the means over the visual
and textual output rows.

Padding tokens occupy real sequence positions: they attend and are attended
to, and they participate in the mean views. Ablation switches (`no_mt`,
`no_cmee`, `no_cte`, `no_con`, `no_esec`, `no_s`, `no_v`, `no_w`) are runtime
toggles, not code forks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import (Tensor, add, affine, concat, cross_entropy_row_values,
                       cross_entropy_rows, expand_rows, gather_rows,
                       matmul, mean_axis1, normalize_rows, reshape, scale,
                       slice_axis, transpose_last)
from .errors import ConfigError
from .nn import EncoderLayer, encoder_layer_forward

ABLATIONS = ("no_mt", "no_refine", "no_cmee", "no_cte", "no_con",
             "no_esec", "no_s", "no_v", "no_w")

# contrastive view names in a fixed evaluation order
VIEW_ORDER = ("second_pass", "sequence_mean", "visual_mean", "textual_mean")
_VIEW_DROP = {"no_esec": "second_pass", "no_s": "sequence_mean",
              "no_v": "visual_mean", "no_w": "textual_mean"}


@dataclass
class ModelParams:
    """Every learnable tensor, with stable names for optimizers/checkpoints."""

    entity_emb: Tensor     # (E, d) structural embeddings
    relation_emb: Tensor   # (2R, d); row R+r is the reverse direction of r
    visual_proj: Tensor    # (dv, d)
    visual_bias: Tensor    # (d,)
    textual_proj: Tensor   # (dt, d)
    textual_bias: Tensor   # (d,)
    ent_token: Tensor      # (d,) sequence head for the entity encoder
    cxt_token: Tensor      # (d,) sequence head for the context encoder
    entity_layer: EncoderLayer
    context_layer: EncoderLayer
    core: Tensor           # (d, d, d) trilinear scoring core

    def named(self):
        out = {
            "entity_emb": self.entity_emb,
            "relation_emb": self.relation_emb,
            "visual_proj": self.visual_proj,
            "visual_bias": self.visual_bias,
            "textual_proj": self.textual_proj,
            "textual_bias": self.textual_bias,
            "ent_token": self.ent_token,
            "cxt_token": self.cxt_token,
        }
        out.update(self.entity_layer.named("entity_layer"))
        out.update(self.context_layer.named("context_layer"))
        out["core"] = self.core
        return out

    def tensors(self):
        return list(self.named().values())

    def zero_grads(self):
        for t in self.tensors():
            t.zero_grad()

    def cast(self, dtype):
        """Fresh copy of all parameters in the given float dtype."""

        def convert(t):
            return Tensor(t.data, requires_grad=True, name=t.name, dtype=dtype)

        def convert_layer(layer):
            return EncoderLayer(**{
                name.split(".")[-1]: convert(t)
                for name, t in layer.named("x").items()})

        return ModelParams(
            entity_emb=convert(self.entity_emb),
            relation_emb=convert(self.relation_emb),
            visual_proj=convert(self.visual_proj),
            visual_bias=convert(self.visual_bias),
            textual_proj=convert(self.textual_proj),
            textual_bias=convert(self.textual_bias),
            ent_token=convert(self.ent_token),
            cxt_token=convert(self.cxt_token),
            entity_layer=convert_layer(self.entity_layer),
            context_layer=convert_layer(self.context_layer),
            core=convert(self.core),
        )

    @property
    def dim(self):
        return self.ent_token.data.shape[0]

    @property
    def n_entities(self):
        return self.entity_emb.data.shape[0]

    @property
    def n_relations(self):
        return self.relation_emb.data.shape[0] // 2

    @property
    def dtype(self):
        return self.ent_token.data.dtype


@dataclass
class EntityTokenData:
    """Refined token ids plus the frozen catalog features they index."""

    visual_ids: np.ndarray      # (E, m) into visual_features
    textual_ids: np.ndarray     # (E, n) into textual_features
    visual_features: np.ndarray   # (catalog size + 1, dv), last row = padding
    textual_features: np.ndarray  # (catalog size + 1, dt)
    mean_visual: np.ndarray = field(init=False)   # (E, dv) non-padding mean
    mean_textual: np.ndarray = field(init=False)  # (E, dt)

    def __post_init__(self):
        self.mean_visual = _non_padding_mean(
            self.visual_ids, self.visual_features)
        self.mean_textual = _non_padding_mean(
            self.textual_ids, self.textual_features)

    @classmethod
    def build(cls, refined, visual_catalog, textual_catalog):
        return cls(refined.visual, refined.textual,
                   visual_catalog.features, textual_catalog.features)

    @property
    def n_entities(self):
        return self.visual_ids.shape[0]

    @property
    def m(self):
        return self.visual_ids.shape[1]

    @property
    def n(self):
        return self.textual_ids.shape[1]


def _non_padding_mean(ids, features):
    pad = features.shape[0] - 1
    picked = features[ids]                      # (E, k, width)
    keep = (ids != pad)[:, :, None]
    counts = keep.sum(axis=1)
    counts = np.maximum(counts, 1)
    return (picked * keep).sum(axis=1) / counts


def token_block_widths(data, cfg):
    """Widths of the visual/textual blocks in the entity input sequence."""
    if cfg.ablation == "no_mt":
        return 1, 1
    return data.m, data.n


def encode_entities(params, data, cfg, train=False, rng=None):
    """Run the entity encoder for every entity: (E, 2+m+n, d) output rows.

    Under `no_mt` the token blocks collapse to one projected mean feature per
    modality; under `no_cmee` the assembled input sequence is returned as-is.
    """
    dtype = params.dtype
    n = data.n_entities
    d = params.dim
    head = expand_rows(params.ent_token, n)
    structural = reshape(params.entity_emb, (n, 1, d))
    if cfg.ablation == "no_mt":
        vis_in = Tensor(data.mean_visual, dtype=dtype)
        txt_in = Tensor(data.mean_textual, dtype=dtype)
        visual = reshape(affine(vis_in, params.visual_proj, params.visual_bias),
                         (n, 1, d))
        textual = reshape(affine(txt_in, params.textual_proj, params.textual_bias),
                          (n, 1, d))
    else:
        vis_in = Tensor(data.visual_features[data.visual_ids], dtype=dtype)
        txt_in = Tensor(data.textual_features[data.textual_ids], dtype=dtype)
        visual = affine(vis_in, params.visual_proj, params.visual_bias)
        textual = affine(txt_in, params.textual_proj, params.textual_bias)
    sequence = concat([head, structural, visual, textual], axis=1)
    if cfg.ablation == "no_cmee":
        return sequence
    return encoder_layer_forward(sequence, params.entity_layer, cfg.heads,
                                 cfg.dropout, train, rng)


def pooled_entities(outputs, cfg):
    """Entity embedding e: the [ENT] output row (mean row under no_cmee)."""
    n, _, d = outputs.data.shape
    if cfg.ablation == "no_cmee":
        return mean_axis1(outputs)
    return reshape(slice_axis(outputs, 1, 0, 1), (n, d))


def entity_views(outputs, data, cfg):
    """Mean views over the output sequence: all rows / visual rows / textual rows."""
    m_eff, n_eff = token_block_widths(data, cfg)
    views = {
        "sequence_mean": mean_axis1(outputs),
        "visual_mean": mean_axis1(slice_axis(outputs, 1, 2, 2 + m_eff)),
        "textual_mean": mean_axis1(
            slice_axis(outputs, 1, 2 + m_eff, 2 + m_eff + n_eff)),
    }
    return views


def encode_context(known, rel_ids, params, cfg, train=False, rng=None):
    """Contextualize (known entity, directed relation) query pairs.

    Returns (h, r): the [CXT] output row and the relation row used by the
    scorer. Under `no_cte` these are the inputs themselves; with
    `raw_relation_score` the relation side stays the raw embedding.
    """
    relation = gather_rows(params.relation_emb, rel_ids)
    if cfg.ablation == "no_cte":
        return known, relation
    q = known.data.shape[0]
    d = params.dim
    sequence = concat([
        expand_rows(params.cxt_token, q),
        reshape(known, (q, 1, d)),
        reshape(relation, (q, 1, d)),
    ], axis=1)
    out = encoder_layer_forward(sequence, params.context_layer, cfg.heads,
                                cfg.dropout, train, rng)
    h = reshape(slice_axis(out, 1, 0, 1), (q, d))
    if cfg.raw_relation_score:
        return h, relation
    return h, reshape(slice_axis(out, 1, 2, 3), (q, d))


def tucker_scores(h, r, candidates, core):
    """Trilinear scores S[q, c] = sum_abc h[q,a] r[q,b] core[a,b,c] t[c,c'].

    h, r: (Q, d); candidates: (E, d); returns (Q, E).
    """
    d = core.data.shape[0]
    q = h.data.shape[0]
    flat = reshape(core, (d, d * d))
    partial = reshape(matmul(h, flat), (q, d, d))
    fused = reshape(matmul(reshape(r, (q, 1, d)), partial), (q, d))
    return matmul(fused, transpose_last(candidates))


def tucker_score(h_vec, r_vec, t_vec, core):
    """Scalar trilinear score for a single (h, r, t) combination."""
    d = core.data.shape[0]
    scores = tucker_scores(reshape(h_vec, (1, d)), reshape(r_vec, (1, d)),
                           reshape(t_vec, (1, d)), core)
    return reshape(scores, ())


def kgc_loss(triples, e_all, params, cfg, train=False, rng=None):
    """Cross entropy over all candidate entities, both query directions.

    For each batch triple (h, r, t) one query predicts t from (h, r) and one
    predicts h from (t, R+r). The summed cross entropy is divided by the
    number of triples, so each direction contributes its per-triple mean.

    Returns (loss tensor, tail-direction mean, head-direction mean).
    """
    triples = np.asarray(triples)
    q = triples.shape[0]
    n_rel = params.n_relations
    known_ids = np.concatenate([triples[:, 0], triples[:, 2]])
    rel_ids = np.concatenate([triples[:, 1], triples[:, 1] + n_rel])
    gold = np.concatenate([triples[:, 2], triples[:, 0]])
    known = gather_rows(e_all, known_ids)
    h, r = encode_context(known, rel_ids, params, cfg, train, rng)
    scores = tucker_scores(h, r, e_all, params.core)
    loss = scale(cross_entropy_rows(scores, gold), 1.0 / q)
    per_row = cross_entropy_row_values(scores.data, gold)
    return loss, float(per_row[:q].mean()), float(per_row[q:].mean())


def contrastive_loss(anchors, views, tau):
    """InfoNCE over cosine similarity, summed over anchors and view types.

    For each view type the positives sit on the diagonal of the (B, B) cosine
    matrix between anchors and that view of the same batch; the remaining
    entries of the row (same view type, other batch entities) are the
    negatives. No normalization by batch size.
    """
    if tau <= 0:
        raise ConfigError(f"temperature must be positive, got {tau}")
    b = anchors.data.shape[0]
    gold = np.arange(b)
    anchor_hat = normalize_rows(anchors)
    total = None
    for name in VIEW_ORDER:
        if name not in views:
            continue
        view_hat = normalize_rows(views[name])
        logits = scale(matmul(anchor_hat, transpose_last(view_hat)), 1.0 / tau)
        term = cross_entropy_rows(logits, gold)
        total = term if total is None else add(total, term)
    if total is None:
        raise ConfigError("contrastive loss needs at least one view")
    return total


def total_loss(triples, params, data, cfg, train=False, rng=None):
    """Full training objective for one batch.

    Returns (loss tensor, kgc value, contrastive value). With lambda = 0 (or
    the `no_con` ablation) the contrastive pass is skipped entirely and the
    result is the kgc loss alone.
    """
    triples = np.asarray(triples)
    outputs = encode_entities(params, data, cfg, train, rng)
    e_all = pooled_entities(outputs, cfg)
    loss, _, _ = kgc_loss(triples, e_all, params, cfg, train, rng)
    lam = 0.0 if cfg.ablation == "no_con" else cfg.lambda_con
    if lam == 0.0:
        return loss, float(loss.data), 0.0
    batch_ids = np.unique(np.concatenate([triples[:, 0], triples[:, 2]]))
    anchors = gather_rows(e_all, batch_ids)
    dropped = _VIEW_DROP.get(cfg.ablation)
    views = {}
    if dropped != "second_pass":
        second = encode_entities(params, data, cfg, train, rng)
        views["second_pass"] = gather_rows(pooled_entities(second, cfg),
                                           batch_ids)
    for name, view in entity_views(outputs, data, cfg).items():
        if name != dropped:
            views[name] = gather_rows(view, batch_ids)
    con = contrastive_loss(anchors, views, cfg.tau)
    kgc_value = float(loss.data)
    total = add(loss, scale(con, lam))
    return total, kgc_value, float(con.data)
