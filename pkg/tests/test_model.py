"""Model forward paths: entity encoding, context encoding, trilinear scoring,
both loss terms, and the runtime ablation switches."""

import dataclasses
import math

import numpy as np
import pytest

import mygo.model as model_mod
from mygo.autodiff import Tape, Tensor
from mygo.errors import ConfigError
from mygo.model import (VIEW_ORDER, EntityTokenData, contrastive_loss,
                        encode_context, encode_entities, entity_views,
                        kgc_loss, pooled_entities, token_block_widths,
                        total_loss, tucker_score, tucker_scores)

from helpers import layer_arrays, make_fixture, ref_encoder_layer


def _with(cfg, **changes):
    return dataclasses.replace(cfg, **changes)


def _assemble_sequence(params, data):
    """Plain-numpy version of the entity encoder input sequence."""
    e, d = data.n_entities, params.dim
    seq = np.zeros((e, 2 + data.m + data.n, d), dtype=np.float64)
    seq[:, 0] = params.ent_token.data
    seq[:, 1] = params.entity_emb.data
    seq[:, 2:2 + data.m] = (data.visual_features[data.visual_ids]
                            @ params.visual_proj.data + params.visual_bias.data)
    seq[:, 2 + data.m:] = (data.textual_features[data.textual_ids]
                           @ params.textual_proj.data + params.textual_bias.data)
    return seq


def test_encode_entities_shape_and_determinism():
    graph, data, params, cfg = make_fixture()
    out = encode_entities(params, data, cfg)
    assert out.data.shape == (data.n_entities, 2 + data.m + data.n, params.dim)
    again = encode_entities(params, data, cfg)
    assert np.array_equal(out.data, again.data)


def test_encode_entities_matches_numpy_reference():
    _, data, params, cfg = make_fixture(dtype=np.float64)
    seq = _assemble_sequence(params, data)
    expected = ref_encoder_layer(seq, layer_arrays(params.entity_layer),
                                 cfg.heads)
    out = encode_entities(params, data, cfg)
    assert np.allclose(out.data, expected, atol=1e-12)


def test_encode_entities_dropout_reproducible():
    _, data, params, cfg = make_fixture(dropout=0.4)
    runs = [encode_entities(params, data, cfg, train=True,
                            rng=np.random.default_rng(5)).data
            for _ in range(2)]
    assert np.array_equal(runs[0], runs[1])
    other = encode_entities(params, data, cfg, train=True,
                            rng=np.random.default_rng(6)).data
    assert not np.array_equal(runs[0], other)
    eval_out = encode_entities(params, data, cfg).data
    assert not np.array_equal(runs[0], eval_out)


def test_pooled_entities_is_first_row():
    _, data, params, cfg = make_fixture()
    out = encode_entities(params, data, cfg)
    pooled = pooled_entities(out, cfg)
    assert np.array_equal(pooled.data, out.data[:, 0])


def test_entity_views_are_row_means():
    _, data, params, cfg = make_fixture()
    out = encode_entities(params, data, cfg)
    views = entity_views(out, data, cfg)
    assert set(views) == {"sequence_mean", "visual_mean", "textual_mean"}
    assert np.allclose(views["sequence_mean"].data, out.data.mean(axis=1),
                       atol=1e-6)
    assert np.allclose(views["visual_mean"].data,
                       out.data[:, 2:2 + data.m].mean(axis=1), atol=1e-6)
    assert np.allclose(views["textual_mean"].data,
                       out.data[:, 2 + data.m:].mean(axis=1), atol=1e-6)


def test_token_block_widths():
    _, data, _, cfg = make_fixture()
    assert token_block_widths(data, cfg) == (data.m, data.n)
    assert token_block_widths(data, _with(cfg, ablation="no_mt")) == (1, 1)


def test_non_padding_mean_and_all_padding_rows():
    features = np.array([[1.0, 0.0], [0.0, 2.0], [4.0, 4.0], [0.0, 0.0]],
                        dtype=np.float32)  # last row is padding (id 3)
    ids = np.array([[0, 1], [2, 3], [3, 3]])
    data = EntityTokenData(ids, ids.copy(), features, features.copy())
    assert np.allclose(data.mean_visual,
                       [[0.5, 1.0], [4.0, 4.0], [0.0, 0.0]])


def test_no_mt_uses_projected_mean_features():
    _, data, params, cfg = make_fixture(dtype=np.float64)
    cfg = _with(cfg, ablation="no_mt")
    e, d = data.n_entities, params.dim
    seq = np.zeros((e, 4, d))
    seq[:, 0] = params.ent_token.data
    seq[:, 1] = params.entity_emb.data
    seq[:, 2] = (data.mean_visual @ params.visual_proj.data
                 + params.visual_bias.data)
    seq[:, 3] = (data.mean_textual @ params.textual_proj.data
                 + params.textual_bias.data)
    expected = ref_encoder_layer(seq, layer_arrays(params.entity_layer),
                                 cfg.heads)
    out = encode_entities(params, data, cfg)
    assert out.data.shape == (e, 4, d)
    assert np.allclose(out.data, expected, atol=1e-12)
    views = entity_views(out, data, cfg)
    assert np.allclose(views["visual_mean"].data, out.data[:, 2], atol=1e-12)
    assert np.allclose(views["textual_mean"].data, out.data[:, 3], atol=1e-12)


def test_no_cmee_skips_the_encoder():
    _, data, params, cfg = make_fixture(dtype=np.float64)
    cfg = _with(cfg, ablation="no_cmee")
    out = encode_entities(params, data, cfg)
    assert np.allclose(out.data, _assemble_sequence(params, data), atol=1e-12)
    pooled = pooled_entities(out, cfg)
    assert np.allclose(pooled.data, out.data.mean(axis=1), atol=1e-12)


def test_no_cte_returns_inputs():
    _, data, params, cfg = make_fixture()
    known = Tensor(np.random.default_rng(0).normal(size=(3, params.dim))
                   .astype(np.float32))
    rel_ids = np.array([0, 1, 3])
    h, r = encode_context(known, rel_ids, params, _with(cfg, ablation="no_cte"))
    assert h is known
    assert np.array_equal(r.data, params.relation_emb.data[rel_ids])


def test_encode_context_matches_numpy_reference():
    _, data, params, cfg = make_fixture(dtype=np.float64)
    rng = np.random.default_rng(1)
    known = Tensor(rng.normal(size=(3, params.dim)))
    rel_ids = np.array([1, 2, 0])
    seq = np.zeros((3, 3, params.dim))
    seq[:, 0] = params.cxt_token.data
    seq[:, 1] = known.data
    seq[:, 2] = params.relation_emb.data[rel_ids]
    expected = ref_encoder_layer(seq, layer_arrays(params.context_layer),
                                 cfg.heads)
    h, r = encode_context(known, rel_ids, params, cfg)
    assert np.allclose(h.data, expected[:, 0], atol=1e-12)
    assert np.allclose(r.data, expected[:, 2], atol=1e-12)
    h2, r2 = encode_context(known, rel_ids, params,
                            _with(cfg, raw_relation_score=True))
    assert np.allclose(h2.data, expected[:, 0], atol=1e-12)
    assert np.array_equal(r2.data, params.relation_emb.data[rel_ids])


def test_tucker_scores_against_einsum():
    rng = np.random.default_rng(2)
    d, q, e = 4, 3, 5
    h = rng.normal(size=(q, d))
    r = rng.normal(size=(q, d))
    cand = rng.normal(size=(e, d))
    core = rng.normal(size=(d, d, d))
    out = tucker_scores(Tensor(h), Tensor(r), Tensor(cand), Tensor(core))
    expected = np.einsum("qa,qb,abc,ec->qe", h, r, core, cand)
    assert np.allclose(out.data, expected, atol=1e-12)
    single = tucker_score(Tensor(h[0]), Tensor(r[0]), Tensor(cand[0]),
                          Tensor(core))
    assert single.data.shape == ()
    assert np.allclose(single.data, expected[0, 0], atol=1e-12)


def test_tucker_scores_multilinear():
    rng = np.random.default_rng(3)
    d = 4
    h = rng.normal(size=(2, d))
    r = rng.normal(size=(2, d))
    cand = rng.normal(size=(3, d))
    core = rng.normal(size=(d, d, d))
    base = tucker_scores(Tensor(h), Tensor(r), Tensor(cand), Tensor(core)).data
    scaled = tucker_scores(Tensor(2.5 * h), Tensor(r), Tensor(cand),
                           Tensor(core)).data
    assert np.allclose(scaled, 2.5 * base, atol=1e-12)
    zero = tucker_scores(Tensor(h), Tensor(np.zeros_like(r)), Tensor(cand),
                         Tensor(core)).data
    assert np.array_equal(zero, np.zeros_like(base))


def test_kgc_loss_uniform_when_core_is_zero():
    graph, data, params, cfg = make_fixture(dtype=np.float64)
    params.core.data[:] = 0.0
    out = encode_entities(params, data, cfg)
    e_all = pooled_entities(out, cfg)
    loss, tail_mean, head_mean = kgc_loss(graph.train, e_all, params, cfg)
    expected = math.log(graph.n_entities)
    assert abs(tail_mean - expected) < 1e-12
    assert abs(head_mean - expected) < 1e-12
    assert abs(float(loss.data) - 2 * expected) < 1e-12


def test_kgc_loss_no_cte_matches_hand_computation():
    graph, data, params, cfg = make_fixture(dtype=np.float64)
    cfg = _with(cfg, ablation="no_cte")
    rng = np.random.default_rng(4)
    e_np = rng.normal(size=(graph.n_entities, params.dim))
    e_all = Tensor(e_np)
    triples = graph.train[:3]
    loss, tail_mean, head_mean = kgc_loss(triples, e_all, params, cfg)
    core = params.core.data
    rel = params.relation_emb.data
    n_rel = graph.n_relations

    def ce(known, relation, gold):
        scores = np.einsum("a,b,abc,ec->e", known, relation, core, e_np)
        return float(np.log(np.exp(scores - scores.max()).sum())
                     + scores.max() - scores[gold])

    tails = [ce(e_np[h], rel[r], t) for h, r, t in triples]
    heads = [ce(e_np[t], rel[n_rel + r], h) for h, r, t in triples]
    assert abs(tail_mean - np.mean(tails)) < 1e-10
    assert abs(head_mean - np.mean(heads)) < 1e-10
    assert abs(float(loss.data) - (np.mean(tails) + np.mean(heads))) < 1e-10


def test_kgc_loss_value_splits_into_direction_means():
    graph, data, params, cfg = make_fixture(dtype=np.float64)
    out = encode_entities(params, data, cfg)
    e_all = pooled_entities(out, cfg)
    loss, tail_mean, head_mean = kgc_loss(graph.train, e_all, params, cfg)
    assert abs(float(loss.data) - (tail_mean + head_mean)) < 1e-10


def test_contrastive_single_entity_is_zero():
    anchors = Tensor(np.array([[3.0, 4.0]]))
    views = {"second_pass": Tensor(np.array([[1.0, 0.5]]))}
    assert float(contrastive_loss(anchors, views, tau=0.7).data) == 0.0


def test_contrastive_orthogonal_pair_closed_form():
    anchors = Tensor(np.eye(2, dtype=np.float64))
    views = {"second_pass": Tensor(np.eye(2, dtype=np.float64))}
    loss = float(contrastive_loss(anchors, views, tau=1.0).data)
    expected = 2.0 * math.log(1.0 + math.exp(-1.0))
    assert abs(loss - expected) < 1e-12


def test_contrastive_sums_over_views():
    rng = np.random.default_rng(5)
    anchors = Tensor(rng.normal(size=(4, 6)))
    views = {name: Tensor(rng.normal(size=(4, 6))) for name in VIEW_ORDER}
    total = float(contrastive_loss(anchors, views, tau=0.5).data)
    parts = sum(float(contrastive_loss(anchors, {name: views[name]}, 0.5).data)
                for name in VIEW_ORDER)
    assert abs(total - parts) < 1e-10


def test_contrastive_cosine_scale_invariance():
    rng = np.random.default_rng(6)
    anchors = rng.normal(size=(3, 5))
    view = rng.normal(size=(3, 5))
    base = float(contrastive_loss(Tensor(anchors),
                                  {"second_pass": Tensor(view)}, 0.5).data)
    scales_a = rng.uniform(0.1, 4.0, size=(3, 1))
    scales_v = rng.uniform(0.1, 4.0, size=(3, 1))
    scaled = float(contrastive_loss(
        Tensor(anchors * scales_a),
        {"second_pass": Tensor(view * scales_v)}, 0.5).data)
    assert abs(base - scaled) < 1e-10


def test_contrastive_relabel_invariance():
    rng = np.random.default_rng(7)
    anchors = rng.normal(size=(5, 4))
    view = rng.normal(size=(5, 4))
    perm = rng.permutation(5)
    base = float(contrastive_loss(Tensor(anchors),
                                  {"second_pass": Tensor(view)}, 0.3).data)
    permuted = float(contrastive_loss(Tensor(anchors[perm]),
                                      {"second_pass": Tensor(view[perm])},
                                      0.3).data)
    assert abs(base - permuted) < 1e-10


def test_contrastive_argument_validation():
    anchors = Tensor(np.eye(2))
    with pytest.raises(ConfigError, match="temperature"):
        contrastive_loss(anchors, {"second_pass": anchors}, tau=0.0)
    with pytest.raises(ConfigError, match="at least one view"):
        contrastive_loss(anchors, {}, tau=1.0)


def test_second_pass_identical_without_dropout():
    _, data, params, cfg = make_fixture(dropout=0.0)
    first = pooled_entities(encode_entities(params, data, cfg, train=True),
                            cfg)
    second = pooled_entities(encode_entities(params, data, cfg, train=True),
                             cfg)
    assert np.array_equal(first.data, second.data)


def test_total_loss_lambda_zero_skips_contrastive(monkeypatch):
    graph, data, params, cfg = make_fixture(lambda_con=0.0)
    called = []
    monkeypatch.setattr(model_mod, "contrastive_loss",
                        lambda *a, **k: called.append(1))
    loss, kgc_value, con_value = total_loss(graph.train, params, data, cfg)
    assert called == []
    assert con_value == 0.0
    assert float(loss.data) == kgc_value


def test_total_loss_no_con_matches_lambda_zero():
    graph, data, params, cfg = make_fixture(lambda_con=0.01)
    ablated, _, con_a = total_loss(graph.train, params, data,
                                   _with(cfg, ablation="no_con"))
    plain, _, con_b = total_loss(graph.train, params, data,
                                 _with(cfg, lambda_con=0.0))
    assert con_a == 0.0 and con_b == 0.0
    assert np.array_equal(ablated.data, plain.data)


def test_total_loss_combines_terms_linearly():
    graph, data, params, cfg = make_fixture(dtype=np.float64, lambda_con=0.37)
    loss, kgc_value, con_value = total_loss(graph.train, params, data, cfg)
    assert con_value > 0.0
    assert abs(float(loss.data) - (kgc_value + 0.37 * con_value)) < 1e-10


def test_total_loss_view_wiring(monkeypatch):
    graph, data, params, cfg = make_fixture()
    real = contrastive_loss
    seen = {}

    def spy(anchors, views, tau):
        seen["views"] = list(views)
        seen["batch"] = anchors.data.shape[0]
        return real(anchors, views, tau)

    monkeypatch.setattr(model_mod, "contrastive_loss", spy)
    total_loss(graph.train, params, data, cfg)
    assert sorted(seen["views"]) == sorted(VIEW_ORDER)
    batch_ids = np.unique(np.concatenate([graph.train[:, 0],
                                          graph.train[:, 2]]))
    assert seen["batch"] == len(batch_ids)
    for ablation, dropped in [("no_esec", "second_pass"),
                              ("no_s", "sequence_mean"),
                              ("no_v", "visual_mean"),
                              ("no_w", "textual_mean")]:
        total_loss(graph.train, params, data, _with(cfg, ablation=ablation))
        assert dropped not in seen["views"]
        assert len(seen["views"]) == 3


def test_total_loss_reaches_every_parameter():
    graph, data, params, cfg = make_fixture(lambda_con=0.01)
    with Tape() as tape:
        loss, _, _ = total_loss(graph.train, params, data, cfg, train=True)
    tape.backward(loss)
    for name, tensor in params.named().items():
        assert tensor.grad is not None, name
        assert np.all(np.isfinite(tensor.grad)), name


def test_no_cte_cuts_context_parameters_from_graph():
    graph, data, params, cfg = make_fixture()
    cfg = _with(cfg, ablation="no_cte")
    with Tape() as tape:
        loss, _, _ = total_loss(graph.train, params, data, cfg, train=True)
    tape.backward(loss)
    assert params.cxt_token.grad is None
    assert params.context_layer.wq.grad is None
    assert params.core.grad is not None


def test_entity_token_permutation_leaves_embeddings_unchanged():
    _, data, params, cfg = make_fixture(dtype=np.float64)
    rng = np.random.default_rng(8)
    shuffled = EntityTokenData(
        np.stack([row[rng.permutation(data.m)] for row in data.visual_ids]),
        np.stack([row[rng.permutation(data.n)] for row in data.textual_ids]),
        data.visual_features, data.textual_features)
    base = pooled_entities(encode_entities(params, data, cfg), cfg).data
    permed = pooled_entities(encode_entities(params, shuffled, cfg), cfg).data
    assert np.allclose(permed, base, atol=1e-9)
    base_views = entity_views(encode_entities(params, data, cfg), data, cfg)
    perm_views = entity_views(encode_entities(params, shuffled, cfg),
                              shuffled, cfg)
    for name in base_views:
        assert np.allclose(perm_views[name].data, base_views[name].data,
                           atol=1e-9), name
