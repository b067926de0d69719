"""Shared fixtures and independent reference implementations for the tests.

The reference code here deliberately avoids the package's own autodiff or
model modules: transformers are re-implemented with plain numpy loops,
ranking with sort-and-scan, refinement with Counter arithmetic. Tests compare
the package against these.
"""

import collections

import numpy as np

from mygo.model import EntityTokenData
from mygo.synth import synth_graph, synth_token_data
from mygo.train import TrainConfig, init_params, make_rng


def make_fixture(seed=0, n_entities=6, n_relations=2, n_train=8, dim=8,
                 heads=2, m=2, n=3, dropout=0.0, lambda_con=0.01, tau=0.5,
                 dtype=np.float32, **cfg_kwargs):
    """Tiny deterministic (graph, data, params, cfg) bundle."""
    cfg = TrainConfig(dim=dim, heads=heads, m=m, n=n, dropout=dropout,
                      lambda_con=lambda_con, tau=tau, seed=seed,
                      epochs=0, eval_every=0, **cfg_kwargs)
    data_rng = np.random.default_rng(seed)
    graph = synth_graph(data_rng, n_entities, n_relations, n_train)
    data = synth_token_data(data_rng, n_entities, m, n,
                            visual_size=7, visual_dim=5,
                            textual_size=9, textual_dim=4)
    params = init_params(cfg, n_entities, n_relations, 5, 4, make_rng(seed))
    if dtype != np.float32:
        params = params.cast(dtype)
    return graph, data, params, cfg


def layer_arrays(layer, dtype=np.float64):
    """EncoderLayer tensors as a plain dict of numpy arrays."""
    return {name.split(".")[-1]: t.data.astype(dtype)
            for name, t in layer.named("x").items()}


def ref_layer_norm(x, gain, bias, eps=1e-5):
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * gain + bias


def ref_attention(x, arrs, heads):
    """Loop-over-heads reference multi-head self-attention."""
    d = x.shape[-1]
    hd = d // heads
    q = x @ arrs["wq"] + arrs["bq"]
    k = x @ arrs["wk"] + arrs["bk"]
    v = x @ arrs["wv"] + arrs["bv"]
    outs = []
    for h in range(heads):
        sl = slice(h * hd, (h + 1) * hd)
        scores = q[..., sl] @ np.swapaxes(k[..., sl], -1, -2) / np.sqrt(hd)
        e = np.exp(scores - scores.max(axis=-1, keepdims=True))
        weights = e / e.sum(axis=-1, keepdims=True)
        outs.append(weights @ v[..., sl])
    return np.concatenate(outs, axis=-1) @ arrs["wo"] + arrs["bo"]


def ref_encoder_layer(x, arrs, heads):
    """Post-norm transformer block re-implemented with plain numpy."""
    attn = ref_attention(x, arrs, heads)
    x = ref_layer_norm(x + attn, arrs["ln1_gain"], arrs["ln1_bias"])
    hidden = np.maximum(x @ arrs["ff1_w"] + arrs["ff1_b"], 0.0)
    out = hidden @ arrs["ff2_w"] + arrs["ff2_b"]
    return ref_layer_norm(x + out, arrs["ln2_gain"], arrs["ln2_bias"])


def ref_refine_one(sources, keep, pad_id, stopwords=None):
    """Multiset count + (freq desc, id asc) sort + truncate + pad."""
    pooled = [t for source in sources for t in source]
    if stopwords:
        pooled = [t for t in pooled if t not in stopwords]
    counts = collections.Counter(pooled)
    ranked = sorted(counts, key=lambda token: (-counts[token], token))
    chosen = ranked[:keep]
    return chosen + [pad_id] * (keep - len(chosen))


def ref_rank(scores, gold, exclude=()):
    """Sort-and-scan tie-averaged rank of the gold candidate.

    Builds the explicit candidate list, sorts descending, and averages the
    positions of all candidates tied with gold.
    """
    keep = [i for i in range(len(scores)) if i == gold or i not in set(exclude)]
    ordered = sorted(keep, key=lambda i: -scores[i])
    gold_score = scores[gold]
    positions = [pos + 1 for pos, i in enumerate(ordered)
                 if scores[i] == gold_score]
    return sum(positions) / len(positions)


def ref_metrics(ranks, hits_levels=(1, 3, 10)):
    """MRR and Hits@K over a rank list."""
    ranks = list(ranks)
    mrr = sum(1.0 / r for r in ranks) / len(ranks)
    hits = {k: sum(1 for r in ranks if r <= k) / len(ranks)
            for k in hits_levels}
    return mrr, hits


def params_bytes(params):
    """Concatenated little-endian float32 payload of all parameters."""
    return b"".join(np.ascontiguousarray(t.data, dtype="<f4").tobytes()
                    for t in params.tensors())
