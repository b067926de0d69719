"""Link prediction evaluation: rank every query against all entities.

Each test triple (h, r, t) yields two queries: predict t from (h, r) and
predict h from (t, reverse of r). Ranks are tie-averaged:

  rank = 1 + #{strictly better candidates} + #{equal non-gold candidates} / 2

The raw rank counts every candidate; the filtered rank first removes every
known answer (from train+valid+test) except the gold entity itself. MRR over
a split averages reciprocal ranks over all 2|T| queries; Hits@K counts
queries with tie-averaged rank <= K.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, gather_rows
from .errors import ConfigError, DataError
from .kg import FilterIndex
from .model import (encode_context, encode_entities, pooled_entities,
                    tucker_scores)

HITS_LEVELS = (1, 3, 10)
SETTINGS = ("raw", "filtered")
DIRECTIONS = ("tail", "head", "both")


@dataclass
class Query:
    """One ranking task: predict `gold` among all entities."""

    known: int          # entity on the given side
    relation: int       # directed relation id (R + r for head prediction)
    gold: int
    direction: str      # "tail" or "head"
    exclude: frozenset  # known answers to drop in the filtered setting


@dataclass
class RankedQuery:
    query: Query
    raw_rank: float
    filtered_rank: float


@dataclass
class Metrics:
    mrr: float = 0.0
    hits: dict = field(default_factory=lambda: {k: 0.0 for k in HITS_LEVELS})
    count: int = 0


@dataclass
class EvalReport:
    split: str
    metrics: dict  # setting -> direction -> Metrics

    def to_tsv(self):
        lines = ["split\tsetting\tdirection\tmrr\thits1\thits3\thits10\tcount"]
        for setting in SETTINGS:
            for direction in DIRECTIONS:
                m = self.metrics[setting][direction]
                lines.append(
                    f"{self.split}\t{setting}\t{direction}\t{m.mrr:.6f}\t"
                    f"{m.hits[1]:.6f}\t{m.hits[3]:.6f}\t{m.hits[10]:.6f}\t"
                    f"{m.count}")
        return "\n".join(lines) + "\n"

    def summary(self):
        both = self.metrics["filtered"]["both"]
        raw = self.metrics["raw"]["both"]
        lines = [
            f"split {self.split}: {both.count} queries "
            f"({both.count // 2} triples, both directions)",
            f"  filtered  MRR {both.mrr:.4f}  Hits@1 {both.hits[1]:.4f}  "
            f"Hits@3 {both.hits[3]:.4f}  Hits@10 {both.hits[10]:.4f}",
            f"  raw       MRR {raw.mrr:.4f}  Hits@1 {raw.hits[1]:.4f}  "
            f"Hits@3 {raw.hits[3]:.4f}  Hits@10 {raw.hits[10]:.4f}",
        ]
        return "\n".join(lines) + "\n"


def entity_embeddings(params, data, cfg):
    """Evaluation-mode entity embeddings for every entity: (E, d) array."""
    outputs = encode_entities(params, data, cfg, train=False)
    return pooled_entities(outputs, cfg).data


def score_queries(known_ids, rel_ids, params, e_all, cfg):
    """Scores of every entity for a batch of queries: (Q, E) array."""
    table = Tensor(e_all, dtype=params.dtype)
    known = gather_rows(table, np.asarray(known_ids, dtype=np.intp))
    h, r = encode_context(known, np.asarray(rel_ids, dtype=np.intp),
                          params, cfg, train=False)
    return tucker_scores(h, r, table, params.core).data


def score_all_candidates(entity_id, directed_relation, params, data, cfg,
                         e_all=None):
    """Scores of every entity as completion of one (entity, relation) query."""
    if e_all is None:
        e_all = entity_embeddings(params, data, cfg)
    return score_queries([entity_id], [directed_relation], params, e_all,
                         cfg)[0]


def rank_query(scores, gold, exclude):
    """Tie-averaged (raw, filtered) rank of the gold entity."""
    if not 0 <= gold < scores.shape[0]:
        raise DataError(f"gold entity id {gold} outside the "
                        f"{scores.shape[0]}-candidate score vector")
    gold_score = scores[gold]
    better = int(np.count_nonzero(scores > gold_score))
    equal = int(np.count_nonzero(scores == gold_score)) - 1
    raw = 1.0 + better + equal / 2.0
    if exclude:
        drop = np.fromiter((i for i in exclude if i != gold), dtype=np.intp)
    else:
        drop = np.empty(0, dtype=np.intp)
    if drop.size:
        kept = np.ones(scores.shape[0], dtype=bool)
        kept[drop] = False
        better_f = int(np.count_nonzero((scores > gold_score) & kept))
        equal_f = int(np.count_nonzero((scores == gold_score) & kept)) - 1
        filtered = 1.0 + better_f + equal_f / 2.0
    else:
        filtered = raw
    return raw, filtered


def build_queries(graph, split):
    """Both directed queries for every triple of the split, triple order."""
    triples = graph.split(split)
    filter_index = FilterIndex(graph)
    n_rel = graph.n_relations
    queries = []
    for h, r, t in triples:
        h, r, t = int(h), int(r), int(t)
        queries.append(Query(h, r, t, "tail",
                             frozenset(filter_index.tails(h, r))))
        queries.append(Query(t, n_rel + r, h, "head",
                             frozenset(filter_index.heads(t, r))))
    return queries


def _rank_chunk(queries, params, e_all, cfg):
    known = [q.known for q in queries]
    rels = [q.relation for q in queries]
    scores = score_queries(known, rels, params, e_all, cfg)
    ranked = []
    for row, q in zip(scores, queries):
        raw, filtered = rank_query(row, q.gold, q.exclude)
        ranked.append(RankedQuery(q, raw, filtered))
    return ranked


def rank_split(graph, params, data, cfg, split="test", workers=1,
               chunk_size=512):
    """RankedQuery list for a split, in deterministic query order."""
    queries = build_queries(graph, split)
    if not queries:
        return []
    e_all = entity_embeddings(params, data, cfg)
    chunks = [queries[i:i + chunk_size]
              for i in range(0, len(queries), chunk_size)]
    if workers <= 1 or len(chunks) == 1:
        ranked_chunks = [_rank_chunk(c, params, e_all, cfg) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            ranked_chunks = list(pool.map(
                lambda c: _rank_chunk(c, params, e_all, cfg), chunks))
    return [rq for chunk in ranked_chunks for rq in chunk]


def metrics_from_ranked(ranked, split):
    """Aggregate ranked queries into the raw/filtered x direction table."""
    report = EvalReport(split=split, metrics={
        setting: {direction: Metrics() for direction in DIRECTIONS}
        for setting in SETTINGS})
    sums = {s: {d: [0.0, {k: 0 for k in HITS_LEVELS}, 0]
                for d in DIRECTIONS} for s in SETTINGS}
    for rq in ranked:
        for setting, rank in (("raw", rq.raw_rank),
                              ("filtered", rq.filtered_rank)):
            for direction in (rq.query.direction, "both"):
                cell = sums[setting][direction]
                cell[0] += 1.0 / rank
                for k in HITS_LEVELS:
                    if rank <= k:
                        cell[1][k] += 1
                cell[2] += 1
    for setting in SETTINGS:
        for direction in DIRECTIONS:
            total, hits, count = sums[setting][direction]
            m = report.metrics[setting][direction]
            m.count = count
            if count:
                m.mrr = total / count
                m.hits = {k: hits[k] / count for k in HITS_LEVELS}
    return report


def evaluate(graph, params, data, cfg, split="test", workers=1):
    """Full filtered link prediction evaluation of one split."""
    ranked = rank_split(graph, params, data, cfg, split=split, workers=workers)
    return metrics_from_ranked(ranked, split)


def dump_scores(path, graph, params, data, cfg, split="test"):
    """Write raw candidate scores: query_id<TAB>candidate<TAB>score.

    query_id is `<split>:<triple index>:<direction>`; candidates appear in
    entity id order so the file can be replayed into ranks independently.
    """
    queries = build_queries(graph, split)
    e_all = entity_embeddings(params, data, cfg)
    names = graph.entity_names
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("query_id\tcandidate\tscore\n")
        for i in range(0, len(queries), 512):
            chunk = queries[i:i + 512]
            scores = score_queries([q.known for q in chunk],
                                   [q.relation for q in chunk],
                                   params, e_all, cfg)
            for j, q in enumerate(chunk):
                qid = f"{split}:{(i + j) // 2}:{q.direction}"
                for c in range(scores.shape[1]):
                    fh.write(f"{qid}\t{names[c]}\t{scores[j, c]:.8e}\n")


def dump_embeddings(path, params, data, cfg, graph, entity_names=None,
                    per_token=False):
    """Write pooled entity embeddings as TSV (optionally per-token rows).

    Header + one row per requested entity; per-token rows are tagged
    `name:position` for each row of the encoder output sequence.
    """
    if entity_names is None:
        entity_names = list(graph.entity_names)
    unknown = [n for n in entity_names if n not in graph.entity_ids]
    if unknown:
        raise ConfigError(f"unknown entities requested: {unknown[:5]}")
    outputs = encode_entities(params, data, cfg, train=False)
    pooled = pooled_entities(outputs, cfg).data
    d = pooled.shape[1]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("entity\t" + "\t".join(f"d{i}" for i in range(d)) + "\n")
        for name in entity_names:
            e = graph.entity_ids[name]
            row = "\t".join(f"{x:.8e}" for x in pooled[e])
            fh.write(f"{name}\t{row}\n")
            if per_token:
                for pos in range(outputs.data.shape[1]):
                    row = "\t".join(f"{x:.8e}" for x in outputs.data[e, pos])
                    fh.write(f"{name}:{pos}\t{row}\n")
