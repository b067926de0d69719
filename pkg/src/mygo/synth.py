"""Synthetic desk-scale datasets: random graphs, catalogs and token streams.

Everything is driven by an explicit generator so fixtures are reproducible.
`write_dataset` lays a complete dataset directory on disk in the exact file
formats the loaders and the CLI expect.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .kg import KnowledgeGraph
from .model import EntityTokenData
from .tokens import RawTokenStream, RefinedTokenSet, TokenCatalog, write_catalog


def synth_graph(rng, n_entities, n_relations, n_train, n_valid=0, n_test=0):
    """Random graph with globally distinct triples split into three parts."""
    total = n_train + n_valid + n_test
    cap = n_entities * n_entities * n_relations
    if total > cap:
        raise ValueError(f"cannot draw {total} distinct triples from a "
                         f"{cap}-triple space")
    seen = set()
    triples = []
    while len(triples) < total:
        h = int(rng.integers(n_entities))
        r = int(rng.integers(n_relations))
        t = int(rng.integers(n_entities))
        if (h, r, t) in seen:
            continue
        seen.add((h, r, t))
        triples.append((h, r, t))
    arr = np.asarray(triples, dtype=np.int64)
    entity_ids = {f"e{i}": i for i in range(n_entities)}
    relation_ids = {f"r{i}": i for i in range(n_relations)}
    return KnowledgeGraph(entity_ids, relation_ids,
                          arr[:n_train],
                          arr[n_train:n_train + n_valid],
                          arr[n_train + n_valid:])


def synth_catalog(rng, modality, size, dim):
    features = rng.uniform(-1.0, 1.0, size=(size, dim)).astype(np.float32)
    table = np.zeros((size + 1, dim), dtype=np.float32)
    table[:size] = features
    return TokenCatalog(modality, table)


def synth_sources(rng, n_entities, catalog_size, max_sources=3, max_tokens=6):
    """Per-entity raw source lists (some entities may end up empty)."""
    sources = []
    for _ in range(n_entities):
        entity_sources = []
        for _ in range(int(rng.integers(0, max_sources + 1))):
            count = int(rng.integers(1, max_tokens + 1))
            entity_sources.append(
                [int(x) for x in rng.integers(0, catalog_size, size=count)])
        sources.append(entity_sources)
    return sources


def synth_stream(rng, n_entities, visual_size, textual_size,
                 max_sources=3, max_tokens=6):
    return RawTokenStream(
        visual=synth_sources(rng, n_entities, visual_size, max_sources,
                             max_tokens),
        textual=synth_sources(rng, n_entities, textual_size, 1, max_tokens))


def synth_refined(rng, n_entities, m, n, visual_size, textual_size):
    """Random refined token ids straight into the fixed-length layout."""
    visual = rng.integers(0, visual_size, size=(n_entities, m)).astype(np.int64)
    textual = rng.integers(0, textual_size, size=(n_entities, n)).astype(np.int64)
    return RefinedTokenSet(visual, textual, visual_size, textual_size)


def synth_token_data(rng, n_entities, m, n, visual_size=11, visual_dim=5,
                     textual_size=13, textual_dim=7):
    """EntityTokenData with random catalogs and random refined ids."""
    visual_cat = synth_catalog(rng, "visual", visual_size, visual_dim)
    textual_cat = synth_catalog(rng, "textual", textual_size, textual_dim)
    refined = synth_refined(rng, n_entities, m, n, visual_size, textual_size)
    return EntityTokenData.build(refined, visual_cat, textual_cat)


def write_stream_tsv(path, sources, entity_names):
    with open(path, "w", encoding="utf-8") as fh:
        for e, per_entity in enumerate(sources):
            for index, ids in enumerate(per_entity):
                joined = " ".join(str(t) for t in ids)
                fh.write(f"{entity_names[e]}\t{index}\t{joined}\n")


def write_dataset(directory, graph, visual_catalog, textual_catalog, stream,
                  stopword_ids=()):
    """Write a full dataset directory in the on-disk layout the CLI reads."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / "entities.tsv", "w", encoding="utf-8") as fh:
        for name in graph.entity_names:
            fh.write(name + "\n")
    with open(directory / "relations.tsv", "w", encoding="utf-8") as fh:
        for name in graph.relation_names:
            fh.write(name + "\n")
    for split in ("train", "valid", "test"):
        with open(directory / f"{split}.tsv", "w", encoding="utf-8") as fh:
            for h, r, t in graph.split(split):
                fh.write(f"{graph.entity_names[h]}\t{graph.relation_names[r]}"
                         f"\t{graph.entity_names[t]}\n")
    write_catalog(directory / "visual_catalog.bin", "visual",
                  visual_catalog.features[:visual_catalog.size])
    write_catalog(directory / "textual_catalog.bin", "textual",
                  textual_catalog.features[:textual_catalog.size])
    write_stream_tsv(directory / "visual_tokens.tsv", stream.visual,
                     graph.entity_names)
    write_stream_tsv(directory / "textual_tokens.tsv", stream.textual,
                     graph.entity_names)
    with open(directory / "stopword_ids.txt", "w", encoding="utf-8") as fh:
        for token in sorted(stopword_ids):
            fh.write(f"{token}\n")
    return directory


def synth_dataset(directory, seed=0, n_entities=20, n_relations=3,
                  n_train=60, n_valid=0, n_test=0, visual_size=11,
                  visual_dim=5, textual_size=13, textual_dim=7,
                  n_stopwords=2):
    """Generate and write a complete random dataset; returns the directory."""
    rng = np.random.default_rng(seed)
    graph = synth_graph(rng, n_entities, n_relations, n_train, n_valid, n_test)
    visual_cat = synth_catalog(rng, "visual", visual_size, visual_dim)
    textual_cat = synth_catalog(rng, "textual", textual_size, textual_dim)
    stream = synth_stream(rng, n_entities, visual_size, textual_size)
    stopwords = sorted(int(x) for x in
                       rng.choice(textual_size, size=n_stopwords,
                                  replace=False))
    return write_dataset(directory, graph, visual_cat, textual_cat, stream,
                         stopwords)
