"""Knowledge graph loading: vocabularies, triple splits, filter index.

File formats (all TSV, UTF-8):
  entities.tsv / relations.tsv   one name per line; id = order of appearance
  train.tsv / valid.tsv / test.tsv   head<TAB>relation<TAB>tail, names only

Blank lines and lines starting with '#' are ignored everywhere. Duplicate
names and duplicate triples within one split are errors, as are names that do
not resolve against the vocabularies.

Reciprocal relations double the relation id space: for a graph with R
relations, directed relation ids run 0..2R-1 where id R+r is the reverse of
relation r (used when predicting heads).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError


def _data_lines(path):
    """Yield (line_number, stripped_line) skipping blanks and '#' comments."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"missing file: {path}")
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            yield lineno, line


def load_vocab(path):
    """Read a name-per-line vocabulary into a name -> id dict."""
    vocab = {}
    for lineno, line in _data_lines(path):
        name = line.strip()
        if "\t" in name:
            raise DataError(f"{path}:{lineno}: vocabulary line contains a tab")
        if name in vocab:
            raise DataError(f"{path}:{lineno}: duplicate name {name!r}")
        vocab[name] = len(vocab)
    return vocab


def load_triples(path, entity_ids, relation_ids):
    """Read head/relation/tail name triples into an (N, 3) int array."""
    triples = []
    seen = set()
    for lineno, line in _data_lines(path):
        parts = line.split("\t")
        if len(parts) != 3:
            raise DataError(f"{path}:{lineno}: expected 3 tab-separated fields, "
                            f"got {len(parts)}")
        head, rel, tail = (p.strip() for p in parts)
        if head not in entity_ids:
            raise DataError(f"{path}:{lineno}: unknown entity {head!r}")
        if tail not in entity_ids:
            raise DataError(f"{path}:{lineno}: unknown entity {tail!r}")
        if rel not in relation_ids:
            raise DataError(f"{path}:{lineno}: unknown relation {rel!r}")
        t = (entity_ids[head], relation_ids[rel], entity_ids[tail])
        if t in seen:
            raise DataError(f"{path}:{lineno}: duplicate triple {line!r}")
        seen.add(t)
        triples.append(t)
    return np.asarray(triples, dtype=np.int64).reshape(len(triples), 3)


@dataclass
class KnowledgeGraph:
    """Entity/relation vocabularies plus train/valid/test id triples."""

    entity_ids: dict
    relation_ids: dict
    train: np.ndarray
    valid: np.ndarray
    test: np.ndarray
    entity_names: list = field(init=False)
    relation_names: list = field(init=False)

    def __post_init__(self):
        self.entity_names = [None] * len(self.entity_ids)
        for name, i in self.entity_ids.items():
            self.entity_names[i] = name
        self.relation_names = [None] * len(self.relation_ids)
        for name, i in self.relation_ids.items():
            self.relation_names[i] = name

    @property
    def n_entities(self):
        return len(self.entity_ids)

    @property
    def n_relations(self):
        return len(self.relation_ids)

    def split(self, name):
        try:
            return {"train": self.train, "valid": self.valid, "test": self.test}[name]
        except KeyError:
            raise DataError(f"unknown split {name!r}") from None

    def all_triples(self):
        return np.concatenate([self.train, self.valid, self.test], axis=0)


def load_graph(directory):
    """Load a dataset directory (entities/relations/train/valid/test TSVs)."""
    directory = Path(directory)
    entity_ids = load_vocab(directory / "entities.tsv")
    relation_ids = load_vocab(directory / "relations.tsv")
    splits = {}
    for name in ("train", "valid", "test"):
        path = directory / f"{name}.tsv"
        if name != "train" and not path.is_file():
            splits[name] = np.zeros((0, 3), dtype=np.int64)
            continue
        splits[name] = load_triples(path, entity_ids, relation_ids)
    return KnowledgeGraph(entity_ids, relation_ids,
                          splits["train"], splits["valid"], splits["test"])


class FilterIndex:
    """Known-answer lookup over all splits for filtered ranking.

    tails(h, r) is the set of tail ids t with (h, r, t) known anywhere;
    heads(t, r) the set of head ids h with (h, r, t) known anywhere.
    """

    def __init__(self, graph: KnowledgeGraph):
        self._tails = {}
        self._heads = {}
        for h, r, t in graph.all_triples():
            self._tails.setdefault((int(h), int(r)), set()).add(int(t))
            self._heads.setdefault((int(t), int(r)), set()).add(int(h))

    def tails(self, head, relation):
        return self._tails.get((int(head), int(relation)), frozenset())

    def heads(self, tail, relation):
        return self._heads.get((int(tail), int(relation)), frozenset())
