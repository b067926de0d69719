"""Modality token handling: frozen token catalogs, raw per-source token
streams, and frequency-based refinement into fixed-length token lists.

Catalog binary format (little endian):
  magic   4 bytes  b"MYTC"
  version u32      1
  modality u8      0 = visual, 1 = textual
  size    u32      number of catalog entries
  dim     u32      feature width
  payload size*dim float32, row major

On load a zero feature row is appended at id == size and used as the padding
token, so in-memory features have shape (size+1, dim).

Raw token stream TSV: one line per source,
  entity<TAB>source_index<TAB>space-separated token ids
(one source per image for the visual stream; usually a single source for the
textual stream). Stop-word file: one token id per line.

Refined cache TSV: one line per entity,
  entity<TAB>space-joined visual ids (m)<TAB>space-joined textual ids (n)
"""

from __future__ import annotations

import struct
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .kg import _data_lines

CATALOG_MAGIC = b"MYTC"
CATALOG_VERSION = 1
MODALITY_CODES = {"visual": 0, "textual": 1}
MODALITY_NAMES = {0: "visual", 1: "textual"}


@dataclass
class TokenCatalog:
    """Frozen feature table for one modality, plus an appended padding row."""

    modality: str
    features: np.ndarray  # (size + 1, dim) float32, last row is padding zeros

    @property
    def size(self):
        return self.features.shape[0] - 1

    @property
    def dim(self):
        return self.features.shape[1]

    @property
    def padding_id(self):
        return self.size


def write_catalog(path, modality, features):
    """Write a catalog file from a (size, dim) float array."""
    features = np.ascontiguousarray(features, dtype="<f4")
    if features.ndim != 2:
        raise ValueError("catalog features must be 2-D")
    header = CATALOG_MAGIC + struct.pack(
        "<IBII", CATALOG_VERSION, MODALITY_CODES[modality],
        features.shape[0], features.shape[1])
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(features.tobytes())


def load_catalog(path, expect_modality=None):
    """Read a catalog file, validate the header, append the padding row."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"missing file: {path}")
    blob = path.read_bytes()
    head_len = 4 + struct.calcsize("<IBII")
    if len(blob) < head_len:
        raise DataError(f"{path}: truncated catalog header")
    if blob[:4] != CATALOG_MAGIC:
        raise DataError(f"{path}: bad magic {blob[:4]!r}")
    version, mod_code, size, dim = struct.unpack("<IBII", blob[4:head_len])
    if version != CATALOG_VERSION:
        raise DataError(f"{path}: unsupported catalog version {version}")
    if mod_code not in MODALITY_NAMES:
        raise DataError(f"{path}: unknown modality code {mod_code}")
    modality = MODALITY_NAMES[mod_code]
    if expect_modality is not None and modality != expect_modality:
        raise DataError(f"{path}: expected {expect_modality} catalog, got {modality}")
    expected = head_len + 4 * size * dim
    if len(blob) != expected:
        raise DataError(f"{path}: payload is {len(blob) - head_len} bytes, "
                        f"expected {4 * size * dim}")
    table = np.frombuffer(blob, dtype="<f4", offset=head_len).reshape(size, dim)
    if not np.all(np.isfinite(table)):
        raise DataError(f"{path}: non-finite feature value")
    features = np.zeros((size + 1, dim), dtype=np.float32)
    features[:size] = table
    return TokenCatalog(modality, features)


@dataclass
class RawTokenStream:
    """Per-entity, per-source token id lists for both modalities."""

    visual: list  # entity id -> list of sources, each a list of ids
    textual: list


def load_token_stream(path, entity_ids, catalog_size):
    """Read one modality's raw stream for all entities (missing = empty)."""
    sources = [[] for _ in range(len(entity_ids))]
    for lineno, line in _data_lines(path):
        parts = line.split("\t")
        if len(parts) != 3:
            raise DataError(f"{path}:{lineno}: expected 3 tab-separated fields, "
                            f"got {len(parts)}")
        name, index_text, ids_text = parts
        if name not in entity_ids:
            raise DataError(f"{path}:{lineno}: unknown entity {name!r}")
        try:
            int(index_text)
        except ValueError:
            raise DataError(f"{path}:{lineno}: source index {index_text!r} "
                            f"is not an integer") from None
        ids = []
        for piece in ids_text.split():
            try:
                token = int(piece)
            except ValueError:
                raise DataError(f"{path}:{lineno}: token id {piece!r} "
                                f"is not an integer") from None
            if not 0 <= token < catalog_size:
                raise DataError(f"{path}:{lineno}: token id {token} outside "
                                f"catalog of size {catalog_size}")
            ids.append(token)
        sources[entity_ids[name]].append(ids)
    return sources


def load_stopword_ids(path, catalog_size):
    """Read the textual stop-word id list (one id per line)."""
    ids = set()
    for lineno, line in _data_lines(path):
        try:
            token = int(line.strip())
        except ValueError:
            raise DataError(f"{path}:{lineno}: stop-word id {line!r} "
                            f"is not an integer") from None
        if not 0 <= token < catalog_size:
            raise DataError(f"{path}:{lineno}: stop-word id {token} outside "
                            f"catalog of size {catalog_size}")
        ids.add(token)
    return ids


@dataclass
class RefinedTokenSet:
    """Fixed-length token ids per entity: (E, m) visual, (E, n) textual."""

    visual: np.ndarray
    textual: np.ndarray
    visual_pad: int
    textual_pad: int

    @property
    def m(self):
        return self.visual.shape[1]

    @property
    def n(self):
        return self.textual.shape[1]

    @property
    def n_entities(self):
        return self.visual.shape[0]


def _refine_one(sources, keep, pad_id, stopwords, mode):
    pooled = [t for source in sources for t in source]
    if mode == "frequency":
        if stopwords:
            pooled = [t for t in pooled if t not in stopwords]
        counts = Counter(pooled)
        ranked = sorted(counts.items(), key=lambda item: (-item[1], item[0]))
        chosen = [token for token, _ in ranked[:keep]]
    elif mode == "arrival":
        # ablation path: stream order verbatim, duplicates and stop-words kept
        chosen = pooled[:keep]
    else:
        raise ValueError(f"unknown refinement mode {mode!r}")
    return chosen + [pad_id] * (keep - len(chosen))


def refine_tokens(stream, stopword_ids, m, n, *, visual_pad, textual_pad,
                  mode="frequency"):
    """Reduce raw streams to m visual / n textual ids per entity.

    Frequency mode pools every source, drops textual stop-words, and keeps the
    most frequent ids (ties broken by smaller id), padding the tail. Arrival
    mode keeps the pooled stream order untouched.
    """
    if m <= 0 or n <= 0:
        raise ValueError("token counts m and n must be positive")
    n_entities = len(stream.visual)
    visual = np.full((n_entities, m), visual_pad, dtype=np.int64)
    textual = np.full((n_entities, n), textual_pad, dtype=np.int64)
    for e in range(n_entities):
        visual[e] = _refine_one(stream.visual[e], m, visual_pad, None, mode)
        textual[e] = _refine_one(stream.textual[e], n, textual_pad,
                                 stopword_ids, mode)
    return RefinedTokenSet(visual, textual, visual_pad, textual_pad)


def write_refined(path, refined, entity_names):
    """Write the refined cache TSV (one line per entity, name order by id)."""
    with open(path, "w", encoding="utf-8") as fh:
        for e, name in enumerate(entity_names):
            vis = " ".join(str(t) for t in refined.visual[e])
            txt = " ".join(str(t) for t in refined.textual[e])
            fh.write(f"{name}\t{vis}\t{txt}\n")


def load_refined(path, entity_ids, m, n, visual_pad, textual_pad):
    """Read a refined cache TSV back; entities absent from the file are all
    padding."""
    visual = np.full((len(entity_ids), m), visual_pad, dtype=np.int64)
    textual = np.full((len(entity_ids), n), textual_pad, dtype=np.int64)
    for lineno, line in _data_lines(path):
        parts = line.split("\t")
        if len(parts) != 3:
            raise DataError(f"{path}:{lineno}: expected 3 tab-separated fields, "
                            f"got {len(parts)}")
        name, vis_text, txt_text = parts
        if name not in entity_ids:
            raise DataError(f"{path}:{lineno}: unknown entity {name!r}")
        vis = [int(t) for t in vis_text.split()]
        txt = [int(t) for t in txt_text.split()]
        if len(vis) != m or len(txt) != n:
            raise DataError(f"{path}:{lineno}: expected {m} visual / {n} "
                            f"textual ids, got {len(vis)}/{len(txt)}")
        if any(not 0 <= t <= visual_pad for t in vis) or \
           any(not 0 <= t <= textual_pad for t in txt):
            raise DataError(f"{path}:{lineno}: token id outside catalog range")
        visual[entity_ids[name]] = vis
        textual[entity_ids[name]] = txt
    return RefinedTokenSet(visual, textual, visual_pad, textual_pad)
