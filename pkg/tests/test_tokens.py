"""Catalog binary format, raw stream parsing, and token refinement."""

import struct

import numpy as np
import pytest

from mygo.errors import DataError
from mygo.synth import synth_stream, write_stream_tsv
from mygo.tokens import (CATALOG_MAGIC, RawTokenStream, load_catalog,
                         load_refined, load_stopword_ids, load_token_stream,
                         refine_tokens, write_catalog, write_refined)

from helpers import ref_refine_one


def test_catalog_round_trip(tmp_path):
    path = tmp_path / "visual_catalog.bin"
    features = np.random.default_rng(0).normal(size=(6, 3)).astype(np.float32)
    write_catalog(path, "visual", features)
    catalog = load_catalog(path)
    assert catalog.modality == "visual"
    assert catalog.size == 6
    assert catalog.dim == 3
    assert catalog.padding_id == 6
    assert catalog.features.shape == (7, 3)
    assert np.array_equal(catalog.features[:6], features)
    assert np.array_equal(catalog.features[6], np.zeros(3, dtype=np.float32))


def test_catalog_expected_modality(tmp_path):
    path = tmp_path / "c.bin"
    write_catalog(path, "textual", np.zeros((2, 2), dtype=np.float32))
    assert load_catalog(path, expect_modality="textual").modality == "textual"
    with pytest.raises(DataError, match="expected visual"):
        load_catalog(path, expect_modality="visual")


def _valid_catalog_bytes():
    header = CATALOG_MAGIC + struct.pack("<IBII", 1, 0, 2, 2)
    payload = np.arange(4, dtype="<f4").tobytes()
    return header + payload


def test_catalog_header_errors(tmp_path):
    blob = _valid_catalog_bytes()
    cases = [
        (blob[:10], "truncated catalog header"),
        (b"XXXX" + blob[4:], "bad magic"),
        (blob[:4] + struct.pack("<IBII", 9, 0, 2, 2) + blob[17:],
         "unsupported catalog version"),
        (blob[:4] + struct.pack("<IBII", 1, 7, 2, 2) + blob[17:],
         "unknown modality code"),
        (blob + b"\x00" * 4, "payload"),
        (blob[:-4], "payload"),
    ]
    for i, (data, message) in enumerate(cases):
        path = tmp_path / f"bad{i}.bin"
        path.write_bytes(data)
        with pytest.raises(DataError, match=message):
            load_catalog(path)


def test_catalog_nonfinite_payload(tmp_path):
    payload = np.array([[1.0, np.inf]], dtype="<f4")
    blob = CATALOG_MAGIC + struct.pack("<IBII", 1, 0, 1, 2) + payload.tobytes()
    path = tmp_path / "nan.bin"
    path.write_bytes(blob)
    with pytest.raises(DataError, match="non-finite"):
        load_catalog(path)


def test_catalog_missing_file(tmp_path):
    with pytest.raises(DataError, match="missing file"):
        load_catalog(tmp_path / "absent.bin")


ENTS = {"a": 0, "b": 1, "c": 2}


def test_stream_parse(tmp_path):
    path = tmp_path / "visual_tokens.tsv"
    path.write_text("a\t0\t3 1 3\n# comment\nc\t0\t\na\t1\t2\n")
    sources = load_token_stream(path, ENTS, catalog_size=5)
    assert sources == [[[3, 1, 3], [2]], [], [[]]]


def test_stream_errors(tmp_path):
    cases = [
        ("a\t0\n", "3 tab-separated"),
        ("z\t0\t1\n", "unknown entity 'z'"),
        ("a\tx\t1\n", "source index 'x'"),
        ("a\t0\t1 q\n", "token id 'q'"),
        ("a\t0\t5\n", "outside catalog"),
        ("a\t0\t-1\n", "outside catalog"),
    ]
    for i, (text, message) in enumerate(cases):
        path = tmp_path / f"s{i}.tsv"
        path.write_text(text)
        with pytest.raises(DataError, match=message):
            load_token_stream(path, ENTS, catalog_size=5)


def test_stream_write_read_round_trip(tmp_path):
    rng = np.random.default_rng(2)
    stream = synth_stream(rng, 5, visual_size=9, textual_size=7)
    names = [f"e{i}" for i in range(5)]
    ids = {name: i for i, name in enumerate(names)}
    write_stream_tsv(tmp_path / "v.tsv", stream.visual, names)
    write_stream_tsv(tmp_path / "t.tsv", stream.textual, names)
    assert load_token_stream(tmp_path / "v.tsv", ids, 9) == stream.visual
    assert load_token_stream(tmp_path / "t.tsv", ids, 7) == stream.textual


def test_stopword_loader(tmp_path):
    path = tmp_path / "stopword_ids.txt"
    path.write_text("3\n\n# c\n1\n")
    assert load_stopword_ids(path, catalog_size=5) == {1, 3}
    path.write_text("x\n")
    with pytest.raises(DataError, match="is not an integer"):
        load_stopword_ids(path, catalog_size=5)
    path.write_text("5\n")
    with pytest.raises(DataError, match="outside catalog"):
        load_stopword_ids(path, catalog_size=5)


def _refine(visual, textual, m, n, stopwords=frozenset(), mode="frequency"):
    stream = RawTokenStream(visual=visual, textual=textual)
    return refine_tokens(stream, stopwords, m, n, visual_pad=20,
                         textual_pad=30, mode=mode)


def test_refine_frequency_worked_example():
    # counts: 3 -> 2, 5 -> 2, 1 -> 1; tie between 3 and 5 goes to smaller id
    refined = _refine([[[3, 3, 5], [5, 1]]], [[[0]]], m=2, n=1)
    assert refined.visual.tolist() == [[3, 5]]
    refined = _refine([[[3, 3, 5], [5, 1]]], [[[0]]], m=4, n=1)
    assert refined.visual.tolist() == [[3, 5, 1, 20]]


def test_refine_tie_breaks_by_id():
    refined = _refine([[[7, 2, 7, 2]]], [[[0]]], m=2, n=1)
    assert refined.visual.tolist() == [[2, 7]]


def test_refine_pads_short_and_empty():
    refined = _refine([[[4]], []], [[], [[6]]], m=3, n=2)
    assert refined.visual.tolist() == [[4, 20, 20], [20, 20, 20]]
    assert refined.textual.tolist() == [[30, 30], [6, 30]]
    assert refined.visual_pad == 20
    assert refined.textual_pad == 30


def test_refine_stopwords_textual_only():
    # token 3 is stopped: removed from the textual side, kept on the visual
    refined = _refine([[[3, 3, 1]]], [[[3, 3, 1]]], m=2, n=2, stopwords={3})
    assert refined.visual.tolist() == [[3, 1]]
    assert refined.textual.tolist() == [[1, 30]]


def test_refine_all_stopwords_gives_padding():
    refined = _refine([[[1]]], [[[2, 2], [2]]], m=1, n=2, stopwords={2})
    assert refined.textual.tolist() == [[30, 30]]


def test_refine_arrival_mode_keeps_stream_order():
    refined = _refine([[[3, 3, 5], [5, 1]]], [[[2, 2, 4]]], m=4, n=2,
                      stopwords={2}, mode="arrival")
    assert refined.visual.tolist() == [[3, 3, 5, 5]]
    # arrival mode ignores the stop-word list and keeps duplicates
    assert refined.textual.tolist() == [[2, 2]]


def test_refine_rejects_bad_arguments():
    with pytest.raises(ValueError, match="positive"):
        _refine([[[1]]], [[[1]]], m=0, n=1)
    with pytest.raises(ValueError, match="unknown refinement mode"):
        _refine([[[1]]], [[[1]]], m=1, n=1, mode="magic")


def test_refine_against_counter_oracle():
    rng = np.random.default_rng(13)
    for _ in range(200):
        n_entities = int(rng.integers(1, 5))
        stream = synth_stream(rng, n_entities, visual_size=6, textual_size=6)
        stopwords = {int(t) for t in rng.choice(6, size=2, replace=False)}
        m = int(rng.integers(1, 5))
        n = int(rng.integers(1, 5))
        refined = refine_tokens(stream, stopwords, m, n, visual_pad=6,
                                textual_pad=6)
        for e in range(n_entities):
            assert refined.visual[e].tolist() == ref_refine_one(
                stream.visual[e], m, 6)
            assert refined.textual[e].tolist() == ref_refine_one(
                stream.textual[e], n, 6, stopwords)


def test_refine_source_order_invariance():
    rng = np.random.default_rng(14)
    for _ in range(30):
        stream = synth_stream(rng, 3, visual_size=8, textual_size=8)
        base = refine_tokens(stream, {1}, 3, 3, visual_pad=8, textual_pad=8)
        shuffled_visual = []
        for sources in stream.visual:
            pooled = [t for s in sources for t in s]
            rng.shuffle(pooled)
            shuffled_visual.append([pooled])
        shuffled = RawTokenStream(visual=shuffled_visual, textual=stream.textual)
        again = refine_tokens(shuffled, {1}, 3, 3, visual_pad=8, textual_pad=8)
        assert np.array_equal(again.visual, base.visual)


def test_refine_prefix_monotonicity():
    rng = np.random.default_rng(15)
    for _ in range(30):
        stream = synth_stream(rng, 3, visual_size=8, textual_size=8)
        small = refine_tokens(stream, set(), 2, 2, visual_pad=8, textual_pad=8)
        large = refine_tokens(stream, set(), 4, 4, visual_pad=8, textual_pad=8)
        assert np.array_equal(large.visual[:, :2], small.visual)
        assert np.array_equal(large.textual[:, :2], small.textual)


def test_refined_cache_round_trip(tmp_path):
    rng = np.random.default_rng(16)
    stream = synth_stream(rng, 4, visual_size=9, textual_size=7)
    refined = refine_tokens(stream, {0}, 3, 2, visual_pad=9, textual_pad=7)
    names = [f"e{i}" for i in range(4)]
    ids = {name: i for i, name in enumerate(names)}
    path = tmp_path / "refined_tokens.tsv"
    write_refined(path, refined, names)
    loaded = load_refined(path, ids, 3, 2, visual_pad=9, textual_pad=7)
    assert np.array_equal(loaded.visual, refined.visual)
    assert np.array_equal(loaded.textual, refined.textual)


def test_refined_cache_missing_entity_is_padding(tmp_path):
    path = tmp_path / "refined_tokens.tsv"
    path.write_text("a\t1 2\t3\n")
    loaded = load_refined(path, ENTS, 2, 1, visual_pad=5, textual_pad=4)
    assert loaded.visual.tolist() == [[1, 2], [5, 5], [5, 5]]
    assert loaded.textual.tolist() == [[3], [4], [4]]


def test_refined_cache_errors(tmp_path):
    cases = [
        ("a\t1 2\n", "3 tab-separated"),
        ("z\t1 2\t3\n", "unknown entity 'z'"),
        ("a\t1\t3\n", "expected 2 visual"),
        ("a\t1 2\t3 4\n", "expected 2 visual"),
        ("a\t1 9\t3\n", "outside catalog range"),
    ]
    for i, (text, message) in enumerate(cases):
        path = tmp_path / f"r{i}.tsv"
        path.write_text(text)
        with pytest.raises(DataError, match=message):
            load_refined(path, ENTS, 2, 1, visual_pad=5, textual_pad=4)
