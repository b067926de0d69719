"""Walk through modality tokenization: raw per-source token streams are pooled,
stop-words dropped on the textual side, and the most frequent catalog ids kept
in a fixed-length layout. Run from the repo root:

    python3 demos/demo_tokenization.py
"""

import os

import numpy as np

from mygo.model import EntityTokenData
from mygo.synth import synth_catalog, synth_stream
from mygo.tokens import (RawTokenStream, load_catalog, refine_tokens,
                         write_catalog)

OUT = os.path.join(os.path.dirname(__file__), "out", "tokenization")


def main():
    os.makedirs(OUT, exist_ok=True)

    # two entities, hand-written streams so the counts are easy to follow
    stream = RawTokenStream(
        visual=[[[4, 4, 1], [4, 2]], [[0]]],
        textual=[[[3, 3, 5, 5, 5, 7]], [[]]],
    )
    stopwords = {7}

    print("raw visual streams  ", stream.visual)
    print("raw textual streams ", stream.textual)
    print("textual stop-words  ", sorted(stopwords))
    print()

    refined = refine_tokens(stream, stopwords, m=3, n=2,
                            visual_pad=6, textual_pad=8)
    print("kept visual ids (m=3, pad=6)")
    print(refined.visual)
    print("entity 0 pools to counts {4:3, 1:1, 2:1}; 4 wins, then the")
    print("tie between 1 and 2 breaks toward the smaller id")
    print()
    print("kept textual ids (n=2, pad=8)")
    print(refined.textual)
    print("entity 0 keeps 5 (x3) then 3 (x2); the stop-word 7 is gone;")
    print("entity 1 had no tokens at all, so both slots are padding")
    print()

    # arrival mode is the no_refine ablation: pooled order, duplicates kept
    arrival = refine_tokens(stream, stopwords, m=3, n=2,
                            visual_pad=6, textual_pad=8, mode="arrival")
    print("arrival mode visual ids (first m in pooled order)")
    print(arrival.visual)
    print()

    # catalogs are frozen feature tables; the binary round trip is exact
    rng = np.random.default_rng(0)
    catalog = synth_catalog(rng, "visual", size=6, dim=4)
    path = os.path.join(OUT, "visual.cat")
    write_catalog(path, "visual", catalog.features[:catalog.size])
    back = load_catalog(path, expect_modality="visual")
    print(f"wrote {path} ({os.path.getsize(path)} bytes), "
          f"round trip exact: {np.array_equal(catalog.features, back.features)}")
    print(f"loaded table has {back.features.shape[0]} rows: {back.size} ids "
          f"plus one zero padding row at id {back.padding_id}")
    print()

    # refined ids plus catalog features become model-ready token data
    textual_cat = synth_catalog(rng, "textual", size=8, dim=5)
    data = EntityTokenData.build(refined, catalog, textual_cat)
    print("token data shapes: visual ids", data.visual_ids.shape,
          "textual ids", data.textual_ids.shape)
    print("non-padding mean feature, entity 1 (all padding -> zeros):",
          data.mean_textual[1])

    # a bigger random stream, just to show scale
    big = synth_stream(rng, 100, visual_size=50, textual_size=40)
    big_refined = refine_tokens(big, set(), m=8, n=8,
                                visual_pad=50, textual_pad=40)
    print()
    print("random stream over 100 entities refines to",
          big_refined.visual.shape, "visual ids,",
          f"{(big_refined.visual == 50).mean():.0%} padding")


if __name__ == "__main__":
    main()
