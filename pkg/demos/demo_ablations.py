"""Switch individual components off and watch the effect on a small synthetic
graph. Every ablation is a config toggle, so the comparison needs no code
changes. Run from the repo root:

    python3 demos/demo_ablations.py
"""

import time

import numpy as np

from mygo.evaluation import evaluate
from mygo.synth import synth_graph, synth_token_data
from mygo.train import TrainConfig, train

TOGGLES = [
    ("", "full model"),
    ("no_mt", "modality tokens replaced by two mean-feature rows"),
    ("no_cmee", "entity encoder off, mean over input rows"),
    ("no_cte", "context encoder off, raw embeddings into the scorer"),
    ("no_con", "contrastive term off"),
    ("no_esec", "contrastive view dropped: second encoder pass"),
]

# no_refine is the remaining toggle; it acts while loading raw streams, so it
# shows up in demo_tokenization.py (arrival mode) rather than here, where the
# synthetic token ids are already refined


def main():
    rng = np.random.default_rng(7)
    graph = synth_graph(rng, 20, 3, 60)
    data = synth_token_data(rng, 20, 4, 4)
    print("synthetic graph: 20 entities, 3 relations, 60 train triples")
    print("budget: 60 epochs per run, identical seed and data")
    print()
    print(f"{'ablation':10s} {'filtered train MRR':>19s} {'L_kgc':>8s} "
          f"{'seconds':>8s}  notes")

    for name, note in TOGGLES:
        cfg = TrainConfig(dim=32, heads=4, dropout=0.0, m=4, n=4,
                          learning_rate=1e-3, batch_size=1024, epochs=60,
                          lambda_con=0.01, tau=0.5, seed=0, eval_every=0,
                          ablation=name)
        started = time.perf_counter()
        result = train(graph, data, cfg)
        report = evaluate(graph, result.params, data, cfg, split="train")
        elapsed = time.perf_counter() - started
        mrr = report.metrics["filtered"]["both"].mrr
        final_kgc = result.log[-1][2]
        label = name or "(none)"
        print(f"{label:10s} {mrr:19.4f} {final_kgc:8.4f} {elapsed:8.1f}  {note}")

    # with the contrastive term off the training log's L_con column is zero
    cfg = TrainConfig(dim=32, heads=4, dropout=0.0, m=4, n=4, epochs=3,
                      batch_size=1024, seed=0, eval_every=0, ablation="no_con")
    result = train(graph, data, cfg)
    print()
    print("no_con log rows (epoch, step, L_kgc, L_con, total):")
    for row in result.log:
        print("  " + "\t".join(f"{v:.6f}" if isinstance(v, float) else str(v)
                               for v in row))
    print()
    print("random triples are memorizable by any variant given enough epochs")
    print("(by 500 every row above reaches MRR 1.0); at a tight budget the")
    print("shallower variants fit faster, and on real graphs the comparison")
    print("moves to held-out splits where the extra structure pays off")


if __name__ == "__main__":
    main()
