"""End-to-end run on a synthetic dataset: write the dataset to disk, refine
tokens, train through the command line, evaluate, and read the artifacts back.
Run from the repo root:

    python3 demos/demo_train_eval.py
"""

import os
import shutil

from mygo.cli import main
from mygo.synth import synth_dataset
from mygo.train import load_checkpoint

HERE = os.path.dirname(__file__)
OUT = os.path.join(HERE, "out", "train_eval")


def run(argv):
    print("$ mygo " + " ".join(argv))
    rc = main(argv)
    assert rc == 0, f"exit code {rc}"


def main_demo():
    shutil.rmtree(OUT, ignore_errors=True)
    data_dir = os.path.join(OUT, "data")
    synth_dataset(data_dir, seed=7, n_entities=20, n_relations=3,
                  n_train=60, n_valid=10, n_test=10)
    print(f"synthetic dataset in {data_dir}:")
    for name in sorted(os.listdir(data_dir)):
        print(f"  {name}  ({os.path.getsize(os.path.join(data_dir, name))} bytes)")
    print()

    config = os.path.join(OUT, "config.txt")
    with open(config, "w", encoding="utf-8") as fh:
        fh.write("""\
dim = 32
heads = 4
dropout = 0.0
m = 4
n = 4
learning_rate = 0.001
batch_size = 1024
epochs = 300
eval_every = 50
lambda_con = 0.01
tau = 0.5
seed = 0
""")

    prep_dir = os.path.join(OUT, "prepared")
    run(["prepare", "--config", config, "--data", data_dir, "--out", prep_dir])
    refined = open(os.path.join(prep_dir, "refined_tokens.tsv")).read()
    print("refined_tokens.tsv, first rows:")
    print("\n".join(refined.splitlines()[:4]))
    print()

    train_dir = os.path.join(OUT, "run")
    run(["train", "--config", config, "--data", data_dir, "--out", train_dir])
    log = open(os.path.join(train_dir, "train_log.tsv")).read().splitlines()
    print(f"{log[0]}")
    for line in log[1:3] + ["..."] + log[-2:]:
        print(line)
    ckpt = load_checkpoint(os.path.join(train_dir, "last.ckpt"))
    print(f"checkpoint: epoch {ckpt.epoch}, step {ckpt.step}, "
          f"{len(ckpt.tensors)} tensor sections")
    print()

    # triples here are random, so memorized train facts rank well while the
    # held-out split sits near chance; real datasets carry shared structure
    for split in ("train", "test"):
        eval_dir = os.path.join(OUT, f"eval_{split}")
        run(["eval", "--config", config, "--data", data_dir, "--checkpoint",
             os.path.join(train_dir, "best.ckpt"), "--split", split,
             "--out", eval_dir])
        print()
    print("full metric table (test):")
    print(open(os.path.join(OUT, "eval_test", "metrics.tsv")).read())


if __name__ == "__main__":
    main_demo()
