"""
The command-line workflow
=========================

Everything above is also reachable from the ``twcensor`` command. This
script writes a small archive to a temporary directory and walks through
each subcommand, printing what it produces.
"""

# %%
import tempfile
from pathlib import Path

from twcensor import synthetic
from twcensor.cli import main
from twcensor.ingest import write_jsonl

tmp = Path(tempfile.mkdtemp(prefix="twcensor-demo-"))
study = synthetic.impact_study(n_withheld=60, seed=3)
write_jsonl(tmp / "impact.jsonl", study.records)
corpus = synthetic.classification_corpus(n_users=120, embed_dim=64, seed=3)
write_jsonl(tmp / "accounts.jsonl", corpus.records, corpus.profiles)


def run(*argv):
    print("$ twcensor", " ".join(argv))
    code = main(list(argv))
    print(f"(exit {code})\n")


# %%
# Impact study
run("ingest", "--input", str(tmp / "impact.jsonl"), "--out", str(tmp / "impact_store"))
run("impact", "--store", str(tmp / "impact_store"), "--controls", "--out", str(tmp / "impact.csv"))
print((tmp / "impact.csv").read_text().splitlines()[:5])
run("growth", "--store", str(tmp / "impact_store"), "--out", str(tmp / "growth.csv"))

# %%
# Classifier. The embedding file normally comes from an external encoder;
# ``embed-hash`` writes deterministic placeholder vectors (no class signal)
# so the pipeline can be exercised end to end.
run("ingest", "--input", str(tmp / "accounts.jsonl"), "--out", str(tmp / "cls_store"))
run("embed-hash", "--store", str(tmp / "cls_store"), "--out", str(tmp / "emb.bin"), "--dim", "64")
(tmp / "train.cfg").write_text("aggregator=attention\nuse_meta=true\nepochs=5\n")
run("--config", str(tmp / "train.cfg"), "train", "--store", str(tmp / "cls_store"),
    "--embeddings", str(tmp / "emb.bin"), "--model", str(tmp / "model.ckpt"),
    "--report", str(tmp / "metrics.txt"), "--curves", str(tmp / "curves.csv"))
run("eval", "--store", str(tmp / "cls_store"), "--embeddings", str(tmp / "emb.bin"), "--model", str(tmp / "model.ckpt"))
run("predict", "--store", str(tmp / "cls_store"), "--embeddings", str(tmp / "emb.bin"),
    "--model", str(tmp / "model.ckpt"), "--split", "all", "--out", str(tmp / "predictions.csv"))

# %%
# A broken embedding file exits with code 4.
(tmp / "broken.bin").write_bytes(b"not an embedding file")
run("eval", "--store", str(tmp / "cls_store"), "--embeddings", str(tmp / "broken.bin"), "--model", str(tmp / "model.ckpt"))
print("outputs in", tmp)
