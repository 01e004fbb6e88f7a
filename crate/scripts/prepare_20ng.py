#!/usr/bin/env python3
"""Build the desk-scale 20 Newsgroups subset used by the coherence acceptance check.

The raw text comes from the copy of 20 Newsgroups (train split) shipped inside the
Orange3-Text wheel on PyPI. Preprocessing: drop English stopwords, tokens shorter
than three characters and tokens containing digits; keep the 2000 words with the
highest document frequency; keep documents with at least 10 in-vocabulary tokens;
draw a seeded subset of documents.

Usage: prepare_20ng.py [--wheel PATH] [--docs N] [--vocab V] [--out DIR]
"""
import argparse
import collections
import io
import json
import os
import random
import subprocess
import sys
import tempfile
import zipfile

from sklearn.feature_extraction.text import ENGLISH_STOP_WORDS

MEMBER = "orangecontrib/text/datasets/20newsgroups-train.tab"


def fetch_wheel(dest):
    subprocess.run(
        [sys.executable, "-m", "pip", "download", "--no-deps", "orange3-text==1.16.3", "-d", dest],
        check=True,
    )
    for name in os.listdir(dest):
        if name.endswith(".whl"):
            return os.path.join(dest, name)
    raise SystemExit("wheel not found after download")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--wheel")
    ap.add_argument("--docs", type=int, default=6000)
    ap.add_argument("--vocab", type=int, default=2000)
    ap.add_argument("--min-tokens", type=int, default=10)
    ap.add_argument("--seed", type=int, default=20)
    ap.add_argument("--out", default=os.path.join(os.path.dirname(__file__), "..", "data", "20ng"))
    args = ap.parse_args()

    wheel = args.wheel or fetch_wheel(tempfile.mkdtemp())
    with zipfile.ZipFile(wheel) as z:
        raw = z.read(MEMBER).decode("utf-8")

    lines = raw.split("\n")[3:]
    docs, cats = [], []
    for line in lines:
        if not line.strip():
            continue
        cat, _, text = line.partition("\t")
        toks = [
            t
            for t in text.lower().split()
            if len(t) >= 3 and t.isalpha() and t not in ENGLISH_STOP_WORDS
        ]
        docs.append(toks)
        cats.append(cat)

    df = collections.Counter()
    for toks in docs:
        df.update(set(toks))
    vocab = {w for w, _ in sorted(df.items(), key=lambda kv: (-kv[1], kv[0]))[: args.vocab]}

    classes = sorted(set(cats))
    kept = []
    for toks, cat in zip(docs, cats):
        toks = [t for t in toks if t in vocab]
        if len(toks) >= args.min_tokens:
            kept.append((toks, classes.index(cat)))

    rng = random.Random(args.seed)
    rng.shuffle(kept)
    kept = kept[: args.docs]

    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "docs.txt"), "w") as f:
        for toks, _ in kept:
            f.write(" ".join(toks) + "\n")
    with open(os.path.join(args.out, "labels.txt"), "w") as f:
        for _, label in kept:
            f.write(f"{label}\n")
    with open(os.path.join(args.out, "classes.txt"), "w") as f:
        f.write("\n".join(classes) + "\n")
    used = {t for toks, _ in kept for t in toks}
    print(json.dumps({"docs": len(kept), "vocab": len(used), "classes": len(classes)}))


if __name__ == "__main__":
    main()
