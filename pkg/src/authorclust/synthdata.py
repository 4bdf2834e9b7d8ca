"""Synthetic authorship corpus for demos and end-to-end tests.

Each "author" is a seeded order-2 character Markov chain over a small
alphabet; documents are independent samples from their author's chain.
Control texts come from one extra chain that never appears in the
problems.  The generator writes a PAN-style collection (problem
directory, collection manifest, control directory) plus truth files, so
the whole pipeline can run end to end without any real corpus.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .clustering import Partition
from .metrics import save_clustering

SYMBOLS = "abcdefghijklmnopqrs "  # 20 symbols including space


def _chain(rng: np.random.Generator, n_symbols: int,
           spread: float) -> np.ndarray:
    """Order-2 transition tensor [prev2, prev1, next].  A larger spread
    makes the conditional distributions peakier and the authors easier
    to tell apart."""
    logits = rng.normal(0.0, spread, (n_symbols, n_symbols, n_symbols))
    e = np.exp(logits - logits.max(axis=2, keepdims=True))
    return e / e.sum(axis=2, keepdims=True)


def _sample(chain: np.ndarray, length: int, rng: np.random.Generator) -> str:
    n = chain.shape[0]
    a, b = rng.integers(n), rng.integers(n)
    out = []
    for _ in range(length):
        c = rng.choice(n, p=chain[a, b])
        out.append(SYMBOLS[c])
        a, b = b, int(c)
    return "".join(out)


def write_synthetic_collection(root, n_authors: int = 4,
                               docs_per_author: int = 6,
                               doc_chars: int = 2000,
                               n_controls: int = 8,
                               seed: int = 0,
                               spread: float = 2.0,
                               problem_id: str = "problem001",
                               language: str = "en",
                               genre: str = "synthetic") -> dict:
    """Write corpus/, controls/ and truth/ under root.  Returns the paths
    plus the truth clusters (by filename)."""
    root = Path(root)
    corpus = root / "corpus"
    problem_dir = corpus / problem_id
    controls_dir = root / "controls"
    truth_dir = root / "truth" / problem_id
    for d in (problem_dir, controls_dir, truth_dir):
        d.mkdir(parents=True, exist_ok=True)

    rng = np.random.default_rng(seed)
    chains = [_chain(rng, len(SYMBOLS), spread)
              for _ in range(n_authors + 1)]  # last one feeds the controls

    clusters = []
    for author in range(n_authors):
        names = []
        for i in range(docs_per_author):
            name = f"doc-a{author}-{i:02d}.txt"
            text = _sample(chains[author], doc_chars, rng)
            (problem_dir / name).write_text(text, encoding="utf-8")
            names.append(name)
        clusters.append(tuple(names))

    for i in range(n_controls):
        text = _sample(chains[-1], doc_chars, rng)
        (controls_dir / f"control-{i:02d}.txt").write_text(text,
                                                           encoding="utf-8")

    with open(corpus / "collection.json", "w", encoding="utf-8") as f:
        json.dump([{"problem_id": problem_id, "language": language,
                    "genre": genre}], f)

    doc_ids = [n for c in clusters for n in c]
    save_clustering(Partition(clusters=clusters, doc_ids=doc_ids),
                    truth_dir / "clustering.json")
    return {"corpus": corpus, "controls": controls_dir,
            "truth": root / "truth", "clusters": clusters}
