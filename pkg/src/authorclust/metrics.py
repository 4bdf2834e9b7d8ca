"""Clustering and link-ranking evaluation.

BCubed precision/recall average, per document, the overlap between its
predicted and true clusters; F is their harmonic mean.  Mean average
precision scores the ranked link list, punishing every false link that
outranks a true one.  Both have strong built-in biases: the fully
disconnected partition already gets precision 1, and random link
weights already beat an empty ranking, so both zero-effort baselines
are implemented here for calibration.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass

import numpy as np

from .clustering import Partition, cowardly
from .affinity import RankedLinks
from .errors import NoTrueLinksError, UniverseMismatchError


@dataclass
class TruthPartition(Partition):
    source: str = ""


@dataclass
class ScoreReport:
    problem_id: str
    bcubed_precision: float
    bcubed_recall: float
    bcubed_f: float
    map: float | None  # None when the truth has no same-author pair


def _check_universe(pred: Partition, truth: Partition):
    if set(pred.doc_ids) != set(truth.doc_ids):
        raise UniverseMismatchError(
            "prediction and truth cover different documents")


def _fscore(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def bcubed(pred: Partition, truth: TruthPartition):
    """Document-averaged BCubed (precision, recall, harmonic F)."""
    _check_universe(pred, truth)
    pred_of = pred.cluster_of()
    truth_of = truth.cluster_of()
    precisions, recalls = [], []
    overlap_cache: dict[tuple[int, int], int] = {}
    for d in pred.doc_ids:
        pc, tc = pred_of[d], truth_of[d]
        key = (id(pc), id(tc))
        if key not in overlap_cache:
            overlap_cache[key] = len(set(pc) & set(tc))
        overlap = overlap_cache[key]
        precisions.append(overlap / len(pc))
        recalls.append(overlap / len(tc))
    p = float(np.mean(precisions))
    r = float(np.mean(recalls))
    return p, r, _fscore(p, r)


def bcubed_oracle(pred: Partition, truth: TruthPartition):
    """BCubed recomputed from the raw per-document-pair definition, with
    none of bcubed()'s grouping shortcuts.  Test cross-check only."""
    _check_universe(pred, truth)
    docs = sorted(pred.doc_ids)
    pred_of = pred.cluster_of()
    truth_of = truth.cluster_of()
    precisions, recalls = [], []
    for d in docs:
        same_pred = same_both = same_truth = 0
        for e in docs:
            in_pred = pred_of[e] is pred_of[d]
            in_truth = truth_of[e] is truth_of[d]
            same_pred += in_pred
            same_truth += in_truth
            same_both += in_pred and in_truth
        precisions.append(same_both / same_pred)
        recalls.append(same_both / same_truth)
    p = sum(precisions) / len(docs)
    r = sum(recalls) / len(docs)
    return p, r, _fscore(p, r)


def _relevance_in_rank_order(links: RankedLinks,
                             truth: TruthPartition) -> np.ndarray:
    universe = set(truth.doc_ids)
    seen = set()
    for a, b, _ in links.links:
        if a not in universe or b not in universe:
            raise UniverseMismatchError(f"link ({a}, {b}) outside the truth")
        seen.add(frozenset((a, b)))
    n = len(universe)
    if len(links.links) != n * (n - 1) // 2 or len(seen) != len(links.links):
        raise UniverseMismatchError("links do not cover every pair exactly once")
    truth_of = truth.cluster_of()
    return np.array([truth_of[a] is truth_of[b] for a, b, _ in links.links])


def _average_precision(relevance: np.ndarray) -> float:
    ranks = np.nonzero(relevance)[0] + 1
    if len(ranks) == 0:
        raise NoTrueLinksError("truth contains no same-cluster pair")
    return float(np.mean(np.arange(1, len(ranks) + 1) / ranks))


def map_score(links: RankedLinks, truth: TruthPartition) -> float:
    """Average precision of the ranked link list; a pair is relevant iff
    both documents share a truth cluster.  Ranking follows the links'
    deterministic order."""
    return _average_precision(_relevance_in_rank_order(links, truth))


def random_map_baseline(truth: TruthPartition, n_docs: int, shuffles: int,
                        seed: int):
    """Mean MAP of uniformly shuffled pair orderings: what a fully
    connected graph with random link strengths scores."""
    if shuffles < 1:
        raise ValueError("need at least one shuffle")
    if n_docs != len(truth.doc_ids):
        raise UniverseMismatchError(
            f"truth covers {len(truth.doc_ids)} documents, expected {n_docs}")
    docs = sorted(truth.doc_ids)
    truth_of = truth.cluster_of()
    relevance = np.array([truth_of[a] is truth_of[b]
                          for a, b in itertools.combinations(docs, 2)])
    if not relevance.any():
        raise NoTrueLinksError("truth contains no same-cluster pair")
    rng = np.random.default_rng(seed)
    scores = [ _average_precision(relevance[rng.permutation(len(relevance))])
               for _ in range(shuffles)]
    return float(np.mean(scores)), scores


def zero_effort_baseline(doc_ids, seed: int):
    """The do-nothing contender: cowardly clusters plus random weights
    on every pair."""
    if len(doc_ids) < 2:
        raise ValueError("need at least 2 documents")
    partition = cowardly(doc_ids)
    pairs = list(itertools.combinations(sorted(doc_ids), 2))
    rng = np.random.default_rng(seed)
    weights = rng.uniform(size=len(pairs))
    links = [(a, b, float(w)) for (a, b), w in zip(pairs, weights)]
    links.sort(key=lambda link: (-link[2], link[0], link[1]))
    return partition, RankedLinks(links=links)


# --- PAN-format files -----------------------------------------------------

def save_clustering(partition: Partition, path) -> None:
    """PAN clustering.json: an array of clusters, each an array of
    {"document": filename}."""
    payload = [[{"document": d} for d in cluster]
               for cluster in partition.clusters]
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=1)
        f.write("\n")


def load_clustering(path, source: str | None = None) -> TruthPartition:
    with open(path, encoding="utf-8") as f:
        payload = json.load(f)
    clusters = [tuple(entry["document"] for entry in cluster)
                for cluster in payload]
    doc_ids = [d for c in clusters for d in c]
    return TruthPartition(clusters=clusters, doc_ids=doc_ids,
                          source=source or str(path))


def save_ranking(links: RankedLinks, path) -> None:
    """PAN ranking.json: an array of {"document1", "document2", "score"}."""
    payload = [{"document1": a, "document2": b, "score": w}
               for a, b, w in links.links]
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=1)
        f.write("\n")


def load_ranking(path) -> RankedLinks:
    with open(path, encoding="utf-8") as f:
        payload = json.load(f)
    links = [(*sorted((e["document1"], e["document2"])), float(e["score"]))
             for e in payload]
    links.sort(key=lambda link: (-link[2], link[0], link[1]))
    return RankedLinks(links=links)
