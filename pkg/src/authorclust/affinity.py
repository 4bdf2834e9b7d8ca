"""From cross-entropy matrices to affinities and ranked links.

Every head is scored against every text.  Ensemble members' raw
matrices are summed, then for each problem the submatrix of problem
heads x problem texts is normalized by subtracting, per text, the mean
score the control heads give that text.  The normalized matrix N is
made symmetric and positive as A = exp(-(N + N^T)), so larger values
mean more affinity, and the strict upper triangle is affinely rescaled
to [0, 1] to give the ranked link list.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import Problem, TrainingSet
from .errors import IdMismatchError, NoControlsError, ShapeMismatchError
from .mhrnn import MhrnnModel, entropy_all_heads
from .textprep import EncodedDoc

log = logging.getLogger(__name__)

OVERFLOW_FLAG = 1e12


@dataclass
class EntropyMatrix:
    """Bits-per-character of every head against every text."""

    values: np.ndarray          # [heads, texts] float64
    head_ids: list[str]
    text_ids: list[str]

    def __post_init__(self):
        self.values = np.asarray(self.values, np.float64)
        if self.values.shape != (len(self.head_ids), len(self.text_ids)):
            raise ShapeMismatchError(
                f"values {self.values.shape} vs ids "
                f"({len(self.head_ids)}, {len(self.text_ids)})")
        if not np.isfinite(self.values).all():
            raise ValueError("entropy matrix contains non-finite entries")

    def to_json(self) -> str:
        return json.dumps({"head_ids": self.head_ids,
                           "text_ids": self.text_ids,
                           "values": self.values.ravel().tolist()})

    @classmethod
    def from_json(cls, text: str) -> "EntropyMatrix":
        d = json.loads(text)
        values = np.asarray(d["values"], np.float64).reshape(
            len(d["head_ids"]), len(d["text_ids"]))
        return cls(values=values, head_ids=d["head_ids"],
                   text_ids=d["text_ids"])

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.to_json())

    @classmethod
    def load(cls, path) -> "EntropyMatrix":
        with open(path, encoding="utf-8") as f:
            return cls.from_json(f.read())


@dataclass
class AffinityMatrix:
    """Symmetric positive pairwise affinities; larger means more alike."""

    values: np.ndarray          # [n, n]
    doc_ids: list[str]

    def __post_init__(self):
        self.values = np.asarray(self.values, np.float64)
        n = len(self.doc_ids)
        if self.values.shape != (n, n):
            raise ShapeMismatchError("affinity matrix is not n x n")
        if not np.allclose(self.values, self.values.T):
            raise ValueError("affinity matrix is not symmetric")
        if not (self.values > 0).all():
            raise ValueError("affinity entries must be positive")
        # Self-affinity usually dominates but is not guaranteed; warn only.
        off = self.values - np.diag(np.diag(self.values))
        weak = np.diag(self.values) < off.max(axis=1)
        if weak.any():
            log.warning("affinity diagonal is not the row maximum for %d/%d "
                        "rows", int(weak.sum()), n)

    @property
    def n(self) -> int:
        return len(self.doc_ids)


@dataclass
class RankedLinks:
    """All document pairs, heaviest first, weights scaled to [0, 1]."""

    links: list[tuple[str, str, float]]
    degenerate: bool = False

    def __post_init__(self):
        for a, b, w in self.links:
            if not 0.0 <= w <= 1.0:
                raise ValueError(f"link weight {w} outside [0, 1]")
        weights = [w for _, _, w in self.links]
        if weights != sorted(weights, reverse=True):
            raise ValueError("links are not sorted by descending weight")


def score_all(model: MhrnnModel, docs: Sequence[EncodedDoc],
              head_ids: Sequence[str] | None = None) -> EntropyMatrix:
    """Cross-entropy of every head against every document."""
    if head_ids is None:
        head_ids = [f"head{i:04d}" for i in range(model.n_heads)]
    if len(head_ids) != model.n_heads:
        raise ShapeMismatchError("head_ids length != model heads")
    columns = [entropy_all_heads(model, d) for d in docs]
    values = np.column_stack(columns) if columns else np.zeros(
        (model.n_heads, 0))
    return EntropyMatrix(values=values, head_ids=list(head_ids),
                         text_ids=[d.doc_id for d in docs])


def ensemble_sum(matrices: Sequence[EntropyMatrix]) -> EntropyMatrix:
    """Elementwise sum of raw matrices from ensemble members.  Reversed
    members score reversed texts but carry the same ids, so the frames
    must agree exactly."""
    if not matrices:
        raise ValueError("empty ensemble")
    first = matrices[0]
    for m in matrices[1:]:
        if m.values.shape != first.values.shape:
            raise ShapeMismatchError(
                f"{m.values.shape} != {first.values.shape}")
        if m.head_ids != first.head_ids or m.text_ids != first.text_ids:
            raise IdMismatchError("ensemble members disagree on ids")
    total = np.sum([m.values for m in matrices], axis=0)
    return EntropyMatrix(values=total, head_ids=list(first.head_ids),
                         text_ids=list(first.text_ids))


def normalize_by_controls(matrix: EntropyMatrix, control_heads: set[int],
                          problem: Problem,
                          head_of: dict[str, int] | None = None) -> np.ndarray:
    """Problem submatrix with each text's mean control score subtracted.

    control_heads are row indices into the matrix.  Problem rows are
    located through head_of (doc id -> head index) or, when omitted, by
    matching problem doc ids against head_ids.  Columns are matched by
    text id.  Rows and columns follow the problem's document order.
    """
    if not control_heads:
        raise NoControlsError("control head set is empty")
    if head_of is None:
        head_of = {hid: i for i, hid in enumerate(matrix.head_ids)}
    rows = [head_of[d] for d in problem.doc_ids]
    overlap = control_heads.intersection(rows)
    if overlap:
        raise ValueError(f"control heads {sorted(overlap)} belong to the problem")
    col_of = {tid: j for j, tid in enumerate(matrix.text_ids)}
    cols = [col_of[d] for d in problem.doc_ids]

    sub = matrix.values[np.ix_(rows, cols)]
    control = matrix.values[np.ix_(sorted(control_heads), cols)]
    return sub - control.mean(axis=0)


def to_affinity(normalized: np.ndarray,
                doc_ids: Sequence[str]) -> AffinityMatrix:
    """A = exp(-(N + N^T)): positive, symmetric, and monotone so lower
    divergence means higher affinity."""
    n = np.asarray(normalized, np.float64)
    if n.ndim != 2 or n.shape[0] != n.shape[1]:
        raise ShapeMismatchError("normalized matrix must be square")
    values = np.exp(-(n + n.T))
    if (values > OVERFLOW_FLAG).any():
        log.warning("affinity values exceed %g; extreme normalized scores",
                    OVERFLOW_FLAG)
    return AffinityMatrix(values=values, doc_ids=list(doc_ids))


def rank_links(affinity: AffinityMatrix) -> RankedLinks:
    """Strict-upper-triangle affinities rescaled to [0, 1] (max -> 1,
    min -> 0) and sorted heaviest first, ties in id order.

    With a single pair the sole link gets weight 1; if every off-diagonal
    value is equal the weights are all 0.5 and the result is flagged
    degenerate.
    """
    n = affinity.n
    if n < 2:
        raise ValueError("need at least 2 documents to rank links")
    ids = affinity.doc_ids
    pairs = [(ids[i], ids[j], affinity.values[i, j])
             for i in range(n) for j in range(i + 1, n)]
    raw = np.array([v for _, _, v in pairs])
    lo, hi = raw.min(), raw.max()
    degenerate = False
    if len(pairs) == 1:
        weights = np.array([1.0])
        degenerate = True
    elif hi == lo:
        log.warning("all off-diagonal affinities equal; flat link weights")
        weights = np.full(len(pairs), 0.5)
        degenerate = True
    else:
        weights = (raw - lo) / (hi - lo)
    links = [(a, b, float(w)) for (a, b, _), w in zip(pairs, weights)]
    links.sort(key=lambda link: (-link[2], link[0], link[1]))
    return RankedLinks(links=links, degenerate=degenerate)


def problem_affinity(matrix: EntropyMatrix, training_set: TrainingSet,
                     problem: Problem) -> AffinityMatrix:
    """normalize_by_controls followed by to_affinity, wired up from a
    training set's head assignment."""
    normalized = normalize_by_controls(matrix, training_set.controls,
                                       problem, training_set.head_of)
    return to_affinity(normalized, problem.doc_ids)
