"""Collection ingestion and training-set assembly.

A collection is a directory with one subdirectory per problem, each
holding UTF-8 ``.txt`` documents, plus an optional ``collection.json``
manifest listing language and genre per problem.  Documents shared
between problems (identified by exact byte equality) are stored once;
every unique document, plus any control texts, gets exactly one model
head.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    EmptyProblemError,
    InsufficientControlsError,
    MissingDirectoryError,
    NonUtf8FileError,
)
from .textprep import (
    RARE_WORD_TOKEN,
    Alphabet,
    EncodedDoc,
    doc_frequency,
    encode,
    mask_rare_words,
    normalize,
)

log = logging.getLogger(__name__)

MAX_PROBLEM_DOCS = 100


@dataclass
class Document:
    doc_id: str          # canonical id, problem-relative path of first sighting
    raw: str
    role: str = "problem"  # "problem" | "control"


@dataclass
class Problem:
    problem_id: str
    doc_ids: list[str]   # canonical document ids, filename order
    language: str = "en"
    genre: str = "unknown"
    # canonical id -> this problem's own filename (PAN outputs use these)
    doc_names: dict[str, str] = field(default_factory=dict)


@dataclass
class TrainingSet:
    documents: list[EncodedDoc]       # head index == position
    head_of: dict[str, int]
    controls: set[int]
    problems: list[Problem]

    @property
    def n_heads(self) -> int:
        return len(self.documents)


def _read_utf8(path: Path) -> str:
    data = path.read_bytes()
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise NonUtf8FileError(f"{path} is not valid UTF-8: {exc}") from exc


def _load_manifest(root: Path) -> dict[str, dict]:
    manifest = root / "collection.json"
    if not manifest.is_file():
        return {}
    entries = json.loads(_read_utf8(manifest))
    return {e["problem_id"]: e for e in entries}


def load_collection(root) -> tuple[list[Problem], list[Document]]:
    """Read every problem directory under root, deduplicating documents
    that appear in more than one problem (exact byte equality)."""
    root = Path(root)
    if not root.is_dir():
        raise MissingDirectoryError(f"collection root {root} does not exist")
    manifest = _load_manifest(root)
    problem_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if not problem_dirs:
        raise MissingDirectoryError(f"{root} contains no problem directories")

    problems: list[Problem] = []
    documents: list[Document] = []
    by_content: dict[bytes, str] = {}

    for pdir in problem_dirs:
        files = sorted(pdir.glob("*.txt"))
        if not files:
            raise EmptyProblemError(f"problem directory {pdir} has no .txt files")
        if len(files) > MAX_PROBLEM_DOCS:
            log.warning("problem %s has %d documents (> %d)",
                        pdir.name, len(files), MAX_PROBLEM_DOCS)
        meta = manifest.get(pdir.name, {})
        problem = Problem(problem_id=pdir.name, doc_ids=[],
                          language=meta.get("language", "en"),
                          genre=meta.get("genre", "unknown"))
        for f in files:
            raw_bytes = f.read_bytes()
            text = _read_utf8(f)
            canonical = by_content.get(raw_bytes)
            if canonical is None:
                canonical = f"{pdir.name}/{f.name}"
                by_content[raw_bytes] = canonical
                documents.append(Document(doc_id=canonical, raw=text))
            problem.doc_ids.append(canonical)
            problem.doc_names[canonical] = f.name
        problems.append(problem)
    return problems, documents


def load_controls(dir, n: int, seed: int) -> list[Document]:
    """Deterministically sample n control texts from a directory."""
    if n == 0:
        return []
    path = Path(dir)
    if not path.is_dir():
        raise MissingDirectoryError(f"control directory {path} does not exist")
    candidates = sorted(path.glob("*.txt"))
    if len(candidates) < n:
        raise InsufficientControlsError(
            f"{path} holds {len(candidates)} candidate texts, need {n}")
    rng = np.random.default_rng(seed)
    picked = sorted(rng.choice(len(candidates), size=n, replace=False))
    return [Document(doc_id=f"controls/{candidates[i].name}",
                     raw=_read_utf8(candidates[i]), role="control")
            for i in picked]


def assemble(problems: Sequence[Problem], problem_docs: Sequence[Document],
             controls: Sequence[Document], alphabet: Alphabet,
             df_threshold: float | None = None,
             reverse: bool = False,
             equivalences: dict[str, str] | None = None) -> TrainingSet:
    """Normalize, optionally mask, and encode every document, assigning
    one head per unique document: problem documents first, controls last.

    The document-frequency table for masking is built over the union of
    problem and control texts.
    """
    language = alphabet.language_tag
    # A control whose bytes match a problem document already has a head;
    # keeping it as a control would normalize scores with a problem model.
    problem_raw = {d.raw for d in problem_docs}
    kept_controls = []
    for c in controls:
        if c.raw in problem_raw:
            log.warning("control %s duplicates a problem document; dropped",
                        c.doc_id)
        else:
            kept_controls.append(c)

    ordered = list(problem_docs) + kept_controls
    normalized = [normalize(d.raw, language=language,
                            equivalences=equivalences, source_id=d.doc_id)
                  for d in ordered]
    if df_threshold is not None:
        table = doc_frequency(normalized)
        normalized = [mask_rare_words(t, table, df_threshold)
                      for t in normalized]
        if RARE_WORD_TOKEN not in alphabet:
            log.warning("masking enabled but %r is not in the alphabet",
                        RARE_WORD_TOKEN)

    encoded = [encode(t, alphabet, reverse=reverse) for t in normalized]
    head_of = {doc.doc_id: i for i, doc in enumerate(encoded)}
    control_heads = {head_of[c.doc_id] for c in kept_controls}
    return TrainingSet(documents=encoded, head_of=head_of,
                       controls=control_heads, problems=list(problems))
