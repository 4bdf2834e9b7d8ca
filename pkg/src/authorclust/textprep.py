"""Text normalization, alphabet construction and rare-word masking.

Raw text is reduced to a small token stream: NFKD decomposition, case
folding behind an uppercase marker, equivalence-class merges for rare
punctuation, digits collapsed to "7", whitespace runs collapsed to a
single space, and runs of identical tokens truncated at 5.  An alphabet
is then the set of tokens whose relative corpus frequency clears a
threshold; everything else is simply dropped at encoding time (there is
no unknown token).

Tokens are strings, so marker tokens (the uppercase marker and the
rare-word token) are first-class alphabet members.
"""

from __future__ import annotations

import json
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyAlphabetError, EmptyCorpusError

# Marker tokens.  Both are NFKD-stable codepoints that survive a second
# normalization pass unchanged, which keeps normalize() idempotent.
UPPERCASE_MARKER = "↑"  # ↑
RARE_WORD_TOKEN = "°"   # ° (the token rare words are replaced with)
DIGIT_TOKEN = "7"
SPACE_TOKEN = " "
LATIN_FOLD_TOKEN = "s"       # Greek mode folds every Latin letter to this

MAX_RUN = 5

# Language tags that trigger the Latin-letter fold.
GREEK_TAGS = frozenset({"gr", "el", "greek"})

# Shipped equivalence classes: dashes, curly quotes, ellipsis.  The set of
# "largely equivalent" rare characters is configurable; this default is a
# best-effort list, not an authoritative one.
DEFAULT_EQUIVALENCE_CLASSES: list[dict] = [
    {"tokens": ["–", "—", "―", "‒", "−"],
     "representative": "–"},  # en/em dash, horizontal bar, minus -> en-dash
    {"tokens": ["‘", "’", "‚", "‛"],
     "representative": "'"},
    {"tokens": ["“", "”", "„", "‟"],
     "representative": '"'},
    # NFKD already expands the one-codepoint ellipsis to three dots; the
    # entry is kept so the class list documents the full intent.
    {"tokens": ["…"], "representative": "."},
]


def _classes_to_map(classes: Iterable[dict]) -> dict[str, str]:
    merge: dict[str, str] = {}
    for cls in classes:
        rep = cls["representative"]
        for tok in cls["tokens"]:
            merge[tok] = rep
    return merge


DEFAULT_EQUIVALENCES = _classes_to_map(DEFAULT_EQUIVALENCE_CLASSES)


def load_equivalences(path) -> dict[str, str]:
    """Read a character-equivalence config: a JSON list of classes, each
    {"tokens": [...], "representative": "x"}."""
    with open(path, encoding="utf-8") as f:
        return _classes_to_map(json.load(f))


@dataclass
class NormalizedText:
    """A document reduced to the normalized token stream."""

    tokens: list[str]
    source_id: str = ""


@dataclass
class EncodedDoc:
    """A document as symbol ids, optionally reversed for backward models."""

    doc_id: str
    symbols: np.ndarray  # int32 ids, each < alphabet size
    reversed: bool = False

    def __len__(self) -> int:
        return len(self.symbols)


@dataclass
class Alphabet:
    """Ordered token set with its inverse index."""

    symbols: list[str]
    language_tag: str = ""
    min_frequency: float = 0.0
    index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self.index = {tok: i for i, tok in enumerate(self.symbols)}
        if len(self.index) != len(self.symbols):
            raise ValueError("alphabet contains duplicate symbols")

    def __len__(self) -> int:
        return len(self.symbols)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def to_json(self) -> str:
        return json.dumps(
            {"language_tag": self.language_tag,
             "min_frequency": self.min_frequency,
             "symbols": self.symbols},
            ensure_ascii=False)

    @classmethod
    def from_json(cls, text: str) -> "Alphabet":
        d = json.loads(text)
        return cls(symbols=d["symbols"], language_tag=d["language_tag"],
                   min_frequency=d["min_frequency"])

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.to_json())

    @classmethod
    def load(cls, path) -> "Alphabet":
        with open(path, encoding="utf-8") as f:
            return cls.from_json(f.read())


@dataclass
class DocFreqTable:
    """How many distinct documents each word occurs in."""

    counts: dict[str, int]
    n_docs: int


def _is_latin_letter(ch: str) -> bool:
    if "a" <= ch <= "z":
        return True
    if not ch.isalpha():
        return False
    try:
        return unicodedata.name(ch).startswith("LATIN")
    except ValueError:
        return False


def truncate_runs(tokens: list[str], max_run: int = MAX_RUN) -> list[str]:
    """Cap runs of identical tokens at max_run."""
    out: list[str] = []
    run = 0
    for tok in tokens:
        if out and tok == out[-1]:
            run += 1
        else:
            run = 1
        if run <= max_run:
            out.append(tok)
    return out


def normalize(raw: str, language: str = "en",
              equivalences: dict[str, str] | None = None,
              source_id: str = "") -> NormalizedText:
    """Reduce a unicode string to the normalized token stream.

    Steps, in order: NFKD; uppercase letters become marker + lowercase;
    equivalence-class merges; decimal digits -> "7"; in Greek mode every
    Latin letter -> "s"; whitespace runs -> one space; runs of more than
    5 identical tokens truncated at 5.
    """
    if equivalences is None:
        equivalences = DEFAULT_EQUIVALENCES
    greek = language.lower() in GREEK_TAGS

    decomposed = unicodedata.normalize("NFKD", raw)
    tokens: list[str] = []
    for ch in decomposed:
        if ch.isupper():
            tokens.append(UPPERCASE_MARKER)
            tokens.extend(ch.lower())
        else:
            tokens.append(ch)

    out: list[str] = []
    for tok in tokens:
        if tok == UPPERCASE_MARKER:
            out.append(tok)
            continue
        tok = equivalences.get(tok, tok)
        if len(tok) == 1:
            if unicodedata.category(tok) == "Nd":
                tok = DIGIT_TOKEN
            elif greek and _is_latin_letter(tok):
                tok = LATIN_FOLD_TOKEN
            elif tok.isspace():
                tok = SPACE_TOKEN
        out.append(tok)

    collapsed: list[str] = []
    for tok in out:
        if tok == SPACE_TOKEN and collapsed and collapsed[-1] == SPACE_TOKEN:
            continue
        collapsed.append(tok)

    return NormalizedText(tokens=truncate_runs(collapsed), source_id=source_id)


def build_alphabet(corpus: Sequence[NormalizedText],
                   min_frequency: float | Fraction,
                   language_tag: str = "",
                   extra_tokens: Sequence[str] = ()) -> Alphabet:
    """Collect tokens whose relative frequency over the whole corpus is at
    least min_frequency, ordered by descending count then codepoint.

    extra_tokens are force-included regardless of frequency (used for the
    rare-word token, which must stay encodable when masking is enabled).
    """
    if not 0 < float(min_frequency) < 1:
        raise ValueError("min_frequency must be in (0, 1)")
    counts: Counter[str] = Counter()
    for text in corpus:
        counts.update(text.tokens)
    total = sum(counts.values())
    if total == 0:
        raise EmptyCorpusError("corpus contains no tokens")

    threshold = float(min_frequency)
    kept = {tok for tok, c in counts.items() if c / total >= threshold}
    if not kept:
        raise EmptyAlphabetError(
            f"no token reaches relative frequency {threshold!r}")
    kept.update(extra_tokens)
    symbols = sorted(kept, key=lambda t: (-counts[t], t))
    return Alphabet(symbols=symbols, language_tag=language_tag,
                    min_frequency=float(min_frequency))


def encode(text: NormalizedText, alphabet: Alphabet,
           reverse: bool = False) -> EncodedDoc:
    """Map tokens to symbol ids; tokens outside the alphabet are dropped."""
    index = alphabet.index
    ids = [index[tok] for tok in text.tokens if tok in index]
    if reverse:
        ids.reverse()
    return EncodedDoc(doc_id=text.source_id,
                      symbols=np.asarray(ids, dtype=np.int32),
                      reversed=reverse)


def _is_word_token(tok: str) -> bool:
    # Words are maximal runs of letters; uppercase markers and combining
    # marks (NFKD accents) ride along inside them.  Digits, spaces and
    # punctuation break words.
    if tok == UPPERCASE_MARKER:
        return True
    return len(tok) == 1 and (tok.isalpha() or unicodedata.category(tok) == "Mn")


def _iter_words(tokens: Sequence[str]):
    """Yield (start, end, key) for every word span.  The key drops
    uppercase markers so document frequency is case-insensitive."""
    i, n = 0, len(tokens)
    while i < n:
        if _is_word_token(tokens[i]):
            j = i
            while j < n and _is_word_token(tokens[j]):
                j += 1
            key = "".join(t for t in tokens[i:j] if t != UPPERCASE_MARKER)
            if key:
                yield i, j, key
            i = j
        else:
            i += 1


def doc_frequency(documents: Sequence[NormalizedText]) -> DocFreqTable:
    """Count, per word, the number of distinct documents containing it."""
    counts: Counter[str] = Counter()
    for doc in documents:
        counts.update({key for _, _, key in _iter_words(doc.tokens)})
    return DocFreqTable(counts=dict(counts), n_docs=len(documents))


def mask_rare_words(text: NormalizedText, table: DocFreqTable,
                    threshold: float | Fraction) -> NormalizedText:
    """Replace each word seen in fewer than threshold of documents with
    the rare-word token.  Unknown words count as frequency zero."""
    if not 0 < float(threshold) < 1:
        raise ValueError("threshold must be in (0, 1)")
    cut = float(threshold)
    tokens = list(text.tokens)
    spans = []
    for start, end, key in _iter_words(tokens):
        if table.counts.get(key, 0) / table.n_docs < cut:
            spans.append((start, end))
    for start, end in reversed(spans):
        tokens[start:end] = [RARE_WORD_TOKEN]
    # Masking cannot create a run of identical tokens (two word spans are
    # always separated by a non-word token), but keep the invariant cheap
    # to trust.
    return NormalizedText(tokens=truncate_runs(tokens),
                          source_id=text.source_id)
