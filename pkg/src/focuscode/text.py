"""Tokenization, rule-based sentence splitting and word-embedding tables."""

from __future__ import annotations

import hashlib
import re
import unicodedata
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument, ParseError

ABBREVIATIONS = frozenset({
    "cm", "mm", "um", "dr", "mr", "mrs", "ms", "no", "vs", "approx", "fig", "e.g", "i.e",
    "st", "pt", "pts", "hx", "dx", "sp", "ca", "inc", "etc",
})

# combining marks stay attached to their word so decomposed text tokenizes
# like its NFC form
_MARKS = "\u0300-\u036f\u1ab0-\u1aff\u1dc0-\u1dff\u20d0-\u20ff\ufe20-\ufe2f"
_WORD = rf"\w[\w{_MARKS}]*"
_TOKEN_RE = re.compile(rf"{_WORD}(?:[.']{_WORD})*|[^\w\s{_MARKS}][{_MARKS}]*")
# terminal punctuation, then whitespace, then the first character of the next sentence
_TERMINAL_RE = re.compile(r"[.?!]+(?=\s+\S)")


@dataclass(frozen=True)
class TokenSpan:
    """A token (normalized text) and its [start, end) offsets in the source."""

    text: str
    start: int
    end: int


@dataclass(frozen=True)
class SentenceSpan:
    start: int
    end: int
    text: str


def normalize(token: str) -> str:
    return unicodedata.normalize("NFC", token).lower()


def tokenize(text: str, offset: int = 0) -> list[TokenSpan]:
    """Lowercased word and punctuation tokens with source offsets.

    Hyphens and other punctuation become separate tokens; decimals such
    as ``0.2`` and codes such as ``c34.90`` stay whole.
    """
    return [TokenSpan(normalize(m.group()), m.start() + offset, m.end() + offset)
            for m in _TOKEN_RE.finditer(text)]


def tokens(text: str) -> list[str]:
    return [t.text for t in tokenize(text)]


def _is_abbreviation(text: str, dot: int) -> bool:
    j = dot
    while j > 0 and (text[j - 1].isalnum() or text[j - 1] == "."):
        j -= 1
    word = text[j:dot].lower()
    return word in ABBREVIATIONS


def _boundaries(text: str) -> list[int]:
    """Character positions where a new sentence may start."""
    cuts = set()
    for m in _TERMINAL_RE.finditer(text):
        end = m.end()
        k = end
        while k < len(text) and text[k].isspace():
            k += 1
        nxt = text[k]
        if not (nxt.isupper() or nxt.isdigit()):
            continue
        if text[m.start()] == "." and m.end() - m.start() == 1 and _is_abbreviation(text, m.start()):
            continue
        cuts.add(end)
    for m in re.finditer(r"\n[ \t]*\n", text):
        cuts.add(m.start())
    for m in re.finditer(r":[ \t]*\n", text):
        cuts.add(m.end() - 1)
    return sorted(cuts)


def split_sentences(text: str) -> list[SentenceSpan]:
    """Deterministic rule-based splitter.

    Splits after ``.``/``?``/``!`` followed by whitespace and an uppercase
    letter or digit (unless the period ends a known abbreviation), at blank
    lines, and at a newline that follows a line ending in a colon.
    Sentences are trimmed of surrounding whitespace; empty pieces are dropped.
    """
    out = []
    prev = 0
    for cut in _boundaries(text) + [len(text)]:
        piece = text[prev:cut]
        lead = len(piece) - len(piece.lstrip())
        body = piece.strip()
        if body:
            start = prev + lead
            out.append(SentenceSpan(start, start + len(body), body))
        prev = cut
    return out


@dataclass
class EmbeddingTable:
    """Word vectors plus a dedicated UNK row at index 0 (zeros by default)."""

    words: list[str]
    vectors: np.ndarray  # (len(words) + 1, dim); row 0 is UNK
    trainable: bool = False
    index: dict = field(init=False, repr=False)

    def __post_init__(self):
        if self.vectors.ndim != 2 or self.vectors.shape[0] != len(self.words) + 1:
            raise InvalidArgument("vectors must have one row per word plus the UNK row")
        self.index = {w: i + 1 for i, w in enumerate(self.words)}

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self):
        return len(self.words)

    def __contains__(self, word):
        return word in self.index

    def ids(self, toks) -> np.ndarray:
        return np.array([self.index.get(t, 0) for t in toks], dtype=np.int64)

    def lookup(self, word: str) -> np.ndarray:
        return self.vectors[self.index.get(word, 0)]

    @property
    def unk(self) -> np.ndarray:
        return self.vectors[0]

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update("\n".join(self.words).encode("utf-8"))
        h.update(np.ascontiguousarray(self.vectors, dtype="<f4").tobytes())
        return h.hexdigest()

    @classmethod
    def from_dict(cls, mapping: dict, dim: int | None = None, dtype=np.float32) -> "EmbeddingTable":
        words = list(mapping)
        if dim is None:
            dim = len(next(iter(mapping.values()))) if mapping else 0
        vecs = np.zeros((len(words) + 1, dim), dtype=dtype)
        for i, w in enumerate(words):
            vecs[i + 1] = mapping[w]
        return cls(words, vecs)

    @classmethod
    def random(cls, words, dim: int, seed: int = 0, scale: float = 0.5) -> "EmbeddingTable":
        rng = np.random.default_rng(seed)
        words = sorted(set(words))
        vecs = np.zeros((len(words) + 1, dim), dtype=np.float32)
        vecs[1:] = rng.normal(0.0, scale, size=(len(words), dim))
        return cls(words, vecs)


def load_embeddings(path) -> EmbeddingTable:
    """Read the plain-text word-vector format.

    Optional header ``<count> <dim>``; otherwise the dimension comes from
    the first line. Every line must carry exactly ``dim`` floats.
    """
    words: list[str] = []
    rows: list[list[float]] = []
    dim = None
    declared = None
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            parts = raw.rstrip("\n").rstrip("\r").split()
            if not parts:
                continue
            if lineno == 1 and len(parts) == 2 and all(p.isdigit() for p in parts):
                declared, dim = int(parts[0]), int(parts[1])
                continue
            word, vals = parts[0], parts[1:]
            if dim is None:
                dim = len(vals)
                if dim == 0:
                    raise ParseError(f"word {word!r} has no vector", lineno)
            if len(vals) != dim:
                raise ParseError(f"expected {dim} values for {word!r}, found {len(vals)}", lineno)
            try:
                rows.append([float(v) for v in vals])
            except ValueError as exc:
                raise ParseError(f"bad number for {word!r}: {exc}", lineno) from None
            words.append(normalize(word))
    if declared is not None and declared != len(words):
        raise ParseError(f"header declares {declared} words, file has {len(words)}", 1)
    vecs = np.zeros((len(words) + 1, dim or 0), dtype=np.float32)
    if rows:
        vecs[1:] = np.asarray(rows, dtype=np.float32)
    return EmbeddingTable(words, vecs)


def save_embeddings(table: EmbeddingTable, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{len(table.words)} {table.dim}\n")
        for i, w in enumerate(table.words, start=1):
            vals = " ".join(np.format_float_positional(v, unique=True, trim="-")
                            for v in table.vectors[i].astype(np.float32))
            fh.write(f"{w} {vals}\n")


def mean_embedding(toks, table: EmbeddingTable) -> np.ndarray:
    """Coordinate-wise mean of token vectors (UNK for misses); zeros if empty."""
    if len(toks) == 0:
        return np.zeros(table.dim, dtype=table.vectors.dtype)
    return table.vectors[table.ids(toks)].mean(axis=0)

