"""Corpus schema, JSONL I/O, splits, label filtering and per-level datasets."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DataError, InvalidArgument, ParseError
from .text import SentenceSpan, TokenSpan, split_sentences, tokenize, tokens

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1


@dataclass(frozen=True, order=True)
class Annotation:
    start: int
    end: int
    code: str

    def overlaps(self, start: int, end: int) -> bool:
        return self.start < end and start < self.end


@dataclass(eq=False)
class Report:
    id: str
    text: str
    r4v: str = ""
    annotations: list[Annotation] = field(default_factory=list)
    codes: list[str] = field(default_factory=list)

    @cached_property
    def sentences(self) -> list[SentenceSpan]:
        return split_sentences(self.text)

    @cached_property
    def sentence_tokens(self) -> list[list[TokenSpan]]:
        return [tokenize(s.text, offset=s.start) for s in self.sentences]

    @cached_property
    def r4v_tokens(self) -> list[str]:
        return tokens(self.r4v)

    def validate(self) -> list[str]:
        problems = []
        if not self.id:
            problems.append("empty id")
        for a in self.annotations:
            if not (0 <= a.start < a.end <= len(self.text)):
                problems.append(f"annotation span [{a.start}, {a.end}) out of bounds")
            if not a.code:
                problems.append("annotation with empty code")
        if any(not c for c in self.codes):
            problems.append("empty gold code")
        if set(self.codes) != {a.code for a in self.annotations}:
            problems.append("gold codeset differs from the codes of its annotations")
        return problems

    def to_json(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "id": self.id,
            "text": self.text,
            "r4v": self.r4v,
            "annotations": [{"start": a.start, "end": a.end, "code": a.code}
                            for a in self.annotations],
            "codes": list(self.codes),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Report":
        anns = [Annotation(int(a["start"]), int(a["end"]), str(a["code"]))
                for a in obj.get("annotations", [])]
        return cls(str(obj["id"]), obj["text"], obj.get("r4v", ""), anns,
                   [str(c) for c in obj.get("codes", [])])


class LabelSpace:
    """Ordered code strings with a dense id mapping."""

    def __init__(self, codes):
        self.codes = tuple(codes)
        if len(set(self.codes)) != len(self.codes):
            raise InvalidArgument("label space codes must be unique")
        self._index = {c: i for i, c in enumerate(self.codes)}

    def __len__(self):
        return len(self.codes)

    def __contains__(self, code):
        return code in self._index

    def __iter__(self):
        return iter(self.codes)

    def __eq__(self, other):
        return isinstance(other, LabelSpace) and self.codes == other.codes

    def __repr__(self):
        return f"LabelSpace({len(self.codes)} codes)"

    def id(self, code: str) -> int:
        return self._index[code]

    def code(self, i: int) -> str:
        return self.codes[i]


@dataclass
class Corpus:
    reports: list[Report]
    provenance: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.reports)

    def __iter__(self):
        return iter(self.reports)

    def by_id(self) -> dict:
        return {r.id: r for r in self.reports}

    def codes(self) -> list[str]:
        return sorted({c for r in self.reports for c in r.codes})

    def subset(self, reports) -> "Corpus":
        return Corpus(list(reports), dict(self.provenance))


def validate_corpus(corpus: Corpus) -> None:
    errors = []
    seen = set()
    for r in corpus.reports:
        if r.id in seen:
            errors.append(f"{r.id}: duplicate report id")
        seen.add(r.id)
        errors.extend(f"{r.id}: {p}" for p in r.validate())
    if errors:
        raise DataError("corpus validation failed:\n  " + "\n  ".join(errors))


def load_corpus(path) -> Corpus:
    reports = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc.msg}", lineno) from None
            if not isinstance(obj, dict):
                raise ParseError("expected a JSON object", lineno)
            if obj.get("schema_version") != SCHEMA_VERSION:
                raise ParseError(f"unsupported schema_version {obj.get('schema_version')!r}", lineno)
            try:
                reports.append(Report.from_json(obj))
            except (KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"malformed report: {exc}", lineno) from None
    corpus = Corpus(reports)
    validate_corpus(corpus)
    return corpus


def save_corpus(corpus: Corpus, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in corpus.reports:
            fh.write(json.dumps(r.to_json(), ensure_ascii=False, sort_keys=True) + "\n")


def split(corpus: Corpus, ratios=(0.7, 0.15, 0.15), seed: int = 0):
    """Report-level (train, validation, test) split, deterministic by seed."""
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise InvalidArgument(f"split ratios must be three non-negative numbers summing to 1, got {ratios}")
    n = len(corpus)
    order = np.random.default_rng(seed).permutation(n)
    n_train = int(np.floor(n * ratios[0] + 1e-9))
    n_val = int(np.floor(n * ratios[1] + 1e-9))
    parts = (order[:n_train], order[n_train:n_train + n_val], order[n_train + n_val:])
    return tuple(corpus.subset(corpus.reports[i] for i in sorted(p)) for p in parts)


def label_counts(corpus: Corpus) -> dict:
    counts: dict = {}
    for r in corpus.reports:
        for c in set(r.codes):
            counts[c] = counts.get(c, 0) + 1
    return counts


def filter_labels(train: Corpus, min_count: int = 10):
    """Keep codes assigned to at least ``min_count`` training reports.

    Returns the label space (sorted codes) and a {code: count} dict of the
    dropped codes.
    """
    if min_count < 1:
        raise InvalidArgument("min_count must be >= 1")
    counts = label_counts(train)
    kept = sorted(c for c, n in counts.items() if n >= min_count)
    dropped = {c: n for c, n in sorted(counts.items()) if n < min_count}
    return LabelSpace(kept), dropped


def restrict(corpus: Corpus, space: LabelSpace):
    """Remove out-of-space codes (and their annotations) from every report.

    Reports left without any gold code are excluded; their ids are returned.
    """
    kept, excluded = [], []
    for r in corpus.reports:
        codes = [c for c in r.codes if c in space]
        if not codes:
            excluded.append(r.id)
            continue
        if len(codes) == len(r.codes):
            kept.append(r)
        else:
            anns = [a for a in r.annotations if a.code in space]
            kept.append(Report(r.id, r.text, r.r4v, anns, codes))
    return corpus.subset(kept), excluded


@dataclass
class TaggerExample:
    report_id: str
    sentences: list[list[str]]
    r4v: list[str]
    labels: list[int]


def focus_labels(report: Report) -> list[int]:
    labels = []
    for s in report.sentences:
        labels.append(int(any(a.overlaps(s.start, s.end) for a in report.annotations)))
    for a in report.annotations:
        hit = [i for i, s in enumerate(report.sentences) if a.overlaps(s.start, s.end)]
        if len(hit) > 1:
            log.warning("%s: annotation [%d, %d) spans sentences %s", report.id, a.start, a.end, hit)
    return labels


def build_tagger_dataset(corpus: Corpus) -> list[TaggerExample]:
    """One example per report with at least one sentence; a sentence is
    focus iff some gold annotation overlaps it."""
    out = []
    for r in corpus.reports:
        if not r.sentences:
            continue
        out.append(TaggerExample(
            r.id,
            [[t.text for t in toks] for toks in r.sentence_tokens],
            r.r4v_tokens,
            focus_labels(r),
        ))
    return out


@dataclass
class ClassifierRecord:
    id: str
    tokens: list[str]
    alpha: list[int]
    r4v: list[str]
    label: str
    report_id: str = ""
    sentence_index: int = -1


def record_id(report_id: str, sentence_index: int) -> str:
    return f"{report_id}#{sentence_index}"


def attention_targets(toks: list[TokenSpan], spans) -> list[int]:
    return [int(any(a.overlaps(t.start, t.end) for a in spans)) for t in toks]


def build_classifier_dataset(corpus: Corpus) -> list[ClassifierRecord]:
    """One record per focus sentence carrying exactly one distinct code.

    Sentences whose annotations carry several codes are skipped (their
    reports stay in the corpus for end-to-end evaluation).
    """
    out = []
    skipped = 0
    for r in corpus.reports:
        for i, (s, toks) in enumerate(zip(r.sentences, r.sentence_tokens)):
            anns = [a for a in r.annotations if a.overlaps(s.start, s.end)]
            if not anns:
                continue
            codes = {a.code for a in anns}
            if len(codes) > 1:
                skipped += 1
                continue
            alpha = attention_targets(toks, anns)
            if not any(alpha):
                log.warning("%s: sentence %d annotation covers no token; skipped", r.id, i)
                continue
            out.append(ClassifierRecord(
                record_id(r.id, i), [t.text for t in toks], alpha, r.r4v_tokens,
                codes.pop(), r.id, i,
            ))
    if skipped:
        log.info("skipped %d multi-code focus sentences", skipped)
    return out
