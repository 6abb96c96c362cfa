"""End-to-end inference: tag sentences, code each focus sentence, take the
union of codes, and keep the sentence and token evidence behind each one."""

from __future__ import annotations

import html
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import ClassifierRecord, Report, record_id
from .errors import ConfigError, InvalidArgument
from .icdclf import IcdClassifier
from .tagger import SentenceTagger, TaggedReport, as_example

HEAT_LEVELS = 5


@dataclass
class Evidence:
    sentence_index: int
    sentence: str
    tokens: list[str]
    code: str
    attention: list[float] | None = None

    def to_json(self) -> dict:
        return {"sentence_index": self.sentence_index, "sentence": self.sentence,
                "tokens": self.tokens, "code": self.code, "attention": self.attention}


@dataclass
class Prediction:
    report_id: str
    codes: list[str]
    evidence: list[Evidence] = field(default_factory=list)
    fallback: bool = False

    def to_json(self) -> dict:
        return {"id": self.report_id, "codes": self.codes, "fallback": self.fallback,
                "evidence": [e.to_json() for e in self.evidence]}


def fallback_focus(tagged: TaggedReport) -> int:
    """Index of the most probable focus sentence (lowest index on ties)."""
    if not tagged.probs:
        raise InvalidArgument("cannot pick a fallback sentence from an empty report")
    return int(np.argmax(tagged.probs))


def focus_indices(tagged: TaggedReport) -> tuple[list[int], bool]:
    idx = [i for i, t in enumerate(tagged.tags) if t == 1]
    if idx:
        return idx, False
    return [fallback_focus(tagged)], True


def check_compatible(tagger: SentenceTagger, classifier: IcdClassifier) -> None:
    if tagger.embedding_hash != classifier.embedding_hash:
        raise ConfigError("tagger and classifier were trained with different embedding tables "
                          f"({tagger.embedding_hash[:12]} vs {classifier.embedding_hash[:12]})")


def predict_many(reports, tagger: SentenceTagger, classifier: IcdClassifier) -> list[Prediction]:
    check_compatible(tagger, classifier)
    reports = list(reports)
    for r in reports:
        if not r.sentences:
            raise InvalidArgument(f"report {r.id} has no sentences")
    tagged = tagger.tag_many([as_example(r) for r in reports])
    plans, records = [], []
    for r, t in zip(reports, tagged):
        idx, fell_back = focus_indices(t)
        plans.append((idx, fell_back))
        for i in idx:
            toks = [tok.text for tok in r.sentence_tokens[i]]
            records.append(ClassifierRecord(record_id(r.id, i), toks, [0] * len(toks),
                                            r.r4v_tokens, "", r.id, i))
    outputs = iter(classifier.run(records))
    preds = []
    for r, (idx, fell_back) in zip(reports, plans):
        ev = []
        for i in idx:
            probs, alpha = next(outputs)
            ev.append(Evidence(i, r.sentences[i].text, [tok.text for tok in r.sentence_tokens[i]],
                               classifier.space.code(int(np.argmax(probs))),
                               None if alpha is None else [float(a) for a in alpha]))
        preds.append(Prediction(r.id, sorted({e.code for e in ev}), ev, fell_back))
    return preds


def predict_codeset(report: Report, tagger: SentenceTagger, classifier: IcdClassifier) -> Prediction:
    return predict_many([report], tagger, classifier)[0]


def write_predictions(predictions, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in predictions:
            fh.write(json.dumps(p.to_json(), sort_keys=True, ensure_ascii=False) + "\n")


# -- explanations ------------------------------------------------------------

def heat_levels(weights) -> list[int]:
    """Per-token highlight class 0..HEAT_LEVELS-1, relative to the largest
    weight in the sentence."""
    w = np.asarray(weights, dtype=float)
    if w.size == 0 or w.max() <= 0:
        return [0] * w.size
    return [int(v) for v in np.minimum(np.floor(w / w.max() * HEAT_LEVELS), HEAT_LEVELS - 1)]


def explain(prediction: Prediction, report: Report) -> tuple[str, str]:
    """Plain-text and HTML renderings, one block per predicted code."""
    by_code: dict = {}
    for e in prediction.evidence:
        by_code.setdefault(e.code, []).append(e)
    lines = [f"report {prediction.report_id}: {', '.join(prediction.codes)}"]
    if prediction.fallback:
        lines.append("(no sentence tagged as focus; most probable sentence used)")
    parts = [
        "<!DOCTYPE html>",
        "<html><head><meta charset=\"utf-8\">",
        f"<title>{html.escape(prediction.report_id)}</title>",
        "<style>",
        ".focus{background:#fff3c4}",
        *(f".heat{k}{{background:rgba(220,40,40,{k / (HEAT_LEVELS - 1):.2f})}}" for k in range(HEAT_LEVELS)),
        "</style></head><body>",
        f"<h1>{html.escape(prediction.report_id)}</h1>",
    ]
    focus = {e.sentence_index for e in prediction.evidence}
    parts.append("<div class=\"report\">")
    for i, s in enumerate(report.sentences):
        cls = " class=\"focus\"" if i in focus else ""
        parts.append(f"<p{cls}>{html.escape(s.text)}</p>")
    parts.append("</div>")
    for code in prediction.codes:
        lines.append(f"[{code}]")
        parts.append(f"<section class=\"code\"><h2>{html.escape(code)}</h2>")
        for e in by_code[code]:
            if e.attention is None:
                lines.append(f"  >> sentence {e.sentence_index}: {e.sentence}")
                parts.append(f"<p class=\"focus\">{html.escape(e.sentence)}</p>")
                continue
            shown = " ".join(f"{t}[{a:.2f}]" for t, a in zip(e.tokens, e.attention))
            lines.append(f"  >> sentence {e.sentence_index}: {shown}")
            spans = " ".join(
                f"<span class=\"heat{h}\" title=\"{a:.3f}\">{html.escape(t)}</span>"
                for t, a, h in zip(e.tokens, e.attention, heat_levels(e.attention)))
            parts.append(f"<p class=\"focus\">{spans}</p>")
        parts.append("</section>")
    parts.append("</body></html>")
    return "\n".join(lines) + "\n", "\n".join(parts) + "\n"


_UNSAFE = re.compile(r"[^A-Za-z0-9._-]")


def explanation_filename(report_id: str) -> str:
    return _UNSAFE.sub("_", report_id) + ".html"


def write_explanations(predictions, reports, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    by_id = {r.id: r for r in reports}
    paths = []
    for p in predictions:
        _, page = explain(p, by_id[p.report_id])
        path = out / explanation_filename(p.report_id)
        path.write_text(page, encoding="utf-8")
        paths.append(path)
    return paths
