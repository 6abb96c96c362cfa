"""Evaluation measures: P/R/F1 under several averagings, subset accuracy,
Cohen's kappa, and the two-coder annotation merge.

A prediction set is a sequence of ``(predicted, gold)`` pairs of code
collections. Single-label (multi-class) predictions are singleton sets.
Empty denominators give 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Annotation
from .errors import InvalidArgument

MODES = ("micro", "macro", "weighted")


def _binarize(predictions, labels=None):
    pairs = [(set(p), set(g)) for p, g in predictions]
    if not pairs:
        raise InvalidArgument("empty prediction set")
    if labels is None:
        labels = sorted(set().union(*(p | g for p, g in pairs)))
    index = {c: j for j, c in enumerate(labels)}
    P = np.zeros((len(pairs), len(labels)), dtype=bool)
    G = np.zeros_like(P)
    for i, (p, g) in enumerate(pairs):
        P[i, [index[c] for c in p if c in index]] = True
        G[i, [index[c] for c in g if c in index]] = True
    return P, G, list(labels)


def _div(num, den):
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    return np.divide(num, den, out=np.zeros_like(num), where=den > 0)


def _f1(p, r):
    return _div(2 * p * r, p + r)


def per_label(predictions, labels=None) -> dict:
    """Per-label precision, recall, F1 and support arrays."""
    P, G, labels = _binarize(predictions, labels)
    tp = (P & G).sum(axis=0)
    fp = (P & ~G).sum(axis=0)
    fn = (~P & G).sum(axis=0)
    prec = _div(tp, tp + fp)
    rec = _div(tp, tp + fn)
    return {"labels": labels, "precision": prec, "recall": rec, "f1": _f1(prec, rec),
            "support": G.sum(axis=0), "tp": tp, "fp": fp, "fn": fn}


def prf(predictions, mode: str = "micro", labels=None) -> tuple[float, float, float]:
    if mode not in MODES:
        raise InvalidArgument(f"mode must be one of {MODES}, got {mode!r}")
    s = per_label(predictions, labels)
    if mode == "micro":
        tp, fp, fn = s["tp"].sum(), s["fp"].sum(), s["fn"].sum()
        p = float(_div(tp, tp + fp))
        r = float(_div(tp, tp + fn))
        return p, r, float(_f1(p, r))
    if len(s["labels"]) == 0:
        return 0.0, 0.0, 0.0
    if mode == "macro":
        return float(s["precision"].mean()), float(s["recall"].mean()), float(s["f1"].mean())
    w = s["support"].astype(float)
    total = w.sum()
    if total == 0:
        return 0.0, 0.0, 0.0
    return tuple(float((s[k] * w).sum() / total) for k in ("precision", "recall", "f1"))


def subset_accuracy(predictions) -> float:
    pairs = [(set(p), set(g)) for p, g in predictions]
    if not pairs:
        raise InvalidArgument("empty prediction set")
    return sum(p == g for p, g in pairs) / len(pairs)


def instance_prf(predictions, per_sample: bool = False) -> tuple[float, float, float]:
    """Per-label scores averaged with gold-support weights.

    With ``per_sample=True`` the conventional example-based variant is
    returned instead: per-instance set overlap scores, averaged over
    instances.
    """
    if not per_sample:
        return prf(predictions, "weighted")
    pairs = [(set(p), set(g)) for p, g in predictions]
    if not pairs:
        raise InvalidArgument("empty prediction set")
    inter = np.array([len(p & g) for p, g in pairs], dtype=float)
    np_ = np.array([len(p) for p, _ in pairs], dtype=float)
    ng = np.array([len(g) for _, g in pairs], dtype=float)
    return (float(_div(inter, np_).mean()), float(_div(inter, ng).mean()),
            float(_div(2 * inter, np_ + ng).mean()))


def _prf_dict(t):
    return {"precision": t[0], "recall": t[1], "f1": t[2]}


def multiclass_report(predictions) -> dict:
    """Accuracy plus micro/macro/weighted P/R/F1 (classifier-level layout)."""
    return {
        "n_instances": len(predictions),
        "accuracy": subset_accuracy(predictions),
        **{m: _prf_dict(prf(predictions, m)) for m in MODES},
    }


def multilabel_report(predictions) -> dict:
    """Set accuracy plus micro and instance P/R/F1 (end-to-end layout)."""
    return {
        "n_instances": len(predictions),
        "subset_accuracy": subset_accuracy(predictions),
        "micro": _prf_dict(prf(predictions, "micro")),
        "macro": _prf_dict(prf(predictions, "macro")),
        "instance": _prf_dict(instance_prf(predictions)),
        "instance_per_sample": _prf_dict(instance_prf(predictions, per_sample=True)),
    }


# -- annotation agreement --------------------------------------------------

def _as_annotations(items) -> list[Annotation]:
    return [a if isinstance(a, Annotation) else Annotation(*a) for a in items]


def cohens_kappa(a: dict, b: dict) -> float:
    """Kappa over binary (document, code) decisions.

    ``a`` and ``b`` map document id to that coder's annotations. Candidate
    codes are every code either coder used anywhere; a coder says "yes" to
    (doc, code) when they annotated at least one span with that code.
    """
    if set(a) != set(b):
        if not set(a) & set(b):
            raise InvalidArgument("annotation sets cover disjoint documents")
        raise InvalidArgument("annotation sets must cover the same documents")
    docs = sorted(a)
    ca = {d: {x.code for x in _as_annotations(a[d])} for d in docs}
    cb = {d: {x.code for x in _as_annotations(b[d])} for d in docs}
    codes = sorted(set().union(*ca.values(), *cb.values()))
    if not docs or not codes:
        return 1.0
    A = np.array([[c in ca[d] for c in codes] for d in docs]).ravel()
    B = np.array([[c in cb[d] for c in codes] for d in docs]).ravel()
    po = float((A == B).mean())
    pa, pb = A.mean(), B.mean()
    pe = float(pa * pb + (1 - pa) * (1 - pb))
    if pe >= 1.0:
        return 1.0 if po >= 1.0 else 0.0
    return (po - pe) / (1.0 - pe)


@dataclass
class MergeResult:
    annotations: dict
    escalated: list = field(default_factory=list)
    unresolved: list = field(default_factory=list)


def _merge_doc(xs: list[Annotation], ys: list[Annotation]):
    """Union overlapping same-code spans; None if any span is unmatched."""
    for s in xs:
        if not any(t.code == s.code and t.overlaps(s.start, s.end) for t in ys):
            return None
    for t in ys:
        if not any(s.code == t.code and s.overlaps(t.start, t.end) for s in xs):
            return None
    merged = []
    for code in sorted({s.code for s in xs + ys}):
        spans = sorted((s.start, s.end) for s in xs + ys if s.code == code)
        cur_s, cur_e = spans[0]
        for st, en in spans[1:]:
            if st < cur_e:
                cur_e = max(cur_e, en)
            else:
                merged.append(Annotation(cur_s, cur_e, code))
                cur_s, cur_e = st, en
        merged.append(Annotation(cur_s, cur_e, code))
    return sorted(merged)


def merge_annotations(a: dict, b: dict, senior: dict | None = None) -> MergeResult:
    """Combine two coders' annotations document by document.

    If every span of each coder overlaps a same-code span of the other, the
    overlapping spans are unioned. Otherwise the document is escalated and
    the senior coder's annotations are used; without a senior annotation it
    is listed as unresolved and left out of ``annotations``.
    """
    if set(a) != set(b):
        raise InvalidArgument("coders must annotate the same documents")
    out = MergeResult({})
    for doc in sorted(a):
        merged = _merge_doc(_as_annotations(a[doc]), _as_annotations(b[doc]))
        if merged is not None:
            out.annotations[doc] = merged
            continue
        out.escalated.append(doc)
        if senior is not None and doc in senior:
            out.annotations[doc] = sorted(_as_annotations(senior[doc]))
        else:
            out.unresolved.append(doc)
    return out
