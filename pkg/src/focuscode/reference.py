"""Brute-force metric definitions in plain Python, used as test oracles.

Written independently of :mod:`focuscode.metrics`: explicit loops over
labels and samples, no numpy.
"""

from __future__ import annotations


def _ratio(a, b):
    return a / b if b else 0.0


def _f(p, r):
    return _ratio(2 * p * r, p + r)


def counts(pairs, label):
    tp = fp = fn = 0
    for pred, gold in pairs:
        inp, ing = label in pred, label in gold
        if inp and ing:
            tp += 1
        elif inp:
            fp += 1
        elif ing:
            fn += 1
    return tp, fp, fn


def all_labels(pairs):
    seen = []
    for pred, gold in pairs:
        for c in list(pred) + list(gold):
            if c not in seen:
                seen.append(c)
    return sorted(seen)


def micro(pairs):
    TP = FP = FN = 0
    for c in all_labels(pairs):
        tp, fp, fn = counts(pairs, c)
        TP, FP, FN = TP + tp, FP + fp, FN + fn
    p, r = _ratio(TP, TP + FP), _ratio(TP, TP + FN)
    return p, r, _f(p, r)


def _label_scores(pairs):
    rows = []
    for c in all_labels(pairs):
        tp, fp, fn = counts(pairs, c)
        p, r = _ratio(tp, tp + fp), _ratio(tp, tp + fn)
        rows.append((p, r, _f(p, r), tp + fn))
    return rows


def macro(pairs):
    rows = _label_scores(pairs)
    if not rows:
        return 0.0, 0.0, 0.0
    n = len(rows)
    return (sum(x[0] for x in rows) / n, sum(x[1] for x in rows) / n, sum(x[2] for x in rows) / n)


def weighted(pairs):
    rows = _label_scores(pairs)
    total = sum(x[3] for x in rows)
    if not total:
        return 0.0, 0.0, 0.0
    return tuple(sum(x[k] * x[3] for x in rows) / total for k in range(3))


def instance(pairs):
    """Support-weighted per-label scores (the weighted average)."""
    return weighted(pairs)


def instance_per_sample(pairs):
    ps, rs, fs = [], [], []
    for pred, gold in pairs:
        pred, gold = set(pred), set(gold)
        inter = len(pred & gold)
        ps.append(_ratio(inter, len(pred)))
        rs.append(_ratio(inter, len(gold)))
        fs.append(_ratio(2 * inter, len(pred) + len(gold)))
    n = len(pairs)
    return sum(ps) / n, sum(rs) / n, sum(fs) / n


def subset_accuracy(pairs):
    return sum(1 for pred, gold in pairs if set(pred) == set(gold)) / len(pairs)


def _code(ann):
    return ann.code if hasattr(ann, "code") else ann[2]


def kappa(a: dict, b: dict):
    """Cohen's kappa over (document, code) yes/no decisions, from the 2x2
    contingency table."""
    docs = sorted(a)
    codes = sorted({_code(x) for d in docs for x in list(a[d]) + list(b[d])})
    yy = yn = ny = nn = 0
    for d in docs:
        ca = {_code(x) for x in a[d]}
        cb = {_code(x) for x in b[d]}
        for c in codes:
            x, y = c in ca, c in cb
            if x and y:
                yy += 1
            elif x:
                yn += 1
            elif y:
                ny += 1
            else:
                nn += 1
    n = yy + yn + ny + nn
    if n == 0:
        return 1.0
    po = (yy + nn) / n
    pe = ((yy + yn) / n) * ((yy + ny) / n) + ((ny + nn) / n) * ((yn + nn) / n)
    if pe == 1.0:
        return 1.0 if po == 1.0 else 0.0
    return (po - pe) / (1 - pe)
