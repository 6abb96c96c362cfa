"""Hermetic self-test: gradient checks for every model and metric oracles."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import icdclf, metrics, reference, tagger
from .data import Annotation, ClassifierRecord, LabelSpace, TaggerExample
from .numcore import LstmCellParams, grad_check, lstm_backward, lstm_forward
from .text import EmbeddingTable

TOLERANCE = 1e-4


@dataclass
class CheckResult:
    name: str
    ok: bool
    detail: str
    seconds: float


def toy_table(seed: int = 0, dim: int = 5, n_words: int = 12) -> EmbeddingTable:
    return EmbeddingTable.random([f"w{i}" for i in range(n_words)], dim, seed=seed, scale=0.8)


def toy_records(rng, table: EmbeddingTable, n: int = 3, labels=("A", "B", "C")):
    words = list(table.words)
    out = []
    for i in range(n):
        k = int(rng.integers(3, 7))
        toks = [words[j] for j in rng.integers(0, len(words), k)]
        alpha = [0] * k
        alpha[int(rng.integers(k))] = 1
        r4v = [words[j] for j in rng.integers(0, len(words), int(rng.integers(2, 5)))]
        out.append(ClassifierRecord(f"r{i}", toks, alpha, r4v, labels[i % len(labels)]))
    return out


def toy_reports(rng, table: EmbeddingTable, n: int = 3):
    words = list(table.words)
    out = []
    for i in range(n):
        sents = [[words[j] for j in rng.integers(0, len(words), int(rng.integers(1, 4)))]
                 for _ in range(int(rng.integers(2, 6)))]
        labels = [int(v) for v in rng.integers(0, 2, len(sents))]
        out.append(TaggerExample(f"t{i}", sents, [words[0]], labels))
    return out


def _jitter(params, rng, scale=0.2):
    for k in params:
        params[k] = params[k] + rng.normal(0.0, scale, params[k].shape)
    return params


def classifier_gradient_error(variant: str, use_r4v: bool, seed: int, fine_tune: bool = False) -> float:
    rng = np.random.default_rng(seed)
    table = toy_table(seed)
    records = toy_records(rng, table)
    space = LabelSpace(["A", "B", "C"])
    cfg = icdclf.ClassifierConfig(variant=variant, use_r4v=use_r4v, hidden=4, attention=3,
                                  seed=seed, lam=2.0)
    params = _jitter(icdclf.init_params(table.dim, len(space), cfg, np.float64), rng)
    if fine_tune:
        params["emb"] = table.vectors.astype(np.float64)
    batch = icdclf.make_batch(records, table, space)
    return grad_check(lambda p: icdclf.objective(p, batch, table, cfg)[:2], params,
                      oracle_dtype=np.longdouble,
                      value_fn=lambda p: icdclf.loss_value(p, batch, table, cfg))


def tagger_gradient_error(seed: int, fine_tune: bool = False) -> float:
    rng = np.random.default_rng(seed)
    table = toy_table(seed)
    examples = toy_reports(rng, table)
    params = _jitter(tagger.init_params(table.dim, 4, seed, np.float64), rng)
    if fine_tune:
        params["emb"] = table.vectors.astype(np.float64)
    batch = tagger.make_batch(examples, table)
    w = (0.7, 2.0)
    return grad_check(lambda p: tagger.objective(p, batch, table, w), params,
                      oracle_dtype=np.longdouble,
                      value_fn=lambda p: tagger.loss_value(p, batch, table, w))


def lstm_gradient_error(seed: int) -> float:
    rng = np.random.default_rng(seed)
    T, B, d, H = 4, 3, 3, 4
    x = rng.normal(size=(T, B, d))
    mask = np.ones((T, B))
    mask[2:, 0] = 0.0
    target = rng.normal(size=(T, B, H))
    params = {"wx": rng.normal(0, 0.5, (4 * H, d)), "wh": rng.normal(0, 0.5, (4 * H, H)),
              "b": rng.normal(0, 0.5, 4 * H)}

    def value(p):
        hs, _ = lstm_forward(x.astype(p["wx"].dtype), mask, LstmCellParams(p["wx"], p["wh"], p["b"]))
        return (hs * target).sum()

    def loss(p):
        hs, cache = lstm_forward(x, mask, LstmCellParams(p["wx"], p["wh"], p["b"]))
        _, g = lstm_backward(target, cache)
        return (hs * target).sum(), g

    return grad_check(loss, params, oracle_dtype=np.longdouble, value_fn=value)


def random_prediction_set(rng, max_labels: int = 6, max_samples: int = 20):
    labels = [f"L{i}" for i in range(int(rng.integers(1, max_labels + 1)))]
    n = int(rng.integers(1, max_samples + 1))

    def pick():
        return {c for c in labels if rng.random() < 0.35}

    return [(pick(), pick()) for _ in range(n)]


def metric_oracle_error(seed: int) -> float:
    rng = np.random.default_rng(seed)
    pairs = random_prediction_set(rng)
    worst = 0.0
    checks = [
        (metrics.prf(pairs, "micro"), reference.micro(pairs)),
        (metrics.prf(pairs, "macro"), reference.macro(pairs)),
        (metrics.prf(pairs, "weighted"), reference.weighted(pairs)),
        (metrics.instance_prf(pairs), reference.instance(pairs)),
        (metrics.instance_prf(pairs, per_sample=True), reference.instance_per_sample(pairs)),
        ((metrics.subset_accuracy(pairs),), (reference.subset_accuracy(pairs),)),
    ]
    for got, want in checks:
        worst = max(worst, max(abs(a - b) for a, b in zip(got, want)))
    a, b = random_coder_pair(rng)
    worst = max(worst, abs(metrics.cohens_kappa(a, b) - reference.kappa(a, b)))
    return worst


def random_coder_pair(rng, n_docs: int | None = None, codes=("C1", "C2", "C3", "C4")):
    n_docs = n_docs or int(rng.integers(1, 8))
    a, b = {}, {}
    for d in range(n_docs):
        for coder in (a, b):
            anns = []
            for c in codes:
                if rng.random() < 0.4:
                    s = int(rng.integers(0, 50))
                    anns.append(Annotation(s, s + int(rng.integers(1, 10)), c))
            coder[f"d{d}"] = anns
    return a, b


def _run(name: str, fn: Callable[[], float], limit: float) -> CheckResult:
    t0 = time.perf_counter()
    try:
        err = fn()
        ok = err < limit
        detail = f"max error {err:.3g} (limit {limit:g})"
    except Exception as exc:  # report, don't abort the suite
        ok, detail = False, f"{type(exc).__name__}: {exc}"
    return CheckResult(name, ok, detail, time.perf_counter() - t0)


def run_selftest(seeds: int = 3) -> list[CheckResult]:
    out = [_run("grad:lstm", lambda: max(lstm_gradient_error(s) for s in range(seeds)), TOLERANCE)]
    out.append(_run("grad:tagger", lambda: max(tagger_gradient_error(s, fine_tune=s == 0)
                                               for s in range(seeds)), TOLERANCE))
    for variant in icdclf.VARIANTS:
        for use_r4v in (True, False):
            name = f"grad:classifier[{variant}{'+r4v' if use_r4v else ''}]"
            out.append(_run(name, lambda v=variant, r=use_r4v: max(
                classifier_gradient_error(v, r, s, fine_tune=s == 0) for s in range(seeds)), TOLERANCE))
    out.append(_run("metrics:oracle", lambda: max(metric_oracle_error(s) for s in range(200)), 1e-9))
    return out
