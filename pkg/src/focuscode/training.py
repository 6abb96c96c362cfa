"""Minibatch Adam loop shared by the tagger and the ICD classifier."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .numcore import AdamState, adam_step

log = logging.getLogger(__name__)


@dataclass
class TrainResult:
    model: object
    trace: list = field(default_factory=list)
    best_epoch: int = -1
    best_score: float = float("-inf")


def length_bucketed_batches(rng: np.random.Generator, lengths, batch_size: int, window: int = 20):
    """Shuffle, sort by length inside windows of ``window`` batches, then
    shuffle the batch order. Deterministic for a given generator state."""
    order = rng.permutation(len(lengths))
    span = batch_size * window
    batches = []
    for s in range(0, len(order), span):
        chunk = order[s:s + span]
        chunk = chunk[np.argsort([lengths[i] for i in chunk], kind="stable")]
        batches.extend(chunk[j:j + batch_size] for j in range(0, len(chunk), batch_size))
    return [batches[i] for i in rng.permutation(len(batches))]


def fit(params: dict, lengths, objective: Callable, evaluate: Callable,
        epochs: int, batch_size: int, lr: float, seed: int, name: str = "model"):
    """Train and return ``(best_params, trace, best_epoch, best_score)``.

    ``objective(params, idx) -> (loss, grads, stats)`` for a batch of item
    indices, where ``stats`` holds sums plus an ``"n"`` count used to
    average them per epoch; ``evaluate(params) -> score`` runs after every epoch and the
    parameters with the highest score (earliest on ties) are kept.
    """
    rng = np.random.default_rng(seed)
    state = AdamState(lr=lr)
    best = {k: v.copy() for k, v in params.items()}
    best_epoch, best_score = -1, float("-inf")
    trace = []
    for epoch in range(epochs):
        t0 = time.perf_counter()
        totals: dict = {}
        for idx in length_bucketed_batches(rng, lengths, batch_size):
            loss, grads, stats = objective(params, idx)
            params, state = adam_step(params, grads, state)
            for k, v in stats.items():
                totals[k] = totals.get(k, 0.0) + float(v)
        score = float(evaluate(params))
        n = max(totals.pop("n", 1.0), 1.0)
        row = {"epoch": epoch + 1, **{k: v / n for k, v in totals.items()}, "validation": score}
        trace.append(row)
        if score > best_score:
            best_score, best_epoch = score, epoch + 1
            best = {k: v.copy() for k, v in params.items()}
        log.info("%s epoch %d: %s (%.1fs)", name, epoch + 1,
                 " ".join(f"{k}={v:.4f}" for k, v in row.items() if k != "epoch"),
                 time.perf_counter() - t0)
    return best, trace, best_epoch, best_score
