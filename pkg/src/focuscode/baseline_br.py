"""Binary-relevance baseline: one L2-regularised logistic regression per
label over binary uni/bi/tri-gram features of the whole report."""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.optimize import minimize
from scipy.special import expit, log_expit

from . import checkpoint
from .data import Corpus, LabelSpace, Report
from .errors import ConfigError, InvalidArgument

log = logging.getLogger(__name__)

R4V_PREFIX = "r4v:"


@dataclass
class BrConfig:
    ngram_max: int = 3
    min_df: int = 2
    l2: float = 1e-4
    include_r4v: bool = True
    max_iter: int = 500
    seed: int = 0  # solver is deterministic from a zero start; kept for the record

    def __post_init__(self):
        if not 1 <= self.ngram_max:
            raise ConfigError("ngram_max must be >= 1")
        if self.min_df < 1 or self.l2 < 0 or self.max_iter < 1:
            raise ConfigError("min_df and max_iter must be >= 1 and l2 >= 0")

    def to_json(self) -> dict:
        return dataclasses.asdict(self)


def ngrams(toks, n_max: int = 3) -> set[str]:
    """All 1..n_max grams of one token sequence, joined by ``_``."""
    out = set()
    for n in range(1, n_max + 1):
        for i in range(len(toks) - n + 1):
            out.add("_".join(toks[i:i + n]))
    return out


def report_ngrams(report: Report, n_max: int = 3, include_r4v: bool = True) -> set[str]:
    """N-grams of each sentence (never across a boundary) plus prefixed
    n-grams of the reason-for-visit text."""
    grams = set()
    for sent in report.sentence_tokens:
        grams |= ngrams([t.text for t in sent], n_max)
    if include_r4v:
        grams |= {R4V_PREFIX + g for g in ngrams(report.r4v_tokens, n_max)}
    return grams


class NgramVocabulary:
    def __init__(self, grams):
        self.grams = list(grams)
        self.index = {g: i for i, g in enumerate(self.grams)}
        if len(self.index) != len(self.grams):
            raise InvalidArgument("duplicate n-grams in vocabulary")

    def __len__(self):
        return len(self.grams)

    @classmethod
    def build(cls, gram_sets, min_df: int = 2) -> "NgramVocabulary":
        df: dict = {}
        for s in gram_sets:
            for g in s:
                df[g] = df.get(g, 0) + 1
        return cls(sorted(g for g, n in df.items() if n >= min_df))


def extract_ngrams(toks, vocab: NgramVocabulary, n_max: int = 3) -> sp.csr_matrix:
    """Binary presence row vector for one token sequence; unseen grams drop."""
    return _rows([ngrams(list(toks), n_max)], vocab)


def _rows(gram_sets, vocab: NgramVocabulary) -> sp.csr_matrix:
    indptr, cols = [0], []
    for s in gram_sets:
        ids = sorted(vocab.index[g] for g in s if g in vocab.index)
        cols.extend(ids)
        indptr.append(len(cols))
    data = np.ones(len(cols))
    return sp.csr_matrix((data, np.asarray(cols, dtype=np.int64), np.asarray(indptr)),
                         shape=(len(gram_sets), len(vocab)))


def _fit_label(X: sp.csr_matrix, y: np.ndarray, l2: float, max_iter: int):
    """Mean log-loss + l2/2 * |w|^2 (bias unpenalised), solved by L-BFGS."""
    n, F = X.shape
    s = 2.0 * y - 1.0

    def f(theta):
        w, b = theta[:F], theta[F]
        z = X @ w + b
        loss = -log_expit(s * z).mean() + 0.5 * l2 * w @ w
        r = -s * expit(-s * z) / n
        return loss, np.concatenate([X.T @ r + l2 * w, [r.sum()]])

    res = minimize(f, np.zeros(F + 1), jac=True, method="L-BFGS-B",
                   options={"maxiter": max_iter, "gtol": 1e-8, "ftol": 1e-12})
    return res.x[:F], float(res.x[F])


class BrModel:
    def __init__(self, vocab: NgramVocabulary, space: LabelSpace, W: np.ndarray, b: np.ndarray,
                 config: BrConfig = BrConfig(), threshold: float = 0.5):
        if W.shape != (len(space), len(vocab)) or b.shape != (len(space),):
            raise InvalidArgument("weight shapes do not match the label space and vocabulary")
        if not 0.0 < threshold < 1.0:
            raise InvalidArgument("threshold must lie in (0, 1)")
        self.vocab, self.space, self.W, self.b = vocab, space, W, b
        self.config = config
        self.threshold = threshold

    def features(self, reports) -> sp.csr_matrix:
        return _rows([report_ngrams(r, self.config.ngram_max, self.config.include_r4v) for r in reports],
                     self.vocab)

    def scores(self, X) -> np.ndarray:
        """Sigmoid scores (n, L)."""
        return expit(np.asarray(X @ self.W.T) + self.b)

    def decide(self, X) -> np.ndarray:
        # score >= t  <=>  z >= logit(t); exact at the 0.5 default
        cut = 0.0 if self.threshold == 0.5 else float(np.log(self.threshold / (1 - self.threshold)))
        return (np.asarray(X @ self.W.T) + self.b) >= cut

    def predict(self, reports) -> list[list[str]]:
        D = self.decide(self.features(reports))
        return [[self.space.code(j) for j in np.flatnonzero(row)] for row in D]

    def save(self, path) -> None:
        manifest = {
            "config": self.config.to_json(),
            "labels": list(self.space.codes),
            "vocabulary": self.vocab.grams,
            "threshold": self.threshold,
        }
        checkpoint.write_checkpoint(path, "binary-relevance", manifest,
                                    {"W": self.W, "b": self.b})

    @classmethod
    def load(cls, path) -> "BrModel":
        meta, arrays = checkpoint.read_checkpoint(path, expect_kind="binary-relevance")
        return cls(NgramVocabulary(meta["vocabulary"]), LabelSpace(meta["labels"]),
                   arrays["W"].astype(np.float64), arrays["b"].astype(np.float64),
                   BrConfig(**meta["config"]), meta["threshold"])


def train_br(train: Corpus, space: LabelSpace, config: BrConfig = BrConfig()) -> BrModel:
    reports = list(train.reports if isinstance(train, Corpus) else train)
    if not reports:
        raise ConfigError("empty baseline training set")
    grams = [report_ngrams(r, config.ngram_max, config.include_r4v) for r in reports]
    vocab = NgramVocabulary.build(grams, config.min_df)
    X = _rows(grams, vocab)
    Y = np.array([[c in set(r.codes) for c in space.codes] for r in reports], dtype=float)
    W = np.zeros((len(space), len(vocab)))
    b = np.zeros(len(space))
    for j, code in enumerate(space.codes):
        if not Y[:, j].any():
            log.warning("label %s has no positive training reports; it will never be predicted", code)
            b[j] = -np.inf
            continue
        W[j], b[j] = _fit_label(X, Y[:, j], config.l2, config.max_iter)
    # round to the stored precision so a reloaded model decides identically
    return BrModel(vocab, space, W.astype(np.float32).astype(np.float64),
                   b.astype(np.float32).astype(np.float64), config)


def predict_br(report: Report, model: BrModel) -> list[str]:
    return model.predict([report])[0]
