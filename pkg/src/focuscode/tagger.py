"""Level one: tag every sentence of a report as focus (1) or not (0).

Each sentence is the concatenation of its mean word embedding and the mean
embedding of the reason-for-visit text. A unidirectional LSTM runs over the
report's sentences and a linear layer plus log-softmax scores the two tags.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import checkpoint, metrics
from .data import Report, TaggerExample
from .errors import ConfigError, InvalidArgument
from .numcore import LstmCellParams, lstm_backward, lstm_forward
from .numcore.init import linear_params, lstm_params
from .numcore.layers import linear_backward, linear_forward, log_softmax_backward, log_softmax_forward
from .text import EmbeddingTable, mean_embedding
from .training import TrainResult, fit


@dataclass
class TaggerConfig:
    hidden: int = 256
    epochs: int = 100
    batch_size: int = 32
    lr: float = 1e-3
    seed: int = 0
    # (w0, w1); None -> inverse training-split class frequency, mean 1
    class_weights: tuple | None = None
    fine_tune_embeddings: bool = False

    def to_json(self):
        d = dataclasses.asdict(self)
        if d["class_weights"] is not None:
            d["class_weights"] = [float(w) for w in d["class_weights"]]
        return d


@dataclass
class TaggedReport:
    tags: list[int]
    probs: list[float]  # probability of the focus tag


def init_params(dim: int, hidden: int = 256, seed: int = 0, dtype=np.float32) -> dict:
    rng = np.random.default_rng(seed)
    p = lstm_params(rng, 2 * dim, hidden, "lstm", dtype)
    p.update(linear_params(rng, hidden, 2, "out", dtype))
    return p


def encode_sentence(sentence_tokens, r4v_tokens, table: EmbeddingTable) -> np.ndarray:
    return np.concatenate([mean_embedding(sentence_tokens, table), mean_embedding(r4v_tokens, table)])


def _averager(token_lists, table: EmbeddingTable, n_rows: int | None = None) -> sp.csr_matrix:
    """Sparse (rows x vocab) matrix whose product with the embedding matrix
    gives per-row mean embeddings (zero rows for empty lists)."""
    rows, cols, vals = [], [], []
    for r, toks in enumerate(token_lists):
        if not toks:
            continue
        ids = table.ids(toks)
        rows.extend([r] * len(ids))
        cols.extend(ids.tolist())
        vals.extend([1.0 / len(ids)] * len(ids))
    n = len(token_lists) if n_rows is None else n_rows
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, table.vectors.shape[0]))


@dataclass
class TaggerBatch:
    sent_avg: sp.csr_matrix  # (M*B, V+1), time-major rows
    r4v_avg: sp.csr_matrix   # (B, V+1)
    mask: np.ndarray         # (M, B)
    labels: np.ndarray       # (M, B) int, -1 at padding
    shape: tuple = field(default=(0, 0))


def make_batch(examples, table: EmbeddingTable) -> TaggerBatch:
    B = len(examples)
    M = max(len(e.sentences) for e in examples)
    lists = [[] for _ in range(M * B)]
    mask = np.zeros((M, B))
    labels = np.full((M, B), -1, dtype=np.int64)
    for b, e in enumerate(examples):
        for i, toks in enumerate(e.sentences):
            lists[i * B + b] = toks
            mask[i, b] = 1.0
            if e.labels:
                labels[i, b] = e.labels[i]
    return TaggerBatch(_averager(lists, table), _averager([e.r4v for e in examples], table),
                       mask, labels, (M, B))


def _embedding_matrix(params, table, dtype):
    if "emb" in params:
        return params["emb"]
    return table.vectors.astype(dtype, copy=False)


def forward(params: dict, batch: TaggerBatch, table: EmbeddingTable):
    """Log-probabilities (M, B, 2) and a cache for :func:`backward`."""
    dtype = params["lstm.wh"].dtype
    E = _embedding_matrix(params, table, dtype)
    M, B = batch.shape
    es = np.asarray(batch.sent_avg @ E, dtype=dtype).reshape(M, B, -1)
    er = np.asarray(batch.r4v_avg @ E, dtype=dtype)
    x = np.concatenate([es, np.broadcast_to(er, es.shape)], axis=-1)
    hs, lcache = lstm_forward(x, batch.mask, LstmCellParams.from_params(params, "lstm"))
    logits, ocache = linear_forward(hs, params["out.w"], params["out.b"])
    logp, scache = log_softmax_forward(logits)
    return logp, (lcache, ocache, scache, es.shape[-1])


def backward(dlogp, cache, batch: TaggerBatch, params: dict) -> dict:
    lcache, ocache, scache, d = cache
    dlogits = log_softmax_backward(dlogp, scache)
    dhs, dw, db = linear_backward(dlogits, ocache)
    dx, lg = lstm_backward(dhs, lcache)
    grads = {"out.w": dw, "out.b": db, "lstm.wx": lg["wx"], "lstm.wh": lg["wh"], "lstm.b": lg["b"]}
    if "emb" in params:
        M, B = batch.shape
        dsent = dx[..., :d].reshape(M * B, d)
        dr4v = dx[..., d:].sum(axis=0)
        grads["emb"] = np.asarray(batch.sent_avg.T @ dsent + batch.r4v_avg.T @ dr4v,
                                  dtype=params["emb"].dtype)
    return grads


def tagger_loss(logp, gold, w0: float = 1.0, w1: float = 1.0, mask=None):
    """Class-weighted NLL, averaged by total weight over unmasked sentences.

    Returns ``(loss, dloss/dlogp)``.
    """
    logp = np.asarray(logp)
    gold = np.asarray(gold)
    if logp.shape[:-1] != gold.shape:
        raise InvalidArgument(f"log-probability shape {logp.shape} does not match gold {gold.shape}")
    m = np.ones(gold.shape) if mask is None else np.asarray(mask, dtype=float)
    valid = m > 0
    if np.any((gold[valid] != 0) & (gold[valid] != 1)):
        raise InvalidArgument("gold tags must be 0 or 1")
    g = np.where(valid, gold, 0)
    w = np.where(g == 1, w1, w0) * m
    total = w.sum()
    picked = np.take_along_axis(logp, g[..., None], axis=-1)[..., 0]
    # kept in the input's precision; np.float64 is already a float
    loss = -(w * picked).sum() / total if total > 0 else logp.dtype.type(0.0)
    d = np.zeros_like(logp)
    if total > 0:
        np.put_along_axis(d, g[..., None], (-w / total)[..., None].astype(logp.dtype), axis=-1)
    return loss, d


def objective(params, batch: TaggerBatch, table, weights):
    logp, cache = forward(params, batch, table)
    loss, dlogp = tagger_loss(logp, batch.labels, weights[0], weights[1], batch.mask)
    return loss, backward(dlogp, cache, batch, params)


def loss_value(params, batch: TaggerBatch, table, weights):
    """Forward-only loss, in the parameters' precision."""
    logp, _ = forward(params, batch, table)
    return tagger_loss(logp, batch.labels, weights[0], weights[1], batch.mask)[0]


def decide(logp) -> tuple[np.ndarray, np.ndarray]:
    """Tags (ties go to 0) and focus probabilities."""
    return (logp[..., 1] > logp[..., 0]).astype(np.int64), np.exp(logp[..., 1])


def tag_report(report, params: dict, table: EmbeddingTable) -> TaggedReport:
    """Tag a :class:`Report` or a :class:`TaggerExample`."""
    ex = report if isinstance(report, TaggerExample) else as_example(report)
    if not ex.sentences:
        raise InvalidArgument("cannot tag a report with no sentences")
    logp, _ = forward(params, make_batch([ex], table), table)
    tags, probs = decide(logp[:, 0])
    return TaggedReport(tags.tolist(), probs.astype(float).tolist())


def as_example(report: Report) -> TaggerExample:
    return TaggerExample(report.id, [[t.text for t in s] for s in report.sentence_tokens],
                         report.r4v_tokens, [])


def inverse_frequency_weights(examples) -> tuple[float, float]:
    n1 = sum(sum(e.labels) for e in examples)
    n0 = sum(len(e.labels) for e in examples) - n1
    if n1 == 0:
        raise ConfigError("training data contains no focus sentences")
    if n0 == 0:
        return 1.0, 1.0
    inv = np.array([1.0 / n0, 1.0 / n1])
    inv /= inv.mean()
    return float(inv[0]), float(inv[1])


class SentenceTagger:
    """Trained tagger: parameters, configuration and embedding identity."""

    def __init__(self, params: dict, config: TaggerConfig, table: EmbeddingTable,
                 embedding_hash: str | None = None):
        self.params = params
        self.config = config
        self.table = table
        self.embedding_hash = embedding_hash or table.content_hash()

    def tag(self, report) -> TaggedReport:
        return tag_report(report, self.params, self.table)

    def tag_many(self, examples, batch_size: int = 64) -> list[TaggedReport]:
        out = []
        for s in range(0, len(examples), batch_size):
            chunk = examples[s:s + batch_size]
            logp, _ = forward(self.params, make_batch(chunk, self.table), self.table)
            tags, probs = decide(logp)
            for b, e in enumerate(chunk):
                n = len(e.sentences)
                out.append(TaggedReport(tags[:n, b].tolist(), probs[:n, b].astype(float).tolist()))
        return out

    def evaluate(self, examples) -> dict:
        tagged = self.tag_many(examples)
        pairs = [({p}, {g}) for e, t in zip(examples, tagged) for p, g in zip(t.tags, e.labels)]
        return metrics.multiclass_report(pairs) if pairs else {}

    def save(self, path) -> None:
        arrays = dict(sorted(self.params.items()))
        manifest = {
            "config": self.config.to_json(),
            "embedding_hash": self.embedding_hash,
            "embedding_dim": self.table.dim,
        }
        checkpoint.write_checkpoint(path, "tagger", manifest, arrays)

    @classmethod
    def load(cls, path, table: EmbeddingTable) -> "SentenceTagger":
        meta, arrays = checkpoint.read_checkpoint(path, expect_kind="tagger")
        _check_table(meta, table, path)
        cfg = meta["config"]
        if cfg.get("class_weights") is not None:
            cfg["class_weights"] = tuple(cfg["class_weights"])
        return cls(arrays, TaggerConfig(**cfg), table, meta["embedding_hash"])


def _check_table(meta, table, path):
    if meta["embedding_hash"] != table.content_hash():
        raise ConfigError(f"{path}: embedding table does not match the one used for training")


def macro_f1(tagger_params, examples, table) -> float:
    model = SentenceTagger(tagger_params, TaggerConfig(), table, embedding_hash="-")
    tagged = model.tag_many(examples)
    pairs = [({p}, {g}) for e, t in zip(examples, tagged) for p, g in zip(t.tags, e.labels)]
    return metrics.prf(pairs, "macro", labels=[0, 1])[2]


def train_tagger(train, validation, table: EmbeddingTable, config: TaggerConfig = TaggerConfig(),
                 dtype=np.float32) -> TrainResult:
    """Train on ``train`` examples, selecting the epoch with the best
    validation macro-F1 (training set when ``validation`` is empty)."""
    if not train:
        raise ConfigError("empty tagger training set")
    weights = config.class_weights or inverse_frequency_weights(train)
    params = init_params(table.dim, config.hidden, config.seed, dtype)
    if config.fine_tune_embeddings:
        params["emb"] = table.vectors.astype(dtype).copy()
    held_out = validation or train

    def obj(p, idx):
        batch = make_batch([train[i] for i in idx], table)
        loss, grads = objective(p, batch, table, weights)
        return loss, grads, {"loss": float(loss) * len(idx), "n": len(idx)}

    best, trace, epoch, score = fit(
        params, [len(e.sentences) for e in train], obj,
        lambda p: macro_f1(p, held_out, table),
        config.epochs, config.batch_size, config.lr, config.seed, name="tagger",
    )
    cfg = dataclasses.replace(config, class_weights=tuple(weights))
    return TrainResult(SentenceTagger(best, cfg, table), trace, epoch, score)
