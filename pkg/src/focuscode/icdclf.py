"""Level two: predict one ICD code for a focus sentence.

An LSTM reads the sentence's tokens. Its states are summarised either by
mean+max pooling or by attention, where each state is projected to
``u_t = tanh(W h_t + b)`` and scored against the projection of the final
state, ``u_T``. The summary is optionally concatenated with the last state
of a second LSTM over the reason-for-visit tokens, then a linear layer and
softmax give the label distribution.

Supervised attention adds ``lam * sum_t (a_hat_t - a_t)^2`` to the
cross-entropy, where ``a`` marks the tokens a human coder highlighted.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass

import numpy as np

from . import checkpoint, metrics
from .data import ClassifierRecord, LabelSpace
from .errors import ConfigError, DataError, InvalidArgument
from .numcore import LstmCellParams, lstm_backward, lstm_forward
from .numcore.init import linear_params, lstm_params
from .numcore.layers import (
    linear_backward,
    linear_forward,
    log_softmax_backward,
    log_softmax_forward,
    masked_max_backward,
    masked_max_forward,
    masked_mean_backward,
    masked_mean_forward,
    masked_softmax_forward,
    softmax_backward,
    weighted_sum_backward,
    weighted_sum_forward,
)
from .text import EmbeddingTable
from .training import TrainResult, fit

log = logging.getLogger(__name__)

VARIANTS = ("pooling", "vanilla", "supervised")
_ALIASES = {"vanilla-attention": "vanilla", "attention": "vanilla", "supervised-attention": "supervised"}


def canonical_variant(name: str) -> str:
    v = _ALIASES.get(name, name)
    if v not in VARIANTS:
        raise ConfigError(f"unknown classifier variant {name!r}; choose from {', '.join(VARIANTS)}")
    return v


@dataclass
class ClassifierConfig:
    variant: str = "supervised"
    use_r4v: bool = True
    lam: float = 100.0
    hidden: int = 256
    attention: int = 128
    epochs: int = 30
    batch_size: int = 32
    lr: float = 1e-3
    seed: int = 0
    normalize_target: bool = False
    max_tokens: int = 128
    fine_tune_embeddings: bool = False

    def __post_init__(self):
        self.variant = canonical_variant(self.variant)
        if self.lam < 0:
            raise ConfigError(f"lambda must be >= 0, got {self.lam}")
        for name in ("hidden", "attention", "epochs", "batch_size", "max_tokens"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")

    @property
    def attends(self) -> bool:
        return self.variant != "pooling"

    @property
    def effective_lam(self) -> float:
        return self.lam if self.variant == "supervised" else 0.0

    def to_json(self) -> dict:
        return dataclasses.asdict(self)


def init_params(dim: int, n_labels: int, config: ClassifierConfig, dtype=np.float32) -> dict:
    if n_labels < 2:
        raise ConfigError("the label space needs at least 2 codes")
    rng = np.random.default_rng(config.seed)
    H = config.hidden
    p = lstm_params(rng, dim, H, "fs", dtype)
    if config.attends:
        p.update(linear_params(rng, H, config.attention, "att", dtype))
    if config.use_r4v:
        p.update(lstm_params(rng, dim, H, "r4v", dtype))
    width = (H if config.attends else 2 * H) + (H if config.use_r4v else 0)
    p.update(linear_params(rng, width, n_labels, "out", dtype))
    return p


# -- batching ----------------------------------------------------------------

@dataclass
class ClassifierBatch:
    ids: np.ndarray       # (T, B)
    mask: np.ndarray      # (T, B)
    r4v_ids: np.ndarray   # (R, B)
    r4v_mask: np.ndarray  # (R, B)
    alpha: np.ndarray     # (B, T) attention targets, zero at padding
    labels: np.ndarray    # (B,) label ids, -1 when unknown


def _truncate(rec: ClassifierRecord, max_tokens: int):
    if len(rec.tokens) > max_tokens:
        log.warning("%s: %d tokens truncated to %d", rec.id, len(rec.tokens), max_tokens)
        return rec.tokens[:max_tokens], rec.alpha[:max_tokens]
    return rec.tokens, rec.alpha


def make_batch(records, table: EmbeddingTable, space: LabelSpace | None = None,
               max_tokens: int = 128, normalize_target: bool = False) -> ClassifierBatch:
    B = len(records)
    trunc = [_truncate(r, max_tokens) for r in records]
    T = max(1, max(len(t) for t, _ in trunc))
    R = max(1, max(len(r.r4v) for r in records))
    ids = np.zeros((T, B), dtype=np.int64)
    mask = np.zeros((T, B))
    rids = np.zeros((R, B), dtype=np.int64)
    rmask = np.zeros((R, B))
    alpha = np.zeros((B, T))
    labels = np.full(B, -1, dtype=np.int64)
    for b, (rec, (toks, a)) in enumerate(zip(records, trunc)):
        n = len(toks)
        if n:
            ids[:n, b] = table.ids(toks)
            mask[:n, b] = 1.0
            alpha[b, :len(a)] = a[:n]
            if normalize_target and alpha[b].sum() > 0:
                alpha[b] /= alpha[b].sum()
        if rec.r4v:
            rids[:len(rec.r4v), b] = table.ids(rec.r4v)
            rmask[:len(rec.r4v), b] = 1.0
        if space is not None and rec.label in space:
            labels[b] = space.id(rec.label)
    return ClassifierBatch(ids, mask, rids, rmask, alpha, labels)


# -- building blocks ---------------------------------------------------------

def _embed(params, table, ids, dtype):
    E = params["emb"] if "emb" in params else table.vectors
    return E[ids].astype(dtype, copy=False)


def attend_forward(hs, mask, w, b):
    """Attention weights (B, T) for states ``hs`` (T, B, H)."""
    u = np.tanh(hs @ w.T + b)                        # (T, B, A)
    q = u[-1]                                        # final state's projection
    scores = np.einsum("tba,ba->bt", u, q)
    alpha, _ = masked_softmax_forward(scores, mask.T)
    return alpha, (hs, u, q, alpha, w)


def attend_backward(dalpha, cache):
    """Gradients w.r.t. ``hs``, ``w`` and ``b``."""
    hs, u, q, alpha, w = cache
    dscores = softmax_backward(dalpha, alpha)        # (B, T)
    du = np.einsum("bt,ba->tba", dscores, q)
    du[-1] += np.einsum("bt,tba->ba", dscores, u)
    dpre = du * (1.0 - u * u)
    A, H = w.shape
    dhs = dpre @ w
    dw = dpre.reshape(-1, A).T @ hs.reshape(-1, H)
    db = dpre.reshape(-1, A).sum(axis=0)
    return dhs, dw, db


def attend(h, w, b, mask=None) -> np.ndarray:
    """Attention distribution over the rows of ``h`` (T, H)."""
    h = np.asarray(h, dtype=float)
    if h.ndim != 2 or h.shape[0] == 0:
        raise InvalidArgument("attend needs at least one hidden state")
    m = np.ones((h.shape[0], 1)) if mask is None else np.asarray(mask, dtype=float)[:, None]
    alpha, _ = attend_forward(h[:, None, :], m, np.asarray(w), np.asarray(b))
    return alpha[0]


def attention_loss(alpha_hat, alpha) -> float:
    alpha_hat = np.asarray(alpha_hat, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    if alpha_hat.shape != alpha.shape:
        raise InvalidArgument(f"attention lengths differ: {alpha_hat.shape} vs {alpha.shape}")
    return float(((alpha_hat - alpha) ** 2).sum())


def mean_max_pool(h) -> np.ndarray:
    h = np.asarray(h, dtype=float)
    if h.ndim != 2 or h.shape[0] == 0:
        raise InvalidArgument("pooling needs at least one hidden state")
    return np.concatenate([h.mean(axis=0), h.max(axis=0)])


def joint_loss(j_c, j_a, lam: float) -> float:
    if lam < 0:
        raise InvalidArgument(f"lambda must be >= 0, got {lam}")
    return j_c + lam * j_a


def encode_r4v(r4v_tokens, params: dict, table: EmbeddingTable) -> np.ndarray:
    """Last hidden state of the reason-for-visit LSTM (zeros when empty)."""
    p = LstmCellParams.from_params(params, "r4v")
    if not r4v_tokens:
        return np.zeros(p.hidden_size, dtype=p.wh.dtype)
    x = _embed(params, table, table.ids(r4v_tokens)[:, None], p.wh.dtype)
    hs, _ = lstm_forward(x, np.ones((len(r4v_tokens), 1)), p)
    return hs[-1, 0]


# -- model -------------------------------------------------------------------

@dataclass
class Forward:
    logp: np.ndarray                  # (B, L)
    alpha: np.ndarray | None          # (B, T) for attention variants
    cache: tuple


def forward(params: dict, batch: ClassifierBatch, table: EmbeddingTable,
            config: ClassifierConfig) -> Forward:
    dtype = params["fs.wh"].dtype
    x = _embed(params, table, batch.ids, dtype)
    hs, fcache = lstm_forward(x, batch.mask, LstmCellParams.from_params(params, "fs"))
    alpha = None
    if config.attends:
        alpha, acache = attend_forward(hs, batch.mask, params["att.w"], params["att.b"])
        e_fs, wcache = weighted_sum_forward(alpha, hs)
        scache = (acache, wcache)
    else:
        mean, mcache = masked_mean_forward(hs, batch.mask)
        mx, xcache = masked_max_forward(hs, batch.mask)
        e_fs = np.concatenate([mean, mx], axis=-1)
        scache = (mcache, xcache)
    parts = [e_fs]
    rcache = None
    if config.use_r4v:
        xr = _embed(params, table, batch.r4v_ids, dtype)
        hr, rcache = lstm_forward(xr, batch.r4v_mask, LstmCellParams.from_params(params, "r4v"))
        parts.append(hr[-1])
    c = np.concatenate(parts, axis=-1)
    logits, ocache = linear_forward(c, params["out.w"], params["out.b"])
    logp, lcache = log_softmax_forward(logits)
    return Forward(logp, alpha, (hs, fcache, scache, rcache, ocache, lcache, e_fs.shape[-1]))


def losses(fw: Forward, batch: ClassifierBatch):
    """Per-batch sums ``(J_c, J_a)`` and the matching upstream gradients."""
    B = len(batch.labels)
    if np.any(batch.labels < 0):
        raise DataError("batch contains records without a known label")
    j_c = -fw.logp[np.arange(B), batch.labels].sum()
    dlogp = np.zeros_like(fw.logp)
    dlogp[np.arange(B), batch.labels] = -1.0
    if fw.alpha is None:
        return j_c, fw.logp.dtype.type(0.0), dlogp, None
    m = batch.mask.T
    diff = (fw.alpha - batch.alpha) * m
    return j_c, (diff * diff).sum(), dlogp, 2.0 * diff


def backward(dlogp, dalpha_sq, lam: float, fw: Forward, batch: ClassifierBatch,
             params: dict, config: ClassifierConfig) -> dict:
    hs, fcache, scache, rcache, ocache, lcache, n_fs = fw.cache
    g = {}
    dlogits = log_softmax_backward(dlogp, lcache)
    dc, g["out.w"], g["out.b"] = linear_backward(dlogits, ocache)
    de_fs = dc[:, :n_fs]
    dxr = None
    if config.use_r4v:
        R = batch.r4v_ids.shape[0]
        dhr = np.zeros((R,) + dc[:, n_fs:].shape, dtype=dc.dtype)
        dhr[-1] = dc[:, n_fs:]
        dxr, rg = lstm_backward(dhr, rcache)
        g["r4v.wx"], g["r4v.wh"], g["r4v.b"] = rg["wx"], rg["wh"], rg["b"]
    if config.attends:
        acache, wcache = scache
        dalpha, dhs = weighted_sum_backward(de_fs, wcache)
        if dalpha_sq is not None and lam > 0:
            dalpha = dalpha + lam * dalpha_sq
        dhs_att, g["att.w"], g["att.b"] = attend_backward(dalpha, acache)
        dhs = dhs + dhs_att
    else:
        mcache, xcache = scache
        H = hs.shape[-1]
        dhs = masked_mean_backward(de_fs[:, :H], mcache) + masked_max_backward(de_fs[:, H:], xcache)
    dx, fg = lstm_backward(dhs, fcache)
    g["fs.wx"], g["fs.wh"], g["fs.b"] = fg["wx"], fg["wh"], fg["b"]
    if "emb" in params:
        demb = np.zeros_like(params["emb"])
        np.add.at(demb, batch.ids.ravel(), dx.reshape(-1, dx.shape[-1]))
        if dxr is not None:
            np.add.at(demb, batch.r4v_ids.ravel(), dxr.reshape(-1, dxr.shape[-1]))
        g["emb"] = demb
    return g


def objective(params, batch, table, config: ClassifierConfig, lam: float | None = None):
    """``(J, grads, J_c, J_a)`` for one batch, summed over records."""
    lam = config.effective_lam if lam is None else lam
    fw = forward(params, batch, table, config)
    j_c, j_a, dlogp, dsq = losses(fw, batch)
    grads = backward(dlogp, dsq, lam, fw, batch, params, config)
    return joint_loss(j_c, j_a, lam), grads, j_c, j_a


def loss_value(params, batch, table, config: ClassifierConfig, lam: float | None = None):
    """Forward-only joint loss, in the parameters' precision."""
    lam = config.effective_lam if lam is None else lam
    j_c, j_a, _, _ = losses(forward(params, batch, table, config), batch)
    return joint_loss(j_c, j_a, lam)


def classify(record: ClassifierRecord, params: dict, table: EmbeddingTable,
             variant: str = "supervised", use_r4v: bool | None = None):
    """Label distribution and attention weights (None for pooling)."""
    config = ClassifierConfig(variant=variant, use_r4v="r4v.wx" in params if use_r4v is None else use_r4v)
    if config.attends and "att.w" not in params:
        raise ConfigError(f"parameters carry no attention layer for variant {variant!r}")
    fw = forward(params, make_batch([record], table), table, config)
    probs = np.exp(fw.logp[0])
    if fw.alpha is None:
        return probs, None
    return probs, fw.alpha[0, :len(record.tokens)]


def _check_labels(records, space: LabelSpace) -> None:
    bad = [r.id for r in records if r.label not in space]
    if bad:
        shown = ", ".join(bad[:10]) + (" ..." if len(bad) > 10 else "")
        raise DataError(f"{len(bad)} records carry labels outside the label space: {shown}")


class IcdClassifier:
    """Trained classifier with its label space and embedding identity."""

    def __init__(self, params: dict, config: ClassifierConfig, space: LabelSpace,
                 table: EmbeddingTable, embedding_hash: str | None = None):
        self.params = params
        self.config = config
        self.space = space
        self.table = table
        self.embedding_hash = embedding_hash or table.content_hash()

    def run(self, records, batch_size: int = 128):
        """Yield ``(probs, alpha)`` per record, alpha trimmed to the record."""
        for s in range(0, len(records), batch_size):
            chunk = records[s:s + batch_size]
            batch = make_batch(chunk, self.table, None, self.config.max_tokens)
            fw = forward(self.params, batch, self.table, self.config)
            probs = np.exp(fw.logp)
            for b, rec in enumerate(chunk):
                n = min(len(rec.tokens), self.config.max_tokens)
                yield probs[b], (None if fw.alpha is None else fw.alpha[b, :n])

    def predict(self, records) -> list[str]:
        return [self.space.code(int(np.argmax(p))) for p, _ in self.run(records)]

    def evaluate(self, records) -> dict:
        preds = self.predict(records)
        rep = metrics.multiclass_report([({p}, {r.label}) for p, r in zip(preds, records)])
        if self.config.attends:
            rep["attention_loss"] = self.attention_loss(records)
            rep["trigger_mass"] = self.trigger_mass(records)
        return rep

    def attention_loss(self, records) -> float:
        """Mean per-record squared error against the (raw) targets."""
        vals = [attention_loss(a, np.asarray(r.alpha[:len(a)], dtype=float))
                for (_, a), r in zip(self.run(records), records)]
        return float(np.mean(vals)) if vals else 0.0

    def trigger_mass(self, records) -> float:
        """Mean attention mass placed on annotated tokens."""
        vals = [float(np.dot(a, np.asarray(r.alpha[:len(a)], dtype=float) > 0))
                for (_, a), r in zip(self.run(records), records)]
        return float(np.mean(vals)) if vals else 0.0

    def save(self, path) -> None:
        manifest = {
            "config": self.config.to_json(),
            "labels": list(self.space.codes),
            "embedding_hash": self.embedding_hash,
            "embedding_dim": self.table.dim,
        }
        checkpoint.write_checkpoint(path, "classifier", manifest, dict(sorted(self.params.items())))

    @classmethod
    def load(cls, path, table: EmbeddingTable) -> "IcdClassifier":
        meta, arrays = checkpoint.read_checkpoint(path, expect_kind="classifier")
        if meta["embedding_hash"] != table.content_hash():
            raise ConfigError(f"{path}: embedding table does not match the one used for training")
        return cls(arrays, ClassifierConfig(**meta["config"]), LabelSpace(meta["labels"]),
                   table, meta["embedding_hash"])


def train_classifier(train, validation, space: LabelSpace, table: EmbeddingTable,
                     config: ClassifierConfig = ClassifierConfig(), dtype=np.float32) -> TrainResult:
    """Train on ``train`` records and keep the epoch with the best
    validation accuracy (training accuracy when ``validation`` is empty).
    The trace records mean J_c and J_a per record for every epoch."""
    if not train:
        raise ConfigError("empty classifier training set")
    _check_labels(train, space)
    _check_labels(validation, space)
    if config.variant == "supervised":
        missing = [r.id for r in train if not any(r.alpha)]
        if missing:
            raise DataError(f"supervised attention needs targets; missing for {missing[:10]}")
    params = init_params(table.dim, len(space), config, dtype)
    if config.fine_tune_embeddings:
        params["emb"] = table.vectors.astype(dtype).copy()
    held_out = validation or train
    gold = [r.label for r in held_out]

    def obj(p, idx):
        batch = make_batch([train[i] for i in idx], table, space, config.max_tokens, config.normalize_target)
        j, grads, j_c, j_a = objective(p, batch, table, config)
        return j, grads, {"loss": float(j), "j_c": float(j_c), "j_a": float(j_a), "n": len(idx)}

    def accuracy(p):
        model = IcdClassifier(p, config, space, table, embedding_hash="-")
        return float(np.mean([a == b for a, b in zip(model.predict(held_out), gold)]))

    best, trace, epoch, score = fit(
        params, [len(r.tokens) for r in train], obj, accuracy,
        config.epochs, config.batch_size, config.lr, config.seed,
        name=f"classifier[{config.variant}{'+r4v' if config.use_r4v else ''}]",
    )
    return TrainResult(IcdClassifier(best, config, space, table), trace, epoch, score)


