import math

import numpy as np
import pytest

from focuscode import tagger
from focuscode.data import TaggerExample
from focuscode.errors import ConfigError, InvalidArgument
from focuscode.numcore import LstmCellParams, grad_check, lstm_step
from focuscode.selftest import tagger_gradient_error, toy_table
from focuscode.text import EmbeddingTable


def _toy_examples(n=10, seed=0):
    """Focus sentences contain the word 'hit'; others only filler."""
    rng = np.random.default_rng(seed)
    filler = ["f0", "f1", "f2", "f3"]
    out = []
    for i in range(n):
        k = int(rng.integers(2, 5))
        labels = [int(rng.random() < 0.4) for _ in range(k)]
        labels[int(rng.integers(k))] = 1
        sents = [[filler[j] for j in rng.integers(0, 4, 3)] + (["hit"] if y else []) for y in labels]
        out.append(TaggerExample(f"t{i}", sents, ["why"], labels))
    return out


@pytest.fixture(scope="module")
def table():
    return EmbeddingTable.random(["f0", "f1", "f2", "f3", "hit", "why"], 6, seed=2)


def test_encode_sentence():
    t = EmbeddingTable.from_dict({"a": [1.0, 0.0], "b": [0.0, 1.0]})
    assert np.array_equal(tagger.encode_sentence(["a"], ["b"], t), [1, 0, 0, 1])
    assert np.array_equal(tagger.encode_sentence(["a"], [], t), [1, 0, 0, 0])
    assert not np.array_equal(tagger.encode_sentence(["a"], ["a"], t), tagger.encode_sentence(["a"], ["b"], t))


def _zero_params(dim, hidden=3):
    p = tagger.init_params(dim, hidden, 0, np.float64)
    return {k: np.zeros_like(v) for k, v in p.items()}


def test_zero_params_tie_goes_to_zero(table):
    t = tagger.tag_report(TaggerExample("x", [["f0"]], [], []), _zero_params(table.dim), table)
    assert t.tags == [0] and t.probs == [0.5]


def test_empty_report(table):
    with pytest.raises(InvalidArgument):
        tagger.tag_report(TaggerExample("x", [], [], []), _zero_params(table.dim), table)


def test_output_length_matches_sentences(table):
    p = tagger.init_params(table.dim, 4, 1, np.float64)
    for ex in _toy_examples(5):
        t = tagger.tag_report(ex, p, table)
        assert len(t.tags) == len(t.probs) == len(ex.sentences)
        for tag, prob in zip(t.tags, t.probs):
            assert tag == int(prob > 0.5)


def test_hand_unrolled_trace(table):
    rng = np.random.default_rng(5)
    H = 3
    p = {k: rng.normal(0, 0.5, v.shape) for k, v in tagger.init_params(table.dim, H, 0, np.float64).items()}
    ex = TaggerExample("x", [["f0", "hit"], ["f1"], ["f2", "f3", "why"]], ["why", "f0"], [])
    cell = LstmCellParams(p["lstm.wx"], p["lstm.wh"], p["lstm.b"])
    E = table.vectors.astype(np.float64)
    r = (E[table.index["why"]] + E[table.index["f0"]]) / 2
    h, c = np.zeros(H), np.zeros(H)
    want = []
    for sent in ex.sentences:
        e = np.mean([E[table.index[w]] for w in sent], axis=0)
        h, c = lstm_step(np.concatenate([e, r]), h, c, cell)
        z = p["out.w"] @ h + p["out.b"]
        want.append(math.exp(z[1]) / (math.exp(z[0]) + math.exp(z[1])))
    got = tagger.tag_report(ex, p, table).probs
    assert np.max(np.abs(np.array(got) - want)) < 1e-10


def test_loss_examples():
    confident = np.log(np.array([[1 - 1e-12, 1e-12], [1e-12, 1 - 1e-12]]))
    loss, _ = tagger.tagger_loss(confident, [0, 1])
    assert loss < 1e-10
    uniform = np.log(np.full((3, 2), 0.5))
    loss, _ = tagger.tagger_loss(uniform, [0, 1, 1])
    assert loss == pytest.approx(math.log(2), abs=1e-15)
    logp = np.log(np.array([[0.7, 0.3], [0.4, 0.6]]))
    loss, _ = tagger.tagger_loss(logp, [0, 1], w0=1.0, w1=5.0)
    assert abs(loss - (-(math.log(0.7) + 5 * math.log(0.6)) / 6)) < 1e-12


def test_loss_rejects_bad_tags():
    with pytest.raises(InvalidArgument):
        tagger.tagger_loss(np.log(np.full((2, 2), 0.5)), [0, 2])


def test_loss_masked_positions_ignored():
    logp = np.log(np.array([[[0.7, 0.3]], [[0.1, 0.9]]]))
    loss, d = tagger.tagger_loss(logp, np.array([[0], [-1]]), mask=np.array([[1.0], [0.0]]))
    assert loss == pytest.approx(-math.log(0.7))
    assert np.all(d[1] == 0)


def test_gradient_two_sentence_report(table):
    ex = [TaggerExample("x", [["f0", "hit"], ["f1"]], ["why"], [1, 0])]
    rng = np.random.default_rng(0)
    p = {k: v + rng.normal(0, 0.3, v.shape) for k, v in tagger.init_params(table.dim, 4, 0, np.float64).items()}
    batch = tagger.make_batch(ex, table)
    w = (1.0, 3.0)
    err = grad_check(lambda q: tagger.objective(q, batch, table, w), p, oracle_dtype=np.longdouble,
                     value_fn=lambda q: tagger.loss_value(q, batch, table, w))
    assert err < 1e-4


@pytest.mark.parametrize("seed", range(5))
def test_gradient_random_batches(seed):
    assert tagger_gradient_error(seed, fine_tune=seed % 2 == 0) < 1e-4


def test_weight_scaling_keeps_decisions(table):
    ex = _toy_examples(6)
    batch = tagger.make_batch(ex, table)
    p = tagger.init_params(table.dim, 4, 0, np.float64)
    l1, g1 = tagger.objective(p, batch, table, (1.0, 2.0))
    l2, g2 = tagger.objective(p, batch, table, (3.0, 6.0))
    assert l1 == pytest.approx(l2, rel=1e-12)
    for k in g1:
        assert np.allclose(g1[k], g2[k], rtol=1e-10, atol=1e-14)
    cfg = tagger.TaggerConfig(hidden=8, epochs=5, batch_size=4)
    a = tagger.train_tagger(ex, [], table, tagger.TaggerConfig(**{**cfg.__dict__, "class_weights": (1.0, 2.0)}))
    b = tagger.train_tagger(ex, [], table, tagger.TaggerConfig(**{**cfg.__dict__, "class_weights": (3.0, 6.0)}))
    assert [t.tags for t in a.model.tag_many(ex)] == [t.tags for t in b.model.tag_many(ex)]


def test_inverse_frequency_weights():
    ex = [TaggerExample("a", [[], [], [], []], [], [1, 0, 0, 0])]
    w0, w1 = tagger.inverse_frequency_weights(ex)
    assert (w0 + w1) / 2 == pytest.approx(1.0)
    assert w1 / w0 == pytest.approx(3.0)
    with pytest.raises(ConfigError):
        tagger.inverse_frequency_weights([TaggerExample("a", [[]], [], [0])])


def test_training_loss_mostly_decreases(table):
    ex = _toy_examples(10)
    res = tagger.train_tagger(ex, [], table, tagger.TaggerConfig(hidden=16, epochs=40, batch_size=4, lr=1e-2))
    losses = [r["loss"] for r in res.trace]
    upticks = sum(b > a for a, b in zip(losses, losses[1:]))
    assert upticks <= 5
    assert losses[-1] < 0.5 * losses[0]
    assert res.best_score == 1.0


def test_training_is_deterministic(table, tmp_path):
    ex = _toy_examples(8)
    cfg = tagger.TaggerConfig(hidden=8, epochs=3, batch_size=3)
    a = tagger.train_tagger(ex, ex[:3], table, cfg)
    b = tagger.train_tagger(ex, ex[:3], table, cfg)
    a.model.save(tmp_path / "a.ckpt")
    b.model.save(tmp_path / "b.ckpt")
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()


def test_checkpoint_round_trip(table, tmp_path):
    ex = _toy_examples(8)
    res = tagger.train_tagger(ex, ex, table, tagger.TaggerConfig(hidden=8, epochs=3, batch_size=4,
                                                                fine_tune_embeddings=True))
    res.model.save(tmp_path / "t.ckpt")
    back = tagger.SentenceTagger.load(tmp_path / "t.ckpt", table)
    assert back.evaluate(ex) == res.model.evaluate(ex)
    assert back.config == res.model.config
    other = EmbeddingTable.random(["f0"], 6, seed=9)
    with pytest.raises(ConfigError):
        tagger.SentenceTagger.load(tmp_path / "t.ckpt", other)


def test_empty_training_set(table):
    with pytest.raises(ConfigError):
        tagger.train_tagger([], [], table)


def test_toy_table_is_hermetic():
    assert toy_table(0).content_hash() == toy_table(0).content_hash()
