import numpy as np
import pytest
from scipy.special import expit

from focuscode import baseline_br as br
from focuscode.data import Annotation, Corpus, LabelSpace, Report
from focuscode.errors import ConfigError


def test_extract_ngrams_presence():
    vocab = br.NgramVocabulary(["a", "b", "a_b"])
    x = br.extract_ngrams(["a", "b"], vocab).toarray()[0]
    assert x.tolist() == [1.0, 1.0, 1.0]
    assert br.extract_ngrams([], vocab).nnz == 0
    assert br.extract_ngrams(["a", "b", "a", "b"], vocab).toarray()[0].tolist() == [1.0, 1.0, 1.0]


def test_trigram_count():
    grams = br.ngrams(list("abcde"), 3)
    assert sum(g.count("_") == 2 for g in grams) == 3
    assert len(grams) == 5 + 4 + 3


def _report(rid, text, code, r4v=""):
    if code is None:
        return Report(rid, text, r4v, [], [])
    return Report(rid, text, r4v, [Annotation(0, 1, c) for c in code], list(code))


def test_report_ngrams_stay_inside_sentences():
    r = _report("x", "Alpha beta. Gamma delta.", None, "why here")
    g = br.report_ngrams(r)
    assert "beta_._gamma" not in g and "._gamma" not in g
    assert "alpha_beta" in g and "r4v:why_here" in g
    assert not any(x.startswith("r4v:") for x in br.report_ngrams(r, include_r4v=False))


def _separable():
    reports = []
    for i in range(40):
        pos = i % 2 == 0
        text = ("Marker seen in cells." if pos else "Nothing seen in cells.") + f" Case {i}."
        reports.append(_report(f"d{i}", text, ["A"] if pos else ["B"]))
    return Corpus(reports)


def test_separable_reaches_full_train_accuracy():
    c = _separable()
    model = br.train_br(c, LabelSpace(["A", "B"]))
    preds = model.predict(c.reports)
    assert [set(p) for p in preds] == [set(r.codes) for r in c.reports]


def test_labels_train_independently():
    c = _separable()
    space = LabelSpace(["A", "B", "C"])
    flipped = Corpus([_report(r.id, r.text, r.codes + (["C"] if j % 3 == 0 else [])) for j, r in enumerate(c)])
    flipped2 = Corpus([_report(r.id, r.text, r.codes + (["C"] if j % 5 == 0 else [])) for j, r in enumerate(c)])
    m1 = br.train_br(flipped, space)
    m2 = br.train_br(flipped2, space)
    assert np.array_equal(m1.W[:2], m2.W[:2]) and np.array_equal(m1.b[:2], m2.b[:2])
    assert not np.array_equal(m1.W[2], m2.W[2])


def test_absent_label_never_predicted(caplog):
    model = br.train_br(_separable(), LabelSpace(["A", "B", "Z"]))
    assert "Z" in caplog.text
    assert all("Z" not in p for p in model.predict(_separable().reports))


def test_threshold_boundary_and_bias_only():
    vocab = br.NgramVocabulary(["a"])
    space = LabelSpace(["A", "B"])
    model = br.BrModel(vocab, space, np.zeros((2, 1)), np.zeros(2))
    x = br.extract_ngrams(["a"], vocab)
    assert model.decide(x).tolist() == [[True, True]]
    model = br.BrModel(vocab, space, np.array([[5.0], [-5.0]]), np.array([-0.1, 0.2]))
    empty = br.extract_ngrams([], vocab)
    assert model.decide(empty).tolist() == [[False, True]]


def test_hand_set_weights():
    vocab = br.NgramVocabulary(["a", "b", "a_b"])
    W = np.array([[1.0, -2.0, 0.5], [-0.3, 0.2, 0.0]])
    b = np.array([0.1, -0.05])
    model = br.BrModel(vocab, LabelSpace(["A", "B"]), W, b)
    x = br.extract_ngrams(["a", "b"], vocab)
    za = 1.0 - 2.0 + 0.5 + 0.1
    zb = -0.3 + 0.2 - 0.05
    assert np.allclose(model.scores(x)[0], [expit(za), expit(zb)])
    assert model.decide(x)[0].tolist() == [za >= 0, zb >= 0]


def test_save_load_round_trip(tmp_path):
    c = _separable()
    model = br.train_br(c, LabelSpace(["A", "B"]))
    model.save(tmp_path / "m.ckpt")
    back = br.BrModel.load(tmp_path / "m.ckpt")
    assert back.predict(c.reports) == model.predict(c.reports)
    assert np.array_equal(back.W, model.W)
    model.save(tmp_path / "n.ckpt")
    assert (tmp_path / "m.ckpt").read_bytes() == (tmp_path / "n.ckpt").read_bytes()


def test_config_validation():
    with pytest.raises(ConfigError):
        br.BrConfig(ngram_max=0)
    with pytest.raises(ConfigError):
        br.train_br(Corpus([]), LabelSpace(["A"]))
