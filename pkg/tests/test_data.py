import json
import logging
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from focuscode import data
from focuscode.data import Annotation, Corpus, Report
from focuscode.errors import ConfigError, DataError, InvalidArgument, ParseError
from focuscode.synthetic import SyntheticConfig, build_lexicon, gen_synthetic, synthetic_embeddings


def _ann(text, phrase, code, start=0):
    i = text.index(phrase, start)
    return Annotation(i, i + len(phrase), code)


def _report(rid, text, spans, r4v=""):
    anns = sorted(_ann(text, p, c) for p, c in spans)
    return Report(rid, text, r4v, anns, sorted({a.code for a in anns}))


# -- worked example rows ----------------------------------------------------

def worked_example_corpus():
    t1 = "Specimen received.\n\nLung adenocarcinoma metastatic to lymph node"
    t2 = "Cervix biopsy. Transformation zone with chronic inflammation. Negative for dysplasia."
    return Corpus([
        _report("r1", t1, [("Lung adenocarcinoma", "C34.90")], "Molecular test for MET"),
        _report("r2", t2, [("chronic inflammation", "N72")], "Cervix biopsy - endocervix curettage"),
    ])


def test_worked_example_rows_reproduce():
    recs = data.build_classifier_dataset(worked_example_corpus())
    assert [(r.tokens, r.alpha, r.r4v, r.label) for r in recs] == [
        (["lung", "adenocarcinoma", "metastatic", "to", "lymph", "node"], [1, 1, 0, 0, 0, 0],
         ["molecular", "test", "for", "met"], "C34.90"),
        (["transformation", "zone", "with", "chronic", "inflammation", "."], [0, 0, 0, 1, 1, 0],
         ["cervix", "biopsy", "-", "endocervix", "curettage"], "N72"),
    ]
    assert [r.id for r in recs] == ["r1#1", "r2#1"]


# -- corpus I/O --------------------------------------------------------------

def test_empty_file(tmp_path):
    (tmp_path / "c.jsonl").write_text("")
    assert len(data.load_corpus(tmp_path / "c.jsonl")) == 0


def test_round_trip(tmp_path):
    c = worked_example_corpus()
    data.save_corpus(c, tmp_path / "c.jsonl")
    back = data.load_corpus(tmp_path / "c.jsonl")
    assert [r.to_json() for r in back] == [r.to_json() for r in c]
    data.save_corpus(back, tmp_path / "d.jsonl")
    assert (tmp_path / "c.jsonl").read_bytes() == (tmp_path / "d.jsonl").read_bytes()


def test_inverted_span_rejected(tmp_path):
    row = {"schema_version": 1, "id": "x", "text": "0123456789abc", "r4v": "",
           "annotations": [{"start": 10, "end": 5, "code": "A"}], "codes": ["A"]}
    (tmp_path / "c.jsonl").write_text(json.dumps(row) + "\n")
    with pytest.raises(DataError, match="x"):
        data.load_corpus(tmp_path / "c.jsonl")


def test_malformed_line_number(tmp_path):
    good = json.dumps(worked_example_corpus().reports[0].to_json())
    (tmp_path / "c.jsonl").write_text(good + "\n{oops\n")
    with pytest.raises(ParseError) as exc:
        data.load_corpus(tmp_path / "c.jsonl")
    assert exc.value.line == 2


def test_schema_version_required(tmp_path):
    row = worked_example_corpus().reports[0].to_json()
    del row["schema_version"]
    (tmp_path / "c.jsonl").write_text(json.dumps(row) + "\n")
    with pytest.raises(ParseError):
        data.load_corpus(tmp_path / "c.jsonl")


def test_validation_duplicate_ids_and_codeset():
    r = worked_example_corpus().reports[0]
    with pytest.raises(DataError, match="duplicate"):
        data.validate_corpus(Corpus([r, r]))
    bad = Report("b", r.text, "", r.annotations, ["OTHER"])
    with pytest.raises(DataError, match="codeset"):
        data.validate_corpus(Corpus([bad]))


# -- split -------------------------------------------------------------------

def _plain_corpus(n):
    return Corpus([Report(f"d{i}", "Text.", "", [], []) for i in range(n)])


def test_split_sizes_and_determinism():
    c = _plain_corpus(100)
    a = data.split(c, (0.7, 0.15, 0.15), seed=3)
    assert [len(p) for p in a] == [70, 15, 15]
    b = data.split(c, (0.7, 0.15, 0.15), seed=3)
    assert [[r.id for r in p] for p in a] == [[r.id for r in p] for p in b]


def test_split_seeds_differ():
    c = _plain_corpus(100)
    firsts = {tuple(r.id for r in data.split(c, seed=s)[0]) for s in range(5)}
    assert len(firsts) == 5


def test_split_bad_ratios():
    with pytest.raises(InvalidArgument):
        data.split(_plain_corpus(10), (0.5, 0.2, 0.2))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 60), st.integers(0, 10_000))
def test_split_disjoint_exhaustive(n, seed):
    c = _plain_corpus(n)
    parts = data.split(c, seed=seed)
    ids = [r.id for p in parts for r in p]
    assert sorted(ids) == sorted(r.id for r in c)
    assert len(ids) == len(set(ids))


# -- label filtering ---------------------------------------------------------

def _coded_corpus(counts):
    reports, i = [], 0
    for code, n in counts.items():
        for _ in range(n):
            text = "Finding here."
            reports.append(Report(f"d{i}", text, "", [Annotation(0, 7, code)], [code]))
            i += 1
    return Corpus(reports)


def test_min_count_one_is_identity():
    c = _coded_corpus({"A": 1, "B": 3})
    space, dropped = data.filter_labels(c, 1)
    assert list(space) == ["A", "B"] and dropped == {}


def test_min_count_ten_threshold():
    c = _coded_corpus({"A": 10, "B": 9, "C": 25})
    space, dropped = data.filter_labels(c, 10)
    assert list(space) == ["A", "C"]
    assert dropped == {"B": 9}


def test_restrict_removes_codes_and_empty_reports():
    text = "Alpha here. Beta there."
    mixed = Report("m", text, "", [_ann(text, "Alpha", "A"), _ann(text, "Beta", "B")], ["A", "B"])
    only_b = Report("b", text, "", [_ann(text, "Beta", "B")], ["B"])
    kept, excluded = data.restrict(Corpus([mixed, only_b]), data.LabelSpace(["A"]))
    assert excluded == ["b"]
    assert kept.reports[0].codes == ["A"]
    assert [a.code for a in kept.reports[0].annotations] == ["A"]
    assert data.focus_labels(kept.reports[0]) == [1, 0]


def test_filter_on_synthetic_counts():
    cfg = SyntheticConfig(n_reports=300, seed=4)
    c = gen_synthetic(cfg)
    counts = Counter(code for r in c for code in set(r.codes))
    space, dropped = data.filter_labels(c, 30)
    assert list(space) == sorted(k for k, n in counts.items() if n >= 30)
    assert dropped == {k: n for k, n in sorted(counts.items()) if n < 30}


# -- focus labels ------------------------------------------------------------

def test_focus_one_annotation():
    text = "One here. Two here. Three here. Four here."
    r = _report("x", text, [("Two", "A")])
    assert data.focus_labels(r) == [0, 1, 0, 0]


def test_focus_straddling_annotation(caplog):
    text = "One here. Two here. Three here."
    r = Report("x", text, "", [Annotation(4, 13, "A")], ["A"])
    with caplog.at_level(logging.WARNING):
        assert data.focus_labels(r) == [1, 1, 0]
    assert "spans sentences" in caplog.text


def test_focus_no_annotations():
    r = Report("x", "One. Two.", "", [], [])
    ex = data.build_tagger_dataset(Corpus([r]))
    assert ex[0].labels == [0, 0]


# -- classifier records ------------------------------------------------------

def test_multi_code_sentence_excluded():
    text = "Alpha and beta together. Gamma alone."
    r = _report("x", text, [("Alpha", "A"), ("beta", "B"), ("Gamma", "C")])
    recs = data.build_classifier_dataset(Corpus([r]))
    assert [(x.sentence_index, x.label) for x in recs] == [(1, "C")]
    assert data.build_tagger_dataset(Corpus([r]))[0].labels == [1, 1]


def test_alpha_overlap_six_tokens():
    text = "Aa bb-cc dd ee ff"
    r = Report("x", text, "", [Annotation(3, 6, "A"), Annotation(15, 17, "A")], ["A"])
    rec = data.build_classifier_dataset(Corpus([r]))[0]
    assert rec.tokens == ["aa", "bb", "-", "cc", "dd", "ee", "ff"]
    # "bb-" covers bb and the hyphen; "ff" is the last token
    assert rec.alpha == [0, 1, 1, 0, 0, 0, 1]


def test_alpha_constructed_six_tokens():
    text = "left lung upper lobe mass noted"
    r = Report("x", text, "", [_ann(text, "lung upper", "C34.10")], ["C34.10"])
    rec = data.build_classifier_dataset(Corpus([r]))[0]
    assert len(rec.tokens) == 6
    assert rec.alpha == [0, 1, 1, 0, 0, 0]


# -- synthetic generator -----------------------------------------------------

@pytest.fixture(scope="module")
def syn():
    cfg = SyntheticConfig(n_reports=2000, seed=0)
    return cfg, gen_synthetic(cfg)


def test_synthetic_annotation_text_is_a_trigger(syn):
    cfg, corpus = syn
    lex = build_lexicon(cfg)
    for r in corpus:
        for a in r.annotations:
            assert tuple(r.text[a.start:a.end].lower().split()) in lex.triggers[a.code]


def test_synthetic_invariants(syn):
    cfg, corpus = syn
    data.validate_corpus(corpus)
    for r in corpus.reports[:300]:
        labels = data.focus_labels(r)
        assert cfg.focus_per_report[0] <= sum(labels) <= cfg.focus_per_report[1]
        assert cfg.sentences_per_report[0] <= len(labels) <= cfg.sentences_per_report[1]
    recs = data.build_classifier_dataset(corpus.subset(corpus.reports[:300]))
    assert all(any(r.alpha) for r in recs)


def test_synthetic_codeset_sizes_skew_small(syn):
    _, corpus = syn
    hist = Counter(len(r.codes) for r in corpus)
    assert set(hist) <= {1, 2, 3}
    assert hist[1] > hist[2] > hist[3] > 0
    assert hist[1] / len(corpus) > 0.5


def test_synthetic_deterministic(tmp_path):
    cfg = SyntheticConfig(n_reports=50, seed=9)
    data.save_corpus(gen_synthetic(cfg), tmp_path / "a.jsonl")
    data.save_corpus(gen_synthetic(cfg), tmp_path / "b.jsonl")
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    assert synthetic_embeddings(cfg).content_hash() == synthetic_embeddings(cfg).content_hash()


def test_synthetic_trigger_collision():
    cfg = SyntheticConfig(n_labels=2, triggers={"A": ["aa bb"], "B": ["aa bb"]})
    with pytest.raises(ConfigError, match="trigger collision"):
        cfg.validate()


def test_synthetic_explicit_triggers():
    cfg = SyntheticConfig(n_labels=3, n_reports=20, synonym_pairs=0, focus_per_report=(1, 2),
                          triggers={"A": ["aa bb"], "B": ["cc dd"], "C": ["ee ff"]})
    corpus = gen_synthetic(cfg)
    phrases = {r.text[a.start:a.end].lower() for r in corpus for a in r.annotations}
    assert phrases <= {"aa bb", "cc dd", "ee ff"}


def test_synthetic_r4v_label_token_rate(syn):
    cfg, corpus = syn
    lex = build_lexicon(cfg)
    hits = [lex.r4v_token[c] in r.r4v.split() for r in corpus for c in r.codes]
    assert abs(np.mean(hits) - cfg.r4v_label_prob * (1 - cfg.noise_rate)) < 0.04
