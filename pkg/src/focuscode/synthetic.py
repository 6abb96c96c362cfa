"""Synthetic pathology-style corpus with planted trigger phrases.

Each focus sentence carries one label's trigger bigram among filler words
and is annotated at the bigram. On top of that, two mechanisms make the
benchmark discriminate between model designs:

* distractor sentences: a cue word (think "history of") opens an otherwise
  ordinary sentence that also mentions some label's trigger. It is not
  annotated, so the trigger is present but not codable for this visit.
* synonym pairs: two labels whose trigger words share one embedding vector
  in the companion embedding table (like laterality variants). Only the
  reason-for-visit token tells them apart.
* secondary mentions: a focus sentence goes on to mention a second concept
  after a connector word ("... metastatic to lymph node"). Only the first
  concept is annotated and coded for that sentence. When the report carries
  other codes, the second concept is one of them, so the reason-for-visit
  text cannot settle which concept the sentence is coded for.

Each can be switched off (``distractor_rate=0``, ``synonym_pairs=0``,
``secondary_rate=0``).
"""

from __future__ import annotations

import dataclasses
import string
from dataclasses import dataclass, field

import numpy as np

from .data import Annotation, Corpus, Report
from .errors import ConfigError
from .text import EmbeddingTable, tokens

_CONSONANTS = "bdfgklmnprstvz"
_VOWELS = "aeiou"


@dataclass
class SyntheticConfig:
    vocab_size: int = 200
    n_labels: int = 12
    triggers_per_label: int = 2
    sentences_per_report: tuple = (3, 10)
    focus_per_report: tuple = (1, 3)
    n_reports: int = 2800
    noise_rate: float = 0.05
    seed: int = 0
    sentence_length: tuple = (5, 12)
    r4v_label_prob: float = 0.8
    distractor_rate: float = 0.25
    synonym_pairs: int = 2
    secondary_rate: float = 0.3
    embedding_dim: int = 64
    # optional explicit triggers: {code: ["word word", ...]}
    triggers: dict | None = None

    def validate(self) -> None:
        def rng_ok(r, lo):
            return len(r) == 2 and lo <= r[0] <= r[1]

        if self.triggers is not None:
            _check_explicit_triggers(self.triggers, self.n_labels)
        if self.n_labels < 2:
            raise ConfigError("n_labels must be >= 2")
        if self.triggers_per_label < 1:
            raise ConfigError("triggers_per_label must be >= 1")
        if not rng_ok(self.sentences_per_report, 1):
            raise ConfigError(f"invalid sentences_per_report {self.sentences_per_report}")
        if not rng_ok(self.focus_per_report, 1) or self.focus_per_report[1] > self.sentences_per_report[0]:
            raise ConfigError(f"invalid focus_per_report {self.focus_per_report}")
        if not rng_ok(self.sentence_length, 5):
            raise ConfigError("sentence_length must be a range with minimum >= 5")
        if self.n_reports < 0:
            raise ConfigError("n_reports must be >= 0")
        for name in ("noise_rate", "r4v_label_prob", "distractor_rate", "secondary_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1]")
        if self.synonym_pairs < 0 or 2 * self.synonym_pairs > self.n_labels:
            raise ConfigError("synonym_pairs must be between 0 and n_labels // 2")
        if self.n_labels - self.synonym_pairs <= self.focus_per_report[1]:
            raise ConfigError("too few labels for the requested focus count")
        if self.embedding_dim < 1:
            raise ConfigError("embedding_dim must be >= 1")
        if self.vocab_size - self._reserved() < 20:
            raise ConfigError(f"vocab_size {self.vocab_size} leaves fewer than 20 filler words")

    def _reserved(self) -> int:
        trig = 2 * self.n_labels * self.triggers_per_label if self.triggers is None else \
            len({w for bigrams in self.triggers.values() for b in bigrams for w in tokens(b)})
        return (trig + self.n_labels + _N_GENERIC + (_N_CUES if self.distractor_rate > 0 else 0)
                + (_N_CONNECTORS if self.secondary_rate > 0 else 0))

    def to_json(self) -> dict:
        d = dataclasses.asdict(self)
        for k in ("sentences_per_report", "focus_per_report", "sentence_length"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_json(cls, obj: dict) -> "SyntheticConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(obj) - names - {"schema_version"}
        if unknown:
            raise ConfigError(f"unknown synthetic config keys: {sorted(unknown)}")
        kw = {k: v for k, v in obj.items() if k in names}
        for k in ("sentences_per_report", "focus_per_report", "sentence_length"):
            if k in kw:
                kw[k] = tuple(kw[k])
        return cls(**kw)


_N_GENERIC = 6
_N_CUES = 4
_N_CONNECTORS = 3


def _check_explicit_triggers(triggers: dict, n_labels: int) -> None:
    if len(triggers) != n_labels:
        raise ConfigError(f"triggers given for {len(triggers)} labels, n_labels is {n_labels}")
    owner = {}
    for code, bigrams in triggers.items():
        for b in bigrams:
            toks = tokens(b)
            if len(toks) != 2 or " ".join(toks) != b:
                raise ConfigError(f"trigger {b!r} for {code} must be two lowercase words")
            if b in owner and owner[b] != code:
                raise ConfigError(f"trigger collision: {b!r} assigned to {owner[b]} and {code}")
            owner[b] = code


def _pseudo_words(rng, n: int, taken: set) -> list[str]:
    out = []
    while len(out) < n:
        k = int(rng.integers(2, 4))
        w = "".join(rng.choice(list(_CONSONANTS)) + rng.choice(list(_VOWELS)) for _ in range(k))
        if w not in taken:
            taken.add(w)
            out.append(w)
    return out


def _codes(rng, n: int) -> list[str]:
    seen, out = set(), []
    letters = string.ascii_uppercase
    while len(out) < n:
        c = f"{letters[int(rng.integers(0, 26))]}{int(rng.integers(0, 100)):02d}.{int(rng.integers(0, 10))}"
        if c not in seen:
            seen.add(c)
            out.append(c)
    return out


@dataclass
class Lexicon:
    codes: list[str]
    triggers: dict            # code -> list of (w1, w2)
    r4v_token: dict           # code -> word
    generic: list[str]
    cues: list[str]
    filler: list[str]
    siblings: dict = field(default_factory=dict)  # code -> sibling code
    connectors: list[str] = field(default_factory=list)

    def trigger_words(self):
        return [w for code in self.codes for pair in self.triggers[code] for w in pair]


def build_lexicon(cfg: SyntheticConfig) -> Lexicon:
    cfg.validate()
    rng = np.random.default_rng([cfg.seed, 0])
    taken: set = set()
    if cfg.triggers is None:
        codes = _codes(rng, cfg.n_labels)
        words = _pseudo_words(rng, 2 * cfg.n_labels * cfg.triggers_per_label, taken)
        it = iter(words)
        triggers = {c: [(next(it), next(it)) for _ in range(cfg.triggers_per_label)] for c in codes}
    else:
        codes = list(cfg.triggers)
        triggers = {c: [tuple(tokens(b)) for b in cfg.triggers[c]] for c in codes}
        taken.update(w for c in codes for p in triggers[c] for w in p)
    r4v = dict(zip(codes, _pseudo_words(rng, len(codes), taken)))
    generic = _pseudo_words(rng, _N_GENERIC, taken)
    cues = _pseudo_words(rng, _N_CUES, taken) if cfg.distractor_rate > 0 else []
    connectors = _pseudo_words(rng, _N_CONNECTORS, taken) if cfg.secondary_rate > 0 else []
    filler = _pseudo_words(rng, cfg.vocab_size - len(taken), taken)
    siblings = {}
    for k in range(cfg.synonym_pairs):
        a, b = codes[2 * k], codes[2 * k + 1]
        siblings[a], siblings[b] = b, a
    return Lexicon(codes, triggers, r4v, generic, cues, filler, siblings, connectors)


def _sentence(words: list[str]) -> str:
    return words[0][0].upper() + words[0][1:] + "".join(" " + w for w in words[1:]) + "."


def gen_synthetic(cfg: SyntheticConfig) -> Corpus:
    lex = build_lexicon(cfg)
    rng = np.random.default_rng([cfg.seed, 1])
    lo_f, hi_f = cfg.focus_per_report
    k_values = np.arange(lo_f, hi_f + 1)
    k_weights = 0.45 ** (k_values - lo_f)
    k_weights = k_weights / k_weights.sum()
    reports = []
    width = len(str(max(cfg.n_reports - 1, 0)))
    for n in range(cfg.n_reports):
        n_sent = int(rng.integers(cfg.sentences_per_report[0], cfg.sentences_per_report[1] + 1))
        k = int(rng.choice(k_values, p=k_weights))
        labels: list[str] = []
        for code in rng.permutation(lex.codes):
            if len(labels) == k:
                break
            if lex.siblings.get(code) in labels:
                continue
            labels.append(str(code))
        slots = rng.permutation(n_sent)
        focus = {int(s): labels[j] for j, s in enumerate(slots[:k])}
        distractor = None
        if n_sent > k and rng.random() < cfg.distractor_rate:
            others = [c for c in lex.codes if c not in labels]
            distractor = (int(slots[k]), others[int(rng.integers(len(others)))])

        pieces, anns = [], []
        pos = 0
        for i in range(n_sent):
            length = int(rng.integers(cfg.sentence_length[0], cfg.sentence_length[1] + 1))
            words = [lex.filler[int(j)] for j in rng.integers(0, len(lex.filler), size=length)]
            hit = None
            if i in focus:
                code = focus[i]
                pair = lex.triggers[code][int(rng.integers(len(lex.triggers[code])))]
                at = int(rng.integers(1, length - 1))
                words[at:at + 2] = list(pair)
                hit = (code, at)
                if rng.random() < cfg.secondary_rate:
                    pool = [c for c in labels if c != code] or \
                        [c for c in lex.codes if c != code and c != lex.siblings.get(code)]
                    other = pool[int(rng.integers(len(pool)))]
                    second = lex.triggers[other][int(rng.integers(len(lex.triggers[other])))]
                    conn = lex.connectors[int(rng.integers(len(lex.connectors)))]
                    words[at + 2:at + 2] = [conn, *second]
            elif distractor is not None and i == distractor[0]:
                code = distractor[1]
                pair = lex.triggers[code][int(rng.integers(len(lex.triggers[code])))]
                words[0] = lex.cues[int(rng.integers(len(lex.cues)))]
                at = int(rng.integers(3, length - 1))
                words[at:at + 2] = list(pair)
            sent = _sentence(words)
            if hit is not None:
                code, at = hit
                start = pos + sum(len(w) + 1 for w in words[:at])
                end = start + len(words[at]) + 1 + len(words[at + 1])
                anns.append(Annotation(start, end, code))
            pieces.append(sent)
            pos += len(sent) + 1
        text = " ".join(pieces)

        r4v_words = [lex.generic[int(j)] for j in rng.choice(len(lex.generic), size=2, replace=False)]
        for code in labels:
            if rng.random() < cfg.r4v_label_prob:
                if rng.random() < cfg.noise_rate:
                    code = lex.codes[int(rng.integers(len(lex.codes)))]
                r4v_words.append(lex.r4v_token[code])
        r4v_words = [r4v_words[int(j)] for j in rng.permutation(len(r4v_words))]
        reports.append(Report(f"syn{n:0{width}d}", text, " ".join(r4v_words),
                              sorted(anns), sorted(labels)))
    return Corpus(reports, {"generator": "synthetic", "config": cfg.to_json()})


def synthetic_embeddings(cfg: SyntheticConfig) -> EmbeddingTable:
    """Companion embedding table: one cluster per word category, with the
    trigger words of each synonym pair sharing vectors."""
    lex = build_lexicon(cfg)
    rng = np.random.default_rng([cfg.seed, 2])
    d = cfg.embedding_dim
    cats = {
        "filler": lex.filler,
        "trigger": lex.trigger_words(),
        "r4v": [lex.r4v_token[c] for c in lex.codes],
        "generic": lex.generic,
        "cue": lex.cues,
        "connector": lex.connectors,
    }
    vectors = {}
    for name, words in cats.items():
        centroid = rng.normal(0.0, 2.0 / np.sqrt(d), size=d)
        for w in words:
            vectors[w] = centroid + rng.normal(0.0, 1.0 / np.sqrt(d), size=d)
    done = set()
    for a, b in lex.siblings.items():
        if (b, a) in done:
            continue
        done.add((a, b))
        for pa, pb in zip(lex.triggers[a], lex.triggers[b]):
            for wa, wb in zip(pa, pb):
                vectors[wb] = vectors[wa]
    words = sorted(vectors)
    return EmbeddingTable.from_dict({w: vectors[w] for w in words}, dim=d)
