"""Command-line interface.

Exit codes: 0 success, 1 runtime or data error, 2 configuration error.
Relative output paths are placed under ``$FOCUSCODE_OUTPUT_DIR`` when set.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__, data
from .errors import ConfigError, DataError, FocusCodeError, InvalidArgument, ParseError

log = logging.getLogger("focuscode")

CONFIG_SCHEMA_VERSION = 1
DEFAULT_CONFIG = {
    "schema_version": CONFIG_SCHEMA_VERSION,
    "seed": 0,
    "split": {"ratios": [0.7, 0.15, 0.15], "min_count": 10},
    "tagger": {"hidden": 256, "epochs": 100, "batch_size": 32, "lr": 1e-3, "class_weights": None},
    "classifier": {"variant": "supervised", "use_r4v": True, "lam": 100.0, "hidden": 256,
                   "attention": 128, "epochs": 30, "batch_size": 32, "lr": 1e-3,
                   "normalize_target": False, "max_tokens": 128},
    "baseline": {"ngram_max": 3, "min_df": 2, "l2": 1e-4, "include_r4v": True},
}


# -- config ------------------------------------------------------------------

def load_config(path) -> dict:
    """Defaults overlaid with a JSON file (sections merge key by key)."""
    cfg = json.loads(json.dumps(DEFAULT_CONFIG))
    if path is None:
        return cfg
    try:
        with open(path, encoding="utf-8") as fh:
            user = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(user, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    if user.get("schema_version") != CONFIG_SCHEMA_VERSION:
        raise ConfigError(f"{path}: schema_version must be {CONFIG_SCHEMA_VERSION}")
    for key, value in user.items():
        if key not in cfg and key != "synthetic":
            raise ConfigError(f"{path}: unknown config key {key!r}")
        if isinstance(cfg.get(key), dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{path}: {key!r} must be an object")
            unknown = set(value) - set(cfg[key])
            if unknown:
                raise ConfigError(f"{path}: unknown keys in {key!r}: {sorted(unknown)}")
            cfg[key].update(value)
        else:
            cfg[key] = value
    return cfg


def output_path(path: str | None, default_name: str) -> Path:
    p = Path(path) if path else Path(default_name)
    base = os.environ.get("FOCUSCODE_OUTPUT_DIR")
    if base and not p.is_absolute():
        p = Path(base) / p
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def sidecar(path: Path, suffix: str) -> Path:
    return path.with_name(path.name + suffix)


# -- commands ----------------------------------------------------------------

def cmd_gen_synthetic(args) -> int:
    from .synthetic import SyntheticConfig, gen_synthetic, synthetic_embeddings
    from .text import save_embeddings

    raw = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        raw = raw.get("synthetic", raw)
    cfg = SyntheticConfig.from_json(raw)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.n_reports is not None:
        cfg.n_reports = args.n_reports
    cfg.validate()
    corpus = gen_synthetic(cfg)
    out = output_path(args.out, "synthetic.jsonl")
    data.save_corpus(corpus, out)
    emb = output_path(args.embeddings, "") if args.embeddings else out.with_suffix(".emb.txt")
    save_embeddings(synthetic_embeddings(cfg), emb)
    write_json(sidecar(out, ".config.json"), {"schema_version": CONFIG_SCHEMA_VERSION,
                                              "synthetic": cfg.to_json()})
    counts = data.label_counts(corpus)
    n_sent = sum(len(r.sentences) for r in corpus.reports)
    n_focus = sum(sum(data.focus_labels(r)) for r in corpus.reports)
    print(f"wrote {len(corpus)} reports to {out}")
    print(f"embeddings: {emb}")
    print(f"sentences: {n_sent} ({n_focus} focus); labels: {len(counts)}; "
          f"codes per report: {sum(len(r.codes) for r in corpus.reports) / max(len(corpus), 1):.2f}")
    return 0


def cmd_split(args) -> int:
    cfg = load_config(args.config)
    if args.ratios:
        cfg["split"]["ratios"] = [float(x) for x in args.ratios.split(",")]
    if args.min_count is not None:
        cfg["split"]["min_count"] = args.min_count
    if args.seed is not None:
        cfg["seed"] = args.seed
    corpus = data.load_corpus(args.corpus)
    try:
        parts = data.split(corpus, tuple(cfg["split"]["ratios"]), seed=cfg["seed"])
    except InvalidArgument as exc:
        raise ConfigError(str(exc)) from None
    space, dropped = data.filter_labels(parts[0], cfg["split"]["min_count"])
    out_dir = output_path(args.out_dir, "splits")
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = {"labels": list(space.codes), "dropped_labels": dropped, "excluded_reports": {}}
    for name, part in zip(("train", "validation", "test"), parts):
        kept, excluded = data.restrict(part, space)
        data.save_corpus(kept, out_dir / f"{name}.jsonl")
        summary["excluded_reports"][name] = excluded
        summary[f"n_{name}"] = len(kept)
        print(f"{name}: {len(kept)} reports ({len(excluded)} excluded)")
    summary["config"] = cfg
    write_json(out_dir / "split.json", summary)
    print(f"label space: {len(space)} codes ({len(dropped)} dropped below min count)")
    return 0


def _load_table(path):
    from .text import load_embeddings

    if not path:
        raise ConfigError("--embeddings is required")
    return load_embeddings(path)


def _load_split(path, label):
    if not path:
        return data.Corpus([])
    corpus = data.load_corpus(path)
    log.info("%s: %d reports from %s", label, len(corpus), path)
    return corpus


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    train = _load_split(args.train, "train")
    validation = _load_split(args.validation, "validation")
    if not len(train):
        raise DataError("training corpus is empty")
    out = output_path(args.out, f"{args.level}.ckpt")
    if args.level == "tagger":
        return _train_tagger(args, cfg, train, validation, out)
    if args.level == "classifier":
        return _train_classifier(args, cfg, train, validation, out)
    return _train_baseline(args, cfg, train, validation, out)


def _train_tagger(args, cfg, train, validation, out) -> int:
    from .tagger import TaggerConfig, train_tagger

    sec = cfg["tagger"]
    if args.epochs is not None:
        sec["epochs"] = args.epochs
    if not any(r.annotations for r in train.reports):
        raise DataError("training corpus has no gold annotations; the tagger needs focus labels")
    table = _load_table(args.embeddings)
    weights = sec.get("class_weights")
    tcfg = TaggerConfig(hidden=sec["hidden"], epochs=sec["epochs"], batch_size=sec["batch_size"],
                        lr=sec["lr"], seed=cfg["seed"],
                        class_weights=tuple(weights) if weights else None)
    tr, va = data.build_tagger_dataset(train), data.build_tagger_dataset(validation)
    res = train_tagger(tr, va, table, tcfg)
    res.model.save(out)
    report = {"train": res.model.evaluate(tr), "validation": res.model.evaluate(va) if va else None,
              "best_epoch": res.best_epoch, "trace": res.trace, "config": cfg,
              "resolved": res.model.config.to_json()}
    write_json(sidecar(out, ".metrics.json"), report)
    if va:
        print(f"validation macro-F1: {report['validation']['macro']['f1']:.4f} (epoch {res.best_epoch})")
    print(f"checkpoint: {out}")
    return 0


def _classifier_config(args, cfg):
    from .icdclf import ClassifierConfig

    sec = cfg["classifier"]
    if args.variant:
        sec["variant"] = args.variant
    if args.no_r4v:
        sec["use_r4v"] = False
    if args.lam is not None:
        sec["lam"] = args.lam
    if args.epochs is not None:
        sec["epochs"] = args.epochs
    return ClassifierConfig(seed=cfg["seed"], **sec)


def _train_classifier(args, cfg, train, validation, out) -> int:
    from .icdclf import train_classifier

    ccfg = _classifier_config(args, cfg)
    table = _load_table(args.embeddings)
    space, dropped = data.filter_labels(train, cfg["split"]["min_count"])
    if len(space) < 2:
        raise DataError(f"only {len(space)} codes reach the minimum count of {cfg['split']['min_count']}")
    train, _ = data.restrict(train, space)
    validation, _ = data.restrict(validation, space)
    tr, va = data.build_classifier_dataset(train), data.build_classifier_dataset(validation)
    if not tr:
        raise DataError("no single-code annotated focus sentences in the training corpus")
    lams = [ccfg.lam] if not args.lambda_sweep else _parse_floats(args.lambda_sweep, "--lambda-sweep")
    sweep = []
    for lam in lams:
        c = _replace(ccfg, lam=lam)
        target = out if len(lams) == 1 else out.with_name(f"{out.stem}.lambda-{lam:g}{out.suffix}")
        res = train_classifier(tr, va, space, table, c)
        res.model.save(target)
        report = {"train": res.model.evaluate(tr), "validation": res.model.evaluate(va) if va else None,
                  "best_epoch": res.best_epoch, "trace": res.trace, "config": cfg,
                  "resolved": c.to_json(), "dropped_labels": dropped}
        write_json(sidecar(target, ".metrics.json"), report)
        acc = report["validation"]["accuracy"] if va else float("nan")
        sweep.append({"lambda": lam, "validation_accuracy": acc, "checkpoint": str(target)})
        print(f"lambda={lam:g} validation accuracy: {acc:.4f} (epoch {res.best_epoch}) -> {target}")
    if len(lams) > 1:
        write_json(sidecar(out, ".sweep.json"), sweep)
    return 0


def _train_baseline(args, cfg, train, validation, out) -> int:
    from .baseline_br import BrConfig, train_br

    sec = dict(cfg["baseline"])
    if args.no_r4v:
        sec["include_r4v"] = False
    bcfg = BrConfig(seed=cfg["seed"], **sec)
    space, dropped = data.filter_labels(train, cfg["split"]["min_count"])
    train, _ = data.restrict(train, space)
    model = train_br(train, space, bcfg)
    model.save(out)
    from . import metrics

    def score(corpus):
        preds = model.predict(corpus.reports)
        return metrics.multilabel_report([(p, r.codes) for p, r in zip(preds, corpus.reports)])

    report = {"train": score(train), "config": cfg, "dropped_labels": dropped}
    if len(validation):
        validation, _ = data.restrict(validation, space)
        report["validation"] = score(validation)
        print(f"validation subset accuracy: {report['validation']['subset_accuracy']:.4f}")
    write_json(sidecar(out, ".metrics.json"), report)
    print(f"checkpoint: {out}")
    return 0


def _replace(c, **kw):
    import dataclasses

    return dataclasses.replace(c, **kw)


def _parse_floats(text, flag):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"{flag} expects comma-separated numbers, got {text!r}") from None


def cmd_predict(args) -> int:
    from . import pipeline
    from .baseline_br import BrModel
    from .icdclf import IcdClassifier
    from .tagger import SentenceTagger

    corpus = data.load_corpus(args.corpus)
    out = output_path(args.out, "predictions.jsonl")
    if args.baseline:
        model = BrModel.load(args.baseline)
        rows = [{"id": r.id, "codes": codes} for r, codes in zip(corpus.reports, model.predict(corpus.reports))]
        _write_rows(out, rows)
        print(f"wrote {len(rows)} predictions to {out}")
        return 0
    table = _load_table(args.embeddings)
    if not args.classifier:
        raise ConfigError("--classifier is required")
    classifier = IcdClassifier.load(args.classifier, table)
    if args.records:
        records = data.build_classifier_dataset(corpus)
        rows = [{"id": r.id, "code": code} for r, code in zip(records, classifier.predict(records))]
        _write_rows(out, rows)
        print(f"wrote {len(rows)} sentence predictions to {out}")
        return 0
    if not args.tagger:
        raise ConfigError("--tagger is required for end-to-end prediction (or pass --records)")
    tagger = SentenceTagger.load(args.tagger, table)
    preds = pipeline.predict_many(corpus.reports, tagger, classifier)
    pipeline.write_predictions(preds, out)
    n_fallback = sum(p.fallback for p in preds)
    print(f"wrote {len(preds)} predictions to {out} ({n_fallback} used the fallback sentence)")
    if args.explain:
        paths = pipeline.write_explanations(preds, corpus.reports, output_path(args.explain, "explain"))
        print(f"wrote {len(paths)} explanations to {args.explain}")
    return 0


def _write_rows(path, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def _read_rows(path) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}: {exc.msg}", line=n) from None
    return rows


def _match_ids(pred_ids, gold_ids):
    missing = sorted(set(gold_ids) - set(pred_ids))
    extra = sorted(set(pred_ids) - set(gold_ids))
    if missing or extra or len(pred_ids) != len(set(pred_ids)):
        dup = sorted({i for i in pred_ids if pred_ids.count(i) > 1})
        raise DataError("prediction ids do not match the gold corpus: "
                        f"missing {missing[:10]}, unexpected {extra[:10]}, duplicated {dup[:10]}")


def cmd_evaluate(args) -> int:
    from . import metrics

    rows = _read_rows(args.predictions)
    gold = data.load_corpus(args.gold)
    if args.mode == "multilabel":
        by_id = gold.by_id()
        _match_ids([r["id"] for r in rows], list(by_id))
        pairs = [(r["codes"], by_id[r["id"]].codes) for r in sorted(rows, key=lambda r: r["id"])]
        result = metrics.multilabel_report(pairs)
    else:
        records = {r.id: r.label for r in data.build_classifier_dataset(gold)}
        _match_ids([r["id"] for r in rows], list(records))
        pairs = [({r["code"]}, {records[r["id"]]}) for r in sorted(rows, key=lambda r: r["id"])]
        result = metrics.multiclass_report(pairs)
    result["mode"] = args.mode
    out = output_path(args.out, f"metrics.{args.mode}.json")
    write_json(out, result)
    print(json.dumps(result, indent=2, sort_keys=True))
    return 0


def cmd_selftest(args) -> int:
    from .selftest import run_selftest

    results = run_selftest(seeds=args.seeds)
    for r in results:
        print(f"{'PASS' if r.ok else 'FAIL'} {r.name}: {r.detail} [{r.seconds:.1f}s]")
    failed = [r.name for r in results if not r.ok]
    if failed:
        print(f"failed: {', '.join(failed)}", file=sys.stderr)
        return 1
    return 0


# -- entry point ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="focuscode", description="Two-level explainable ICD coding.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synthetic", help="generate a synthetic corpus and its embeddings")
    p.add_argument("--config")
    p.add_argument("--out")
    p.add_argument("--embeddings", help="where to write the embedding table")
    p.add_argument("--seed", type=int)
    p.add_argument("--n-reports", type=int)
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("split", help="split a corpus and filter rare labels")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out-dir")
    p.add_argument("--config")
    p.add_argument("--ratios", help="train,validation,test (default 0.7,0.15,0.15)")
    p.add_argument("--min-count", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train the tagger, the classifier or the baseline")
    p.add_argument("level", choices=("tagger", "classifier", "baseline"))
    p.add_argument("--train", required=True)
    p.add_argument("--validation")
    p.add_argument("--embeddings")
    p.add_argument("--config")
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--variant", help="pooling, vanilla or supervised")
    p.add_argument("--no-r4v", action="store_true", help="drop the reason-for-visit input")
    p.add_argument("--lambda", dest="lam", type=float, help="attention loss weight")
    p.add_argument("--lambda-sweep", help="comma-separated lambdas, one classifier each")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict codesets (or per-sentence codes with --records)")
    p.add_argument("--corpus", required=True)
    p.add_argument("--tagger")
    p.add_argument("--classifier")
    p.add_argument("--baseline", help="binary-relevance checkpoint instead of the two models")
    p.add_argument("--embeddings")
    p.add_argument("--out")
    p.add_argument("--records", action="store_true",
                   help="classify the gold focus sentences only")
    p.add_argument("--explain", help="directory for one HTML explanation per report")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="score predictions against a gold corpus")
    p.add_argument("--predictions", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--mode", choices=("multiclass", "multilabel"), default="multilabel")
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("selftest", help="gradient checks and metric oracles")
    p.add_argument("--seeds", type=int, default=3)
    p.set_defaults(func=cmd_selftest)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (FocusCodeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
