"""Command-line entry point wiring scoring, conversion, splitting, training,
evaluation, auditing and run comparison.

Exit codes: 0 success, 1 usage error, 2 data or contract error. Every train
run writes a manifest capturing the configuration digest, seed, mode and
input digests needed to reproduce it.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

from . import audit, datasets, encoder, identity, subjectivity, textprep, trainer
from .augment import AugmentMode
from .errors import ContractError, ResourceError, SubsenseError, UsageError

MANIFEST_VERSION = 1


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{message}\n{self.format_usage()}")


def _sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _sha256_json(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode("utf-8")).hexdigest()


def _write_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _resolve_subj_lexicon(path_arg):
    """Explicit flag beats SUBSENSE_LEXICON beats the packaged lexicon."""
    if path_arg:
        p = str(path_arg)
        if p.endswith(".tsv"):
            return subjectivity.load_lexicon_tsv(p), p
        return subjectivity.load_lexicon(p), p
    env = os.environ.get(subjectivity.ENV_LEXICON)
    if env:
        return subjectivity.default_lexicon(), env
    return subjectivity.default_lexicon(), "packaged"


def _resolve_id_lexicon(path_arg):
    if path_arg:
        return identity.load_terms(path_arg), str(path_arg)
    return identity.default_terms(), "paper-25"


def _cmd_score(args) -> int:
    lexicon, _ = _resolve_subj_lexicon(args.lexicon)
    terms, _ = _resolve_id_lexicon(args.identity_terms)
    if args.text is None and args.file is None:
        raise UsageError("score needs --text or --file")
    if args.text is not None:
        texts = [args.text]
    else:
        src = Path(args.file)
        if not src.exists():
            raise ResourceError(f"input file not found: {src}")
        texts = [line for line in src.read_text(encoding="utf-8").splitlines() if line]
    for text in texts:
        s = subjectivity.score(text, lexicon)
        match = identity.detect(text, terms)
        matched = " ".join(match.terms) if match.present else "-"
        print(f"subjectivity {s.value:.4f}")
        print(f"identity present={'true' if match.present else 'false'} matched: {matched}")
    return 0


def _cmd_convert(args) -> int:
    kind = datasets.DatasetKind.parse(args.kind)
    result = datasets.convert(kind, datasets.load_rows(args.input))
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    datasets.write_canonical(result.comments, out)
    print(
        f"read {result.n_input} rows, kept {len(result.comments)} "
        f"(toxic {result.n_toxic}, nontoxic {result.n_nontoxic}), dropped {result.n_dropped}"
    )
    return 0


def _cmd_split(args) -> int:
    comments = datasets.read_canonical(args.input)
    train, val, test = datasets.split(comments, args.seed)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    for name, part in (("train", train), ("val", val), ("test", test)):
        datasets.write_canonical(part, outdir / f"{name}.csv")
    print(f"split {len(comments)} -> train {len(train)} / val {len(val)} / test {len(test)}")
    return 0


def _cmd_synth(args) -> int:
    corpus = datasets.synth_generate(args.n, args.theta, args.noise, args.seed)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    datasets.write_canonical(corpus.comments, outdir / "corpus.csv")
    subjectivity.write_lexicon_tsv(corpus.lexicon, outdir / "lexicon.tsv")
    planted = {
        cid: {
            "score": rec.score,
            "has_identity": rec.has_identity,
            "rule_label": str(rec.rule_label),
            "label": str(rec.label),
        }
        for cid, rec in corpus.planted.items()
    }
    _write_json(
        {"n": args.n, "theta": args.theta, "noise": args.noise, "seed": args.seed,
         "records": planted},
        outdir / "planted.json",
    )
    n_toxic = sum(1 for c in corpus.comments if c.label is datasets.Label.TOXIC)
    print(f"generated {len(corpus.comments)} comments ({n_toxic} toxic) in {outdir}")
    return 0


def _model_config_from_args(args, vocab_size: int) -> encoder.ModelConfig:
    base = {}
    if args.config:
        base = json.loads(Path(args.config).read_text(encoding="utf-8")).get("model", {})
    values = {
        "max_len": args.max_len, "d_model": args.d_model, "n_heads": args.n_heads,
        "n_layers": args.n_layers, "d_ff": args.d_ff, "dropout_rate": args.dropout,
    }
    merged = {**base, **{k: v for k, v in values.items() if v is not None}}
    merged.setdefault("max_len", 128)
    merged["vocab_size"] = vocab_size
    merged["seed"] = args.seed
    return encoder.ModelConfig(**merged)


def _schedule_from_args(args) -> trainer.TrainSchedule:
    base = {}
    if args.config:
        base = json.loads(Path(args.config).read_text(encoding="utf-8")).get("schedule", {})
    values = {
        "batch_size": args.batch_size, "lr0": args.lr, "val_every": args.val_every,
        "max_halvings": args.max_halvings, "epoch_cap": args.epoch_cap,
    }
    merged = {**base, **{k: v for k, v in values.items() if v is not None}}
    return trainer.TrainSchedule(**merged)


def _cmd_train(args) -> int:
    mode = AugmentMode.parse(args.mode)
    train_comments = datasets.read_canonical(args.train)
    val_comments = datasets.read_canonical(args.val)
    subj_lex, subj_label = _resolve_subj_lexicon(args.lexicon)
    id_lex, id_label = _resolve_id_lexicon(args.identity_terms)

    vocab = textprep.build_vocab(
        train_comments, max_size=args.vocab_size, min_freq=args.min_freq
    )
    config = _model_config_from_args(args, len(vocab))
    schedule = _schedule_from_args(args)
    train_set = trainer.prepare_examples(
        train_comments, vocab, subj_lex, id_lex, config.max_len, mode
    )
    val_set = trainer.prepare_examples(
        val_comments, vocab, subj_lex, id_lex, config.max_len, mode
    )

    progress = print if args.verbose else None
    params, history = trainer.train(
        train_set, val_set, config, schedule, mode,
        soc_weight=args.soc_weight, seed=args.seed, progress=progress,
    )

    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    vocab.save(outdir / "vocab.txt")
    encoder.save_params(params, outdir / "checkpoint.bin")
    history.to_csv(outdir / "history.csv")
    run_config = {
        "model": config.to_dict(),
        "schedule": {
            "batch_size": schedule.batch_size, "lr0": schedule.lr0,
            "val_every": schedule.val_every, "max_halvings": schedule.max_halvings,
            "halving_factor": schedule.halving_factor, "epoch_cap": schedule.epoch_cap,
        },
        "mode": mode.value,
        "soc_weight": args.soc_weight,
        "seed": args.seed,
        "min_freq": args.min_freq,
    }
    _write_json(run_config, outdir / "config.json")
    manifest = {
        "manifest_version": MANIFEST_VERSION,
        "config_digest": _sha256_json(run_config),
        "seed": args.seed,
        "mode": mode.value,
        "soc_weight": args.soc_weight,
        "dataset_id": args.dataset_id or Path(args.train).stem,
        "inputs": {
            "train": {"path": str(args.train), "sha256": _sha256_file(args.train)},
            "val": {"path": str(args.val), "sha256": _sha256_file(args.val)},
        },
        "lexicon": subj_label,
        "identity_terms": id_label,
        "artifacts": {
            "checkpoint": str(outdir / "checkpoint.bin"),
            "history": str(outdir / "history.csv"),
            "config": str(outdir / "config.json"),
            "vocab": str(outdir / "vocab.txt"),
            "eval_report": str(outdir / "eval.json"),
            "audit_report": str(outdir / "audit.json"),
        },
    }
    _write_json(manifest, outdir / "manifest.json")
    best = history.best_val_f1()
    print(
        f"trained {mode.value} seed {args.seed}: {len(history.entries)} steps, "
        f"stop={history.stop_reason}, best val F1 "
        f"{'n/a' if best is None else f'{best:.4f}'}"
    )
    print(f"manifest: {outdir / 'manifest.json'}")
    return 0


def _load_manifest(path) -> dict:
    p = Path(path)
    if not p.exists():
        raise ResourceError(f"manifest not found: {p}")
    manifest = json.loads(p.read_text(encoding="utf-8"))
    if manifest.get("manifest_version") != MANIFEST_VERSION:
        raise ContractError(f"unsupported manifest version in {p}")
    return manifest


def _rebuild_run(manifest):
    run_config = json.loads(Path(manifest["artifacts"]["config"]).read_text(encoding="utf-8"))
    config = encoder.ModelConfig.from_dict(run_config["model"])
    vocab = textprep.Vocab.load(manifest["artifacts"]["vocab"])
    params = encoder.load_params(manifest["artifacts"]["checkpoint"])
    encoder.validate_params(params, config)
    subj_path = manifest["lexicon"]
    subj_lex, _ = _resolve_subj_lexicon(None if subj_path == "packaged" else subj_path)
    id_path = manifest["identity_terms"]
    id_lex, _ = _resolve_id_lexicon(None if id_path == "paper-25" else id_path)
    mode = AugmentMode.parse(manifest["mode"])
    return config, vocab, params, subj_lex, id_lex, mode


def _predictions_for(manifest, test_path):
    config, vocab, params, subj_lex, id_lex, mode = _rebuild_run(manifest)
    comments = datasets.read_canonical(test_path)
    prepared = trainer.prepare_examples(comments, vocab, subj_lex, id_lex, config.max_len, mode)
    preds, probs = trainer.predict_batch(params, config, [ex.aug for ex in prepared])
    golds = [c.label for c in comments]
    return comments, preds, probs, golds, subj_lex, id_lex


def _cmd_eval(args) -> int:
    manifest = _load_manifest(args.manifest)
    comments, preds, _, golds, _, _ = _predictions_for(manifest, args.test)
    counts = audit.confusion(preds, golds)
    report = {
        "config_digest": manifest["config_digest"],
        "mode": manifest["mode"],
        "seed": manifest["seed"],
        "soc_weight": manifest["soc_weight"],
        "dataset_id": manifest["dataset_id"],
        "test": {"path": str(args.test), "sha256": _sha256_file(args.test)},
        "n": counts.total,
        "tp": counts.tp, "fp": counts.fp, "tn": counts.tn, "fn": counts.fn,
        "f1": audit.f1(counts),
    }
    out = Path(args.output) if args.output else Path(manifest["artifacts"]["eval_report"])
    _write_json(report, out)
    print(f"f1 {report['f1']:.4f} (tp {counts.tp} fp {counts.fp} tn {counts.tn} fn {counts.fn})")
    print(f"report: {out}")
    return 0


def _cmd_audit(args) -> int:
    manifest = _load_manifest(args.manifest)
    comments, preds, _, golds, subj_lex, id_lex = _predictions_for(manifest, args.test)
    report = audit.audit_report(comments, preds, golds, id_lex, subj_lex)
    out = Path(args.output) if args.output else Path(manifest["artifacts"]["audit_report"])
    _write_json(report.to_json_dict(), out)
    text_path = out.with_suffix(".txt")
    text_path.write_text(report.to_text(), encoding="utf-8")
    if args.cells_csv:
        import csv as _csv

        with open(args.cells_csv, "w", newline="", encoding="utf-8") as fh:
            _csv.writer(fh).writerows(report.cells_csv_rows())
    print(report.to_text())
    print(f"report: {out}")
    return 0


def _cmd_compare(args) -> int:
    rows: dict[str, list[tuple[float, int, int]]] = {}
    for mpath in args.manifests:
        manifest = _load_manifest(mpath)
        eval_path = Path(manifest["artifacts"]["eval_report"])
        if not eval_path.exists():
            raise ContractError(f"no eval report for {mpath}; run `subsense eval` first")
        report = json.loads(eval_path.read_text(encoding="utf-8"))
        name = manifest["mode"]
        if manifest["soc_weight"]:
            name += f"+soc({manifest['soc_weight']})"
        rows.setdefault(name, []).append((report["f1"], report["fp"], report["fn"]))
    named = [(name, audit.aggregate(runs)) for name, runs in sorted(rows.items())]
    f1_table = audit.render_f1_table(named)
    fpfn_table = audit.render_fp_fn_table(named)
    print(f1_table)
    print()
    print(fpfn_table)
    if args.output:
        _write_json(
            {
                name: {
                    "runs": len(agg.f1_values), "f1": agg.mean_f1, "std": agg.std_f1,
                    "fp": agg.mean_fp, "fn": agg.mean_fn,
                }
                for name, agg in named
            },
            args.output,
        )
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="subsense", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("score", help="subjectivity + identity report for text")
    p.add_argument("--text")
    p.add_argument("--file")
    p.add_argument("--lexicon")
    p.add_argument("--identity-terms", dest="identity_terms")
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("convert", help="convert a raw corpus to canonical CSV")
    p.add_argument("--kind", required=True,
                   choices=[k.value for k in datasets.DatasetKind])
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=_cmd_convert)

    p = sub.add_parser("split", help="stratified 80/10/10 split")
    p.add_argument("--input", required=True)
    p.add_argument("--outdir", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.set_defaults(func=_cmd_split)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--theta", type=float, default=0.5)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--outdir", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("train", help="train a classifier")
    p.add_argument("--train", required=True)
    p.add_argument("--val", required=True)
    p.add_argument("--mode", required=True, choices=[m.value for m in AugmentMode])
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--soc-weight", type=float, default=0.0, dest="soc_weight")
    p.add_argument("--outdir", required=True)
    p.add_argument("--dataset-id", dest="dataset_id")
    p.add_argument("--config", help="JSON file with model/schedule sections; flags override")
    p.add_argument("--lexicon")
    p.add_argument("--identity-terms", dest="identity_terms")
    p.add_argument("--vocab-size", type=int, default=8000, dest="vocab_size")
    p.add_argument("--min-freq", type=int, default=1, dest="min_freq")
    p.add_argument("--max-len", type=int, dest="max_len")
    p.add_argument("--d-model", type=int, dest="d_model")
    p.add_argument("--n-heads", type=int, dest="n_heads")
    p.add_argument("--n-layers", type=int, dest="n_layers")
    p.add_argument("--d-ff", type=int, dest="d_ff")
    p.add_argument("--dropout", type=float)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--lr", type=float)
    p.add_argument("--val-every", type=int, dest="val_every")
    p.add_argument("--max-halvings", type=int, dest="max_halvings")
    p.add_argument("--epoch-cap", type=int, dest="epoch_cap")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a trained run on a test CSV")
    p.add_argument("--manifest", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--output")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("audit", help="bias audit of a trained run")
    p.add_argument("--manifest", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--output")
    p.add_argument("--cells-csv", dest="cells_csv")
    p.set_defaults(func=_cmd_audit)

    p = sub.add_parser("compare", help="aggregate eval reports from N manifests")
    p.add_argument("manifests", nargs="+")
    p.add_argument("--output")
    p.set_defaults(func=_cmd_compare)

    return parser


def dispatch(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "command", None):
            raise UsageError(parser.format_help())
        return args.func(args)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except SubsenseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
