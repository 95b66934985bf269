"""Command-line entry point: ``creditcast <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from . import __version__
from .config import load_config
from .core import RATING_DEFINITIONS, SP_SCALE
from .dataset import DatasetBundle, SplitSpec, build_bundle, read_samples
from .encoders import ENCODER_NAMES, make_encoder, save_encoder
from .ensemble import EstimateColumn, augment_features, estimate_table
from .errors import CreditCastError
from .evaluation import EvalRecord, emit_report, pdp_compute, quantile_grid
from .features import DATA_TYPES, FeatureTable, build_features
from .generative import PromptTemplate, make_client, predict_gen, rank_probe
from .ingestion import ingest, read_aligned, write_aligned
from .model_boost import BoostModel, BoostParams, importance_report, predict_boost, train_boost
from .pipeline import SPLITS, read_predictions, run_pipeline, select_data_type, write_predictions
from .synth import generate_synthetic_corpus

log = logging.getLogger("creditcast")


def _json_arg(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise argparse.ArgumentTypeError(f"not valid JSON: {exc}") from exc


def _lag(text: str) -> int:
    p = int(text)
    if not 1 <= p <= 4:
        raise argparse.ArgumentTypeError("p must be in 1..4")
    return p


def _boost_params(args) -> BoostParams:
    return BoostParams(n_trees=args.n_trees, max_depth=args.max_depth, learning_rate=args.learning_rate,
                       patience=args.patience, seed=args.seed)


def _add_boost_flags(sp):
    sp.add_argument("--n-trees", type=int, default=200, help="maximum number of boosting stages")
    sp.add_argument("--max-depth", type=int, default=6, help="tree depth")
    sp.add_argument("--learning-rate", type=float, default=0.1, help="shrinkage")
    sp.add_argument("--patience", type=int, default=20, help="early-stopping patience in trees")
    sp.add_argument("--seed", type=int, default=0, help="random seed")


def cmd_synth(args):
    paths = generate_synthetic_corpus(args.out, seed=args.seed, n_companies=args.companies,
                                      n_quarters=args.quarters, strength=args.strength)
    print(json.dumps({k: str(v) for k, v in paths.items()}, indent=2))


def cmd_ingest(args):
    sources, report = ingest(args.ratings, args.filings, args.fundamentals, args.macro)
    write_aligned(sources, report, args.out)
    print(json.dumps(report["counts"], indent=2, sort_keys=True))


def cmd_build(args):
    dates = json.loads(Path(args.splits).read_text()) if args.splits else {}
    # explicit date flags win over the JSON file
    for k in ("start", "train_end", "val_end", "test_end"):
        if getattr(args, k) is not None:
            dates[k] = getattr(args, k)
    spec = SplitSpec.from_dict(dates)
    bundle = build_bundle(read_aligned(args.aligned), args.p, args.seed, spec)
    bundle.save(args.out)
    print(json.dumps(bundle.stats["balanced_counts"], indent=2))


def cmd_featurize(args):
    bundle = DatasetBundle.load(args.dataset)
    out = Path(args.out)
    enc = None
    if args.encoder != "none":
        enc = make_encoder(args.encoder, args.seed, args.params)
        enc.fit(list(dict.fromkeys(t for s in bundle.train for t in s.text_window)), "train")
        save_encoder(enc, out / "encoder.pkl")
    for split in SPLITS:
        table = build_features(bundle.split(split), "all" if enc else "numeric", enc)
        table.save(out / f"{split}.features.jsonl")
    print(f"wrote features to {out}")


def _load_tables(features_dir, data_type):
    return {s: select_data_type(FeatureTable.load(Path(features_dir) / f"{s}.features.jsonl"), data_type)
            for s in SPLITS}


def cmd_train(args):
    tables = _load_tables(args.features, args.data_type)
    model = train_boost(tables["train"], tables["val"], _boost_params(args))
    out = Path(args.out)
    model.save(out / "model.pkl")
    for s in ("val", "test"):
        t = tables[s]
        write_predictions(out / f"{s}.preds.jsonl", t.keys, t.labels, predict_boost(model, t))
    print(f"kept {model.n_trees_used} trees; wrote {out}")


def cmd_predict_gen(args):
    bundle = DatasetBundle.load(args.dataset)
    client = make_client(args.client, args.cache_dir)
    template = PromptTemplate.from_file(args.template) if args.template else PromptTemplate.default()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for split in args.split:
        samples = bundle.split(split)
        ests = None
        if args.estimates:
            keys, _, preds = read_predictions(Path(args.estimates) / f"{split}.preds.jsonl")
            if keys != [s.key for s in samples]:
                raise CreditCastError(f"estimates in {args.estimates} do not match the {split} samples")
            ests = EstimateColumn(args.estimate_source, preds).estimates()
        preds = predict_gen(client, template, samples, args.ablation, ests, args.max_text_tokens,
                            args.workers)
        write_predictions(out / f"{split}.preds.jsonl", [s.key for s in samples], [s.label for s in samples],
                          preds)
    print(f"wrote generative predictions to {out}")


def _pred_column(directory, split, source):
    keys, labels, preds = read_predictions(Path(directory) / f"{split}.preds.jsonl")
    return keys, labels, EstimateColumn(source, preds, keys)


def cmd_ensemble(args):
    out = Path(args.out)
    if args.mode == "inject":
        if not args.dataset or not args.client:
            raise CreditCastError("--mode inject needs --dataset and --client")
        ns = argparse.Namespace(dataset=args.dataset, client=args.client, cache_dir=args.cache_dir,
                                template=None, split=["test"], estimates=args.base_preds,
                                estimate_source="boost", ablation="text_only+estimate",
                                max_text_tokens=None, workers=1, out=args.out)
        return cmd_predict_gen(ns)
    params = _boost_params(args)
    if args.mode == "augment":
        if not args.features:
            raise CreditCastError("--mode augment needs --features")
        tables = {}
        for s, t in _load_tables(args.features, "numeric").items():
            _, _, col = _pred_column(args.aux_preds, s, "gen")
            tables[s] = augment_features(t, col)
    else:
        tables = {}
        for s in SPLITS:
            keys, labels, a = _pred_column(args.base_preds, s, "boost")
            _, _, b = _pred_column(args.aux_preds, s, "gen")
            tables[s] = estimate_table(a, b, labels, keys)
    model = train_boost(tables["train"], tables["val"], params)
    model.save(out / "model.pkl")
    t = tables["test"]
    write_predictions(out / "test.preds.jsonl", t.keys, t.labels, predict_boost(model, t))
    print(f"wrote {args.mode} model and test predictions to {out}")


def cmd_evaluate(args):
    samples = read_samples(args.labels)
    truth = {s.key: s.label for s in samples}
    order = [s.key for s in samples]
    records = []
    pattern = f"{args.split}.preds.jsonl"
    files = sorted(Path(args.preds).rglob(pattern))
    if not files:
        raise CreditCastError(f"no {pattern} files under {args.preds}")
    for f in files:
        keys, _, preds = read_predictions(f)
        if sorted(keys) != sorted(order):
            raise CreditCastError(f"{f} does not cover exactly the labelled samples")
        by_key = dict(zip(keys, preds))
        name = str(f.parent.relative_to(args.preds)).replace(".", "") or Path(args.preds).name
        config = {"model": name, "data_type": args.data_type, "encoder": None, "p": samples[0].p if samples else 1}
        records.append(EvalRecord.from_predictions(config, order, [by_key[k] for k in order],
                                                   [truth[k] for k in order]))
    results = emit_report(records, None, (), args.out)
    for g in results["grid"]:
        print(f"{g['model']}: {100 * g['average']:.2f}%")


def cmd_explain(args):
    models = [BoostModel.load(m) for m in args.model]
    rep = importance_report(models)
    curves = []
    if args.feature:
        table = FeatureTable.load(args.features)
        for name in args.feature:
            if name not in table.names:
                raise CreditCastError(f"feature {name!r} not in {args.features}")
            grid = quantile_grid(table.X[:, table.names.index(name)], args.grid_points)
            curves.append(pdp_compute(models[0], table, name, grid, args.target))
    results = emit_report([], {"model": rep}, curves, args.out)
    print(json.dumps(results["importances"]["model"]["per_group"], indent=2))


def cmd_probe_rank(args):
    client = make_client(args.client, args.cache_dir)
    report = rank_probe(client, ordered=args.ordered, seed=args.seed)
    text = json.dumps(report.to_dict(), indent=2)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text + "\n")
    print(f"{report.n_correct}/{report.n_pairs - len(report.errors)} correct, accuracy {report.accuracy:.4f}")


def cmd_run(args):
    overrides = {}
    if args.out:
        overrides["out_dir"] = str(Path(args.out).resolve())
    cfg = load_config(args.config, overrides=overrides)
    res = run_pipeline(cfg, cache=False if args.no_cache else None)
    hits = sum(s["cache_hit"] for s in res["stages"])
    print(f"report: {res['report_dir']} ({hits}/{len(res['stages'])} stages from cache)")


def cmd_scale(args):
    for i, code in enumerate(SP_SCALE.levels):
        print(f"{i:2d}  {code:4s}  {RATING_DEFINITIONS[code.rstrip('+-')]}")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="creditcast", description=__doc__)
    ap.add_argument("--version", action="version", version=f"creditcast {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", help="write a synthetic four-source corpus")
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--seed", type=int, default=0, help="random seed")
    sp.add_argument("--companies", type=int, default=80, help="number of companies")
    sp.add_argument("--quarters", type=int, default=40, help="number of quarters, ending 2016Q4")
    sp.add_argument("--strength", type=float, default=1.0, help="planted-signal strength in [0, 1]")
    sp.set_defaults(fn=cmd_synth)

    sp = sub.add_parser("ingest", help="load, clean and quarter-align the raw sources")
    for k in ("ratings", "filings", "fundamentals", "macro"):
        sp.add_argument(f"--{k}", required=True, help=f"{k} CSV file")
    sp.add_argument("--out", required=True, help="output directory for aligned JSONL")
    sp.set_defaults(fn=cmd_ingest)

    sp = sub.add_parser("build", help="lag windows, temporal split, balancing, normalization")
    sp.add_argument("--aligned", required=True, help="directory written by 'ingest'")
    sp.add_argument("--p", type=_lag, required=True, help="number of lag quarters (1..4)")
    sp.add_argument("--seed", type=int, default=0, help="balancing seed")
    d = SplitSpec()
    sp.add_argument("--splits", help="JSON file with start/train_end/val_end/test_end dates")
    sp.add_argument("--start", help=f"earliest target-quarter end date (default {d.start})")
    sp.add_argument("--train-end", help=f"last train target-quarter end date (default {d.train_end})")
    sp.add_argument("--val-end", help=f"last validation target-quarter end date (default {d.val_end})")
    sp.add_argument("--test-end", help=f"last test target-quarter end date (default {d.test_end})")
    sp.add_argument("--out", required=True, help="dataset output directory")
    sp.set_defaults(fn=cmd_build)

    sp = sub.add_parser("featurize", help="fit a text encoder on train and write feature tables")
    sp.add_argument("--dataset", required=True, help="directory written by 'build'")
    sp.add_argument("--encoder", required=True, choices=ENCODER_NAMES + ("none",),
                    help="text encoder, or 'none' for numeric features only")
    sp.add_argument("--params", type=_json_arg, default={}, help='encoder parameters as JSON, e.g. {"K": 100}')
    sp.add_argument("--seed", type=int, default=0, help="encoder seed")
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(fn=cmd_featurize)

    sp = sub.add_parser("train", help="train the boosted-tree classifier")
    sp.add_argument("--features", required=True, help="directory written by 'featurize'")
    sp.add_argument("--data-type", choices=DATA_TYPES, default="all", help="feature subset")
    _add_boost_flags(sp)
    sp.add_argument("--out", required=True, help="output directory for model and predictions")
    sp.set_defaults(fn=cmd_train)

    sp = sub.add_parser("predict-gen", help="prompt a generative model and decode labels")
    sp.add_argument("--dataset", required=True, help="directory written by 'build'")
    sp.add_argument("--client", default="mock", help="mock | mock:rank | api:MODEL | local:MODEL")
    sp.add_argument("--ablation", default="all",
                    help="all | numeric_only | text_only, optionally with +estimate")
    sp.add_argument("--split", nargs="+", default=["test"], choices=SPLITS, help="splits to predict")
    sp.add_argument("--estimates", help="directory of <split>.preds.jsonl to inject (with +estimate)")
    sp.add_argument("--estimate-source", default="boost", help="name shown for the injected estimate")
    sp.add_argument("--template", help="prompt template file (default: bundled)")
    sp.add_argument("--max-text-tokens", type=int, help="truncate each filing to this many tokens")
    sp.add_argument("--workers", type=int, default=1, help="concurrent client calls")
    sp.add_argument("--cache-dir", help="response cache directory")
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(fn=cmd_predict_gen)

    sp = sub.add_parser("ensemble", help="combine two models' estimates")
    sp.add_argument("--mode", required=True, choices=("augment", "stack", "inject"), help="combination scheme")
    sp.add_argument("--base-preds", help="directory of boost <split>.preds.jsonl (out-of-fold for train)")
    sp.add_argument("--aux-preds", help="directory of generative <split>.preds.jsonl")
    sp.add_argument("--features", help="numeric feature directory (augment)")
    sp.add_argument("--dataset", help="dataset directory (inject)")
    sp.add_argument("--client", help="generative client spec (inject)")
    sp.add_argument("--cache-dir", help="response cache directory (inject)")
    _add_boost_flags(sp)
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(fn=cmd_ensemble)

    sp = sub.add_parser("evaluate", help="score prediction files and write a report")
    sp.add_argument("--preds", required=True, help="directory searched for <split>.preds.jsonl")
    sp.add_argument("--split", default="test", choices=SPLITS, help="which split's predictions to score")
    sp.add_argument("--labels", required=True, help="samples JSONL with the true labels (e.g. test.jsonl)")
    sp.add_argument("--data-type", default="-", help="data-type label for the report rows")
    sp.add_argument("--out", required=True, help="report directory")
    sp.set_defaults(fn=cmd_evaluate)

    sp = sub.add_parser("explain", help="grouped importances and partial dependence")
    sp.add_argument("--model", nargs="+", required=True, help="model.pkl files (one per lag)")
    sp.add_argument("--features", help="feature table for partial dependence (first model's schema)")
    sp.add_argument("--feature", nargs="*", default=[], help="feature names to plot")
    sp.add_argument("--target", default="down", choices=("down", "same", "up"), help="class whose probability is plotted")
    sp.add_argument("--grid-points", type=int, default=20, help="quantile grid size")
    sp.add_argument("--out", required=True, help="report directory")
    sp.set_defaults(fn=cmd_explain)

    sp = sub.add_parser("probe-rank", help="pairwise rating-order probe of a generative model")
    sp.add_argument("--client", default="mock:rank", help="client spec")
    sp.add_argument("--ordered", action="store_true", help="score all 420 ordered pairs")
    sp.add_argument("--seed", type=int, default=0, help="pair orientation seed")
    sp.add_argument("--cache-dir", help="response cache directory")
    sp.add_argument("--out", help="JSON report path")
    sp.set_defaults(fn=cmd_probe_rank)

    sp = sub.add_parser("run", help="run the full pipeline from a config file")
    sp.add_argument("--config", required=True, help="key = value config file")
    sp.add_argument("--out", help="override out_dir")
    sp.add_argument("--no-cache", action="store_true", help="recompute every stage")
    sp.set_defaults(fn=cmd_run)

    sp = sub.add_parser("scale", help="print the rating scale")
    sp.set_defaults(fn=cmd_scale)
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.fn(args)
    except (CreditCastError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
