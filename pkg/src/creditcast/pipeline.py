"""End-to-end experiment runner with content-hashed stage caching.

Stages: ingest -> build (per p) -> featurize (per p, encoder) -> train or
predict -> evaluate. Each stage writes into ``<out_dir>/cache/<stage>/<key>``
where ``key`` hashes the stage's inputs, including upstream keys. Downstream
stages always read their inputs back from disk, so a cached and a fresh run
see identical bytes.
"""

from __future__ import annotations

import hashlib
import json
import logging
import shutil
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from .config import ExperimentConfig
from .core import MovementLabel, Prediction, QuarterId, sub_seed
from .dataset import DatasetBundle, build_bundle
from .encoders import make_encoder, save_encoder
from .ensemble import EstimateColumn, augment_features, estimate_table, oof_boost_estimates
from .errors import CreditCastError, StageError
from .evaluation import EvalRecord, emit_report, pdp_compute, quantile_grid, union_correct
from .features import FeatureTable, build_features
from .generative import PromptTemplate, make_client, predict_gen
from .generative.prompts import load_template_text
from .ingestion import ingest, read_aligned, write_aligned
from .model_boost import BoostModel, BoostParams, importance_report, predict_boost, train_boost

logger = logging.getLogger(__name__)

CACHE_VERSION = 1
SPLITS = ("train", "val", "test")


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class StageCache:
    root: Path
    enabled: bool = True
    log: List[Tuple[str, str, bool]] = field(default_factory=list)

    def key(self, stage: str, payload: dict) -> str:
        blob = json.dumps({"stage": stage, "v": CACHE_VERSION, "payload": payload}, sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:20]

    def run(self, stage: str, payload: dict, fn: Callable[[Path], None]) -> Tuple[str, Path]:
        key = self.key(stage, payload)
        final = Path(self.root) / stage / key
        if self.enabled and (final / ".done").exists():
            self.log.append((stage, key, True))
            logger.info("%s %s: cache hit", stage, key)
            return key, final
        tmp = final.with_name(key + ".tmp")
        shutil.rmtree(tmp, ignore_errors=True)
        tmp.mkdir(parents=True)
        try:
            fn(tmp)
        except StageError:
            raise
        except (CreditCastError, OSError, ValueError, KeyError, ImportError) as exc:
            raise StageError(stage, exc) from exc
        (tmp / ".done").write_text(json.dumps(payload, sort_keys=True, default=str))
        shutil.rmtree(final, ignore_errors=True)
        tmp.rename(final)
        self.log.append((stage, key, False))
        logger.info("%s %s: computed", stage, key)
        return key, final

    @property
    def all_hits(self) -> bool:
        return bool(self.log) and all(hit for _, _, hit in self.log)


def write_predictions(path, keys, labels, preds: Sequence[Prediction]) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for (cid, q), lab, p in zip(keys, labels, preds):
            fh.write(json.dumps({"company_id": cid, "target_quarter": str(q), "label": MovementLabel(lab).value,
                                 "prediction": p.to_dict()}, sort_keys=True) + "\n")


def read_predictions(path):
    keys, labels, preds = [], [], []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                d = json.loads(line)
                keys.append((d["company_id"], QuarterId.parse(d["target_quarter"])))
                labels.append(MovementLabel(d["label"]))
                preds.append(Prediction.from_dict(d["prediction"]))
    return keys, labels, preds


def select_data_type(table: FeatureTable, data_type: str) -> FeatureTable:
    """Column subset for a data type, taken from a table built with every modality."""
    keep = {"all": None, "text_only": {"text"}, "ratings": {"credit_rating"},
            "numeric": {"credit_rating", "fundamental", "macro"}}[data_type]
    if keep is None:
        return table
    return table.select([n for n in table.names if table.groups[n] in keep])


class Runner:
    def __init__(self, cfg: ExperimentConfig, cache: StageCache):
        self.cfg = cfg
        self.cache = cache
        self.records: List[EvalRecord] = []
        self.unions: Dict[str, Dict[int, float]] = {}
        self.models: Dict[str, List[Tuple[int, Path]]] = {}

    # -- stages --------------------------------------------------------------------------
    def ingest(self) -> Tuple[str, Path]:
        cfg = self.cfg
        files = {k: getattr(cfg, k) for k in ("ratings", "filings", "fundamentals", "macro")}
        payload = {k: file_digest(v) for k, v in files.items()}

        def fn(d):
            sources, report = ingest(files["ratings"], files["filings"], files["fundamentals"], files["macro"])
            write_aligned(sources, report, d)

        return self.cache.run("ingest", payload, fn)

    def build(self, ingest_key, ingest_dir, p) -> Tuple[str, Path]:
        cfg = self.cfg
        payload = {"ingest": ingest_key, "p": p, "seed": cfg.seed, "split": cfg.split_spec.to_dict()}

        def fn(d):
            build_bundle(read_aligned(ingest_dir), p, cfg.seed, cfg.split_spec).save(d)

        return self.cache.run("build", payload, fn)

    def featurize(self, build_key, build_dir, encoder: Optional[str]) -> Tuple[str, Path]:
        cfg = self.cfg
        params = cfg.encoder_params.get(encoder, {}) if encoder else {}
        seed = sub_seed(cfg.seed, f"encoder/{encoder}")
        payload = {"build": build_key, "encoder": encoder, "params": params, "seed": seed}

        def fn(d):
            bundle = DatasetBundle.load(build_dir)
            enc = None
            if encoder:
                enc = make_encoder(encoder, seed, params)
                docs = list(dict.fromkeys(t for s in bundle.train for t in s.text_window))
                enc.fit(docs, "train")
                save_encoder(enc, d / "encoder.pkl")
            for split in SPLITS:
                samples = bundle.split(split)
                table = build_features(samples, "all" if enc else "numeric", enc)
                table.save(d / f"{split}.features.jsonl")

        return self.cache.run("featurize", payload, fn)

    def boost_params(self, name: str) -> BoostParams:
        c = self.cfg
        return BoostParams(n_trees=c.n_trees, max_depth=c.max_depth, learning_rate=c.learning_rate,
                           patience=c.patience, seed=sub_seed(c.seed, f"boost/{name}"))

    def train(self, feat_key, feat_dir, data_type: str, tag: str) -> Tuple[str, Path]:
        params = self.boost_params(tag)
        payload = {"features": feat_key, "data_type": data_type, "params": params.__dict__}

        def fn(d):
            tables = {s: select_data_type(FeatureTable.load(feat_dir / f"{s}.features.jsonl"), data_type)
                      for s in SPLITS}
            model = train_boost(tables["train"], tables["val"], params)
            model.save(d / "model.pkl")
            for s in ("val", "test"):
                t = tables[s]
                write_predictions(d / f"{s}.preds.jsonl", t.keys, t.labels, predict_boost(model, t))

        return self.cache.run("train", payload, fn)

    def oof(self, feat_key, feat_dir, data_type: str, tag: str) -> Tuple[str, Path]:
        params = self.boost_params(tag)
        payload = {"features": feat_key, "data_type": data_type, "params": params.__dict__, "folds": 5}

        def fn(d):
            train = select_data_type(FeatureTable.load(feat_dir / "train.features.jsonl"), data_type)
            val = select_data_type(FeatureTable.load(feat_dir / "val.features.jsonl"), data_type)
            est = oof_boost_estimates(train, val, params, n_folds=5)
            write_predictions(d / "train.preds.jsonl", train.keys, train.labels, est.predictions)

        return self.cache.run("oof", payload, fn)

    def predict_gen(self, build_key, build_dir, client_spec: str, ablation: str, splits: Sequence[str],
                    estimate_dirs: Optional[Dict[str, Path]] = None, estimate_keys=()) -> Tuple[str, Path]:
        cfg = self.cfg
        template_text = load_template_text("forecast.txt")
        payload = {"build": build_key, "client": client_spec, "ablation": ablation, "splits": list(splits),
                   "template": hashlib.sha256(template_text.encode()).hexdigest(),
                   "max_text_tokens": cfg.max_text_tokens, "estimates": list(estimate_keys)}

        def fn(d):
            bundle = DatasetBundle.load(build_dir)
            client = make_client(client_spec, cfg.gen_cache_dir)
            template = PromptTemplate.default()
            for s in splits:
                samples = bundle.split(s)
                ests = None
                if estimate_dirs:
                    keys, _, preds = read_predictions(estimate_dirs[s] / f"{s}.preds.jsonl")
                    if keys != [x.key for x in samples]:
                        raise ValueError("estimate rows do not match the split's samples")
                    ests = EstimateColumn("boost", preds).estimates()
                preds = predict_gen(client, template, samples, ablation, ests, cfg.max_text_tokens)
                write_predictions(d / f"{s}.preds.jsonl", [x.key for x in samples],
                                  [x.label for x in samples], preds)

        return self.cache.run("predict_gen", payload, fn)

    # -- model families ------------------------------------------------------------------
    def add_record(self, config: dict, preds_file: Path) -> EvalRecord:
        keys, labels, preds = read_predictions(preds_file)
        rec = EvalRecord.from_predictions(config, keys, preds, labels)
        self.records.append(rec)
        return rec

    def run_boost(self, builds):
        cfg = self.cfg
        for p, (bkey, bdir) in builds.items():
            feats = {}
            for data_type in cfg.data_types:
                encs = cfg.encoders if data_type in ("all", "text_only") else [None]
                for enc in encs:
                    if enc not in feats:
                        feats[enc] = self.featurize(bkey, bdir, enc)
                    fkey, fdir = feats[enc]
                    tag = f"{data_type}/{enc}"
                    _, tdir = self.train(fkey, fdir, data_type, tag)
                    self.add_record({"model": "boost", "data_type": data_type, "encoder": enc, "p": p},
                                    tdir / "test.preds.jsonl")
                    self.models.setdefault(tag, []).append((p, tdir, fdir))

    def run_gen(self, builds, client_spec):
        ablation = self.cfg.ablation
        for p, (bkey, bdir) in builds.items():
            _, gdir = self.predict_gen(bkey, bdir, client_spec, ablation, ["test"])
            self.add_record({"model": f"gen:{client_spec}", "data_type": ablation, "encoder": None, "p": p},
                            gdir / "test.preds.jsonl")

    def run_ensemble(self, builds, mode: str, client_spec: str):
        for p, (bkey, bdir) in builds.items():
            fkey, fdir = self.featurize(bkey, bdir, None)
            tkey, tdir = self.train(fkey, fdir, "numeric", "numeric/None")
            base = self.add_record({"model": "boost", "data_type": "numeric", "encoder": None, "p": p},
                                   tdir / "test.preds.jsonl")
            gen_splits = ["test"] if mode == "inject" else list(SPLITS)
            _, gdir = self.predict_gen(bkey, bdir, client_spec, "text_only", gen_splits)
            text = self.add_record({"model": f"gen:{client_spec}", "data_type": "text_only", "encoder": None,
                                    "p": p}, gdir / "test.preds.jsonl")
            self.unions.setdefault("boost-numeric|gen-text", {})[p] = union_correct([base, text])
            name = f"ensemble:{mode}:{client_spec}"
            if mode == "inject":
                _, idir = self.predict_gen(bkey, bdir, client_spec, "text_only+estimate", ["test"],
                                           {"test": tdir}, [tkey])
                self.add_record({"model": name, "data_type": "text_only+estimate", "encoder": None, "p": p},
                                idir / "test.preds.jsonl")
            elif mode == "augment":
                _, edir = self.cache.run("augment", {"features": fkey, "gen": str(gdir.name),
                                                     "params": self.boost_params("augment").__dict__},
                                         lambda d: self._augment(d, fdir, gdir))
                self.add_record({"model": name, "data_type": "numeric+estimate", "encoder": None, "p": p},
                                edir / "test.preds.jsonl")
                self.models.setdefault("augment", []).append((p, edir, None))
            else:
                okey, odir = self.oof(fkey, fdir, "numeric", "numeric/None")
                _, sdir = self.cache.run("stack", {"oof": okey, "train": tkey, "gen": str(gdir.name),
                                                   "params": self.boost_params("stack").__dict__},
                                         lambda d: self._stack(d, odir, tdir, gdir))
                self.add_record({"model": name, "data_type": "estimates", "encoder": None, "p": p},
                                sdir / "test.preds.jsonl")

    def _augment(self, d, fdir, gdir):
        tables = {}
        for s in SPLITS:
            t = select_data_type(FeatureTable.load(fdir / f"{s}.features.jsonl"), "numeric")
            keys, _, preds = read_predictions(gdir / f"{s}.preds.jsonl")
            tables[s] = augment_features(t, EstimateColumn("gen", preds, keys))
        model = train_boost(tables["train"], tables["val"], self.boost_params("augment"))
        model.save(d / "model.pkl")
        t = tables["test"]
        write_predictions(d / "test.preds.jsonl", t.keys, t.labels, predict_boost(model, t))

    def _stack(self, d, odir, tdir, gdir):
        def pair(split, boost_dir):
            keys, labels, a = read_predictions(boost_dir / f"{split}.preds.jsonl")
            gkeys, _, b = read_predictions(gdir / f"{split}.preds.jsonl")
            if gkeys != keys:
                raise ValueError(f"{split}: boost and generative estimates cover different rows")
            return estimate_table(EstimateColumn("boost", a, keys), EstimateColumn("gen", b, keys), labels, keys)

        train, val, test = pair("train", odir), pair("val", tdir), pair("test", tdir)
        model = train_boost(train, val, self.boost_params("stack"))
        model.save(d / "model.pkl")
        write_predictions(d / "test.preds.jsonl", test.keys, test.labels, predict_boost(model, test))

    # -- report --------------------------------------------------------------------------
    def evaluate(self) -> Tuple[str, Path]:
        cfg = self.cfg
        upstream = sorted(str(k) for _, k, _ in self.cache.log)
        payload = {"upstream": upstream, "pdp_features": cfg.pdp_features, "pdp_target": cfg.pdp_target,
                   "config": cfg.model}

        def fn(d):
            importances, curves = {}, []
            for tag, runs in sorted(self.models.items()):
                models = [BoostModel.load(tdir / "model.pkl") for _, tdir, _ in sorted(runs, key=lambda r: r[0])]
                importances[tag] = importance_report(models)
                _, _, fdir = min(runs, key=lambda r: r[0])
                if fdir is not None and cfg.pdp_features > 0 and tag.startswith(("all/", "text_only/")):
                    curves += self._pdp(models[0], fdir, tag.split("/")[0])
            emit_report(self.records, importances, curves, d, self.unions)

        return self.cache.run("evaluate", payload, fn)

    def _pdp(self, model: BoostModel, fdir: Path, data_type: str):
        train = select_data_type(FeatureTable.load(fdir / "train.features.jsonl"), data_type)
        text = [n for n in model.names if model.groups[n] == "text"]
        fi = dict(zip(model.names, model.feature_importances_))
        top = sorted(text, key=lambda n: (-fi[n], n))[: self.cfg.pdp_features]
        out = []
        for name in top:
            col = train.X[:, train.names.index(name)]
            curve = pdp_compute(model, train, name, quantile_grid(col, 20), self.cfg.pdp_target)
            curve.feature = f"{data_type}:{name}"
            out.append(curve)
        return out


def run_pipeline(cfg: ExperimentConfig, cache: Optional[bool] = None) -> dict:
    """Run every configured stage and copy the report into ``<out_dir>/report``."""
    cfg.validate()
    out = Path(cfg.out_dir)
    store = StageCache(out / "cache", cfg.cache if cache is None else cache)
    runner = Runner(cfg, store)
    ikey, idir = runner.ingest()
    builds = {p: runner.build(ikey, idir, p) for p in sorted(cfg.p)}
    kind, _, arg = cfg.model.partition(":")
    if kind == "boost":
        runner.run_boost(builds)
    elif kind == "gen":
        runner.run_gen(builds, arg)
    else:
        mode, _, client = arg.partition(":")
        runner.run_ensemble(builds, mode, client or "mock")
    _, edir = runner.evaluate()
    report = out / "report"
    shutil.rmtree(report, ignore_errors=True)
    shutil.copytree(edir, report, ignore=shutil.ignore_patterns(".done"))
    results = json.loads((report / "results.json").read_text(encoding="utf-8"))
    return {"results": results, "report_dir": str(report),
            "stages": [{"stage": s, "key": k, "cache_hit": h} for s, k, h in store.log],
            "all_cache_hits": store.all_hits}
