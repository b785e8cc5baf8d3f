"""Command line entry point: ``zslforge <command> ...``.

Every command writes its outputs and a ``manifest.json`` under ``--out``.

Exit codes:

    0  success
    1  unexpected internal error
    2  usage error (unknown flag, bad argument value)
    3  input file missing
    4  config file violates its schema
    5  malformed or inconsistent input data
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import os
import sys
import time
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from . import cada_vae, checkpoint, evaluation, hpo, matcher, simple_zsl, synthetic
from .corpus import (CorpusError, FeatureMatrix, Split, load_articles, load_class_registry,
                     load_feature_matrix, load_hierarchy, load_split, write_class_registry,
                     write_feature_matrix, write_split)
from .text_encoding import (BagOfEmbeddings, ChunkFeatures, EncodingError, encode_split,
                            load_embedding_table)

log = logging.getLogger("zslforge")

EXIT_OK, EXIT_INTERNAL, EXIT_USAGE, EXIT_MISSING, EXIT_CONFIG, EXIT_DATA = 0, 1, 2, 3, 4, 5


class ConfigError(ValueError):
    pass


class MissingInputError(FileNotFoundError):
    pass


# -- helpers --------------------------------------------------------------------


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


@dataclasses.dataclass
class RunManifest:
    command: str
    config: dict
    inputs: dict[str, str]
    seed: int | None
    tool_version: str = __version__
    started: float = 0.0
    finished: float = 0.0

    def write(self, out_dir) -> Path:
        path = Path(out_dir) / "manifest.json"
        path.write_text(json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True) + "\n",
                        encoding="utf-8")
        return path


def _need(path) -> Path:
    p = Path(path)
    if not p.exists():
        raise MissingInputError(f"no such file: {p}")
    return p


def _inputs(args, names: Sequence[str]) -> dict[str, str]:
    out = {}
    for n in names:
        v = getattr(args, n, None)
        if v is None:
            continue
        for i, p in enumerate(v if isinstance(v, list) else [v]):
            key = n if not isinstance(v, list) else f"{n}[{i}]"
            out[key] = file_digest(_need(p))
    return out


def resolve_seed(seed: int | None) -> int:
    if seed is not None:
        return seed
    env = os.environ.get("ZSLFORGE_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise ConfigError(f"ZSLFORGE_SEED must be an integer, got {env!r}") from None


def _check_type(name, value, default):
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    elif isinstance(default, str):
        ok = isinstance(value, str)
    elif isinstance(default, tuple):
        ok = isinstance(value, list) and all(isinstance(h, int) and h > 0 for h in value)
    else:
        ok = True
    if not ok:
        raise ConfigError(f"config key {name!r}: expected {type(default).__name__}, "
                          f"got {type(value).__name__}")


def load_config(path, cls):
    """Strict JSON config: unknown keys and mistyped values are rejected."""
    if path is None:
        return cls()
    try:
        raw = json.loads(_need(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from None
    return config_from_dict(raw, cls, str(path))


def config_from_dict(raw, cls, where="config"):
    if not isinstance(raw, dict):
        raise ConfigError(f"{where}: top level must be an object")
    defaults = cls()
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
    for k, v in raw.items():
        _check_type(k, v, getattr(defaults, k))
    try:
        return cls(**raw)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{where}: {e}") from None


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _split_rows(images: FeatureMatrix, aux: FeatureMatrix, split: Split):
    """Image rows of ``split`` with labels indexing ``split.wnids`` and the aux rows."""
    pos = {w: i for i, w in enumerate(split.wnids)}
    labels = images.labels()
    keep = [i for i, w in enumerate(labels) if w in pos]
    if not keep:
        raise CorpusError(f"split {split.name!r}: no image samples")
    present = {labels[i] for i in keep}
    missing = [w for w in split.wnids if w not in present]
    if missing:
        raise CorpusError(f"split {split.name!r}: no image samples for {missing[0]}")
    x = np.asarray(images.data[keep], dtype=np.float64)
    y = np.array([pos[labels[i]] for i in keep], dtype=np.int64)
    try:
        t = np.asarray(aux.rows(split.wnids), dtype=np.float64)
    except KeyError as e:
        raise CorpusError(f"split {split.name!r}: no aux vector for {e.args[0]}") from None
    return x, y, t


def _load_data(args, split_attr):
    images = load_feature_matrix(_need(args.images))
    aux = load_feature_matrix(_need(args.aux))
    split = load_split(_need(getattr(args, split_attr)))
    return images, aux, split


# -- commands -------------------------------------------------------------------


def cmd_synth(args) -> dict:
    raw = json.loads(_need(args.config).read_text()) if args.config else {}
    spec = config_from_dict(raw, synthetic.SyntheticSpec, args.config or "spec")
    if args.seed is not None or "seed" not in raw:
        spec = dataclasses.replace(spec, seed=resolve_seed(args.seed))
    paths = synthetic.write_bundle(synthetic.generate(spec), _out(args))
    print(f"wrote synthetic bundle ({spec.n_classes} classes) to {args.out}")
    return {"config": spec.to_dict(), "seed": spec.seed,
            "outputs": {k: str(v) for k, v in paths.items()}}


def cmd_encode(args) -> dict:
    registry = load_class_registry(_need(args.registry))
    split = load_split(_need(args.split), registry)
    if (args.embeddings is None) == (args.chunks is None):
        raise ConfigError("give exactly one of --embeddings or --chunks")
    articles = load_articles(_need(args.articles)) if args.articles else {}
    if args.embeddings:
        encoder = BagOfEmbeddings(load_embedding_table(_need(args.embeddings)), args.mode)
    else:
        encoder = ChunkFeatures(load_feature_matrix(_need(args.chunks)), args.mode)
    fm, skipped = encode_split(registry, articles, encoder, split.wnids, args.allow_skip,
                               args.text)
    out = _out(args)
    write_feature_matrix(fm, out / "aux.zslf")
    _write_json(out / "skipped.json", skipped)
    print(f"encoded {len(fm)} classes, skipped {len(skipped)}")
    return {"config": {"mode": args.mode, "text": args.text, "allow_skip": args.allow_skip}}


def _val_evaluator_simple(val):
    vx, vy, vt = val

    def evaluate(params):
        ranked = simple_zsl.predict(params, vx, vt, min(5, len(vt)))
        rep = evaluation.evaluate_ranked(ranked, vy, [str(i) for i in range(len(vt))],
                                         (1, min(5, len(vt))))
        return rep.mean_topk[1], rep.mean_topk[min(5, len(vt))]
    return evaluate


def cmd_train(args) -> dict:
    seed = resolve_seed(args.seed)
    images, aux, split = _load_data(args, "train")
    x, y, t = _split_rows(images, aux, split)
    val = None
    if args.val:
        val = _split_rows(images, aux, load_split(_need(args.val)))
    out = _out(args)
    if args.model == "simple":
        cfg = load_config(args.config, simple_zsl.SimpleZslConfig)
        if args.seed is not None or args.config is None:
            cfg = dataclasses.replace(cfg, seed=seed)
        res = simple_zsl.train(cfg, t, x, y, val=val)
        checkpoint.save_simple(out / "model.zslc", res.params, cfg, list(split.wnids))
        history = {"loss": res.history, "val_top5": res.val_top5, "best_epoch": res.best_epoch}
    else:
        cfg = load_config(args.config, cada_vae.CadaVaeConfig)
        if args.seed is not None or args.config is None:
            cfg = dataclasses.replace(cfg, seed=seed)
        model = cada_vae.train_cada(cfg, x, y, t)
        checkpoint.save_cada(out / "model.zslc", model, cfg, classes=list(split.wnids))
        history = {"epochs": model.history}
    _write_json(out / "history.json", history)
    print(f"trained {args.model} model on {len(split)} classes; checkpoint in {out}")
    return {"config": cfg.to_dict(), "seed": cfg.seed}


def _rank_with_checkpoint(path, x, t, k):
    header, _ = checkpoint.read_checkpoint(path)
    if header.get("model") == "simple":
        params, cfg, _ = checkpoint.load_simple(path)
        return simple_zsl.predict(params, x, t, k), cfg.to_dict()
    model, cfg, _, _ = checkpoint.load_cada(path)
    # the latent classifier is fit on the candidate classes at evaluation time
    clf = cada_vae.fit_unseen_classifier(model, t, cfg)
    return cada_vae.classify(model.img_vae, clf, x, k), cfg.to_dict()


def cmd_eval(args) -> dict:
    out = _out(args)
    ks = sorted(set(args.k))
    if args.from_report:
        d = json.loads(_need(args.from_report).read_text(encoding="utf-8"))
        n_present = d["n_present"]
        total = args.adjust_total or d["n_total"]
        adjusted = {k: evaluation.adjust_for_missing(v, n_present, total)
                    for k, v in d["mean_topk"].items()}
        d["n_total"], d["adjusted_mean_topk"] = total, adjusted
        (out / "report.json").write_text(json.dumps(d, indent=2) + "\n", encoding="utf-8")
        for k, v in adjusted.items():
            print(f"top-{k}: {100 * d['mean_topk'][k]:.2f}% on {n_present} classes, "
                  f"adjusted {100 * v:.2f}% on {total}")
        return {"config": {"adjust_total": total}}
    if not (args.checkpoint and args.test and args.images and args.aux):
        raise ConfigError("eval needs --checkpoint, --test, --images and --aux "
                          "(or --from-report)")
    images, aux, split = _load_data(args, "test")
    x, y, t = _split_rows(images, aux, split)
    kmax = max(ks)
    if kmax > len(split):
        raise ConfigError(f"k={kmax} exceeds the {len(split)} test classes")
    ranked, cfg = _rank_with_checkpoint(_need(args.checkpoint), x, t, kmax)
    report = evaluation.evaluate_ranked(ranked, y, list(split.wnids), ks,
                                        args.adjust_total or len(split))
    (out / "report.json").write_text(report.to_json(), encoding="utf-8")
    evaluation.write_confusion_csv(report.confusion, report.class_order, out / "confusion.csv")
    for k in ks:
        line = f"top-{k}: {100 * report.mean_topk[k]:.2f}%"
        if report.n_total != report.n_present:
            line += (f" on {report.n_present} classes, adjusted "
                     f"{100 * report.adjusted_mean_topk[k]:.2f}% on {report.n_total}")
        print(line)
    return {"config": {"k": ks, "adjust_total": report.n_total, "model": cfg}}


def cmd_search(args) -> dict:
    seed = resolve_seed(args.seed)
    images, aux, split = _load_data(args, "train")
    x, y, t = _split_rows(images, aux, split)
    val = _split_rows(images, aux, load_split(_need(args.val)))
    vx, vy, vt = val
    k5 = min(5, len(vt))
    names = [str(i) for i in range(len(vt))]
    fixed = {"epochs": args.epochs} if args.epochs is not None else {}

    if args.model == "simple":
        def trainer(cfg):
            cfg = dataclasses.replace(cfg, **fixed)
            res = simple_zsl.train(cfg, t, x, y, val=val)
            return res.params, res.history

        def evaluator(params):
            rep = evaluation.evaluate_ranked(simple_zsl.predict(params, vx, vt, k5), vy, names,
                                             (1, k5))
            return rep.mean_topk[1], rep.mean_topk[k5]
    else:
        def trainer(cfg):
            cfg = dataclasses.replace(cfg, **fixed)
            model = cada_vae.train_cada(cfg, x, y, t)
            clf = cada_vae.fit_unseen_classifier(model, vt, cfg)
            return (model, clf), [h["total"] for h in model.history]

        def evaluator(mc):
            model, clf = mc
            rep = evaluation.evaluate_ranked(cada_vae.classify(model.img_vae, clf, vx, k5), vy,
                                             names, (1, k5))
            return rep.mean_topk[1], rep.mean_topk[k5]

    out = _out(args)
    records = hpo.run_search(args.model, args.trials, trainer, evaluator, seed, out,
                             args.parallel)
    best = records[0]
    print(f"{len(records)} trials; best trial {best.trial_id}: val top-5 {best.val_top5}, "
          f"top-1 {best.val_top1} ({best.status})")
    return {"config": {"trials": args.trials, "parallel": args.parallel, **fixed}, "seed": seed}


def _roots(path) -> dict:
    roots = json.loads(_need(path).read_text(encoding="utf-8"))
    if not isinstance(roots, dict) or not all(
            isinstance(v, (str, list)) for v in roots.values()):
        raise ConfigError(f"{path}: expected an object of group -> root wnid(s)")
    return roots


def cmd_exclude(args) -> dict:
    seed = resolve_seed(args.seed)
    registry = load_class_registry(_need(args.registry))
    train = load_split(_need(args.train), registry)
    extra = load_hierarchy(_need(args.hierarchy)) if args.hierarchy else None
    part = evaluation.partition_by_category(registry, _roots(args.roots), extra)
    mode = "group" if args.mode == "group" else "random_matched"
    reduced = evaluation.exclusion_split(train, part, args.group, mode, args.count, seed)
    out = _out(args)
    name = f"{Path(args.train).stem}_minus_{args.group}" if mode == "group" else \
        f"{Path(args.train).stem}_random_{len(train) - len(reduced)}_seed{seed}"
    write_split(reduced, out / f"{name}.txt")
    print(f"{len(train)} -> {len(reduced)} classes ({name}.txt)")
    return {"config": {"group": args.group, "mode": mode, "count": args.count}, "seed": seed}


def cmd_overlap(args) -> dict:
    registry = load_class_registry(_need(args.registry))
    train = load_split(_need(args.train), registry)
    test = load_split(_need(args.test), registry)
    subsets = evaluation.overlap_subsets(registry, train.wnids, test.wnids)
    out = _out(args)
    sizes = {"none": len(test)}
    for name, wnids in subsets.items():
        write_split(wnids, out / f"{name}.txt")
        sizes[name] = len(wnids)
    _write_json(out / "sizes.json", sizes)
    for name, n in sizes.items():
        print(f"{name}\t{n}")
    return {"config": {}}


def _names(path) -> dict[str, list[str]]:
    names = {}
    with open(_need(path), encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 2:
                raise CorpusError(f"{path}:{lineno}: expected 'wnid<TAB>phrases'")
            names[parts[0]] = [p for p in parts[1].split("|") if p]
    return names


def cmd_match(args) -> dict:
    registry = load_class_registry(_need(args.registry))
    out = _out(args)
    if args.action == "ingest":
        if not args.review:
            raise ConfigError("match ingest needs --review")
        updated = matcher.ingest_review_file(_need(args.review), registry)
        write_class_registry(updated, out / "registry.tsv")
        n = sum(1 for r in updated if r.article_titles)
        print(f"registry with {n} matched classes written to {out / 'registry.tsv'}")
        return {"config": {"action": "ingest"}}
    if not args.titles:
        raise ConfigError("match needs --titles")
    index = matcher.load_title_index(_need(args.titles))
    names = _names(args.synset_names) if args.synset_names else None
    parents = load_hierarchy(_need(args.hierarchy)) if args.hierarchy else None
    cands = matcher.match_registry(registry, index, names, parents)
    rows = matcher.write_review(registry, cands, out / "review.tsv", args.threshold, args.margin)
    n_auto = sum(r.status == "auto" for r in rows)
    print(f"{n_auto} auto / {len(rows) - n_auto} review; see {out / 'review.tsv'}")
    return {"config": {"threshold": args.threshold, "margin": args.margin}}


def cmd_lengths(args) -> dict:
    report = json.loads(_need(args.report).read_text(encoding="utf-8"))
    k = str(args.k)
    acc = report["per_class_topk"][k]
    articles = load_articles(_need(args.articles))
    part = None
    if args.roots:
        registry = load_class_registry(_need(args.registry)) if args.registry else None
        if registry is None:
            raise ConfigError("--roots needs --registry")
        extra = load_hierarchy(_need(args.hierarchy)) if args.hierarchy else None
        part = evaluation.partition_by_category(registry, _roots(args.roots), extra,
                                                wnids=list(acc))
    rows, corr = evaluation.length_vs_accuracy(acc, articles, part)
    out = _out(args)
    evaluation.write_length_tsv(rows, out / "lengths.tsv")
    _write_json(out / "correlations.json", {g: dataclasses.asdict(c) for g, c in corr.items()})
    for g, c in corr.items():
        print(f"{g}\tr={c.r:.3f}\tn={c.n}" + ("\t(degenerate)" if c.degenerate else ""))
    return {"config": {"k": args.k}}


# -- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="zslforge", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--out", required=True, help="output directory")
        return sp

    sp = add("synth", "generate a synthetic bundle")
    sp.add_argument("--config", help="JSON with SyntheticSpec fields")
    sp.add_argument("--seed", type=int)
    sp.set_defaults(func=cmd_synth, inputs=("config",))

    sp = add("encode", "encode class descriptions into aux vectors")
    sp.add_argument("--registry", required=True)
    sp.add_argument("--articles")
    sp.add_argument("--split", required=True)
    sp.add_argument("--embeddings", help="GloVe-style text embedding table")
    sp.add_argument("--chunks", help="ZSLF matrix of per-chunk features")
    sp.add_argument("--mode", choices=("mean", "sum"), default="mean")
    sp.add_argument("--text", choices=("articles", "names", "gloss", "names_gloss"),
                    default="articles")
    sp.add_argument("--allow-skip", action="store_true")
    sp.set_defaults(func=cmd_encode,
                    inputs=("registry", "articles", "split", "embeddings", "chunks"))

    sp = add("train", "train a model")
    sp.add_argument("model", choices=("simple", "cada"))
    sp.add_argument("--config")
    sp.add_argument("--train", required=True, help="split of seen classes")
    sp.add_argument("--val", help="validation split (simple: best-epoch selection)")
    sp.add_argument("--images", required=True)
    sp.add_argument("--aux", required=True)
    sp.add_argument("--seed", type=int)
    sp.set_defaults(func=cmd_train, inputs=("config", "train", "val", "images", "aux"))

    sp = add("eval", "evaluate a checkpoint on a test split")
    sp.add_argument("--checkpoint")
    sp.add_argument("--test")
    sp.add_argument("--images")
    sp.add_argument("--aux")
    sp.add_argument("--k", type=int, nargs="+", default=[1, 5])
    sp.add_argument("--adjust-total", type=int,
                    help="count classes missing from the test split as 0 accuracy")
    sp.add_argument("--from-report", help="re-adjust an existing report.json")
    sp.set_defaults(func=cmd_eval, inputs=("checkpoint", "test", "images", "aux", "from_report"))

    sp = add("search", "random hyperparameter search")
    sp.add_argument("model", choices=("simple", "cada"))
    sp.add_argument("--trials", type=int, default=40)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--train", required=True)
    sp.add_argument("--val", required=True)
    sp.add_argument("--images", required=True)
    sp.add_argument("--aux", required=True)
    sp.add_argument("--epochs", type=int, help="override the epoch count of every trial")
    sp.add_argument("--parallel", type=int, default=1)
    sp.set_defaults(func=cmd_search, inputs=("train", "val", "images", "aux"))

    sp = add("exclude", "drop a category (or a matched random set) from a training split")
    sp.add_argument("--registry", required=True)
    sp.add_argument("--train", required=True)
    sp.add_argument("--roots", required=True, help="JSON: group -> root wnid(s)")
    sp.add_argument("--group", required=True)
    sp.add_argument("--mode", choices=("group", "random"), default="group")
    sp.add_argument("--count", type=int)
    sp.add_argument("--hierarchy", help="extra child<TAB>parent links")
    sp.add_argument("--seed", type=int)
    sp.set_defaults(func=cmd_exclude, inputs=("registry", "train", "roots", "hierarchy"))

    sp = add("overlap", "test subsets without train/test description overlap")
    sp.add_argument("--registry", required=True)
    sp.add_argument("--train", required=True)
    sp.add_argument("--test", required=True)
    sp.set_defaults(func=cmd_overlap, inputs=("registry", "train", "test"))

    sp = add("match", "propose class/article matches, or ingest a reviewed file")
    sp.add_argument("action", nargs="?", choices=("propose", "ingest"), default="propose")
    sp.add_argument("--registry", required=True)
    sp.add_argument("--titles", help="title index TSV")
    sp.add_argument("--review", help="edited review TSV (ingest)")
    sp.add_argument("--synset-names", help="wnid<TAB>|-joined phrases for ancestors")
    sp.add_argument("--hierarchy")
    sp.add_argument("--threshold", type=float, default=matcher.DEFAULT_THRESHOLD)
    sp.add_argument("--margin", type=float, default=matcher.DEFAULT_MARGIN)
    sp.set_defaults(func=cmd_match,
                    inputs=("registry", "titles", "review", "synset_names", "hierarchy"))

    sp = add("lengths", "article length vs per-class accuracy")
    sp.add_argument("--report", required=True)
    sp.add_argument("--articles", required=True)
    sp.add_argument("--registry")
    sp.add_argument("--roots")
    sp.add_argument("--hierarchy")
    sp.add_argument("--k", type=int, default=5)
    sp.set_defaults(func=cmd_lengths,
                    inputs=("report", "articles", "registry", "roots", "hierarchy"))
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    started = time.time()
    try:
        digests = _inputs(args, args.inputs)
        info = args.func(args) or {}
        RunManifest(
            command=" ".join([args.command] + ([args.model] if hasattr(args, "model") else [])),
            config=info.get("config", {}),
            inputs=digests,
            seed=info.get("seed"),
            started=started,
            finished=time.time(),
        ).write(args.out)
    except MissingInputError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_MISSING
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (CorpusError, EncodingError, checkpoint.CheckpointError,
            evaluation.HierarchyCycleError, KeyError, ValueError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except Exception as e:  # noqa: BLE001
        log.exception("unexpected failure")
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
