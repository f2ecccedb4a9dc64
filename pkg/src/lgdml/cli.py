"""Command-line surface: synth, train, eval, pseudolabel, analyze, gradcheck.

Exit codes: 0 success, 1 failed checks, 2 bad arguments or unusable
inputs. Diagnostics go to stderr; every run logs its fully resolved
configuration into its output artifacts.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import datastore, evalkit, pseudolabels, synth, trainer
from .config import dumps_config, load_config
from .errors import LgdmlError

GRADCHECK_CLI_TOL = 1e-4


def _head_from_checkpoint(path):
    config_text, arrays = datastore.load_checkpoint(path)
    cfg_doc = json.loads(config_text)
    params = {name: (arr.ravel() if name.startswith("b") else arr)
              for name, arr in arrays.items() if not name.startswith("pred_")}
    return trainer.EmbedderHead(params, cfg_doc.get("hidden", False)), cfg_doc


def _cmd_synth(args) -> int:
    spec_doc = json.loads(Path(args.spec).read_text()) if args.spec else {}
    spec = synth.synth_spec_from_dict(spec_doc)
    bundle = synth.synth_dataset(spec)
    datastore.save_bundle(args.out, bundle)
    print(f"wrote bundle with {bundle.features.shape[0]} samples, "
          f"{len(bundle.class_names)} classes to {args.out}")
    return 0


def _cmd_train(args) -> int:
    cfg = load_config(args.config)
    data = datastore.load_bundle(args.data)
    head, history = trainer.train(cfg, data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    resolved = dumps_config(cfg)
    (out / "resolved_config.json").write_text(resolved)
    arrays = {name: np.atleast_2d(arr) for name, arr in head.params.items()}
    datastore.save_checkpoint(out / "checkpoint.lgck", resolved, arrays)
    datastore.write_history_csv(out / "history.csv", history)
    last = history.val_recall1[-1]
    print(f"trained {cfg.epochs} epochs; final val recall@1 = {last:.4f}; "
          f"artifacts in {out}")
    return 0


def _split_of(data, name):
    if name == "train":
        return data.subset(data.train_classes)
    if name == "test":
        return data.subset(data.test_classes)
    return data.features, data.labels


def _cmd_eval(args) -> int:
    head, cfg_doc = _head_from_checkpoint(args.checkpoint)
    data = datastore.load_bundle(args.data)
    feats, labels = _split_of(data, args.split)
    emb = head.forward(feats.astype(np.float64))
    report = evalkit.evaluate(emb, labels, seed=args.seed)
    doc = json.loads(report.to_text())
    doc["split"] = args.split
    doc["config"] = cfg_doc
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    print(text, end="")
    return 0


def _cmd_pseudolabel(args) -> int:
    post = pseudolabels.PosteriorMatrix(
        datastore.read_matrix(args.posteriors),
        datastore.read_names(args.names))
    if args.level == "class":
        labels = [int(v) for v in datastore.read_names(args.labels)]
        assign = pseudolabels.class_pseudolabels(post, labels, args.k)
    else:
        assign = pseudolabels.sample_pseudolabels(post, args.k)
    report = pseudolabels.format_assignment_report(assign)
    if args.out:
        Path(args.out).write_text(report)
    print(report, end="")
    return 0


def _cmd_analyze(args) -> int:
    head, cfg_doc = _head_from_checkpoint(args.checkpoint)
    data = datastore.load_bundle(args.data)
    if args.lang:
        table = datastore.load_language_table(args.lang[0], args.lang[1])
    elif data.lang_class is not None:
        table = data.lang_class
    else:
        raise LgdmlError("no language table: bundle has none and --lang not given")
    feats, labels = _split_of(data, args.split)
    emb = head.forward(feats.astype(np.float64))
    profile = evalkit.semantic_retrieval_profile(
        emb, labels, data.class_names, table,
        top_n=args.top_n, top_classes=args.top_classes)
    divergence = evalkit.alignment_divergence(
        emb, labels, data.class_names, table,
        gamma_lang=args.gamma_lang, temperature=args.temperature)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "retrieval_profile.csv").write_text(profile.to_csv())
    doc = {"alignment_divergence": divergence, "split": args.split,
           "gamma_lang": args.gamma_lang, "temperature": args.temperature,
           "config": cfg_doc}
    (out / "alignment.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    print(f"alignment divergence ({args.split}): {divergence:.6f}; artifacts in {out}")
    return 0


def _cmd_gradcheck(args) -> int:
    report = trainer.gradcheck(args.loss, step=args.step, seed=args.seed,
                               instances=args.instances)
    failed = False
    for name in sorted(report):
        err = report[name]["max_rel_error"]
        ok = err <= GRADCHECK_CLI_TOL
        failed |= not ok
        print(f"{name:32s} max_rel_error={err:.3e} "
              f"[{ 'ok' if ok else 'FAIL'}]")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lgdml")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic fixture bundle")
    p.add_argument("--spec", help="JSON spec file (defaults apply if omitted)")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_synth)

    p = sub.add_parser("train", help="train an embedding head")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("eval", help="retrieval metrics for a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=["train", "test", "all"], default="test")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("pseudolabel", help="extract top-k pseudo-classnames")
    p.add_argument("--posteriors", required=True)
    p.add_argument("--names", required=True, help="pretrain class-name sidecar")
    p.add_argument("--labels", help="sample labels file (class level)")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--level", choices=["class", "sample"], default="class")
    p.add_argument("--out")
    p.set_defaults(fn=_cmd_pseudolabel)

    p = sub.add_parser("analyze", help="retrieval profile and alignment divergence")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--lang", nargs=2, metavar=("MATRIX", "NAMES"))
    p.add_argument("--split", choices=["train", "test", "all"], default="test")
    p.add_argument("--top-n", type=int, default=20)
    p.add_argument("--top-classes", type=int, default=5)
    p.add_argument("--gamma-lang", type=float, default=0.5)
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_analyze)

    p = sub.add_parser("gradcheck", help="verify analytic gradients")
    p.add_argument("--loss")
    p.add_argument("--step", type=float, default=1e-6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--instances", type=int, default=5)
    p.set_defaults(fn=_cmd_gradcheck)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "pseudolabel" and args.level == "class" and not args.labels:
        print("error: --labels is required at class level", file=sys.stderr)
        return 2
    try:
        return args.fn(args)
    except LgdmlError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
