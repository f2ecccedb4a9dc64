"""lgdml-extract: export model artifacts into the interchange formats."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .manifest import ExtractionManifest
from .text import DEFAULT_PRIMER, export_language_embeddings
from .vision import export_features, export_posteriors


def _read_lines(path) -> list[str]:
    return [line for line in Path(path).read_text(encoding="utf-8").splitlines()
            if line.strip()]


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="lgdml-extract")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("features", help="frozen-backbone features")
    p.add_argument("--dataset", required=True, help="directory of class subdirectories")
    p.add_argument("--model", default="torchvision/resnet18")
    p.add_argument("--out", required=True, help="output prefix")

    p = sub.add_parser("posteriors", help="classifier softmax outputs")
    p.add_argument("--dataset", required=True)
    p.add_argument("--model", default="torchvision/resnet18")
    p.add_argument("--out", required=True)

    p = sub.add_parser("language", help="language-embedding tables")
    p.add_argument("--names", required=True,
                   help="file with one class name (or caption sentence) per line")
    p.add_argument("--models", nargs="+", required=True, help="hf/<name-or-path> ...")
    p.add_argument("--primer", default=DEFAULT_PRIMER)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--tag", default="lang")

    args = ap.parse_args(argv)
    manifest = ExtractionManifest()
    try:
        if args.command == "features":
            info = export_features(args.dataset, args.model, args.out)
            manifest.vision_model_id = args.model
            manifest.dataset = str(args.dataset)
            for suffix in (".lgdm", "_labels.txt", "_classes.txt"):
                path = Path(args.out).with_suffix(".lgdm") if suffix == ".lgdm" \
                    else Path(str(args.out) + suffix)
                manifest.record(path)
            manifest.save(str(args.out) + "_manifest.json")
            print(f"wrote {info['rows']} x {info['dim']} features "
                  f"({len(info['skipped'])} skipped)")
        elif args.command == "posteriors":
            info = export_posteriors(args.dataset, args.model, args.out)
            manifest.vision_model_id = args.model
            manifest.dataset = str(args.dataset)
            manifest.record(Path(args.out).with_suffix(".lgdm"))
            manifest.record(Path(str(args.out) + "_names.txt"))
            manifest.save(str(args.out) + "_manifest.json")
            print(f"wrote {info['rows']} x {info['classes']} posteriors "
                  f"({len(info['skipped'])} skipped)")
        else:
            names = _read_lines(args.names)
            written = export_language_embeddings(names, args.models, args.primer,
                                                 args.out, tag=args.tag)
            manifest.text_model_ids = list(args.models)
            manifest.primer = args.primer
            for matrix_path, names_path in written.values():
                manifest.record(matrix_path)
                manifest.record(names_path)
            manifest.save(Path(args.out) / f"{args.tag}_manifest.json")
            print(f"wrote {len(written)} language table(s) for {len(names)} names")
    except (ValueError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
