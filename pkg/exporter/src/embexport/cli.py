"""embexport command line: one subcommand, `export`."""

from __future__ import annotations

import argparse
import sys

from .encoders import EncoderError
from .export import DEFAULT_MODEL, DEFAULT_TEMPLATE, ExportJob, run_export


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embexport",
        description="Run a vision-language encoder over an image folder and write EMB1 files",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("export", help="embed images and class names")
    p.add_argument("--images", required=True, help="directory of P6 PPM images")
    p.add_argument("--labels", required=True, help="text file, one class name per line")
    p.add_argument("--out-img", required=True, help="output EMB1 path for image rows")
    p.add_argument("--out-txt", required=True, help="output EMB1 path for text rows")
    p.add_argument(
        "--model",
        default=DEFAULT_MODEL,
        help=f"encoder id; hash:<dim> is the built-in test encoder (default: {DEFAULT_MODEL})",
    )
    p.add_argument("--template", default=DEFAULT_TEMPLATE, help="prompt template with {label}")
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument(
        "--check-labels",
        default=None,
        help="optional per-image class indices (sorted-filename order); prints "
        "each image's cosine against its class text row",
    )
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        job = ExportJob(
            image_dir=args.images,
            label_file=args.labels,
            out_img=args.out_img,
            out_txt=args.out_txt,
            model_id=args.model,
            template=args.template,
            batch_size=args.batch_size,
        )
        result = run_export(job, check_labels=args.check_labels)
    except (EncoderError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(
        f"exported {len(result.image_files)} images "
        f"({len(result.skipped)} skipped) and {len(result.class_names)} classes, "
        f"d={result.image_rows.shape[1]}"
    )
    if result.cosines is not None:
        for name, value in zip(result.image_files, result.cosines):
            print(f"cosine {name} {value:.9f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
