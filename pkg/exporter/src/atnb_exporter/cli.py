"""CLI: export ViT attention stacks to ATNB files."""

import argparse
import json
import sys

from .export import ExportSpec, ModelUnavailable, export
from .writer import ExportError


def build_parser():
    parser = argparse.ArgumentParser(
        prog="atnb-export",
        description="Export per-layer ViT attention maps and hidden states to ATNB.",
    )
    parser.add_argument("--model", required=True,
                        help="model id, e.g. facebook/deit-tiny-patch16-224")
    parser.add_argument("--image", action="append", required=True,
                        help="image path (repeatable)")
    parser.add_argument("--out", required=True, help="output .atnb path")
    parser.add_argument("--no-features", action="store_true",
                        help="omit hidden-state features (d=0 header)")
    parser.add_argument("--device", default="cpu")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    spec = ExportSpec(
        model_id=args.model,
        images=args.image,
        out=args.out,
        include_features=not args.no_features,
        device=args.device,
    )
    try:
        written = export(spec)
    except ModelUnavailable as exc:
        print(json.dumps({"error": "model_unavailable", "message": str(exc)}),
              file=sys.stderr)
        return 3
    except ExportError as exc:
        print(json.dumps({"error": "export_error", "message": str(exc)}),
              file=sys.stderr)
        return 2
    print(json.dumps({"written": written}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
