"""Command-line front end mirroring ExtractSpec.

Echoes the resolved configuration as one JSON line on stderr (same
convention as the detector CLI) so runs are reproducible from logs.
Exit codes: 0 success, 2 bad configuration/input (unknown model or layer,
unreadable image, weights failure), 1 unexpected error.
"""
import argparse
import dataclasses
import json
import sys

from .extract import ExtractError, ExtractSpec, RESIZE_POLICIES, extract


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="fmap-extract",
        description="Write channel-summed feature maps of images as NPY + JSONL manifest",
    )
    p.add_argument("images", nargs="+")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--model", default="resnet50")
    p.add_argument("--layer", default=None,
                   help="module name (default: the model's first-conv activation)")
    p.add_argument("--weights", default="pretrained",
                   help="'pretrained', 'none' (seeded random), or a state-dict file")
    p.add_argument("--resize", default="stretch", choices=RESIZE_POLICIES)
    p.add_argument("--size", type=int, default=224)
    p.add_argument("--label", type=int, default=0, choices=(0, 1))
    p.add_argument("--split", default="test", choices=("train", "test", "val"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--manifest-name", default="extracted.jsonl")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = ExtractSpec(
            images=tuple(args.images),
            out_dir=args.out_dir,
            model=args.model,
            layer=args.layer,
            weights=args.weights,
            resize=args.resize,
            size=args.size,
            label=args.label,
            split=args.split,
            seed=args.seed,
            manifest_name=args.manifest_name,
        )
        print(json.dumps(dataclasses.asdict(spec), sort_keys=True), file=sys.stderr)
        written, fragment = extract(spec)
    except (ExtractError, ValueError, OSError) as e:
        print(f"fmap-extract: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # pragma: no cover - defensive
        print(f"fmap-extract: unexpected error: {e}", file=sys.stderr)
        return 1
    for path in written:
        print(path)
    print(fragment)
    return 0


if __name__ == "__main__":
    sys.exit(main())
