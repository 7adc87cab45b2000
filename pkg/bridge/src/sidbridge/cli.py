"""Bridge CLI.

    bridge extract --modality text|image|ocr --model <id> \
        --input <metadata.jsonl> --out <dir> [--resolution N] [--batch B]

Exit codes: 0 success, 2 configuration error, 3 data error,
5 environment error (model not loadable here).
"""

from __future__ import annotations

import argparse
import sys

from .errors import BridgeConfigError, BridgeDataError, BridgeEnvironmentError
from .extract import DEFAULT_RESOLUTION, BridgeJob, extract_embeddings


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bridge", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    ex = sub.add_parser("extract", help="run a frozen encoder over item metadata")
    ex.add_argument("--modality", required=True, choices=("text", "image", "ocr"))
    ex.add_argument("--model", required=True, help="model identifier (prefix 'toy:' for the offline featurizer)")
    ex.add_argument("--input", required=True, help="metadata JSONL: {item_id, description, image_path}")
    ex.add_argument("--out", required=True, help="output embedding directory (must be empty or absent)")
    ex.add_argument("--resolution", type=int, default=DEFAULT_RESOLUTION, help="render resolution (ocr only)")
    ex.add_argument("--batch", type=int, default=16)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        job = BridgeJob(
            modality=args.modality,
            model_id=args.model,
            input_path=args.input,
            output_dir=args.out,
            resolution=args.resolution,
            batch_size=args.batch,
        )
        out = extract_embeddings(job)
        print(out)
        return 0
    except BridgeConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except BridgeDataError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except BridgeEnvironmentError as e:
        print(f"error: {e}", file=sys.stderr)
        return 5


if __name__ == "__main__":
    sys.exit(main())
