"""Command line entry point.

    clipextract --input DIR --out DIR [options]

Writes features.csf and resolved_config.json into --out. Exit codes:
0 success, 1 usage or argument errors, 2 unreadable frames or I/O
failures, 3 pixel or feature shape mismatches, 4 unknown backbone.
Errors print one JSON line on stderr.
"""

import argparse
import json
import sys
from pathlib import Path

from .backbone import DEFAULT_BACKBONE
from .errors import FrameReadError, ShapeError, UnknownBackboneError, UsageError
from .extract import ClipSpec, CorruptionSpec, ExtractJob, extract
from .indices import FRAME_METHODS


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="clipextract",
                     description="Extract clip features from tracklet frame folders into a CSF1 file.")
    parser.add_argument("--input", required=True, help="directory with one <person>_c<camera> folder per tracklet")
    parser.add_argument("--out", required=True, help="output directory for features.csf and the config echo")
    parser.add_argument("--backbone", default=DEFAULT_BACKBONE, help="feature backbone name (rand3d-<dim>)")
    parser.add_argument("--clips", type=int, default=8, help="clips per tracklet")
    parser.add_argument("--clip-length", type=int, default=4, help="frames per clip")
    parser.add_argument("--method", default="consec", choices=FRAME_METHODS, help="frame sampling method")
    parser.add_argument("--corrupt-max", type=int, default=0, help="upper bound on corrupted clips per tracklet")
    parser.add_argument("--downscale", type=int, default=5, help="corruption downscale factor")
    parser.add_argument("--jpeg-quality", type=int, default=30, help="corruption JPEG quality")
    parser.add_argument("--split", default="train", choices=("train", "query", "gallery"),
                        help="split label written for every tracklet")
    parser.add_argument("--seed", type=int, default=0, help="run seed for random sampling and corruption")
    return parser


def _fail(exc: Exception) -> None:
    line = json.dumps({"error": type(exc).__name__, "message": str(exc)})
    print(line, file=sys.stderr)


def run(args: argparse.Namespace) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    job = ExtractJob(
        input_dir=args.input,
        output_path=str(out_dir / "features.csf"),
        clips=ClipSpec(num_clips=args.clips, clip_length=args.clip_length, method=args.method),
        corruption=CorruptionSpec(max_corrupted=args.corrupt_max,
                                  downscale=args.downscale,
                                  jpeg_quality=args.jpeg_quality),
        backbone=args.backbone,
        split=args.split,
        seed=args.seed,
    )
    summary = extract(job)
    echo = {
        "backbone": args.backbone,
        "clip_length": args.clip_length,
        "corrupt_max": args.corrupt_max,
        "downscale": args.downscale,
        "input": str(args.input),
        "jpeg_quality": args.jpeg_quality,
        "method": args.method,
        "num_clips": args.clips,
        "out": str(out_dir),
        "seed": args.seed,
        "split": args.split,
    }
    (out_dir / "resolved_config.json").write_text(json.dumps(echo, indent=2, sort_keys=True) + "\n")
    print(f"wrote {summary['output']}")
    print(f"tracklets={summary['tracklets']} identities={summary['identities']} "
          f"feature_dim={summary['feature_dim']} corrupted_clips={summary['corrupted_clips']}")
    return 0


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return run(args)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    except UsageError as exc:
        _fail(exc)
        return 1
    except (FrameReadError, OSError) as exc:
        _fail(exc)
        return 2
    except ShapeError as exc:
        _fail(exc)
        return 3
    except UnknownBackboneError as exc:
        _fail(exc)
        return 4


if __name__ == "__main__":
    sys.exit(main())
