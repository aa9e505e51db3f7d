"""Command line entry point.

Usage errors exit 2 (argparse), bad files or options exit 1, and a
retryable encoder failure exits 1 with a note saying so.
"""

import argparse
import sys

from .errors import EncoderError
from .ingest import ingest


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embed-prep",
        description="Embed authored class descriptions into a semantic-bank file")
    parser.add_argument("--descriptions", required=True,
                        help="JSON file of per-class, per-phase texts")
    parser.add_argument("--encoder", default="hashing-256",
                        help="hashing-<dim> or st:<model> (default: hashing-256)")
    parser.add_argument("--out", required=True,
                        help="output stem; writes <out>.json and <out>.bin")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        summary = ingest(args.descriptions, args.encoder, args.out)
    except EncoderError as exc:
        print(f"error (retryable): {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {summary['manifest']} + {summary['payload']}: "
          f"{summary['classes']} classes, N_e={summary['N_e']}, "
          f"N_a={summary['N_a']}, d={summary['d']}, encoder={summary['encoder']}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
