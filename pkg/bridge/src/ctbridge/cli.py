"""Batch adapter entry point: ``bridge --request <dir> --response <dir>``."""

from __future__ import annotations

import argparse
import sys

from .adapter import BridgeError, serve_request


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="bridge", description=__doc__)
    parser.add_argument("--request", required=True, help="request bundle directory")
    parser.add_argument("--response", required=True, help="response bundle directory")
    args = parser.parse_args(argv)
    try:
        serve_request(args.request, args.response)
    except BridgeError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
