"""snsplot --in CSV --kind KIND --out IMG [--title T]

Exit codes: 0 success, 1 schema/validation problem, 3 I/O problem.
"""

from __future__ import annotations

import argparse
import sys

from snsplot.figures import SchemaError, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="snsplot", description="render harness CSV reports as figures"
    )
    parser.add_argument("--in", dest="input", required=True, metavar="CSV")
    parser.add_argument("--kind", required=True,
                        choices=["convergence", "qsweep", "pathwise", "stokes"])
    parser.add_argument("--out", required=True, metavar="IMG")
    parser.add_argument("--title", default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        render(args.input, args.kind, args.out, title=args.title)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"i/o failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
