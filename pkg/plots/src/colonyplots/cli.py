"""`plots render --spec spec.json`: batch figure rendering."""

from __future__ import annotations

import argparse
import json
import sys

from .figures import EmptyInput, FigureSpec, MissingColumn, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="plots")
    sub = parser.add_subparsers(dest="command", required=True)
    r = sub.add_parser("render", help="render figures from a spec file")
    r.add_argument("--spec", required=True,
                   help="JSON: a figure spec object or a list of them")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    with open(args.spec) as fh:
        raw = json.load(fh)
    specs = raw if isinstance(raw, list) else [raw]
    status = 0
    for entry in specs:
        spec = FigureSpec.from_dict(entry)
        try:
            render(spec)
            print(f"wrote {spec.out} ({spec.kind})")
        except (EmptyInput, MissingColumn, FileNotFoundError) as exc:
            print(f"error rendering {spec.out}: {exc}", file=sys.stderr)
            status = 1
    return status


if __name__ == "__main__":
    sys.exit(main())
