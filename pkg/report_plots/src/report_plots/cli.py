"""Command line entry point: ``plots render --spec spec.json``."""

from __future__ import annotations

import argparse
import json
import sys

from .render import PlotSpec, SchemaError, render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="plots",
        description="Render solver diagnostic reports into figures")
    sub = parser.add_subparsers(dest="command", required=True)
    p_render = sub.add_parser("render", help="render one figure from a plot spec")
    p_render.add_argument("--spec", required=True,
                          help="path to the JSON plot spec")
    args = parser.parse_args(argv)

    try:
        with open(args.spec) as fh:
            data = json.load(fh)
    except OSError as err:
        print(f"cannot read spec: {err}", file=sys.stderr)
        return 2
    except json.JSONDecodeError as err:
        print(f"spec is not valid JSON: {err}", file=sys.stderr)
        return 2

    try:
        spec = PlotSpec.from_dict(data)
        out = render(spec)
    except SchemaError as err:
        print(f"schema error: {err}", file=sys.stderr)
        return 2
    except OSError as err:
        print(f"i/o error: {err}", file=sys.stderr)
        return 2
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
