"""Command line entry point: render figure specs to PNG files.

Usage:
    ggfig --spec fig3.json [--spec fig6.json ...]

Each spec is a JSON object with keys kind, inputs, out and the optional
plane, hull_only, overlay, group_by, title.  Relative paths inside a spec
resolve against the spec file's folder.  Exit codes: 0 on success, 2 for
bad specs or unreadable inputs.
"""

from __future__ import annotations

import argparse
import sys

from .figures import load_spec, render
from .readers import FigureError

EXIT_OK = 0
EXIT_CONFIG = 2


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="ggfig", description="Render acceleration-envelope figures.")
    parser.add_argument("--spec", action="append", required=True,
                        metavar="PATH", dest="specs",
                        help="figure spec JSON; repeat for several figures")
    args = parser.parse_args(argv)

    try:
        for path in args.specs:
            out = render(load_spec(path))
            print(f"wrote {out}")
    except (FigureError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
