"""Command-line entry point.

    wignerbath <transform|evolve|observables|certify> --config run.cfg \
               [--override key=value ...]

The subcommand selects the run mode (overriding the config's `mode`); all
other settings come from the config file plus any --override pairs.  The
exit status is nonzero iff a diagnostic exceeded its tolerance, a quadrature
flagged failure, or the configuration/state was rejected.
"""

import argparse
import sys

from .config import parse_config, ConfigError, MODES
from .runio import run


def build_parser():
    parser = argparse.ArgumentParser(
        prog="wignerbath",
        description="Evolve Wigner functions of a particle coupled to a "
                    "scalar bath, directly from their initial values.")
    sub = parser.add_subparsers(dest="mode", required=True)
    for mode in MODES:
        p = sub.add_parser(mode, help=f"run in {mode} mode")
        p.add_argument("--config", required=True,
                       help="path to the plain-text configuration file")
        p.add_argument("--override", action="append", default=[],
                       metavar="KEY=VALUE",
                       help="override a configuration key (repeatable)")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    overrides = {}
    for item in args.override:
        if "=" not in item:
            print(f"error: --override needs KEY=VALUE, got {item!r}",
                  file=sys.stderr)
            return 2
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    overrides["mode"] = args.mode

    try:
        with open(args.config, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 2
    try:
        config = parse_config(text, overrides)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    manifest = run(config)
    for failure in manifest["failures"]:
        print(f"FAIL: {failure}", file=sys.stderr)
    for tag, diag in manifest.get("diagnostics", {}).items():
        print(f"{tag}: " + ", ".join(f"{k}={v:.3e}" if isinstance(v, float)
                                     else f"{k}={v}" for k, v in diag.items()))
    print(f"wrote {len(manifest['files'])} files to {config.out_dir}")
    return 1 if manifest["failures"] else 0


if __name__ == "__main__":
    raise SystemExit(main())
