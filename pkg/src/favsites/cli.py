"""Command line: ``favsites <experiment> [flags]`` and ``favsites report MANIFEST...``.

Exit codes: 0 when every comparison is within its band, 2 when the run finished
with out-of-band statistics or failed replicates, 1 on any execution error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .harness import EXPERIMENTS, ConfigError, ExperimentConfig, report, report_text, run


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _assignment(text: str):
    key, sep, value = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError("expected KEY=VALUE")
    try:
        return key, json.loads(value)
    except json.JSONDecodeError:
        return key, value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="favsites", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", type=Path, help="JSON config file")
        p.add_argument("--seed", type=_u64, help="master seed (overrides the config)")
        p.add_argument("--out", type=Path, help="output directory (overrides the config)")
        p.add_argument("--threads", type=int, help="worker processes for replicates")
        p.add_argument("--replicate", type=int, help="replay a single replicate")
        p.add_argument("--set", type=_assignment, action="append", default=[], metavar="KEY=VALUE",
                       help="override one config key (value parsed as JSON)")
    p = sub.add_parser("report", help="merge run manifests into trend tables")
    p.add_argument("manifests", nargs="*", type=Path)
    p.add_argument("--json", action="store_true", help="print JSON instead of a table")
    return parser


def load_config(args) -> ExperimentConfig:
    data = json.loads(args.config.read_text()) if args.config else {}
    if data.get("experiment", args.command) != args.command:
        raise ConfigError(f"config is for {data['experiment']!r}, not {args.command!r}")
    data["experiment"] = args.command
    data.update(dict(args.set))
    if args.seed is not None:
        data["master_seed"] = args.seed
    if args.out is not None:
        data["output"] = str(args.out)
    if args.threads is not None:
        data["threads"] = args.threads
    return ExperimentConfig.from_dict(data)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "report":
            rep = report(args.manifests)
            sys.stdout.write(json.dumps(rep, indent=1) + "\n" if args.json else report_text(rep))
            return 0
        cfg = load_config(args)
        manifest = run(cfg, replicate=args.replicate)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001  any failure is an execution error
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    sys.stdout.write(Path(manifest.out_dir, "summary.txt").read_text())
    if manifest.failures:
        print(f"{len(manifest.failures)} replicate(s) failed; see manifest.json", file=sys.stderr)
        return 2
    return 0 if manifest.within_band in (True, None) else 2


if __name__ == "__main__":
    raise SystemExit(main())
