"""Command-line interface.

Verbs:
  mesh    export the simulation mesh as JSON
  sweep   run the sensitivity sweep and write sweep.csv
  recon   run the reconstruction batch (PGM/CSV images + blob reports)
  serve   start the interactive touchpad WebSocket service
  replay  re-run a recorded state log through the event engine
"""

from __future__ import annotations

import argparse
import sys

from .config import (
    ExperimentConfig,
    load_config,
    paper_default_config,
    with_seed,
)
from .errors import ConfigError
from .runner import export_mesh, replay_file, run_reconstruction, run_sweep


def _resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    if getattr(args, "paper_defaults", False) or args.config is None:
        config = paper_default_config()
    else:
        config = load_config(args.config)
    return with_seed(config, getattr(args, "seed", None))


def _add_common(parser: argparse.ArgumentParser, out_required: bool = True) -> None:
    parser.add_argument("--config", help="JSON config path (defaults apply)")
    parser.add_argument(
        "--paper-defaults",
        action="store_true",
        help="ignore --config and use the built-in defaults",
    )
    parser.add_argument("--seed", type=int, help="override the config seed")
    if out_required:
        parser.add_argument("--out", required=True, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eitpad", description="EIT tactile touchpad simulator"
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    _add_common(sub.add_parser("mesh", help="export the simulation mesh"))
    _add_common(sub.add_parser("sweep", help="run the sensitivity sweep"))
    _add_common(sub.add_parser("recon", help="run the reconstruction batch"))

    p_serve = sub.add_parser("serve", help="start the touchpad service")
    _add_common(p_serve, out_required=False)
    p_serve.add_argument("--port", type=int, help="override the config port")
    p_serve.add_argument("--host", default="127.0.0.1")

    p_replay = sub.add_parser("replay", help="replay a state log")
    _add_common(p_replay, out_required=False)
    p_replay.add_argument("--log", required=True, help="JSON-lines state log")
    p_replay.add_argument("--out", help="output path (stdout when omitted)")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _resolve_config(args)
        if args.verb == "mesh":
            path = export_mesh(config, args.out)
            print(path)
        elif args.verb == "sweep":
            path = run_sweep(config, args.out)
            print(path)
        elif args.verb == "recon":
            summary = run_reconstruction(config, args.out)
            failed = [k for k, v in summary.items() if v["status"] != "ok"]
            print(f"{len(summary) - len(failed)}/{len(summary)} phantoms ok")
            if failed:
                print(f"failed: {', '.join(failed)}", file=sys.stderr)
                return 1
        elif args.verb == "serve":
            from .service import serve

            serve(config, args.port, args.host)
        elif args.verb == "replay":
            replay_file(args.log, config, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
