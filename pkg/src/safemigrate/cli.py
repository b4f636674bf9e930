"""Command-line entry point.

Exit codes: 0 success, 1 other failure, 2 usage error, 3 stage-order
violation, 4 build-environment failure, 5 regression detected.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__, pipeline
from .config import load_config
from .errors import MigrateError
from .workspace import Phase, Workspace

log = logging.getLogger("safemigrate")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--root", type=Path, default=Path("."), help="workspace root (default: .)")
    common.add_argument("--config", type=Path, help="configuration file (default: <root>/safemigrate.toml)")
    common.add_argument("--provider", help="scripted:<dir> or live[:model]")
    common.add_argument("--retry-budget", type=int, dest="retry_budget")
    common.add_argument("--max-iter", type=int, dest="max_iter")
    common.add_argument("--test-timeout", type=float, dest="test_timeout_s")
    common.add_argument("--report-format", choices=("text", "csv"), default="text")
    common.add_argument("--no-lint", action="store_true", help="skip the clippy warning count")
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = argparse.ArgumentParser(prog="safemigrate", description="Migrate transpiled Rust towards safe Rust.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    init = sub.add_parser("init", parents=[common], help="create a workspace from C sources, crate and tests")
    init.add_argument("--c", dest="c_dir", type=Path, required=True, help="directory with the C sources")
    init.add_argument("--rust", dest="rust_dir", type=Path, required=True, help="transpiled crate")
    init.add_argument("--tests", dest="tests_dir", type=Path, required=True, help="test suite directory")
    init.add_argument("--force", action="store_true", help="overwrite an existing workspace")

    sub.add_parser("phase1", parents=[common], help="struct abstractions and per-function pairs")
    sub.add_parser("tdwe", parents=[common], help="eliminate wrappers and remap call sites")
    sub.add_parser("phase2", parents=[common], help="run the agentic refactoring tasks")
    sub.add_parser("metrics", parents=[common], help="print the safety and quality report")
    sub.add_parser("run", parents=[common], help="all remaining stages in order")
    sub.add_parser("resume", parents=[common], help="continue an interrupted run")
    return p


def _config(args):
    overrides = {k: getattr(args, k) for k in ("retry_budget", "max_iter", "test_timeout_s", "provider")}
    return load_config(args.root, overrides, path=args.config)


def dispatch(args) -> int:
    cfg = _config(args)
    if args.command == "init":
        ws = Workspace(args.root)
        ws.root.mkdir(parents=True, exist_ok=True)
        (ws.root / "state").mkdir(exist_ok=True)
        with ws.acquire_lock():
            pipeline.init_workspace(args.root, args.c_dir, args.rust_dir, args.tests_dir, args.force)
        print(f"initialised workspace at {ws.root}")
        return 0
    ws = pipeline.open_workspace(args.root)
    if args.command == "metrics":
        print(pipeline.run_metrics(ws, cfg, args.report_format, lint=not args.no_lint), end="")
        return 0
    with ws.acquire_lock():
        if args.command == "phase1":
            pipeline.run_phase1(ws, pipeline.resolve_provider(cfg, None), cfg)
        elif args.command == "tdwe":
            pipeline.run_tdwe_stage(ws, cfg)
        elif args.command == "phase2":
            pipeline.run_phase2_stage(ws, pipeline.resolve_provider(cfg, None), cfg)
        elif args.command in ("run", "resume"):
            done = ws.load_state().phase is Phase.Done
            provider = None if done else pipeline.resolve_provider(cfg, None)
            print(pipeline.run_all(ws, provider, cfg, args.report_format, lint=not args.no_lint), end="")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return dispatch(args)
    except MigrateError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except KeyboardInterrupt:
        print("interrupted; run `resume` to continue", file=sys.stderr)
        return 130


if __name__ == "__main__":
    sys.exit(main())
