"""pathgibbs command line.

Exit codes: 0 success, 2 configuration or precondition error, 3 numerical
failure, 4 a statistical check failed.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from pydantic import ValidationError

from ..sim import SimulationError
from . import commands
from .config import COMMANDS, ExperimentConfig, load

log = logging.getLogger("pathgibbs")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_STATISTICAL = 4


def _dump_json(obj) -> str:
    return json.dumps(commands.clean(obj), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def _write(out: Path, name: str, content) -> Path:
    path = out / name
    path.parent.mkdir(parents=True, exist_ok=True)
    text = content if isinstance(content, str) else _dump_json(content)
    path.write_text(text, encoding="utf-8", newline="")
    return path


def execute(command: str, cfg: ExperimentConfig, out: Path) -> int:
    if cfg.command is not None and cfg.command != command:
        raise ValueError(f"config is for {cfg.command!r}, not {command!r}")
    tag = {"config_hash": cfg.content_hash(), "seed": cfg.seed}
    run = commands.COMMANDS[command]
    result = run(cfg, cfg.sim.M, tag)
    report = {"command": command, **tag, "config": cfg.canonical(), "M": cfg.sim.M,
              "report": result.report, "pass": result.passed}
    if cfg.refine and command in commands.REFINABLE:
        kw = {"write": False} if command == "simulate" else {}
        fine = run(cfg, 2 * cfg.sim.M, tag, **kw)
        report["refined"] = {"M": 2 * cfg.sim.M, "report": fine.report, "pass": fine.passed}

    files = dict(result.files)
    for name, content in files.items():
        if name.endswith(".json") and isinstance(content, dict):
            content.setdefault("config_hash", tag["config_hash"])
            content.setdefault("seed", tag["seed"])
    if command == "simulate":
        report["files"] = sorted(files)
    for name, content in files.items():
        _write(out, name, content)
    stem = {"simulate": "manifest"}.get(command, command.replace("-", "_"))
    path = _write(out, f"{stem}.json", report)
    log.info("wrote %s", path)
    return EXIT_OK if result.passed else EXIT_STATISTICAL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pathgibbs", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", type=Path, default=None, help="YAML or JSON config file")
        s.add_argument("--seed", type=int, default=None, help="override the config seed")
        s.add_argument("--out", type=Path, default=None, help="output directory")
        s.add_argument("--threads", type=int, default=None, help="worker threads")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load(args.config, seed=args.seed, threads=args.threads)
        out = args.out or Path(cfg.out or f"out/{args.command}")
        return execute(args.command, cfg, out)
    except (ValidationError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SimulationError, FloatingPointError, OverflowError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
