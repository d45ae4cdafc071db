"""Command line front end.

Exit codes: 0 success, 1 backend service or protocol fault, 2 invalid
configuration, 3 backend unreachable, 4 backend contract violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path
from typing import Optional

from . import __version__
from .backend import MockInpainter, RemoteInpainter
from .errors import (
    ConfigError,
    ContractViolationError,
    ProtocolError,
    ServiceError,
    TransportError,
)
from .imagecore import ViewImage, write_image_png, write_mask_png, write_risk_png
from .pipeline import TASKS, RunConfig, run_pipeline

logger = logging.getLogger(__name__)

_OWN_FLAGS = ("task",)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="panoweave",
        description="Iterative warp-and-inpaint panorama generation.",
    )
    parser.add_argument("task", nargs="?", choices=TASKS, help="what to generate")
    parser.add_argument("--task", dest="task_flag", choices=TASKS, help=argparse.SUPPRESS)
    parser.add_argument("--config", help="JSON config file; flags override its values")
    parser.add_argument("--backend", choices=("mock", "remote"), default="mock")
    parser.add_argument("--endpoint", help="inpainting service URL for --backend remote")
    parser.add_argument("--output-dir", default="out")
    parser.add_argument("--dump-diagnostics", action="store_true",
                        help="also write per-step mask and risk images")
    parser.add_argument("--print-config", action="store_true",
                        help="print the resolved config as JSON and exit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")

    group = parser.add_argument_group("run parameters (defaults depend on the task)")
    for f in fields(RunConfig):
        if f.name in _OWN_FLAGS:
            continue
        flag = "--" + f.name.replace("_", "-")
        if f.name == "negative_prompt":
            group.add_argument(flag, default=None)
            continue
        kind = type(f.default) if f.default is not None else str
        group.add_argument(flag, type=kind, default=None)
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Task defaults, then config file values, then explicit flags."""
    file_data = {}
    if args.config:
        try:
            file_data = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(file_data, dict):
            raise ConfigError("config file must hold a JSON object")

    task = args.task or args.task_flag or file_data.get("task")
    if not task:
        raise ConfigError("task required (positional, --task, or in the config file)")

    merged = {k: v for k, v in file_data.items() if k != "task"}
    for f in fields(RunConfig):
        if f.name in _OWN_FLAGS:
            continue
        value = getattr(args, f.name, None)
        if value is not None:
            merged[f.name] = value
    return RunConfig.for_task(task, **merged)


class _ArtifactWriter:
    """Streams per-step images to the output directory as steps finish."""

    def __init__(self, out_dir: Path, dump_diagnostics: bool) -> None:
        self.out_dir = out_dir
        self.dump = dump_diagnostics
        (out_dir / "views").mkdir(parents=True, exist_ok=True)
        if dump_diagnostics:
            (out_dir / "masks").mkdir(exist_ok=True)
            (out_dir / "risks").mkdir(exist_ok=True)

    def __call__(self, record: dict, view, mask, risk) -> None:
        ordinal = record["ordinal"]
        if view is not None:
            write_image_png(view, self.out_dir / "views" / f"view_{ordinal:02d}.png")
        if self.dump:
            if mask is not None:
                write_mask_png(mask, self.out_dir / "masks" / f"mask_{ordinal:02d}.png")
            if risk is not None:
                write_risk_png(risk, self.out_dir / "risks" / f"risk_{ordinal:02d}.png")


def _write_canvas(out_dir: Path, canvas) -> None:
    write_image_png(ViewImage(canvas.pixels), out_dir / "panorama.png")


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def main(argv: Optional[list] = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        config = resolve_config(args)
        if args.print_config:
            config.validate(require_prompt=False)
            print(json.dumps(config.to_dict(), indent=2, sort_keys=True))
            return 0
        config.validate(require_prompt=True)

        if args.backend == "remote":
            if not args.endpoint:
                raise ConfigError("--endpoint required for --backend remote")
            inpainter = RemoteInpainter(args.endpoint)
            inpainter.check_health()
        else:
            inpainter = MockInpainter()
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TransportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3

    out_dir = Path(args.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    writer = _ArtifactWriter(out_dir, args.dump_diagnostics)
    _write_json(out_dir / "manifest.json", {"version": __version__, "config": config.to_dict()})

    try:
        result = run_pipeline(config, inpainter, observer=writer)
    except Exception as exc:
        partial = getattr(exc, "partial_canvas", None)
        if partial is not None:
            _write_canvas(out_dir, partial)
        diag = getattr(exc, "partial_diagnostics", None)
        if diag is not None:
            diag["error"] = str(exc)
            _write_json(out_dir / "diagnostics.json", diag)
        print(f"error: {exc}", file=sys.stderr)
        if isinstance(exc, ConfigError):
            return 2
        if isinstance(exc, TransportError):
            return 3
        if isinstance(exc, ContractViolationError):
            return 4
        if isinstance(exc, (ServiceError, ProtocolError)):
            return 1
        raise

    _write_canvas(out_dir, result.canvas)
    _write_json(out_dir / "diagnostics.json", result.diagnostics)
    logger.info("wrote %s", out_dir / "panorama.png")
    return 0


if __name__ == "__main__":
    sys.exit(main())
