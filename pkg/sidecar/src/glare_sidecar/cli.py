"""Launch the scoring service: `glare-sidecar --port 8099 --mode stub`."""

from __future__ import annotations

import argparse
import sys

import uvicorn

from .app import SidecarConfig, create_app
from .encoders import DEFAULT_REAL_MODEL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="glare-sidecar", description=__doc__)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8099)
    parser.add_argument("--mode", choices=("stub", "real"), default="stub")
    parser.add_argument("--model", default=None, help=f"real-mode model id (default {DEFAULT_REAL_MODEL})")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    config = SidecarConfig(host=args.host, port=args.port, mode=args.mode, model=args.model)
    try:
        app = create_app(config)
    except Exception as exc:
        print(f"failed to start encoder ({args.mode}): {exc}", file=sys.stderr)
        return 1
    uvicorn.run(app, host=config.host, port=config.port, log_level="info")
    return 0


if __name__ == "__main__":
    sys.exit(main())
