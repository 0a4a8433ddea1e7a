"""Command-line entry point. `tacpeg-adapter --handler zero` serves stdio."""

import argparse
import sys

from . import __version__
from .server import AdapterConfig, run_adapter

HANDLER_SPECS = "zero | echo-tokens:<tx,ty,trz> | oracle-proxy | model:<module:callable>"


def _parse_scale(text: str) -> tuple:
    parts = text.split(",")
    try:
        scale = tuple(float(p) for p in parts)
    except ValueError:
        scale = ()
    if len(scale) != 3:
        raise argparse.ArgumentTypeError("expects three comma-separated values")
    return scale


def _parse_endpoint(text: str) -> str:
    host, sep, port = text.rpartition(":")
    if not sep or not host or not port.isdigit():
        raise argparse.ArgumentTypeError("expects host:port")
    return text


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tacpeg-adapter",
        description="External policy process speaking the newline-delimited "
                    "JSON bridge protocol over stdio or TCP.")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    parser.add_argument("--handler", required=True, metavar="SPEC",
                        help=HANDLER_SPECS)
    parser.add_argument("--sidecar", metavar="PATH",
                        help="true-error JSONL the engine writes in test mode "
                             "(required by oracle-proxy)")
    parser.add_argument("--listen", metavar="HOST:PORT", type=_parse_endpoint,
                        help="serve TCP instead of stdio; port 0 picks a free "
                             "port, announced on stderr")
    parser.add_argument("--once", action="store_true",
                        help="with --listen, exit after the first connection closes")
    parser.add_argument("--scale", metavar="SX,SY,SRZ", type=_parse_scale,
                        default=(100.0, 100.0, 100.0),
                        help="token scale handed to model hooks when a request "
                             "carries none (default 100,100,100)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    config = AdapterConfig(handler=args.handler,
                           transport=args.listen or "stdio",
                           sidecar_path=args.sidecar,
                           scale=args.scale,
                           once=args.once)
    try:
        return run_adapter(config)
    except ValueError as err:
        print(f"tacpeg-adapter: error: usage: {err}", file=sys.stderr)
        return 2
    except OSError as err:
        print(f"tacpeg-adapter: error: io: {err}", file=sys.stderr)
        return 3
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
