"""Single-threaded serve loop and the stdio/TCP transports."""

import json
import socket
import sys
from dataclasses import dataclass

from .handlers import resolve_handler
from .protocol import (MALFORMED_RESPONSE, UNSUPPORTED_RESPONSE, encode_line,
                       handler_error_response, hello_message)


@dataclass
class AdapterConfig:
    handler: str
    transport: str = "stdio"  # "stdio" or "host:port"
    sidecar_path: str = None
    scale: tuple = (100.0, 100.0, 100.0)
    once: bool = False  # TCP only: exit after the first connection closes


def serve(handler, in_stream, out_stream) -> int:
    """Answer requests until the input stream closes; returns acts served.

    Exactly one response per non-empty line: hello for hello, the handler's
    response for act (a crash inside the handler becomes a code=handler
    error), and the pinned error responses for unparseable lines and unknown
    message types. Bad input never kills the loop; only a dead output
    stream raises.
    """
    def emit(obj):
        out_stream.write(encode_line(obj))
        out_stream.flush()

    served = 0
    for raw in in_stream:
        line = raw.rstrip(b"\n")
        if not line:
            continue
        try:
            obj = json.loads(line.decode("utf-8"))
            if not isinstance(obj, dict):
                raise ValueError("not an object")
        except (UnicodeDecodeError, ValueError):
            emit(MALFORMED_RESPONSE)
            continue
        kind = obj.get("type")
        if kind == "hello":
            emit(hello_message())
        elif kind == "act":
            try:
                response = handler(obj)
            except Exception as err:
                response = handler_error_response(err)
            emit(response)
            served += 1
        else:
            emit(UNSUPPORTED_RESPONSE)
    return served


def run_adapter(config: AdapterConfig) -> int:
    """Resolve the handler, then serve the configured transport until EOF.

    stdio serves one session. TCP accepts connections one at a time,
    forever unless config.once is set; the bound address is announced on
    stderr so callers may listen on port 0.
    """
    handler = resolve_handler(config.handler, config.sidecar_path, config.scale)
    if config.transport == "stdio":
        try:
            serve(handler, sys.stdin.buffer, sys.stdout.buffer)
        except (BrokenPipeError, OSError):
            pass  # peer went away; nothing left to answer
        return 0
    host, _, port = config.transport.rpartition(":")
    with socket.create_server((host, int(port))) as server:
        bound = server.getsockname()
        print(f"listening on {bound[0]}:{bound[1]}", file=sys.stderr, flush=True)
        while True:
            conn, _ = server.accept()
            with conn:
                try:
                    serve(handler, conn.makefile("rb"), conn.makefile("wb"))
                except (BrokenPipeError, OSError):
                    pass
            if config.once:
                return 0
