"""Wire-format helpers for the newline-delimited JSON policy protocol.

Every message leaving the adapter is serialized canonically (sorted keys,
"," and ":" separators, ASCII-only) because the engine's conformance suite
compares responses byte-for-byte. Floats keep Python's repr form, the
shortest decimal that round-trips, so numeric replies survive the engine's
parser bit-exact.
"""

import json

PROTOCOL_VERSION = 1

MALFORMED_RESPONSE = {"type": "error", "code": "malformed", "message": "invalid json"}
UNSUPPORTED_RESPONSE = {"type": "error", "code": "unsupported",
                        "message": "unsupported message type"}


def canonical_dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def encode_line(obj) -> bytes:
    return canonical_dumps(obj).encode("utf-8") + b"\n"


def hello_message() -> dict:
    return {"type": "hello", "protocol_version": PROTOCOL_VERSION}


def tokens_response(tokens) -> dict:
    return {"type": "action", "action_tokens": [int(t) for t in tokens]}


def mm_response(action) -> dict:
    return {"type": "action", "action_mm_deg": [float(a) for a in action]}


def handler_error_response(exc: BaseException) -> dict:
    """Error reply for a crashed handler: one-line summary, session survives."""
    lines = str(exc).splitlines()
    first = lines[0] if lines else ""
    message = f"{type(exc).__name__}: {first}" if first else type(exc).__name__
    return {"type": "error", "code": "handler", "message": message}
