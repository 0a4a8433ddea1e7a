"""Newline-delimited JSON bridge to external policy processes.

Framing: UTF-8, one JSON object per line, LF-terminated. The engine is the
client. It opens the conversation with a hello message and the policy
process answers with its own before any queries flow:

    {"protocol_version": 1, "type": "hello"}

Each query is a single "act" message carrying the episode id, attempt
index, shape, clearance, token scale, the prompt text, and the composite
PNG as base64. The reply is one "action" message with exactly one of
"action_mm_deg" (three floats) or "action_tokens" (three integers, which
the engine de-tokenizes with the advertised scale), or an "error" message.
Responses in the conformance suite are compared byte-for-byte, so writers
must use canonical serialization: sorted keys, separators ("," and ":"),
ASCII-only. docs/protocol.md specifies the byte-level contract.

Error handling: a version mismatch or malformed reply raises
ProtocolError (malformed data reports its byte offset in the stream); a
timeout, process exit, or error reply raises PolicyError, which aborts
only the episode in flight.
"""

import json
import os
import select
import shlex
import socket
import subprocess
import threading
import time

from .labeling import Action, TokenizedAction, detokenize_action
from .policies import Policy, PolicyError
from .tactile import png_bytes
import base64 as _base64

PROTOCOL_VERSION = 1
DEFAULT_TIMEOUT_S = 30.0


class ProtocolError(RuntimeError):
    """The peer violated the wire protocol."""

    def __init__(self, message, byte_offset=None):
        if byte_offset is not None:
            message = f"{message} (at byte offset {byte_offset})"
        super().__init__(message)
        self.byte_offset = byte_offset


def canonical_dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def hello_message() -> dict:
    return {"type": "hello", "protocol_version": PROTOCOL_VERSION}


class _LineStream:
    """Byte-offset-tracking LF line reader with a deadline, over an fd."""

    def __init__(self, fd):
        self.fd = fd
        self.buf = bytearray()
        self.offset = 0  # bytes already handed out

    def read_line(self, timeout: float) -> tuple:
        deadline = time.monotonic() + timeout
        while True:
            nl = self.buf.find(b"\n")
            if nl >= 0:
                line = bytes(self.buf[:nl])
                start = self.offset
                del self.buf[:nl + 1]
                self.offset = start + nl + 1
                return line, start
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise PolicyError(f"external policy timed out after {timeout} s")
            ready, _, _ = select.select([self.fd], [], [], remaining)
            if not ready:
                raise PolicyError(f"external policy timed out after {timeout} s")
            chunk = os.read(self.fd, 65536)
            if not chunk:
                raise PolicyError("external policy closed the connection")
            self.buf.extend(chunk)


def _parse_line(line: bytes, start_offset: int) -> dict:
    try:
        obj = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        pos = getattr(err, "pos", 0)
        raise ProtocolError(f"malformed message: {err}", byte_offset=start_offset + pos)
    if not isinstance(obj, dict):
        raise ProtocolError("message is not a JSON object", byte_offset=start_offset)
    return obj


def parse_action_response(obj: dict, scale) -> Action:
    kind = obj.get("type")
    if kind == "error":
        raise PolicyError(f"external policy error: {obj.get('code')}: {obj.get('message')}")
    if kind != "action":
        raise ProtocolError(f"expected an action response, got type {kind!r}")
    has_mm = "action_mm_deg" in obj
    has_tok = "action_tokens" in obj
    if has_mm == has_tok:
        raise ProtocolError("action response must carry exactly one of "
                            "action_mm_deg or action_tokens")
    if has_mm:
        vals = obj["action_mm_deg"]
        if not (isinstance(vals, list) and len(vals) == 3
                and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in vals)):
            raise ProtocolError(f"action_mm_deg must be three numbers, got {vals!r}")
        return Action(float(vals[0]), float(vals[1]), float(vals[2]))
    vals = obj["action_tokens"]
    if not (isinstance(vals, list) and len(vals) == 3
            and all(isinstance(v, int) and not isinstance(v, bool) for v in vals)):
        raise ProtocolError(f"action_tokens must be three integers, got {vals!r}")
    return detokenize_action(TokenizedAction(vals[0], vals[1], vals[2]), scale)


def _looks_like_endpoint(target: str) -> bool:
    host, sep, port = target.rpartition(":")
    return bool(sep) and host != "" and " " not in target and port.isdigit()


class ExternalPolicy(Policy):
    """Engine-side client for an external policy process or TCP endpoint.

    target is either a command line to spawn (stdio transport) or
    "host:port" to connect to. Queries are serialized under a lock, so one
    connection may serve parallel episodes.
    """

    name = "external"
    deterministic = False

    def __init__(self, target: str, scale=(100.0, 100.0, 100.0),
                 shape_kind: str = "square", clearance_mm: float = 2.0,
                 timeout_s: float = DEFAULT_TIMEOUT_S):
        self.target = target
        self.scale = tuple(scale)
        self.shape_kind = shape_kind
        self.clearance_mm = clearance_mm
        self.timeout_s = timeout_s
        self._lock = threading.Lock()
        self._episode_id = 0
        self._attempt_index = 0
        self._proc = None
        self._sock = None
        if _looks_like_endpoint(target):
            host, _, port = target.rpartition(":")
            self._sock = socket.create_connection((host, int(port)), timeout=timeout_s)
            self._reader = _LineStream(self._sock.fileno())
            self._write = self._sock.sendall
        else:
            self._proc = subprocess.Popen(
                shlex.split(target), stdin=subprocess.PIPE, stdout=subprocess.PIPE)
            self._reader = _LineStream(self._proc.stdout.fileno())

            def _write(data, proc=self._proc):
                try:
                    proc.stdin.write(data)
                    proc.stdin.flush()
                except (BrokenPipeError, OSError) as err:
                    raise PolicyError(f"external policy process is gone: {err}")

            self._write = _write
        self._handshake()

    def _send(self, obj) -> None:
        self._write(canonical_dumps(obj).encode("utf-8") + b"\n")

    def _recv(self) -> dict:
        line, start = self._reader.read_line(self.timeout_s)
        return _parse_line(line, start)

    def _handshake(self) -> None:
        self._send(hello_message())
        reply = self._recv()
        if reply.get("type") != "hello":
            raise ProtocolError(f"expected hello, got type {reply.get('type')!r}")
        version = reply.get("protocol_version")
        if version != PROTOCOL_VERSION:
            raise ProtocolError(f"protocol version mismatch: engine speaks "
                                f"{PROTOCOL_VERSION}, policy speaks {version}")

    def set_context(self, episode_id: int, attempt_index: int) -> None:
        self._episode_id = episode_id
        self._attempt_index = attempt_index

    def act(self, composite, instruction: str) -> Action:
        request = {
            "type": "act",
            "protocol_version": PROTOCOL_VERSION,
            "episode_id": self._episode_id,
            "attempt_index": self._attempt_index,
            "shape": self.shape_kind,
            "clearance_mm": self.clearance_mm,
            "scale": list(self.scale),
            "instruction_text": instruction,
            "composite_png_base64": _base64.b64encode(png_bytes(composite)).decode("ascii"),
        }
        with self._lock:
            self._send(request)
            reply = self._recv()
        return parse_action_response(reply, self.scale)

    def close(self) -> None:
        if self._proc is not None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()
        if self._sock is not None:
            self._sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def zero_handler(request: dict) -> dict:
    return {"type": "action", "action_tokens": [0, 0, 0]}


def make_echo_handler(tokens) -> "callable":
    tokens = [int(t) for t in tokens]

    def handler(request: dict) -> dict:
        return {"type": "action", "action_tokens": list(tokens)}

    return handler


MALFORMED_RESPONSE = {"type": "error", "code": "malformed", "message": "invalid json"}
UNSUPPORTED_RESPONSE = {"type": "error", "code": "unsupported",
                        "message": "unsupported message type"}


def serve_policy_queries(handler, in_stream, out_stream) -> int:
    """Reference server loop over binary streams; returns queries served.

    Mirrors the behavior the conformance suite expects from adapters:
    answer hello with hello, answer acts via the handler, answer malformed
    lines and unknown types with the pinned error responses, and keep
    serving until EOF.
    """

    def emit(obj):
        out_stream.write(canonical_dumps(obj).encode("utf-8") + b"\n")
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
            emit(handler(obj))
            served += 1
        else:
            emit(UNSUPPORTED_RESPONSE)
    return served


# A 1x1 black grayscale PNG; conformance requests carry it so transcripts
# do not depend on any image encoder.
_PLACEHOLDER_PNG_B64 = (
    "iVBORw0KGgoAAAANSUhEUgAAAAEAAAABCAAAAAA6fptVAAAACklEQVR4nGNgAAAAAgAB4iG8MwAA"
    "AABJRU5ErkJggg=="
)


def _conformance_act(episode_id: int, attempt_index: int) -> dict:
    return {
        "type": "act",
        "protocol_version": PROTOCOL_VERSION,
        "episode_id": episode_id,
        "attempt_index": attempt_index,
        "shape": "square",
        "clearance_mm": 2.0,
        "scale": [100.0, 100.0, 100.0],
        "instruction_text": "conformance probe",
        "composite_png_base64": _PLACEHOLDER_PNG_B64,
    }


def conformance_transcript(expected_tokens=(0, 0, 0)) -> list:
    """(request bytes, expected response bytes) pairs, in order."""
    tok = [int(t) for t in expected_tokens]
    action = canonical_dumps({"type": "action", "action_tokens": tok}).encode() + b"\n"
    steps = [
        (canonical_dumps(hello_message()).encode() + b"\n",
         canonical_dumps(hello_message()).encode() + b"\n"),
        (canonical_dumps(_conformance_act(0, 1)).encode() + b"\n", action),
        (b'{"type": "act"\n',
         canonical_dumps(MALFORMED_RESPONSE).encode() + b"\n"),
        (canonical_dumps({"type": "bogus"}).encode() + b"\n",
         canonical_dumps(UNSUPPORTED_RESPONSE).encode() + b"\n"),
        (canonical_dumps(_conformance_act(0, 2)).encode() + b"\n", action),
    ]
    return steps


def run_conformance(command: str = None, expected_tokens=(0, 0, 0),
                    timeout_s: float = DEFAULT_TIMEOUT_S) -> list:
    """Replay the conformance transcript; returns a list of failure strings.

    With a command, an adapter subprocess is spawned and its responses are
    compared byte-for-byte. Without one, the in-process reference server
    plays the adapter role (a self-test of the protocol fixtures).
    """
    steps = conformance_transcript(expected_tokens)
    failures = []
    if command is None:
        import io

        in_stream = io.BytesIO(b"".join(req for req, _ in steps))
        out_stream = io.BytesIO()
        serve_policy_queries(zero_handler if tuple(expected_tokens) == (0, 0, 0)
                             else make_echo_handler(expected_tokens),
                             in_stream, out_stream)
        got_lines = out_stream.getvalue().splitlines(keepends=True)
        for i, (_, expected) in enumerate(steps):
            got = got_lines[i] if i < len(got_lines) else b""
            if got != expected:
                failures.append(f"step {i}: expected {expected!r}, got {got!r}")
        return failures

    proc = subprocess.Popen(shlex.split(command),
                            stdin=subprocess.PIPE, stdout=subprocess.PIPE)
    try:
        reader = _LineStream(proc.stdout.fileno())
        for i, (request, expected) in enumerate(steps):
            try:
                proc.stdin.write(request)
                proc.stdin.flush()
            except (BrokenPipeError, OSError) as err:
                failures.append(f"step {i}: adapter is gone: {err}")
                break
            try:
                line, _ = reader.read_line(timeout_s)
            except PolicyError as err:
                failures.append(f"step {i}: {err}")
                break
            got = line + b"\n"
            if got != expected:
                failures.append(f"step {i}: expected {expected!r}, got {got!r}")
    finally:
        try:
            proc.stdin.close()
        except OSError:
            pass
        try:
            proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            proc.kill()
            proc.wait()
    return failures
