"""Built-in request handlers and the startup-time handler resolver.

A handler is a callable taking one decoded act request (a dict) and
returning the response object to serialize. Raising inside a handler turns
into a code=handler error response; the serve loop keeps going either way.
"""

import importlib
import json

from .labels import expert_action
from .protocol import mm_response, tokens_response


def zero_handler(request: dict) -> dict:
    return tokens_response((0, 0, 0))


def make_echo_handler(spec: str):
    """Handler returning fixed tokens parsed from a "1,-2,3" style string."""
    parts = spec.split(",")
    try:
        tokens = [int(p) for p in parts]
    except ValueError:
        tokens = []
    if len(tokens) != 3:
        raise ValueError(f"echo-tokens expects three comma-separated integers, got {spec!r}")

    def handler(request: dict) -> dict:
        return tokens_response(tokens)

    return handler


class SidecarReader:
    """Incremental reader of the engine's true-error sidecar (JSONL).

    The engine appends one row per query before sending the query, so the
    row is normally on disk by the time its request arrives here. A lookup
    miss re-scans only the bytes appended since the previous scan; a
    trailing partial line is left for the next scan.
    """

    def __init__(self, path):
        self.path = path
        self.offset = 0
        self.rows = {}

    def lookup(self, episode_id, attempt_index) -> dict:
        key = (int(episode_id), int(attempt_index))
        if key not in self.rows:
            self._scan()
        if key not in self.rows:
            raise LookupError(f"no sidecar row for episode {episode_id} "
                              f"attempt {attempt_index} in {self.path}")
        return self.rows[key]

    def _scan(self) -> None:
        try:
            with open(self.path, "rb") as fh:
                fh.seek(self.offset)
                data = fh.read()
        except FileNotFoundError:
            return
        end = data.rfind(b"\n")
        if end < 0:
            return
        for line in data[:end].split(b"\n"):
            if not line.strip():
                continue
            row = json.loads(line.decode("utf-8"))
            self.rows[(int(row["episode_id"]), int(row["attempt_index"]))] = row
        self.offset += end + 1


def make_oracle_proxy(sidecar_path):
    """Handler answering with the expert action for the true pose error.

    Privileged by construction: it reads the sidecar the engine writes in
    test mode and applies the same label formulas, so episodes driven
    through it must match the in-process expert record for record.
    """
    reader = SidecarReader(sidecar_path)

    def handler(request: dict) -> dict:
        row = reader.lookup(request["episode_id"], request["attempt_index"])
        action = expert_action(row["pose_error"], row["clearance_mm"],
                               row["delta_mm"], row["rz_cap_deg"])
        return mm_response(action)

    return handler


def load_hook(path: str):
    """Import "pkg.module:attr" (or "pkg.module.attr") and return the callable."""
    if ":" in path:
        module_name, _, attr = path.partition(":")
    elif "." in path:
        module_name, _, attr = path.rpartition(".")
    else:
        raise ValueError(f"model hook {path!r} needs a module and an attribute")
    try:
        module = importlib.import_module(module_name)
    except ImportError as err:
        raise ValueError(f"cannot import model hook module {module_name!r}: {err}")
    try:
        hook = getattr(module, attr)
    except AttributeError:
        raise ValueError(f"module {module_name!r} has no attribute {attr!r}")
    if not callable(hook):
        raise ValueError(f"model hook {path!r} is not callable")
    return hook


def coerce_hook_result(out):
    """Accept a full response dict or a bare 3-vector from a model hook.

    Three ints become action_tokens, any other numeric triple becomes
    action_mm_deg, and a dict passes through untouched.
    """
    if isinstance(out, dict):
        if "type" not in out:
            raise TypeError("model hook returned a dict without a type field")
        return out
    if isinstance(out, (list, tuple)) and len(out) == 3:
        if all(isinstance(v, int) and not isinstance(v, bool) for v in out):
            return tokens_response(out)
        if all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in out):
            return mm_response(out)
    raise TypeError(f"model hook must return a response dict, three ints, "
                    f"or three numbers, got {out!r}")


def make_model_handler(hook, default_scale=(100.0, 100.0, 100.0)):
    scale = [float(s) for s in default_scale]

    def handler(request: dict) -> dict:
        if "scale" not in request:
            request = dict(request, scale=list(scale))
        return coerce_hook_result(hook(request))

    return handler


def resolve_handler(spec: str, sidecar_path=None, scale=(100.0, 100.0, 100.0)):
    """Turn a handler spec string into a callable, failing fast at startup."""
    if spec == "zero":
        return zero_handler
    if spec.startswith("echo-tokens:"):
        return make_echo_handler(spec.partition(":")[2])
    if spec == "oracle-proxy":
        if sidecar_path is None:
            raise ValueError("oracle-proxy needs --sidecar pointing at the "
                             "engine's true-error file")
        return make_oracle_proxy(sidecar_path)
    if spec.startswith("model:"):
        return make_model_handler(load_hook(spec.partition(":")[2]), scale)
    raise ValueError(f"unknown handler {spec!r}")
