"""Standalone external-policy adapter for the peg-insertion engine.

Speaks the newline-delimited JSON bridge protocol (docs/protocol.md in the
engine repository) over stdio or TCP. Ships the zero, echo-tokens, and
oracle-proxy handlers plus a model:<hook> mount point for a learned policy.
Pure standard library; no dependency on the engine package.
"""

__version__ = "0.1.0"

from .protocol import (
    PROTOCOL_VERSION,
    canonical_dumps,
    encode_line,
    hello_message,
    tokens_response,
    mm_response,
    handler_error_response,
)
from .labels import clip, translation_step, expert_action
from .handlers import (
    SidecarReader,
    zero_handler,
    make_echo_handler,
    make_oracle_proxy,
    make_model_handler,
    load_hook,
    resolve_handler,
)
from .server import AdapterConfig, serve, run_adapter

__all__ = [
    "__version__",
    "PROTOCOL_VERSION",
    "canonical_dumps",
    "encode_line",
    "hello_message",
    "tokens_response",
    "mm_response",
    "handler_error_response",
    "SidecarReader",
    "clip",
    "translation_step",
    "expert_action",
    "zero_handler",
    "make_echo_handler",
    "make_oracle_proxy",
    "make_model_handler",
    "load_hook",
    "resolve_handler",
    "AdapterConfig",
    "serve",
    "run_adapter",
]
