"""End-to-end runs of the installed tacpeg-adapter script."""

import json
import os
import socket
import subprocess

import pytest

HELLO = b'{"protocol_version":1,"type":"hello"}\n'
MALFORMED = b'{"code":"malformed","message":"invalid json","type":"error"}\n'
UNSUPPORTED = b'{"code":"unsupported","message":"unsupported message type","type":"error"}\n'
ZERO_ACTION = b'{"action_tokens":[0,0,0],"type":"action"}\n'

# 1x1 black grayscale PNG, the placeholder conformance requests carry
PLACEHOLDER_B64 = ("iVBORw0KGgoAAAANSUhEUgAAAAEAAAABCAAAAAA6fptVAAAACklEQVR4nGNg"
                   "AAAAAgAB4iG8MwAAAABJRU5ErkJggg==")


def act_line(episode_id, attempt_index) -> bytes:
    msg = {"type": "act", "protocol_version": 1, "episode_id": episode_id,
           "attempt_index": attempt_index, "shape": "square",
           "clearance_mm": 2.0, "scale": [100.0, 100.0, 100.0],
           "instruction_text": "conformance probe",
           "composite_png_base64": PLACEHOLDER_B64}
    return json.dumps(msg, sort_keys=True, separators=(",", ":"),
                      ensure_ascii=True).encode("utf-8") + b"\n"


def run_stdio(args, payload: bytes = b"", timeout: float = 20.0, env=None):
    return subprocess.run(["tacpeg-adapter", *args], input=payload,
                          capture_output=True, timeout=timeout, env=env)


def test_version_flag():
    proc = run_stdio(["--version"])
    assert proc.returncode == 0
    assert proc.stdout.decode().startswith("tacpeg-adapter 0.1.0")


def test_stdio_conformance_transcript_zero_handler():
    payload = (HELLO + act_line(0, 1) + b'{"type": "act"\n'
               + b'{"type":"bogus"}\n' + act_line(0, 2))
    proc = run_stdio(["--handler", "zero"], payload)
    assert proc.returncode == 0
    assert proc.stdout == HELLO + ZERO_ACTION + MALFORMED + UNSUPPORTED + ZERO_ACTION


def test_stdio_echo_tokens():
    proc = run_stdio(["--handler", "echo-tokens:1,-2,3"], HELLO + act_line(0, 1))
    assert proc.returncode == 0
    assert proc.stdout == HELLO + b'{"action_tokens":[1,-2,3],"type":"action"}\n'


def test_unknown_handler_exits_usage():
    proc = run_stdio(["--handler", "reverse"])
    assert proc.returncode == 2
    err = proc.stderr.decode().strip().splitlines()
    assert len(err) == 1
    assert err[0].startswith("tacpeg-adapter: error: usage: unknown handler")


def test_oracle_proxy_requires_sidecar_flag():
    proc = run_stdio(["--handler", "oracle-proxy"])
    assert proc.returncode == 2
    assert "needs --sidecar" in proc.stderr.decode()


def test_bad_echo_spec_exits_usage():
    proc = run_stdio(["--handler", "echo-tokens:1,2"])
    assert proc.returncode == 2
    assert "three comma-separated integers" in proc.stderr.decode()


@pytest.mark.parametrize("flag,value", [("--listen", "noport"),
                                        ("--scale", "1,2")])
def test_bad_flag_values_exit_usage(flag, value):
    proc = run_stdio(["--handler", "zero", flag, value])
    assert proc.returncode == 2


def test_stdio_oracle_proxy(tmp_path):
    sidecar = tmp_path / "true.jsonl"
    row = {"episode_id": 0, "attempt_index": 1, "pose_error": [3.0, 2.5, -1.0],
           "clearance_mm": 2.0, "delta_mm": 1.0, "rz_cap_deg": 1.5,
           "scale": [100.0, 100.0, 100.0]}
    sidecar.write_text(json.dumps(row, sort_keys=True) + "\n", encoding="utf-8")
    proc = run_stdio(["--handler", "oracle-proxy", "--sidecar", str(sidecar)],
                     HELLO + act_line(0, 1))
    assert proc.returncode == 0
    assert proc.stdout == HELLO + b'{"action_mm_deg":[-1.0,-1.0,1.0],"type":"action"}\n'


def test_stdio_model_hook(tmp_path):
    (tmp_path / "deskhook.py").write_text(
        "def act(request):\n    return [0.25, 0.0, -1.5]\n", encoding="utf-8")
    env = dict(os.environ)
    env["PYTHONPATH"] = str(tmp_path) + os.pathsep + env.get("PYTHONPATH", "")
    proc = run_stdio(["--handler", "model:deskhook:act"],
                     HELLO + act_line(0, 1), env=env)
    assert proc.returncode == 0
    assert proc.stdout == HELLO + b'{"action_mm_deg":[0.25,0.0,-1.5],"type":"action"}\n'


def test_handler_crash_is_answered_and_session_survives(tmp_path):
    # the sidecar has no row for the second act; the first still works after
    sidecar = tmp_path / "true.jsonl"
    row = {"episode_id": 0, "attempt_index": 1, "pose_error": [1.5, -0.4, 2.0],
           "clearance_mm": 2.0, "delta_mm": 1.0, "rz_cap_deg": 1.5,
           "scale": [100.0, 100.0, 100.0]}
    sidecar.write_text(json.dumps(row, sort_keys=True) + "\n", encoding="utf-8")
    payload = HELLO + act_line(9, 9) + act_line(0, 1)
    proc = run_stdio(["--handler", "oracle-proxy", "--sidecar", str(sidecar)],
                     payload)
    assert proc.returncode == 0
    lines = proc.stdout.splitlines(keepends=True)
    assert len(lines) == 3
    error = json.loads(lines[1])
    assert error["code"] == "handler"
    assert lines[2] == b'{"action_mm_deg":[-0.5,0.0,-1.5],"type":"action"}\n'


def test_tcp_transport_serves_one_connection_with_once():
    proc = subprocess.Popen(
        ["tacpeg-adapter", "--handler", "zero", "--listen", "127.0.0.1:0", "--once"],
        stderr=subprocess.PIPE)
    try:
        banner = proc.stderr.readline().decode()
        assert banner.startswith("listening on 127.0.0.1:")
        port = int(banner.rsplit(":", 1)[1])
        with socket.create_connection(("127.0.0.1", port), timeout=10) as sock:
            with sock.makefile("rb") as reader:
                sock.sendall(HELLO + act_line(0, 1))
                assert reader.readline() == HELLO
                assert reader.readline() == ZERO_ACTION
        assert proc.wait(timeout=10) == 0
    finally:
        if proc.poll() is None:
            proc.kill()
            proc.wait()
