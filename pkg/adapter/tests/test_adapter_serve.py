"""Serve-loop behavior over in-memory byte streams."""

import io
import json

from tacpeg_adapter import encode_line, serve, zero_handler
from tacpeg_adapter.handlers import make_oracle_proxy

HELLO = b'{"protocol_version":1,"type":"hello"}\n'
MALFORMED = b'{"code":"malformed","message":"invalid json","type":"error"}\n'
UNSUPPORTED = b'{"code":"unsupported","message":"unsupported message type","type":"error"}\n'
ZERO_ACTION = b'{"action_tokens":[0,0,0],"type":"action"}\n'


def act_line(episode_id=0, attempt_index=1) -> bytes:
    return encode_line({"type": "act", "protocol_version": 1,
                        "episode_id": episode_id, "attempt_index": attempt_index,
                        "shape": "square", "clearance_mm": 2.0,
                        "scale": [100.0, 100.0, 100.0],
                        "instruction_text": "probe",
                        "composite_png_base64": "aGk="})


def run(handler, payload: bytes):
    out = io.BytesIO()
    served = serve(handler, io.BytesIO(payload), out)
    return served, out.getvalue().splitlines(keepends=True)


def test_golden_conversation_byte_for_byte():
    payload = (HELLO + act_line(0, 1) + b'{"type": "act"\n'
               + b'{"type":"bogus"}\n' + act_line(0, 2))
    served, lines = run(zero_handler, payload)
    assert served == 2
    assert lines == [HELLO, ZERO_ACTION, MALFORMED, UNSUPPORTED, ZERO_ACTION]


def test_blank_lines_skipped_and_non_objects_rejected():
    payload = b"\n\n" + b"[1,2,3]\n" + b'"act"\n' + b"not json at all\n" + HELLO
    served, lines = run(zero_handler, payload)
    assert served == 0
    assert lines == [MALFORMED, MALFORMED, MALFORMED, HELLO]


def test_missing_type_field_is_unsupported():
    served, lines = run(zero_handler, b'{"episode_id":0}\n')
    assert served == 0
    assert lines == [UNSUPPORTED]


def test_handler_crash_answers_error_and_keeps_serving():
    seen = []

    def moody(request):
        seen.append(request["attempt_index"])
        if request["attempt_index"] == 1:
            raise RuntimeError("flaky weights")
        return {"type": "action", "action_tokens": [4, 5, 6]}

    served, lines = run(moody, act_line(0, 1) + act_line(0, 2))
    assert served == 2
    assert lines == [
        b'{"code":"handler","message":"RuntimeError: flaky weights","type":"error"}\n',
        b'{"action_tokens":[4,5,6],"type":"action"}\n',
    ]
    assert seen == [1, 2]


def test_oracle_proxy_over_serve(tmp_path):
    sidecar = tmp_path / "true.jsonl"
    rows = [
        {"episode_id": 0, "attempt_index": 1, "pose_error": [3.0, 2.5, -1.0],
         "clearance_mm": 2.0, "delta_mm": 1.0, "rz_cap_deg": 1.5,
         "scale": [100.0, 100.0, 100.0]},
        {"episode_id": 0, "attempt_index": 2, "pose_error": [1.5, -0.4, 2.0],
         "clearance_mm": 2.0, "delta_mm": 1.0, "rz_cap_deg": 1.5,
         "scale": [100.0, 100.0, 100.0]},
    ]
    sidecar.write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in rows),
                       encoding="utf-8")
    payload = HELLO + act_line(0, 1) + act_line(0, 2) + act_line(3, 1)
    served, lines = run(make_oracle_proxy(str(sidecar)), payload)
    assert served == 3
    assert lines[0] == HELLO
    assert lines[1] == b'{"action_mm_deg":[-1.0,-1.0,1.0],"type":"action"}\n'
    assert lines[2] == b'{"action_mm_deg":[-0.5,0.0,-1.5],"type":"action"}\n'
    missing = json.loads(lines[3])
    assert missing["type"] == "error" and missing["code"] == "handler"
    assert "episode 3 attempt 1" in missing["message"]


def test_every_request_gets_exactly_one_response():
    payload = HELLO + act_line(0, 1) + HELLO + act_line(0, 2) + b'{"type":"x"}\n'
    served, lines = run(zero_handler, payload)
    assert served == 2
    assert len(lines) == 5
