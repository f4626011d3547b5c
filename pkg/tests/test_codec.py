"""Wire-format properties: round-trip identity, byte-canonicality, and
decode-time invariant enforcement with field paths."""

import json
import random
import subprocess
import sys

import pytest

import generators as gen
from delegator.codec import DecodeError, decode_message, encode_message
from delegator.messages import CoderResult, Diagnostics, Specification

N_RANDOM = 300


def _messages(seed: int, count: int):
    rng = random.Random(seed)
    for i in range(count):
        pick = i % 3
        if pick == 0:
            yield gen.specification(rng)
        elif pick == 1:
            yield gen.coder_result(rng)
        else:
            yield gen.decision(rng)


def test_roundtrip_identity_over_random_messages():
    for msg in _messages(seed=1301, count=N_RANDOM):
        assert decode_message(encode_message(msg)) == msg


def test_encode_is_deterministic():
    for msg in _messages(seed=77, count=60):
        assert encode_message(msg) == encode_message(msg)


def test_encode_stable_across_processes():
    rng = random.Random(4242)
    msg = gen.specification(rng)
    here = encode_message(msg).decode("utf-8")
    code = (
        "import sys, random; sys.path.insert(0, 'src'); sys.path.insert(0, 'tests')\n"
        "import generators as gen\n"
        "from delegator.codec import encode_message\n"
        "rng = random.Random(4242)\n"
        "sys.stdout.write(encode_message(gen.specification(rng)).decode('utf-8'))\n"
    )
    out = subprocess.run(
        [sys.executable, "-c", code], capture_output=True, text=True, check=True,
        cwd=__file__.rsplit("/tests/", 1)[0],
    )
    assert out.stdout == here


def test_no_insignificant_whitespace_and_sorted_keys():
    rng = random.Random(5)
    raw = encode_message(gen.coder_result(rng)).decode("utf-8")
    assert ": " not in raw and ", " not in raw
    obj = json.loads(raw)
    assert list(obj) == sorted(obj)


def test_decode_rejects_success_with_diagnostics():
    body = {
        "type": "coder_result",
        "subtask_id": "s1",
        "status": "success",
        "artifacts": {},
        "summary": "done",
        "diagnostics": {"root_cause": "x", "failed_operation": ""},
    }
    with pytest.raises(DecodeError):
        decode_message(json.dumps(body))


def test_decode_rejects_fail_with_artifacts():
    body = {
        "type": "coder_result",
        "subtask_id": "s1",
        "status": "fail",
        "artifacts": {"a": "ref:a"},
        "summary": "",
        "diagnostics": {"root_cause": "x", "failed_operation": ""},
    }
    with pytest.raises(DecodeError):
        decode_message(json.dumps(body))


def test_decode_error_carries_field_path():
    body = {
        "type": "specification",
        "subtask_id": "s1",
        "directive": "go",
        "inputs": [{"name": "ok", "artifact": "a", "annotation": {"kind": "wat"}}],
        "returns": [],
    }
    with pytest.raises(DecodeError) as err:
        decode_message(json.dumps(body))
    assert "$.inputs[0]" in str(err.value)


def test_decode_rejects_duplicate_input_names():
    binding = {"name": "x", "artifact": "a", "annotation": {"kind": "int"}}
    body = {
        "type": "specification",
        "subtask_id": "s1",
        "directive": "go",
        "inputs": [binding, dict(binding)],
        "returns": [],
    }
    with pytest.raises(DecodeError):
        decode_message(json.dumps(body))


def test_decode_rejects_empty_directive():
    body = {
        "type": "specification", "subtask_id": "s1", "directive": "",
        "inputs": [], "returns": [],
    }
    with pytest.raises(DecodeError):
        decode_message(json.dumps(body))


def test_decode_rejects_unknown_type_and_bad_json():
    with pytest.raises(DecodeError):
        decode_message(b'{"type":"mystery"}')
    with pytest.raises(DecodeError):
        decode_message(b"{nope")


def test_unicode_and_float_fidelity():
    spec = Specification(
        subtask_id="s1",
        directive="café 中文 \"quoted\" \\ backslash",
        inputs=(),
        returns=(),
    )
    assert decode_message(encode_message(spec)) == spec
    result = CoderResult(
        subtask_id="s", status="fail", summary="x" ,
        diagnostics=Diagnostics(root_cause=repr(0.1 + 0.2), failed_operation=""),
    )
    assert decode_message(encode_message(result)) == result


def test_float_values_roundtrip_exactly():
    from delegator.codec import value_from_obj, value_to_obj
    from delegator.values import VFloat

    for x in (0.1, 1e-15, 123456.789, -2.5, 3.0):
        assert value_from_obj(value_to_obj(VFloat(x))) == VFloat(x)
