"""Scripted replay semantics, the structured-output parser pair, and the
HTTP backend against a local stub server with injected faults."""

import json
import random
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

import generators as gen
from delegator.agents import (
    Code,
    ProtocolViolation,
    ResultReport,
    SpecProposal,
    Verdict,
    action_from_obj,
    action_to_obj,
)
from delegator.messages import Decision
from delegator.policies import (
    LlmConfig,
    LlmPolicy,
    ReplayDivergence,
    ScriptStep,
    ScriptedPolicy,
    TransportExhausted,
    action_parse,
    action_print,
)


# -- scripted policy -----------------------------------------------------------


def test_scripted_replays_in_order():
    policy = ScriptedPolicy([
        ScriptStep("coder", Code("let a = 1")),
        ScriptStep("coder", ResultReport("ok")),
    ])
    assert policy.propose("coder", "ctx", frozenset({"code"})) == Code("let a = 1")
    assert policy.propose("coder", "ctx", frozenset({"report"})) == ResultReport("ok")
    assert policy.exhausted()


def test_empty_script_any_request_diverges():
    policy = ScriptedPolicy([])
    with pytest.raises(ReplayDivergence):
        policy.propose("coder", "ctx", frozenset({"code"}))


def test_role_mismatch_diverges_with_context_excerpt():
    policy = ScriptedPolicy([ScriptStep("delegator", Code("x"))])
    with pytest.raises(ReplayDivergence) as err:
        policy.propose("coder", "the actual context text", frozenset({"code"}))
    assert "the actual context" in str(err.value)


def test_substring_predicate_gates_step():
    policy = ScriptedPolicy([
        ScriptStep("delegator", Code("x"), predicate="df_raw: table 847×12"),
    ])
    with pytest.raises(ReplayDivergence) as err:
        policy.propose("delegator", "no such annotation here", frozenset({"code"}))
    assert "df_raw" in str(err.value)
    policy2 = ScriptedPolicy([
        ScriptStep("delegator", Code("x"), predicate="df_raw: table 847×12"),
    ])
    action = policy2.propose(
        "delegator", "Artifacts:\n  df_raw: table 847×12 sample=...",
        frozenset({"code"}),
    )
    assert action == Code("x")


def test_callable_predicate():
    policy = ScriptedPolicy([
        ScriptStep("coder", Code("x"), predicate=lambda ctx: ctx.count("cell") == 2),
    ])
    with pytest.raises(ReplayDivergence):
        policy.propose("coder", "cell", frozenset({"code"}))


def test_kind_mismatch_diverges():
    policy = ScriptedPolicy([ScriptStep("coder", Code("x"))])
    with pytest.raises(ReplayDivergence):
        policy.propose("coder", "ctx", frozenset({"report"}))


# -- parser totality -------------------------------------------------------------


def test_parse_print_identity_over_generated_actions():
    rng = random.Random(2718)
    for _ in range(300):
        action = gen.policy_action(rng)
        assert action_parse(action_print(action)) == action


def test_action_obj_roundtrip():
    rng = random.Random(31)
    for _ in range(200):
        action = gen.policy_action(rng)
        assert action_from_obj(action_to_obj(action)) == action


def test_parse_rejects_missing_fence_and_bad_json():
    with pytest.raises(ProtocolViolation):
        action_parse("no fence here")
    with pytest.raises(ProtocolViolation):
        action_parse("```json\n{broken\n```")
    with pytest.raises(ProtocolViolation):
        action_parse('```json\n{"action":"wat"}\n```')


def test_parse_accepts_surrounding_prose():
    text = "Thinking...\n```json\n" + json.dumps(
        {"action": "verdict", "verdict": "retry", "rationale": "r",
         "refined_directive": "again"}
    ) + "\n```\nthanks"
    action = action_parse(text)
    assert isinstance(action, Verdict)
    assert action.decision.refined_directive == "again"


# -- HTTP backend ------------------------------------------------------------------


class StubHandler(BaseHTTPRequestHandler):
    # class-level queue of (status, body) set per test
    responses = []
    requests_seen = []

    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        StubHandler.requests_seen.append(json.loads(self.rfile.read(length)))
        status, body = StubHandler.responses.pop(0)
        payload = json.dumps(body).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):
        pass


@pytest.fixture
def stub_server():
    server = HTTPServer(("127.0.0.1", 0), StubHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    StubHandler.responses = []
    StubHandler.requests_seen = []
    yield server
    server.shutdown()
    thread.join(timeout=5)


def _chat_body(content):
    return {"choices": [{"message": {"content": content}}]}


def _config(server, **kw):
    port = server.server_address[1]
    return LlmConfig(base_url=f"http://127.0.0.1:{port}/v1", model="stub",
                     backoff=0.0, **kw)


def test_wellformed_verdict_block(stub_server):
    block = action_print(Verdict(Decision(
        verdict="retry", rationale="needs context", refined_directive="bind fx too",
    )))
    StubHandler.responses = [(200, _chat_body(f"Let me decide.\n{block}"))]
    policy = LlmPolicy(_config(stub_server), sleep=lambda s: None)
    action = policy.propose("delegator", "ctx", frozenset({"verdict"}))
    assert action.decision.verdict == "retry"
    assert StubHandler.requests_seen[0]["temperature"] == 0


def test_transport_fails_twice_then_succeeds_with_retries_logged(stub_server):
    block = action_print(Code("x = 1"))
    StubHandler.responses = [
        (500, {"error": "boom"}),
        (500, {"error": "boom"}),
        (200, _chat_body(block)),
    ]
    policy = LlmPolicy(_config(stub_server), sleep=lambda s: None)
    action = policy.propose("coder", "ctx", frozenset({"code"}))
    assert action == Code("x = 1")
    assert policy.transport_retry_count == 2


def test_transport_exhaustion_is_engine_error_class(stub_server):
    StubHandler.responses = [(500, {})] * 3
    policy = LlmPolicy(_config(stub_server), sleep=lambda s: None)
    with pytest.raises(TransportExhausted):
        policy.propose("coder", "ctx", frozenset({"code"}))
    assert isinstance(TransportExhausted("x"), ProtocolViolation)


def test_malformed_output_reprompted_once_then_violation(stub_server):
    StubHandler.responses = [
        (200, _chat_body("no block at all")),
        (200, _chat_body("still no block")),
    ]
    policy = LlmPolicy(_config(stub_server), sleep=lambda s: None)
    with pytest.raises(ProtocolViolation):
        policy.propose("coder", "ctx", frozenset({"code"}))
    assert len(StubHandler.requests_seen) == 2
    # the reprompt mentions the malformation
    assert "malformed" in StubHandler.requests_seen[1]["messages"][-1]["content"]


def test_malformed_then_wellformed_recovers(stub_server):
    block = action_print(SpecProposal(directive="go"))
    StubHandler.responses = [
        (200, _chat_body("oops")),
        (200, _chat_body(block)),
    ]
    policy = LlmPolicy(_config(stub_server), sleep=lambda s: None)
    action = policy.propose("delegator", "ctx", frozenset({"spec"}))
    assert action == SpecProposal(directive="go")


def test_wrong_kind_from_model_is_violation_after_reparse(stub_server):
    block = action_print(Code("x = 1"))
    StubHandler.responses = [(200, _chat_body(block)), (200, _chat_body(block))]
    policy = LlmPolicy(_config(stub_server), sleep=lambda s: None)
    with pytest.raises(ProtocolViolation):
        policy.propose("delegator", "ctx", frozenset({"verdict"}))


def test_temperature_default_is_zero():
    assert LlmConfig(base_url="http://x", model="m").temperature == 0.0
