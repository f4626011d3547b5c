"""Policy backends: deterministic scripted replay and a chat-completions
HTTP client.

The scripted policy replays a fixed action list, gated by optional context
predicates, and halts with a diff on any divergence — this is what makes
whole-protocol runs bit-reproducible in tests. The HTTP client renders
role-specific prompts, expects the model to answer with one fenced JSON block
matching the canonical action encoding, and keeps transport flakiness out of
task semantics via bounded retries.
"""

from __future__ import annotations

import json
import logging
import re
import time
from dataclasses import dataclass

from .agents import ProtocolViolation, action_from_obj, action_kind, action_to_obj
from .codec import canonical_dumps

__all__ = [
    "ScriptStep",
    "ScriptedPolicy",
    "ReplayDivergence",
    "LlmConfig",
    "LlmPolicy",
    "TransportExhausted",
    "action_print",
    "action_parse",
]

log = logging.getLogger(__name__)


class ReplayDivergence(AssertionError):
    """The run asked the script for something the script did not expect."""


@dataclass(frozen=True)
class ScriptStep:
    role: str
    action: object
    predicate: object = None  # None, substring, or callable(context) -> bool


class ScriptedPolicy:
    """Replays scripted actions strictly in order. Per run, never shared."""

    def __init__(self, steps):
        self.steps = list(steps)
        self.cursor = 0

    def propose(self, role, context, expected):
        if self.cursor >= len(self.steps):
            raise ReplayDivergence(
                f"script exhausted at call {self.cursor}: "
                f"run wants role={role} expected={sorted(expected)}"
            )
        step = self.steps[self.cursor]
        excerpt = context[:200].replace("\n", "\\n")
        if step.role != role:
            raise ReplayDivergence(
                f"step {self.cursor}: script expects role={step.role}, "
                f"run asked as role={role} (context: {excerpt})"
            )
        if not self._accepts(step.predicate, context):
            want = step.predicate if isinstance(step.predicate, str) else repr(step.predicate)
            raise ReplayDivergence(
                f"step {self.cursor}: context predicate rejected.\n"
                f"  expected: {want}\n  actual:   {excerpt}"
            )
        kind = action_kind(step.action)
        if kind not in expected:
            raise ReplayDivergence(
                f"step {self.cursor}: scripted action is {kind!r}, "
                f"run expected one of {sorted(expected)}"
            )
        self.cursor += 1
        return step.action

    @staticmethod
    def _accepts(predicate, context) -> bool:
        if predicate is None:
            return True
        if isinstance(predicate, str):
            return predicate in context
        return bool(predicate(context))

    def exhausted(self) -> bool:
        return self.cursor >= len(self.steps)


# ---------------------------------------------------------------------------
# Structured output convention
# ---------------------------------------------------------------------------

_FENCE_RE = re.compile(r"```(?:json)?\s*\n(.*?)```", re.DOTALL)


def action_print(action) -> str:
    """Render an action as the single fenced block models are asked for."""
    return "```json\n" + canonical_dumps(action_to_obj(action)) + "\n```"


def action_parse(text: str):
    """Parse a model reply: exactly one fenced block of canonical action JSON."""
    match = _FENCE_RE.search(text)
    if match is None:
        raise ProtocolViolation("no fenced action block in model output")
    try:
        obj = json.loads(match.group(1))
    except json.JSONDecodeError as exc:
        raise ProtocolViolation(f"action block is not valid JSON: {exc}") from None
    return action_from_obj(obj)


# ---------------------------------------------------------------------------
# Live backend
# ---------------------------------------------------------------------------


class TransportExhausted(ProtocolViolation):
    """Transport retries ran out; surfaces as an engine error upstream."""


@dataclass
class LlmConfig:
    base_url: str
    model: str
    api_key_env: str = "LLM_API_KEY"
    temperature: float = 0.0  # reproducibility default
    max_tokens: int = 1024
    timeout: float = 30.0
    transport_retries: int = 3
    backoff: float = 1.0
    debug_log: str | None = None


_ROLE_PROMPTS = {
    "delegator": (
        "You are the planning agent. You never write or execute code. "
        "Answer with exactly one fenced json block encoding your action."
    ),
    "coder": (
        "You are an implementation agent working in an isolated session. "
        "Answer with exactly one fenced json block encoding your action."
    ),
}


class LlmPolicy:
    """Chat-completions client. One reparse attempt on malformed output, then
    a protocol violation; bounded transport retries with backoff."""

    def __init__(self, config: LlmConfig, session=None, sleep=time.sleep):
        import os

        import requests

        self.config = config
        self._requests = requests
        self._session = session if session is not None else requests.Session()
        self._sleep = sleep
        self._api_key = os.environ.get(config.api_key_env, "")
        self.transport_retry_count = 0

    def propose(self, role, context, expected):
        prompt = self._render_prompt(role, context, expected)
        reply = self._request(prompt)
        try:
            return self._accept(reply, expected)
        except ProtocolViolation as first:
            retry_prompt = prompt + [{
                "role": "user",
                "content": f"Your previous answer was malformed ({first}). "
                           "Reply again with exactly one fenced json block.",
            }]
            reply = self._request(retry_prompt)
            return self._accept(reply, expected)

    def _accept(self, reply, expected):
        action = action_parse(reply)
        kind = action_kind(action)
        if kind not in expected:
            raise ProtocolViolation(
                f"model produced {kind!r}, expected one of {sorted(expected)}"
            )
        return action

    def _render_prompt(self, role, context, expected):
        kinds = ", ".join(sorted(expected))
        return [
            {"role": "system", "content": _ROLE_PROMPTS.get(role, _ROLE_PROMPTS["coder"])},
            {"role": "user", "content": (
                f"{context}\nAllowed action kinds: {kinds}.\n"
                "Encode the action as canonical JSON in one fenced block."
            )},
        ]

    def _request(self, messages) -> str:
        cfg = self.config
        url = cfg.base_url.rstrip("/") + "/chat/completions"
        payload = {
            "model": cfg.model,
            "messages": messages,
            "temperature": cfg.temperature,
            "max_tokens": cfg.max_tokens,
        }
        headers = {"Content-Type": "application/json"}
        if self._api_key:
            headers["Authorization"] = f"Bearer {self._api_key}"
        last_error = None
        for attempt in range(cfg.transport_retries):
            if attempt:
                self._sleep(cfg.backoff * (2 ** (attempt - 1)))
            try:
                response = self._session.post(
                    url, json=payload, headers=headers, timeout=cfg.timeout
                )
                if response.status_code >= 500:
                    raise self._requests.RequestException(
                        f"server error {response.status_code}"
                    )
                response.raise_for_status()
                body = response.json()
                content = body["choices"][0]["message"]["content"]
                self._debug(payload, content)
                return content
            except (self._requests.RequestException, KeyError, ValueError) as exc:
                last_error = exc
                self.transport_retry_count += 1
                log.debug("transport attempt %d failed: %s", attempt + 1, exc)
        raise TransportExhausted(
            f"transport failed after {cfg.transport_retries} attempts: {last_error}"
        )

    def _debug(self, payload, content):
        if self.config.debug_log is None:
            return
        with open(self.config.debug_log, "a", encoding="utf-8") as fh:
            fh.write(canonical_dumps({"request": payload, "response": content}) + "\n")
