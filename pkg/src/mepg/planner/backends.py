"""Planner backends: abstract interface, rule-based, scripted, and remote LLM.

Each chain step renders a template whose final cue line identifies the step;
backends that need to know which step is being asked (the rule backend, the
scripted fixture backend) dispatch on that cue. The raw user prompt always
travels in ``context`` so deterministic backends can work from it directly.
"""

from __future__ import annotations

import os
import threading
from abc import ABC, abstractmethod

import httpx

from ..errors import BackendUnavailable
from . import grammar

TOKEN_ENV = "MEPG_LLM_TOKEN"

STEP_CUES = {
    "initial_analysis": "Initial analysis:",
    "find_elements": "Main elements:",
    "position_elements": "Positions:",
    "arrange_elements": "Coordinates:",
    "add_details": "Detailed descriptions:",
}


def detect_step(instruction: str) -> str | None:
    tail = instruction.strip().rsplit("\n", 1)[-1].strip()
    for step, cue in STEP_CUES.items():
        if tail == cue:
            return step
    for step, cue in STEP_CUES.items():  # cue not on its own line
        if cue in instruction:
            return step
    return None


class PlannerBackend(ABC):
    """Completes one chain-step instruction. Remote backends are untrusted:
    the chain re-validates everything they return."""

    identifier: str = "backend"
    timeout: float = 30.0

    @abstractmethod
    def complete(self, instruction: str, context: str) -> str:
        ...


class RuleBackend(PlannerBackend):
    """Deterministic stand-in: answers every step from the rule grammar."""

    identifier = "rule"
    timeout = 0.0

    def complete(self, instruction: str, context: str) -> str:
        step = detect_step(instruction)
        clauses = grammar.parse_clauses(context)
        boxes = grammar.clause_boxes(clauses)
        if step == "find_elements":
            return ", ".join(c.noun for c in clauses)
        if step == "position_elements":
            return "\n".join(
                f"{c.noun}: {c.position or 'strip'}" for c in clauses)
        if step == "arrange_elements":
            return "\n".join(
                f"{c.noun}: ({b.x1},{b.y1}),({b.x2},{b.y2})"
                for c, b in zip(clauses, boxes))
        if step == "add_details":
            return "\n".join(
                f"{c.noun}: ({b.x1},{b.y1}),({b.x2},{b.y2}) | {c.text} | {c.style_tag}"
                for c, b in zip(clauses, boxes))
        # initial analysis (and anything unrecognized): thought + draft layout
        lines = [f"THOUGHT: {len(clauses)} element(s): "
                 + ", ".join(c.noun for c in clauses) + ".", "ELEMENTS:"]
        lines += [f"{c.noun}: ({b.x1},{b.y1}),({b.x2},{b.y2}) | {c.text} | {c.style_tag}"
                  for c, b in zip(clauses, boxes)]
        return "\n".join(lines)


class ScriptedBackend(PlannerBackend):
    """Replays canned responses per step; used for fixtures and offline runs."""

    identifier = "scripted"

    def __init__(self, responses: dict[str, str], identifier: str = "scripted"):
        self.responses = dict(responses)
        self.identifier = identifier

    def complete(self, instruction: str, context: str) -> str:
        step = detect_step(instruction) or ""
        if step not in self.responses:
            raise BackendUnavailable(f"no scripted response for step {step!r}")
        return self.responses[step]


class HttpLlmBackend(PlannerBackend):
    """Client for a chat-completions style endpoint.

    The rendered instruction goes out as a single user message; the reply's
    message content comes back verbatim. One retry, then BackendUnavailable.
    """

    identifier = "llm"

    def __init__(self, base_url: str, model: str, token: str | None = None,
                 timeout: float = 30.0, max_inflight: int = 4,
                 identifier: str = "llm"):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.token = token if token is not None else os.environ.get(TOKEN_ENV)
        self.timeout = timeout
        self.identifier = identifier
        self._slot = threading.Semaphore(max_inflight)

    def complete(self, instruction: str, context: str) -> str:
        headers = {"Content-Type": "application/json"}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        body = {
            "model": self.model,
            "messages": [{"role": "user", "content": instruction}],
        }
        last_error: Exception | None = None
        with self._slot:
            for _ in range(2):  # one retry
                try:
                    resp = httpx.post(f"{self.base_url}/v1/chat/completions",
                                      json=body, headers=headers,
                                      timeout=self.timeout)
                    resp.raise_for_status()
                    return self._extract(resp.json())
                except (httpx.HTTPError, KeyError, IndexError, TypeError,
                        ValueError) as exc:
                    last_error = exc
        raise BackendUnavailable(f"llm backend failed: {last_error}")

    @staticmethod
    def _extract(data: dict) -> str:
        choice = data["choices"][0]
        if "message" in choice:
            return str(choice["message"]["content"])
        return str(choice["text"])
