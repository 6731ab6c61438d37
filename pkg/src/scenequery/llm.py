"""Chat-completion client with pluggable backends.

Three backends: a live OpenAI-compatible HTTP endpoint, a scripted mock
for tests, and an oracle-backed mock that renders deterministic
geometry answers in the five-step response format so the whole pipeline
can be exercised without a network.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass
from typing import Callable, Optional, Protocol

import requests

from .oracle import (
    OracleAnswer,
    OracleConfig,
    QueryCategory,
    SizeOrdering,
    StructuredQuery,
    UnknownIdError,
    answer_query_deterministic,
    interpret_query,
)
from .prompts import PromptBundle
from .scene_model import SceneGraph

API_KEY_ENV = "SCENEGPT_API_KEY"
API_URL_ENV = "SCENEGPT_API_URL"
DEFAULT_BASE_URL = "https://api.openai.com/v1"


class LlmError(RuntimeError):
    pass


class AuthMissingError(LlmError):
    pass


class ContextOverflowError(LlmError):
    pass


class TransportError(LlmError):
    pass


@dataclass(frozen=True)
class LlmConfig:
    base_url: str = ""
    model_name: str = "gpt-4-16k"
    temperature: float = 0.0
    max_output_tokens: int = 1024
    timeout: float = 60.0
    max_retries: int = 2
    concurrency: int = 4

    def __post_init__(self):
        if self.timeout <= 0:
            raise ValueError("timeout must be > 0")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")

    def resolved_base_url(self) -> str:
        return (self.base_url or os.environ.get(API_URL_ENV) or DEFAULT_BASE_URL).rstrip("/")


class Backend(Protocol):
    def complete(self, system_text: str, user_text: str) -> str: ...


class HttpBackend:
    """OpenAI-compatible chat-completions endpoint with retry."""

    def __init__(
        self,
        cfg: LlmConfig,
        api_key: Optional[str] = None,
        session: Optional[requests.Session] = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.cfg = cfg
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        self.session = session or requests.Session()
        self._sleep = sleep

    def complete(self, system_text: str, user_text: str) -> str:
        if not self.api_key:
            raise AuthMissingError(f"no API key; set {API_KEY_ENV}")
        url = f"{self.cfg.resolved_base_url()}/chat/completions"
        payload = {
            "model": self.cfg.model_name,
            "messages": [
                {"role": "system", "content": system_text},
                {"role": "user", "content": user_text},
            ],
            "temperature": self.cfg.temperature,
            "max_tokens": self.cfg.max_output_tokens,
        }
        headers = {"Authorization": f"Bearer {self.api_key}"}

        last_error: Exception | None = None
        for attempt in range(self.cfg.max_retries + 1):
            if attempt:
                self._sleep(0.5 * 2 ** (attempt - 1))
            try:
                resp = self.session.post(url, json=payload, headers=headers, timeout=self.cfg.timeout)
            except requests.RequestException as exc:
                last_error = exc
                continue
            if resp.status_code >= 500:
                last_error = TransportError(f"server error {resp.status_code}")
                continue
            if resp.status_code in (401, 403):
                raise AuthMissingError(f"endpoint rejected credentials ({resp.status_code})")
            if resp.status_code == 400 and "context" in resp.text.lower():
                raise ContextOverflowError(resp.text[:500])
            if resp.status_code >= 400:
                raise LlmError(f"request failed ({resp.status_code}): {resp.text[:500]}")
            try:
                return resp.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError) as exc:
                raise LlmError(f"unexpected response shape: {exc}") from exc
        raise TransportError(f"request failed after {self.cfg.max_retries + 1} attempts: {last_error}")


class MockBackend:
    """Deterministic canned responses: a consumed-in-order list, or a
    substring -> response rule table matched against the user text."""

    def __init__(self, script: list[str] | dict[str, str], fallback: Optional[str] = None):
        self._queue = list(script) if isinstance(script, list) else None
        self._rules = dict(script) if isinstance(script, dict) else None
        self._fallback = fallback

    def complete(self, system_text: str, user_text: str) -> str:
        if self._queue is not None:
            if self._queue:
                return self._queue.pop(0)
        else:
            assert self._rules is not None
            for needle, response in self._rules.items():
                if needle in user_text:
                    return response
        if self._fallback is not None:
            return self._fallback
        raise LlmError("mock script exhausted / no rule matched")


def _final_sentence(answer: OracleAnswer, q: StructuredQuery, scene: SceneGraph) -> str:
    subj = scene.node(q.subject_id) if q.subject_id is not None else None
    obj = scene.node(q.object_id) if q.object_id is not None else None
    if q.category is QueryCategory.ON_TOP_OF:
        word = "Yes" if answer.verdict else "No"
        state = "is" if answer.verdict else "is not"
        return (
            f"{word}, the {subj.object_tag} (id: {subj.id}) {state} on top of "
            f"the {obj.object_tag} (id: {obj.id})."
        )
    if q.category is QueryCategory.CONTAINMENT:
        word = "Yes" if answer.verdict else "No"
        state = "can" if answer.verdict else "cannot"
        return (
            f"{word}, the {subj.object_tag} (id: {subj.id}) {state} contain "
            f"the {obj.object_tag} (id: {obj.id})."
        )
    if q.category is QueryCategory.SIZE_COMPARE:
        if answer.ordering is SizeOrdering.SIMILAR:
            return (
                f"The {subj.object_tag} (id: {subj.id}) and the {obj.object_tag} "
                f"(id: {obj.id}) are similar in size."
            )
        return f"The {answer.object_tag} (id: {answer.object_id}) is bigger."
    # RelativePosition: the explanation already carries the direction words.
    return f"The {subj.object_tag} (id: {subj.id}) is positioned as follows: {answer.explanation}"


def oracle_backed_mock(
    scene: SceneGraph, query: StructuredQuery, cfg: OracleConfig = OracleConfig()
) -> str:
    """Render the oracle's answer in the five-step output format.

    Unsupported categories and unknown ids still produce well-formed
    five-step text, just with an empty relevant-object list and no final
    JSON answer.
    """
    try:
        answer = answer_query_deterministic(scene, query, cfg)
    except UnknownIdError:
        answer = OracleAnswer(
            category=query.category, supported=False, explanation="query references objects not in the scene"
        )

    inferred = f"{query.category.value} query: {query.text or '(no text)'}"
    if not answer.supported:
        return (
            f"STEP1 - inferred_query: {inferred}\n"
            f"STEP2 - relevant_objects: []\n"
            f"STEP3 - reason for relevance: no objects could be grounded for this query\n"
            f"STEP4 - Final Answer: The question cannot be answered from box geometry alone; "
            f"{answer.explanation}.\n"
            f"STEP-5 - Explanation: {answer.explanation}.\n"
        )

    relevant = [i for i in (query.subject_id, query.object_id) if i is not None][:2]
    final_json = f'{{"object_tag": "{answer.object_tag}", "object_id": {answer.object_id}}}'
    sentence = _final_sentence(answer, query, scene)
    return (
        f"STEP1 - inferred_query: {inferred}\n"
        f"STEP2 - relevant_objects: {relevant}\n"
        f"STEP3 - reason for relevance: the query refers to these objects by tag or id\n"
        f"STEP4 - Final Answer: {sentence} {final_json}\n"
        f"STEP-5 - Explanation: {answer.explanation}.\n"
    )


class OracleMockBackend:
    """Backend that answers from the geometry oracle, interpreting the
    user text when no structured query is supplied."""

    def __init__(self, scene: SceneGraph, cfg: OracleConfig = OracleConfig()):
        self.scene = scene
        self.cfg = cfg

    def complete(self, system_text: str, user_text: str) -> str:
        query = interpret_query(self.scene, user_text)
        return oracle_backed_mock(self.scene, query, self.cfg)


def complete(prompt: PromptBundle, cfg: LlmConfig, backend: Optional[Backend] = None, user_text: str = "") -> str:
    """Send the assembled prompt as the system message and the bare query
    as the user message; returns the raw response text."""
    if backend is None:
        backend = HttpBackend(cfg)
    return backend.complete(prompt.system_text, user_text)
