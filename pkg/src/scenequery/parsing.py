"""Parsing of the five-step structured response and grounding checks.

Model outputs are expected to follow the STEP1..STEP5 layout from the
system prompt, but real outputs drift (hyphenated "STEP-5", case
changes, extra whitespace, prose around the final JSON), so matching is
lenient by default. A strict mode is available for evaluation runs.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from enum import Enum
from typing import Optional

from .scene_model import SceneGraph


class IssueKind(str, Enum):
    UNKNOWN_ID = "UnknownId"
    TOO_MANY_RELEVANT = "TooManyRelevant"
    TAG_MISMATCH = "TagMismatch"
    MISSING_STEP = "MissingStep"
    MALFORMED_JSON = "MalformedJson"


@dataclass(frozen=True)
class GroundingIssue:
    kind: IssueKind
    detail: str
    step: int = 0


class UnparseableResponse(ValueError):
    """No step structure found at all. Carries the raw text for logging."""

    def __init__(self, raw: str, reason: str = "no step headers found"):
        self.raw = raw
        super().__init__(reason)


@dataclass(frozen=True)
class ParsedResponse:
    inferred_query: str
    relevant_object_ids: tuple[int, ...]
    relevance_reason: str
    final_text: str
    final_object_tag: str
    final_object_id: Optional[int]
    explanation: str
    raw: str
    notes: tuple[GroundingIssue, ...] = ()


_STEP_HEADER = re.compile(r"step\s*-?\s*([1-5])\s*[-:.]?", re.IGNORECASE)
_STEP_LABELS = {
    1: re.compile(r"^\s*inferred_query\s*:?", re.IGNORECASE),
    2: re.compile(r"^\s*relevant_objects\s*:?", re.IGNORECASE),
    3: re.compile(r"^\s*reason for relevance\s*:?", re.IGNORECASE),
    4: re.compile(r"^\s*final answer\s*:?", re.IGNORECASE),
    5: re.compile(r"^\s*explanation\s*:?", re.IGNORECASE),
}
_BRACKET_LIST = re.compile(r"\[([^\]]*)\]")
_INT = re.compile(r"-?\d+")


def extract_json_block(text: str) -> Optional[dict]:
    """First balanced, syntactically valid JSON object in the text.

    Scans brace-by-brace (string-aware) so prose and code fences around
    the object don't matter. Returns None when nothing valid is found.
    """
    for start, ch in enumerate(text):
        if ch != "{":
            continue
        depth = 0
        in_string = False
        escaped = False
        for end in range(start, len(text)):
            c = text[end]
            if in_string:
                if escaped:
                    escaped = False
                elif c == "\\":
                    escaped = True
                elif c == '"':
                    in_string = False
                continue
            if c == '"':
                in_string = True
            elif c == "{":
                depth += 1
            elif c == "}":
                depth -= 1
                if depth == 0:
                    candidate = text[start : end + 1]
                    try:
                        value = json.loads(candidate)
                    except json.JSONDecodeError:
                        break
                    if isinstance(value, dict):
                        return value
                    break
        # Unbalanced or invalid from this start; try the next "{".
    return None


def _split_steps(text: str) -> dict[int, str]:
    matches = list(_STEP_HEADER.finditer(text))
    sections: dict[int, str] = {}
    for i, m in enumerate(matches):
        step = int(m.group(1))
        end = matches[i + 1].start() if i + 1 < len(matches) else len(text)
        body = text[m.end() : end]
        label = _STEP_LABELS.get(step)
        if label:
            body = label.sub("", body, count=1)
        if step not in sections:  # first occurrence wins
            sections[step] = body.strip()
    return sections


def parse_response(text: str, strict: bool = False) -> ParsedResponse:
    """Extract the five structured fields from a model response.

    Lenient mode records soft problems (missing steps, absent final
    JSON) as notes instead of failing; strict mode turns them into
    UnparseableResponse. A text with no recognizable step headers is
    always UnparseableResponse.
    """
    sections = _split_steps(text)
    if not sections:
        raise UnparseableResponse(text)

    notes: list[GroundingIssue] = []
    for step in range(1, 6):
        if step not in sections:
            notes.append(GroundingIssue(IssueKind.MISSING_STEP, f"STEP{step} not found", step=step))
            sections[step] = ""

    ids: tuple[int, ...] = ()
    step2 = sections[2]
    bracket = _BRACKET_LIST.search(step2)
    if bracket:
        ids = tuple(int(m) for m in _INT.findall(bracket.group(1)))
    elif step2:
        notes.append(GroundingIssue(IssueKind.MALFORMED_JSON, "STEP2 has no bracketed id list", step=2))

    final_section = sections[4]
    final_json = extract_json_block(final_section)
    final_tag = ""
    final_id: Optional[int] = None
    if final_json is None:
        if final_section and "{" in final_section:
            notes.append(GroundingIssue(IssueKind.MALFORMED_JSON, "STEP4 JSON does not parse", step=4))
        else:
            notes.append(GroundingIssue(IssueKind.MISSING_STEP, "STEP4 JSON answer absent", step=4))
    else:
        tag = final_json.get("object_tag")
        obj_id = final_json.get("object_id")
        if isinstance(tag, str):
            final_tag = tag
        if isinstance(obj_id, int) and not isinstance(obj_id, bool):
            final_id = obj_id
        elif isinstance(obj_id, str) and _INT.fullmatch(obj_id.strip()):
            final_id = int(obj_id)

    if strict and notes:
        raise UnparseableResponse(text, "; ".join(n.detail for n in notes))

    return ParsedResponse(
        inferred_query=sections[1],
        relevant_object_ids=ids,
        relevance_reason=sections[3],
        final_text=final_section,
        final_object_tag=final_tag,
        final_object_id=final_id,
        explanation=sections[5],
        raw=text,
        notes=tuple(notes),
    )


def validate_grounding(resp: ParsedResponse, scene: SceneGraph) -> list[GroundingIssue]:
    """Check the response against the scene it claims to describe.

    Issues are data, not exceptions; an empty list means the answer is
    fully grounded. Ordered by step number.
    """
    issues: list[GroundingIssue] = []

    if len(resp.relevant_object_ids) > 2:
        issues.append(
            GroundingIssue(
                IssueKind.TOO_MANY_RELEVANT,
                f"{len(resp.relevant_object_ids)} relevant ids listed, limit is 2",
                step=2,
            )
        )
    for obj_id in resp.relevant_object_ids:
        if not scene.has_node(obj_id):
            issues.append(GroundingIssue(IssueKind.UNKNOWN_ID, f"id {obj_id} not in scene", step=2))

    if resp.final_object_id is not None:
        if not scene.has_node(resp.final_object_id):
            issues.append(
                GroundingIssue(IssueKind.UNKNOWN_ID, f"final id {resp.final_object_id} not in scene", step=4)
            )
        elif resp.final_object_tag:
            actual = scene.node(resp.final_object_id).object_tag
            if resp.final_object_tag.lower() != actual.lower():
                issues.append(
                    GroundingIssue(
                        IssueKind.TAG_MISMATCH,
                        f"final tag {resp.final_object_tag!r} != node tag {actual!r}",
                        step=4,
                    )
                )

    issues.sort(key=lambda i: i.step)
    return issues
