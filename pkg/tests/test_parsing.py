import pytest
from hypothesis import given, strategies as st

from scenequery.llm import oracle_backed_mock
from scenequery.oracle import QueryCategory, StructuredQuery
from scenequery.parsing import (
    IssueKind,
    ParsedResponse,
    UnparseableResponse,
    extract_json_block,
    parse_response,
    validate_grounding,
)
from scenequery.scene_model import parse_scene

WELL_FORMED = """\
STEP1 - inferred_query: find the vase
STEP2 - relevant_objects: [0, 5]
STEP3 - reason for relevance: the vase is named; the mirror is nearby
STEP4 - Final Answer: The vase is at the south wall. {"object_tag": "vase", "object_id": 0}
STEP-5 - Explanation: the vase matches the query directly.
"""


class TestParseResponse:
    def test_well_formed(self):
        parsed = parse_response(WELL_FORMED)
        assert parsed.inferred_query == "find the vase"
        assert parsed.relevant_object_ids == (0, 5)
        assert "nearby" in parsed.relevance_reason
        assert parsed.final_object_tag == "vase"
        assert parsed.final_object_id == 0
        assert "matches the query" in parsed.explanation
        assert parsed.notes == ()
        assert parsed.raw == WELL_FORMED

    def test_empty_string_unparseable(self):
        with pytest.raises(UnparseableResponse):
            parse_response("")

    def test_garbage_unparseable_carries_raw(self):
        with pytest.raises(UnparseableResponse) as exc:
            parse_response("total nonsense with no structure")
        assert exc.value.raw == "total nonsense with no structure"

    def test_hyphen_variant_step5(self):
        text = WELL_FORMED.replace("STEP-5 - Explanation:", "STEP-5 - Explanation:")
        parsed = parse_response(text)
        assert "matches the query" in parsed.explanation

    def test_case_insensitive_headers(self):
        text = WELL_FORMED.lower()
        parsed = parse_response(text)
        assert parsed.final_object_id == 0

    def test_spacing_variants(self):
        text = WELL_FORMED.replace("STEP1", "STEP 1").replace("STEP2", "Step - 2")
        parsed = parse_response(text)
        assert parsed.relevant_object_ids == (0, 5)

    def test_missing_step4_json_is_soft(self):
        text = WELL_FORMED.replace(' {"object_tag": "vase", "object_id": 0}', "")
        parsed = parse_response(text)
        assert parsed.final_object_id is None
        assert any(n.kind is IssueKind.MISSING_STEP and n.step == 4 for n in parsed.notes)

    def test_missing_step_noted(self):
        text = "STEP1 - inferred_query: hm\nSTEP4 - Final Answer: no idea\n"
        parsed = parse_response(text)
        missing = {n.step for n in parsed.notes if n.kind is IssueKind.MISSING_STEP}
        assert {2, 3, 5} <= missing

    def test_code_fenced_json(self):
        text = WELL_FORMED.replace(
            '{"object_tag": "vase", "object_id": 0}',
            '```json\n{"object_tag": "vase", "object_id": 0}\n```',
        )
        parsed = parse_response(text)
        assert parsed.final_object_id == 0

    def test_strict_mode_rejects_missing_json(self):
        text = WELL_FORMED.replace(' {"object_tag": "vase", "object_id": 0}', "")
        with pytest.raises(UnparseableResponse):
            parse_response(text, strict=True)

    def test_strict_mode_accepts_well_formed(self):
        assert parse_response(WELL_FORMED, strict=True).final_object_id == 0

    def test_string_object_id_coerced(self):
        text = WELL_FORMED.replace('"object_id": 0', '"object_id": "0"')
        assert parse_response(text).final_object_id == 0

    def test_never_throws_unexpectedly(self):
        corpus = [
            "STEP1",
            "STEP1 - x\nSTEP2 - [1,2,",
            "step 3 only: something",
            "STEP4 - Final Answer: {broken",
            "STEP2 - relevant_objects: no list here",
            "\x00\x01 STEP1 - binary-ish",
        ]
        for text in corpus:
            parsed = parse_response(text)
            assert isinstance(parsed, ParsedResponse)


class TestExtractJsonBlock:
    def test_simple(self):
        assert extract_json_block('answer: {"object_id": 3, "object_tag": "mirror"} done') == {
            "object_id": 3,
            "object_tag": "mirror",
        }

    def test_first_of_two(self):
        text = '{"a": 1} and later {"b": 2}'
        assert extract_json_block(text) == {"a": 1}

    def test_broken(self):
        assert extract_json_block("{broken") is None

    def test_nested(self):
        assert extract_json_block('x {"a": {"b": 2}} y') == {"a": {"b": 2}}

    def test_braces_inside_strings(self):
        assert extract_json_block('{"a": "has } brace"}') == {"a": "has } brace"}

    def test_skips_invalid_then_finds_valid(self):
        assert extract_json_block("{not json} then {\"ok\": true}") == {"ok": True}

    def test_no_object(self):
        assert extract_json_block("plain text") is None


class TestValidateGrounding:
    def test_clean(self, sample_scene_json):
        scene = parse_scene(sample_scene_json)
        parsed = parse_response(WELL_FORMED)
        assert validate_grounding(parsed, scene) == []

    def test_unknown_id(self, sample_scene_json):
        scene = parse_scene(sample_scene_json)
        text = WELL_FORMED.replace("[0, 5]", "[0, 99]")
        issues = validate_grounding(parse_response(text), scene)
        assert [i.kind for i in issues] == [IssueKind.UNKNOWN_ID]
        assert "99" in issues[0].detail

    def test_too_many_relevant(self, sample_scene_json):
        scene = parse_scene(sample_scene_json)
        text = WELL_FORMED.replace("[0, 5]", "[0, 5, 5]")
        issues = validate_grounding(parse_response(text), scene)
        assert any(i.kind is IssueKind.TOO_MANY_RELEVANT for i in issues)

    def test_tag_mismatch(self, sample_scene_json):
        scene = parse_scene(sample_scene_json)
        text = WELL_FORMED.replace('"object_tag": "vase"', '"object_tag": "couch"')
        issues = validate_grounding(parse_response(text), scene)
        assert [i.kind for i in issues] == [IssueKind.TAG_MISMATCH]

    def test_tag_match_case_insensitive(self, sample_scene_json):
        scene = parse_scene(sample_scene_json)
        text = WELL_FORMED.replace('"object_tag": "vase"', '"object_tag": "VASE"')
        assert validate_grounding(parse_response(text), scene) == []

    def test_issues_sorted_by_step(self, sample_scene_json):
        scene = parse_scene(sample_scene_json)
        text = WELL_FORMED.replace("[0, 5]", "[7, 8, 9]").replace('"object_id": 0', '"object_id": 42')
        issues = validate_grounding(parse_response(text), scene)
        assert [i.step for i in issues] == sorted(i.step for i in issues)


@given(st.text(max_size=300))
def test_total_over_arbitrary_input(text):
    """Any string either parses or raises the single Unparseable error."""
    try:
        parsed = parse_response(text)
    except UnparseableResponse:
        return
    assert isinstance(parsed, ParsedResponse)


def test_render_parse_inverse(couch_pillow_scene):
    """Structured fields survive a mock render -> parse round trip."""
    cases = [
        (StructuredQuery(QueryCategory.ON_TOP_OF, 27, 28, "q1"), 27),
        (StructuredQuery(QueryCategory.SIZE_COMPARE, 28, 27, "q2"), 28),
        (StructuredQuery(QueryCategory.CONTAINMENT, 28, 27, "q3"), 28),
        (StructuredQuery(QueryCategory.RELATIVE_POSITION, 27, 28, "q4"), 27),
    ]
    for query, expected_id in cases:
        parsed = parse_response(oracle_backed_mock(couch_pillow_scene, query))
        assert parsed.final_object_id == expected_id
        assert set(parsed.relevant_object_ids) == {27, 28}
        assert parsed.final_object_tag == couch_pillow_scene.node(expected_id).object_tag
        assert query.text in parsed.inferred_query
