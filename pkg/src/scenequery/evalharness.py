"""Synthetic benchmark generation and pipeline scoring.

Scenes are generated with relations planted by construction (stacked
boxes, container pairs, near clusters), so every geometric/spatial
query has a decidable ground truth. Affordance and negation queries
draw their ground truth from a small tag lexicon shipped with the
package.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from typing import Optional, Sequence

from . import llm as llm_mod
from .oracle import (
    OracleConfig,
    QueryCategory,
    SizeOrdering,
    StructuredQuery,
    describe_relations,
    relative_position,
    size_compare,
)
from .parsing import UnparseableResponse, parse_response, validate_grounding
from .prompts import DEFAULT_TOKEN_BUDGET, build_prompt, select_examples
from .scene_model import ObjectNode, SceneGraph, Vec3


class Layout(str, Enum):
    STACKS = "Stacks"
    CLUSTERS = "Clusters"
    CONTAINERS = "Containers"
    MIXED = "Mixed"


@dataclass(frozen=True)
class SceneRecipe:
    seed: int
    node_count: int = 10
    layout: Layout = Layout.MIXED
    tag_vocabulary: tuple[str, ...] = ()

    def __post_init__(self):
        if self.node_count < 1:
            raise ValueError("node_count must be >= 1")


@dataclass(frozen=True)
class PlantedFact:
    category: QueryCategory
    subject_id: int
    object_id: int


@dataclass(frozen=True)
class GeneratedScene:
    scene: SceneGraph
    planted: tuple[PlantedFact, ...]
    recipe: SceneRecipe


@dataclass(frozen=True)
class GroundTruthQuery:
    query_text: str
    category: QueryCategory
    structured: StructuredQuery
    expected_object_ids: tuple[int, ...] = ()
    expected_bool: Optional[bool] = None
    expected_keywords: tuple[str, ...] = ()


def load_lexicon(path: Optional[str] = None) -> dict[str, dict]:
    """tag -> {affordances: [...], properties: [...]}."""
    if path is None:
        text = resources.files("scenequery.data").joinpath("lexicon.json").read_text(encoding="utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    entries = json.loads(text)
    return {e["tag"]: {"affordances": e.get("affordances", []), "properties": e.get("properties", [])} for e in entries}


def _grid(rng: random.Random, lo_dm: int, hi_dm: int) -> float:
    # Decimeter grid keeps every coordinate exact at 1-decimal precision.
    return rng.randint(lo_dm, hi_dm) / 10.0


def _caption(tag: str) -> str:
    return f"The central object in this image is a {tag}."


def generate_scene(recipe: SceneRecipe, lexicon: Optional[dict[str, dict]] = None) -> GeneratedScene:
    """Deterministic-in-seed scene with recorded planted relations.

    Stacks plant on-top-of pairs (upper footprint inside the base, faces
    touching); Containers plant strict sorted-extent dominance pairs;
    Clusters plant near groups. Mixed cycles through all three. Slots
    are spaced 6 m apart so unrelated objects never interact.
    """
    if lexicon is None:
        lexicon = load_lexicon()
    vocab = list(recipe.tag_vocabulary) or sorted(lexicon)
    rng = random.Random(recipe.seed)

    nodes: list[ObjectNode] = []
    planted: list[PlantedFact] = []
    next_id = 0
    slot = 0

    def add(tag: str, extent: Vec3, center: Vec3) -> ObjectNode:
        nonlocal next_id
        node = ObjectNode(
            id=next_id,
            bbox_extent=extent,
            bbox_center=center,
            object_tag=tag,
            caption=_caption(tag),
            color=rng.choice(["white", "brown", "silver", "black", "red", "blue"]),
            material=rng.choice(["wood", "metal", "fabric", "plastic", "glass"]),
        )
        next_id += 1
        nodes.append(node)
        return node

    def slot_origin() -> tuple[float, float]:
        nonlocal slot
        x = float((slot % 8) * 6)
        y = float((slot // 8) * 6)
        slot += 1
        return x, y

    def plant_stack():
        x, y = slot_origin()
        base_x, base_y = _grid(rng, 8, 16), _grid(rng, 8, 16)
        base_z = rng.choice([0.4, 0.6, 0.8])
        upper_z = rng.choice([0.2, 0.4])
        base = add(rng.choice(vocab), Vec3(base_x, base_y, base_z), Vec3(x, y, base_z / 2))
        upper = add(
            rng.choice(vocab),
            Vec3(round(base_x - 0.2, 1), round(base_y - 0.2, 1), upper_z),
            Vec3(x, y, round(base_z + upper_z / 2, 1)),
        )
        planted.append(PlantedFact(QueryCategory.ON_TOP_OF, upper.id, base.id))

    def plant_container():
        x, y = slot_origin()
        outer = Vec3(_grid(rng, 10, 20), _grid(rng, 10, 20), _grid(rng, 10, 20))
        inner = Vec3(*(round(c - 0.3, 1) for c in outer))
        outer_node = add(rng.choice(vocab), outer, Vec3(x, y, outer.z / 2))
        x2, y2 = slot_origin()
        inner_node = add(rng.choice(vocab), inner, Vec3(x2, y2, inner.z / 2))
        planted.append(PlantedFact(QueryCategory.CONTAINMENT, outer_node.id, inner_node.id))

    def plant_cluster():
        x, y = slot_origin()
        members = []
        for _ in range(2):
            ext = Vec3(_grid(rng, 2, 6), _grid(rng, 2, 6), _grid(rng, 2, 6))
            dx, dy = _grid(rng, -3, 3), _grid(rng, -3, 3)
            members.append(add(rng.choice(vocab), ext, Vec3(round(x + dx, 1), round(y + dy, 1), ext.z / 2)))
        a, b = members
        planted.append(PlantedFact(QueryCategory.RELATIVE_POSITION, a.id, b.id))

    planters = {
        Layout.STACKS: [plant_stack],
        Layout.CONTAINERS: [plant_container],
        Layout.CLUSTERS: [plant_cluster],
        Layout.MIXED: [plant_stack, plant_container, plant_cluster],
    }[recipe.layout]

    i = 0
    while next_id + 2 <= recipe.node_count:
        planters[i % len(planters)]()
        i += 1
    while next_id < recipe.node_count:
        # Leftover singletons, far from everything.
        x, y = slot_origin()
        ext = Vec3(_grid(rng, 2, 8), _grid(rng, 2, 8), _grid(rng, 2, 8))
        add(rng.choice(vocab), ext, Vec3(x, y, ext.z / 2))

    return GeneratedScene(scene=SceneGraph(nodes=tuple(nodes)), planted=tuple(planted), recipe=recipe)


def _ref(scene: SceneGraph, node_id: int) -> str:
    return f"{scene.node(node_id).object_tag} (id: {node_id})"


def generate_queries(
    gen: GeneratedScene,
    cfg: OracleConfig = OracleConfig(),
    lexicon: Optional[dict[str, dict]] = None,
) -> list[GroundTruthQuery]:
    """Templated queries across the taxonomy, answered from planted
    facts (geometric/spatial) or the lexicon (affordance/negation)."""
    if lexicon is None:
        lexicon = load_lexicon()
    scene = gen.scene
    queries: list[GroundTruthQuery] = []

    for fact in gen.planted:
        a, b = fact.subject_id, fact.object_id
        if fact.category is QueryCategory.ON_TOP_OF:
            queries.append(
                GroundTruthQuery(
                    query_text=f"Is the {_ref(scene, a)} located on top of the {_ref(scene, b)}?",
                    category=QueryCategory.ON_TOP_OF,
                    structured=StructuredQuery(QueryCategory.ON_TOP_OF, a, b),
                    expected_bool=True,
                )
            )
            queries.append(
                GroundTruthQuery(
                    query_text=f"Is the {_ref(scene, b)} located on top of the {_ref(scene, a)}?",
                    category=QueryCategory.ON_TOP_OF,
                    structured=StructuredQuery(QueryCategory.ON_TOP_OF, b, a),
                    expected_bool=False,
                )
            )
            cmp = size_compare(scene.node(b), scene.node(a), cfg)
            if cmp.ordering is not SizeOrdering.SIMILAR:
                winner = b if cmp.ordering is SizeOrdering.BIGGER else a
                queries.append(
                    GroundTruthQuery(
                        query_text=f"Which is bigger, the {_ref(scene, b)} or the {_ref(scene, a)}?",
                        category=QueryCategory.SIZE_COMPARE,
                        structured=StructuredQuery(QueryCategory.SIZE_COMPARE, b, a),
                        expected_object_ids=(winner,),
                    )
                )
        elif fact.category is QueryCategory.CONTAINMENT:
            queries.append(
                GroundTruthQuery(
                    query_text=f"Can the {_ref(scene, a)} contain the {_ref(scene, b)}?",
                    category=QueryCategory.CONTAINMENT,
                    structured=StructuredQuery(QueryCategory.CONTAINMENT, a, b),
                    expected_bool=True,
                )
            )
            queries.append(
                GroundTruthQuery(
                    query_text=f"Can the {_ref(scene, b)} contain the {_ref(scene, a)}?",
                    category=QueryCategory.CONTAINMENT,
                    structured=StructuredQuery(QueryCategory.CONTAINMENT, b, a),
                    expected_bool=False,
                )
            )
        elif fact.category is QueryCategory.RELATIVE_POSITION:
            rel = relative_position(scene.node(a), scene.node(b), cfg)
            queries.append(
                GroundTruthQuery(
                    query_text=f"Where is the {_ref(scene, a)} with respect to the {_ref(scene, b)}?",
                    category=QueryCategory.RELATIVE_POSITION,
                    structured=StructuredQuery(QueryCategory.RELATIVE_POSITION, a, b),
                    expected_keywords=(describe_relations(rel),),
                )
            )

    # Affordance: ask for some object by what it is used for.
    for node in scene.nodes:
        entry = lexicon.get(node.object_tag)
        if entry and entry["affordances"]:
            affordance = entry["affordances"][0]
            expected = tuple(
                n.id
                for n in scene.nodes
                if affordance in lexicon.get(n.object_tag, {}).get("affordances", [])
            )
            queries.append(
                GroundTruthQuery(
                    query_text=f"Something that can be used to {affordance}",
                    category=QueryCategory.AFFORDANCE,
                    structured=StructuredQuery(QueryCategory.AFFORDANCE, text=f"used to {affordance}"),
                    expected_object_ids=expected,
                )
            )
            break

    # Negation: objects lacking a property every ordinary object has.
    non_opaque = tuple(
        n.id for n in scene.nodes if "opaque" not in lexicon.get(n.object_tag, {}).get("properties", ["opaque"])
    )
    if non_opaque:
        queries.append(
            GroundTruthQuery(
                query_text="Something that is not opaque",
                category=QueryCategory.NEGATION,
                structured=StructuredQuery(QueryCategory.NEGATION, text="not opaque"),
                expected_object_ids=non_opaque,
            )
        )

    return queries


@dataclass(frozen=True)
class EvalConfig:
    budget: int = DEFAULT_TOKEN_BUDGET
    oracle: OracleConfig = field(default_factory=OracleConfig)
    llm: llm_mod.LlmConfig = field(default_factory=llm_mod.LlmConfig)
    strict_parse: bool = False


VERDICTS = ("correct", "incorrect", "ungrounded", "unparseable")


@dataclass(frozen=True)
class EvalRecord:
    seed: int
    category: QueryCategory
    query_text: str
    verdict: str
    final_object_id: Optional[int]
    final_object_tag: str
    raw_response: str
    issues: tuple[str, ...] = ()


@dataclass(frozen=True)
class EvalReport:
    records: tuple[EvalRecord, ...]

    def counts(self) -> dict[str, dict[str, int]]:
        out: dict[str, dict[str, int]] = {}
        for rec in self.records:
            row = out.setdefault(rec.category.value, {v: 0 for v in VERDICTS})
            row[rec.verdict] += 1
        return out

    def accuracy(self, category: Optional[QueryCategory] = None) -> float:
        recs = [r for r in self.records if category is None or r.category is category]
        if not recs:
            return 0.0
        return sum(r.verdict == "correct" for r in recs) / len(recs)

    def to_json(self) -> str:
        payload = {
            "overall_accuracy": self.accuracy(),
            "total": len(self.records),
            "per_category": self.counts(),
            "records": [
                {
                    "seed": r.seed,
                    "category": r.category.value,
                    "query": r.query_text,
                    "verdict": r.verdict,
                    "final_object_id": r.final_object_id,
                    "final_object_tag": r.final_object_tag,
                    "issues": list(r.issues),
                }
                for r in self.records
            ],
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    def to_jsonl(self) -> str:
        lines = []
        for r in self.records:
            lines.append(
                json.dumps(
                    {
                        "seed": r.seed,
                        "category": r.category.value,
                        "query": r.query_text,
                        "verdict": r.verdict,
                        "raw_response": r.raw_response,
                        "issues": list(r.issues),
                    },
                    sort_keys=True,
                )
            )
        return "\n".join(lines) + ("\n" if lines else "")

    def to_text(self) -> str:
        counts = self.counts()
        header = f"{'category':<18}{'correct':>9}{'incorrect':>11}{'ungrounded':>12}{'unparseable':>13}"
        lines = [header, "-" * len(header)]
        for cat in sorted(counts):
            row = counts[cat]
            lines.append(
                f"{cat:<18}{row['correct']:>9}{row['incorrect']:>11}{row['ungrounded']:>12}{row['unparseable']:>13}"
            )
        lines.append("")
        lines.append(f"total queries: {len(self.records)}  overall accuracy: {self.accuracy():.3f}")
        return "\n".join(lines)


def _verdict_from_text(text: str) -> Optional[bool]:
    stripped = text.strip().lower()
    if stripped.startswith("yes"):
        return True
    if stripped.startswith("no"):
        return False
    words = stripped.replace(",", " ").replace(".", " ").split()
    if "yes" in words:
        return True
    if "no" in words or "not" in words:
        return False
    return None


def score(query: GroundTruthQuery, resp_text: str, scene: SceneGraph, strict: bool = False) -> tuple[str, object, tuple[str, ...]]:
    """(verdict, parsed-or-None, issue strings) for one response."""
    try:
        parsed = parse_response(resp_text, strict=strict)
    except UnparseableResponse:
        return "unparseable", None, ()
    issues = validate_grounding(parsed, scene)
    if issues:
        return "ungrounded", parsed, tuple(f"{i.kind.value}: {i.detail}" for i in issues)

    if query.expected_bool is not None:
        got = _verdict_from_text(parsed.final_text)
        verdict = "correct" if got == query.expected_bool else "incorrect"
    elif query.expected_object_ids:
        verdict = "correct" if parsed.final_object_id in query.expected_object_ids else "incorrect"
    elif query.expected_keywords:
        lowered = parsed.final_text.lower()
        verdict = "correct" if all(k.lower() in lowered for k in query.expected_keywords) else "incorrect"
    else:
        verdict = "incorrect"
    return verdict, parsed, ()


def run_eval(
    tasks: Sequence[tuple[GeneratedScene, Sequence[GroundTruthQuery]]],
    backend: str | llm_mod.Backend = "oracle",
    cfg: EvalConfig = EvalConfig(),
) -> EvalReport:
    """Full pipeline per query: build prompt, complete, parse, ground,
    compare. Per-record failures are folded into the report; only
    configuration problems abort the run."""
    records: list[EvalRecord] = []
    for gen, queries in tasks:
        scene = gen.scene
        for q in queries:
            bundle = build_prompt(scene, q.query_text, select_examples(q.category), budget=cfg.budget)
            if backend == "oracle":
                resp_text = llm_mod.oracle_backed_mock(scene, q.structured, cfg.oracle)
            elif isinstance(backend, str):
                raise ValueError(f"unknown backend {backend!r}")
            else:
                resp_text = llm_mod.complete(bundle, cfg.llm, backend=backend, user_text=q.query_text)
            verdict, parsed, issues = score(q, resp_text, scene, strict=cfg.strict_parse)
            records.append(
                EvalRecord(
                    seed=gen.recipe.seed,
                    category=q.category,
                    query_text=q.query_text,
                    verdict=verdict,
                    final_object_id=getattr(parsed, "final_object_id", None),
                    final_object_tag=getattr(parsed, "final_object_tag", ""),
                    raw_response=resp_text,
                    issues=issues,
                )
            )
    return EvalReport(records=tuple(records))
