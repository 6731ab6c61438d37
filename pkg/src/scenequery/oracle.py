"""Deterministic spatial/geometric reasoner over axis-aligned boxes.

Answers the decidable query categories (size comparison, containment,
on-top-of, relative position) directly from box geometry, and doubles as
the ground-truth verifier for LLM answers. Affordance and negation
queries need world knowledge and are declared out of the oracle's reach.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from enum import Enum
from typing import Optional

from .scene_model import ObjectNode, SceneGraph, Vec3, aabb_of


class SpatialRelation(str, Enum):
    ON_TOP_OF = "OnTopOf"
    ABOVE = "Above"
    BELOW = "Below"
    NEAR = "Near"
    OVERLAPPING = "Overlapping"
    POSITIVE_X = "PositiveX"
    NEGATIVE_X = "NegativeX"
    POSITIVE_Y = "PositiveY"
    NEGATIVE_Y = "NegativeY"


class SizeOrdering(str, Enum):
    BIGGER = "Bigger"
    SMALLER = "Smaller"
    SIMILAR = "Similar"


class QueryCategory(str, Enum):
    AFFORDANCE = "Affordance"
    NEGATION = "Negation"
    SIZE_COMPARE = "SizeCompare"
    CONTAINMENT = "Containment"
    ON_TOP_OF = "OnTopOf"
    RELATIVE_POSITION = "RelativePosition"
    FREEFORM = "Freeform"


# Categories the geometry oracle can decide on its own.
DECIDABLE_CATEGORIES = frozenset(
    {
        QueryCategory.SIZE_COMPARE,
        QueryCategory.CONTAINMENT,
        QueryCategory.ON_TOP_OF,
        QueryCategory.RELATIVE_POSITION,
    }
)


@dataclass(frozen=True)
class OracleConfig:
    near_threshold: float = 1.0
    vertical_gap_tolerance: float = 0.15
    similar_volume_ratio: float = 1.1

    def __post_init__(self):
        for name in ("near_threshold", "vertical_gap_tolerance", "similar_volume_ratio"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")


@dataclass(frozen=True)
class SizeComparison:
    ordering: SizeOrdering
    volume_ratio: float  # volume(a) / volume(b); 1.0 for the degenerate fallback


@dataclass(frozen=True)
class RelativePosition:
    delta: Vec3  # center(a) - center(b)
    relations: tuple[SpatialRelation, ...]
    near: bool
    distance: float


@dataclass(frozen=True)
class StructuredQuery:
    category: QueryCategory
    subject_id: Optional[int] = None
    object_id: Optional[int] = None
    text: str = ""


@dataclass(frozen=True)
class OracleAnswer:
    category: QueryCategory
    supported: bool
    verdict: Optional[bool] = None
    ordering: Optional[SizeOrdering] = None
    object_id: Optional[int] = None
    object_tag: str = ""
    explanation: str = ""
    evidence: tuple[tuple[str, object], ...] = ()


class UnknownIdError(KeyError):
    pass


def _snap(value: float) -> float:
    # Quantize derived quantities before threshold comparisons so that
    # float noise from a common translation cannot flip a predicate at
    # an exact boundary (e.g. gap == tolerance).
    return round(value, 9)


def _distance(a: ObjectNode, b: ObjectNode) -> float:
    delta = a.bbox_center - b.bbox_center
    return _snap(math.sqrt(delta.x**2 + delta.y**2 + delta.z**2))


def relative_position(a: ObjectNode, b: ObjectNode, cfg: OracleConfig = OracleConfig()) -> RelativePosition:
    """Per-axis center deltas plus qualitative descriptors for a vs b."""
    delta = a.bbox_center - b.bbox_center
    dx, dy, dz = (_snap(c) for c in delta)
    relations: list[SpatialRelation] = []
    if dx > 0:
        relations.append(SpatialRelation.POSITIVE_X)
    elif dx < 0:
        relations.append(SpatialRelation.NEGATIVE_X)
    if dy > 0:
        relations.append(SpatialRelation.POSITIVE_Y)
    elif dy < 0:
        relations.append(SpatialRelation.NEGATIVE_Y)
    if dz > 0:
        relations.append(SpatialRelation.ABOVE)
    elif dz < 0:
        relations.append(SpatialRelation.BELOW)
    distance = _distance(a, b)
    return RelativePosition(
        delta=delta,
        relations=tuple(relations),
        near=distance <= cfg.near_threshold,
        distance=distance,
    )


def on_top_of(a: ObjectNode, b: ObjectNode, cfg: OracleConfig = OracleConfig()) -> bool:
    """True if a rests on b: overlapping xy footprints, a's center higher,
    and a's bottom face within the gap tolerance of b's top face."""
    if a.id == b.id:
        raise ValueError(f"on_top_of requires distinct nodes, got id {a.id} twice")
    box_a, box_b = aabb_of(a), aabb_of(b)
    overlap = (
        _snap(box_b.max.x - box_a.min.x) >= 0
        and _snap(box_a.max.x - box_b.min.x) >= 0
        and _snap(box_b.max.y - box_a.min.y) >= 0
        and _snap(box_a.max.y - box_b.min.y) >= 0
    )
    if not overlap:
        return False
    if _snap(a.bbox_center.z - b.bbox_center.z) <= 0:
        return False
    return _snap(abs(box_a.min.z - box_b.max.z)) <= cfg.vertical_gap_tolerance


def size_compare(a: ObjectNode, b: ObjectNode, cfg: OracleConfig = OracleConfig()) -> SizeComparison:
    """Compare box volumes; zero-volume boxes fall back to sorted extents."""
    vol_a, vol_b = a.volume(), b.volume()
    if vol_a > 0 and vol_b > 0:
        ratio = vol_a / vol_b
        if max(ratio, 1.0 / ratio) <= cfg.similar_volume_ratio:
            return SizeComparison(SizeOrdering.SIMILAR, ratio)
        ordering = SizeOrdering.BIGGER if ratio > 1 else SizeOrdering.SMALLER
        return SizeComparison(ordering, ratio)
    # Degenerate box: compare extents largest-first, lexicographically.
    ranked_a = tuple(sorted(a.bbox_extent, reverse=True))
    ranked_b = tuple(sorted(b.bbox_extent, reverse=True))
    if ranked_a == ranked_b:
        return SizeComparison(SizeOrdering.SIMILAR, 1.0)
    ordering = SizeOrdering.BIGGER if ranked_a > ranked_b else SizeOrdering.SMALLER
    return SizeComparison(ordering, 1.0)


def can_contain(outer: ObjectNode, inner: ObjectNode) -> bool:
    """True if inner fits in outer allowing axis-permutation rotations only:
    sorted extents of inner strictly dominated by sorted extents of outer."""
    sorted_outer = sorted(outer.bbox_extent)
    sorted_inner = sorted(inner.bbox_extent)
    return all(i < o for i, o in zip(sorted_inner, sorted_outer))


def near(a: ObjectNode, b: ObjectNode, cfg: OracleConfig = OracleConfig()) -> bool:
    return _distance(a, b) <= cfg.near_threshold


def derive_edges(scene: SceneGraph, cfg: OracleConfig = OracleConfig()) -> list[tuple[int, SpatialRelation, int]]:
    """Evaluate OnTopOf/Near over every ordered node pair.

    Output is sorted by (subject id, relation name, object id) so the
    edge list is stable for a given scene.
    """
    edges: list[tuple[int, SpatialRelation, int]] = []
    for a in scene.nodes:
        for b in scene.nodes:
            if a.id == b.id:
                continue
            if on_top_of(a, b, cfg):
                edges.append((a.id, SpatialRelation.ON_TOP_OF, b.id))
            if near(a, b, cfg):
                edges.append((a.id, SpatialRelation.NEAR, b.id))
    edges.sort(key=lambda e: (e[0], e[1].value, e[2]))
    return edges


def _fmt_vec(v: Vec3) -> str:
    return "[" + ", ".join(f"{c:g}" for c in v) + "]"


def _require(scene: SceneGraph, node_id: Optional[int]) -> ObjectNode:
    if node_id is None or not scene.has_node(node_id):
        raise UnknownIdError(f"query references unknown node id {node_id}")
    return scene.node(node_id)


def answer_query_deterministic(
    scene: SceneGraph, q: StructuredQuery, cfg: OracleConfig = OracleConfig()
) -> OracleAnswer:
    """Route a structured query to the matching predicate.

    Affordance/negation/freeform queries come back with supported=False
    rather than an error; the caller decides whether to fall back to an
    LLM for those.
    """
    if q.category not in DECIDABLE_CATEGORIES:
        return OracleAnswer(
            category=q.category,
            supported=False,
            explanation="requires world knowledge beyond box geometry",
        )

    a = _require(scene, q.subject_id)
    b = _require(scene, q.object_id)

    if q.category is QueryCategory.ON_TOP_OF:
        verdict = on_top_of(a, b, cfg)
        gap = abs(aabb_of(a).min.z - aabb_of(b).max.z)
        text = (
            f"{a.object_tag} (id: {a.id}) center {_fmt_vec(a.bbox_center)} vs "
            f"{b.object_tag} (id: {b.id}) center {_fmt_vec(b.bbox_center)}; "
            f"vertical gap {gap:.3g}"
        )
        return OracleAnswer(
            category=q.category,
            supported=True,
            verdict=verdict,
            object_id=a.id,
            object_tag=a.object_tag,
            explanation=text,
            evidence=(
                ("subject_center", tuple(a.bbox_center)),
                ("object_center", tuple(b.bbox_center)),
                ("vertical_gap", gap),
            ),
        )

    if q.category is QueryCategory.SIZE_COMPARE:
        cmp = size_compare(a, b, cfg)
        winner = a if cmp.ordering is not SizeOrdering.SMALLER else b
        text = (
            f"extent of {a.object_tag} (id: {a.id}) is {_fmt_vec(a.bbox_extent)} and of "
            f"{b.object_tag} (id: {b.id}) is {_fmt_vec(b.bbox_extent)}; "
            f"volume ratio {cmp.volume_ratio:.3g} -> {cmp.ordering.value}"
        )
        return OracleAnswer(
            category=q.category,
            supported=True,
            ordering=cmp.ordering,
            object_id=winner.id,
            object_tag=winner.object_tag,
            explanation=text,
            evidence=(
                ("subject_extent", tuple(a.bbox_extent)),
                ("object_extent", tuple(b.bbox_extent)),
                ("volume_ratio", cmp.volume_ratio),
            ),
        )

    if q.category is QueryCategory.CONTAINMENT:
        verdict = can_contain(a, b)
        text = (
            f"sorted extents: {a.object_tag} {sorted(a.bbox_extent)} vs "
            f"{b.object_tag} {sorted(b.bbox_extent)}; strict dominance is "
            f"{'satisfied' if verdict else 'violated'}"
        )
        return OracleAnswer(
            category=q.category,
            supported=True,
            verdict=verdict,
            object_id=a.id,
            object_tag=a.object_tag,
            explanation=text,
            evidence=(
                ("outer_extent", tuple(a.bbox_extent)),
                ("inner_extent", tuple(b.bbox_extent)),
            ),
        )

    # RelativePosition
    rel = relative_position(a, b, cfg)
    words = describe_relations(rel)
    text = (
        f"{a.object_tag} (id: {a.id}) is {words} {b.object_tag} (id: {b.id}); "
        f"center delta {_fmt_vec(rel.delta)}, distance {rel.distance:.3g}"
    )
    return OracleAnswer(
        category=q.category,
        supported=True,
        verdict=rel.near,
        object_id=a.id,
        object_tag=a.object_tag,
        explanation=text,
        evidence=(
            ("delta", tuple(rel.delta)),
            ("relations", tuple(r.value for r in rel.relations)),
            ("near", rel.near),
        ),
    )


_RELATION_WORDS = {
    SpatialRelation.ABOVE: "above",
    SpatialRelation.BELOW: "below",
    SpatialRelation.POSITIVE_X: "in the positive x direction from",
    SpatialRelation.NEGATIVE_X: "in the negative x direction from",
    SpatialRelation.POSITIVE_Y: "in the positive y direction from",
    SpatialRelation.NEGATIVE_Y: "in the negative y direction from",
}


def describe_relations(rel: RelativePosition) -> str:
    words = [_RELATION_WORDS[r] for r in rel.relations if r in _RELATION_WORDS]
    if not words:
        words = ["at the same position as"]
    phrase = " and ".join(words)
    if rel.near:
        phrase += " and near"
    return phrase


_ID_PATTERN = re.compile(r"\(?\s*id\s*[:=]?\s*(\d+)\s*\)?", re.IGNORECASE)


def interpret_query(scene: SceneGraph, text: str) -> StructuredQuery:
    """Best-effort mapping of a natural-language query onto a structured one.

    Object references are resolved first from explicit "(id: N)" markers,
    then by matching object tags as substrings (longest tag first).
    Category comes from keyword cues; anything unrecognized is Freeform.
    """
    lowered = text.lower()
    ids = [int(m) for m in _ID_PATTERN.findall(text)]
    if len(ids) < 2:
        mentioned = []
        for node in sorted(scene.nodes, key=lambda n: -len(n.object_tag)):
            if node.object_tag.lower() in lowered and node.id not in ids + mentioned:
                mentioned.append(node.id)
        # Preserve mention order in the query text, not tag-length order.
        mentioned.sort(key=lambda i: lowered.find(scene.node(i).object_tag.lower()))
        ids.extend(m for m in mentioned if m not in ids)

    subject = ids[0] if ids else None
    obj = ids[1] if len(ids) > 1 else None

    if "on top of" in lowered or "on the" in lowered and "top" in lowered:
        category = QueryCategory.ON_TOP_OF
    elif "bigger" in lowered or "larger" in lowered or "smaller" in lowered or "size" in lowered:
        category = QueryCategory.SIZE_COMPARE
    elif "contain" in lowered or "fit inside" in lowered or "fit in" in lowered:
        category = QueryCategory.CONTAINMENT
    elif "relative position" in lowered or "with respect to" in lowered or "w.r.t" in lowered or "where is" in lowered and obj is not None:
        category = QueryCategory.RELATIVE_POSITION
    elif "not " in lowered:
        category = QueryCategory.NEGATION
    elif "used to" in lowered or "used for" in lowered or "can be used" in lowered:
        category = QueryCategory.AFFORDANCE
    else:
        category = QueryCategory.FREEFORM

    return StructuredQuery(category=category, subject_id=subject, object_id=obj, text=text)
