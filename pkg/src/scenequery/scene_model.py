"""Scene-graph data model and JSON load/save.

A scene is a flat list of objects, each described by an id, an
axis-aligned bounding box (center + per-axis extents, z up) and a few
semantic attributes (tag, caption, color, material). Spatial edges are
derived by the oracle, never stored in the file format.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Any, Iterable, NamedTuple

# JSON keys, in canonical output order.
NODE_KEYS = ("id", "bbox_extent", "bbox_center", "object_tag", "caption", "color", "material")
REQUIRED_KEYS = ("id", "bbox_extent", "bbox_center", "object_tag")
OPTIONAL_TEXT_KEYS = ("caption", "color", "material")


class SceneError(ValueError):
    """Malformed scene input. Carries the node index and field when known."""

    def __init__(self, message: str, node_index: int | None = None, field_name: str | None = None):
        self.node_index = node_index
        self.field_name = field_name
        prefix = ""
        if node_index is not None:
            prefix = f"node[{node_index}]"
            if field_name:
                prefix += f".{field_name}"
            prefix += ": "
        super().__init__(prefix + message)


class Vec3(NamedTuple):
    x: float
    y: float
    z: float

    def __add__(self, other):  # type: ignore[override]
        return Vec3(self.x + other.x, self.y + other.y, self.z + other.z)

    def __sub__(self, other):
        return Vec3(self.x - other.x, self.y - other.y, self.z - other.z)

    def scaled(self, k: float) -> "Vec3":
        return Vec3(self.x * k, self.y * k, self.z * k)


@dataclass(frozen=True)
class Aabb:
    """Min/max-corner view of a box; derived from center and extent."""

    min: Vec3
    max: Vec3

    def footprint_overlaps(self, other: "Aabb") -> bool:
        """True if the xy projections intersect (touching counts)."""
        return (
            self.min.x <= other.max.x
            and other.min.x <= self.max.x
            and self.min.y <= other.max.y
            and other.min.y <= self.max.y
        )


@dataclass(frozen=True)
class ObjectNode:
    id: int
    bbox_extent: Vec3
    bbox_center: Vec3
    object_tag: str
    caption: str = ""
    color: str = ""
    material: str = ""
    # Unknown JSON keys, preserved verbatim for round-tripping.
    extra: tuple[tuple[str, Any], ...] = ()

    def volume(self) -> float:
        return self.bbox_extent.x * self.bbox_extent.y * self.bbox_extent.z


@dataclass(frozen=True)
class SceneGraph:
    nodes: tuple[ObjectNode, ...]
    edges: tuple[tuple[int, str, int], ...] = ()

    def __post_init__(self):
        ids = [n.id for n in self.nodes]
        if len(ids) != len(set(ids)):
            seen: set[int] = set()
            for i in ids:
                if i in seen:
                    raise SceneError(f"duplicate node id {i}")
                seen.add(i)
        known = set(ids)
        for subj, _rel, obj in self.edges:
            if subj not in known or obj not in known:
                raise SceneError(f"edge ({subj}, {obj}) references unknown node id")

    def node(self, node_id: int) -> ObjectNode:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(f"no node with id {node_id}")

    def has_node(self, node_id: int) -> bool:
        return any(n.id == node_id for n in self.nodes)

    @property
    def ids(self) -> list[int]:
        return [n.id for n in self.nodes]


@dataclass(frozen=True)
class SerializeOptions:
    """Controls for scene serialization.

    precision: decimal places for bbox numbers (None = exact repr).
    omit: field names left out of the output entirely.
    indent: passed through to json.dumps.
    """

    precision: int | None = 1
    omit: frozenset[str] = frozenset()
    indent: int | None = None


def _parse_vec3(value: Any, index: int, field_name: str) -> Vec3:
    if not isinstance(value, (list, tuple)) or len(value) != 3:
        raise SceneError("expected a 3-element array", index, field_name)
    comps = []
    for c in value:
        if isinstance(c, bool) or not isinstance(c, (int, float)):
            raise SceneError(f"non-numeric component {c!r}", index, field_name)
        if not math.isfinite(c):
            raise SceneError(f"non-finite component {c!r}", index, field_name)
        comps.append(float(c))
    return Vec3(*comps)


def _parse_node(obj: Any, index: int) -> ObjectNode:
    if not isinstance(obj, dict):
        raise SceneError("expected a JSON object", index)
    for key in REQUIRED_KEYS:
        if key not in obj:
            raise SceneError(f"missing required field {key!r}", index, key)

    node_id = obj["id"]
    if isinstance(node_id, bool) or not isinstance(node_id, int):
        raise SceneError(f"id must be an integer, got {node_id!r}", index, "id")
    if node_id < 0:
        raise SceneError(f"id must be non-negative, got {node_id}", index, "id")

    extent = _parse_vec3(obj["bbox_extent"], index, "bbox_extent")
    for c in extent:
        if c < 0:
            raise SceneError(f"negative extent component {c}", index, "bbox_extent")
    center = _parse_vec3(obj["bbox_center"], index, "bbox_center")

    tag = obj["object_tag"]
    if not isinstance(tag, str) or not tag:
        raise SceneError("object_tag must be a non-empty string", index, "object_tag")

    texts = {}
    for key in OPTIONAL_TEXT_KEYS:
        value = obj.get(key, "")
        if not isinstance(value, str):
            raise SceneError(f"{key} must be a string", index, key)
        texts[key] = value

    extra = tuple((k, v) for k, v in obj.items() if k not in NODE_KEYS)
    return ObjectNode(
        id=node_id,
        bbox_extent=extent,
        bbox_center=center,
        object_tag=tag,
        caption=texts["caption"],
        color=texts["color"],
        material=texts["material"],
        extra=extra,
    )


def parse_scene(json_text: str) -> SceneGraph:
    """Parse scene JSON into a SceneGraph.

    Input must be a top-level array of node objects. Any structural
    problem raises SceneError naming the offending node and field;
    a partial scene is never returned.
    """
    try:
        data = json.loads(json_text)
    except json.JSONDecodeError as exc:
        raise SceneError(f"malformed JSON: {exc}") from exc
    if not isinstance(data, list):
        raise SceneError("top-level value must be an array")

    nodes = []
    seen: set[int] = set()
    for index, obj in enumerate(data):
        node = _parse_node(obj, index)
        if node.id in seen:
            raise SceneError(f"duplicate id {node.id}", index, "id")
        seen.add(node.id)
        nodes.append(node)
    return SceneGraph(nodes=tuple(nodes))


def _round(value: float, precision: int | None) -> float | int:
    if precision is None:
        return value
    rounded = round(value, precision)
    # Keep -0.0 out of the output.
    return rounded + 0.0


def node_to_dict(node: ObjectNode, opts: SerializeOptions = SerializeOptions()) -> dict:
    out: dict[str, Any] = {
        "id": node.id,
        "bbox_extent": [_round(c, opts.precision) for c in node.bbox_extent],
        "bbox_center": [_round(c, opts.precision) for c in node.bbox_center],
        "object_tag": node.object_tag,
    }
    for key in OPTIONAL_TEXT_KEYS:
        out[key] = getattr(node, key)
    for key in opts.omit:
        out.pop(key, None)
    for key, value in node.extra:
        out[key] = value
    return out


def serialize_scene(scene: SceneGraph, opts: SerializeOptions = SerializeOptions()) -> str:
    """Serialize to the canonical JSON array, keys in fixed order."""
    payload = [node_to_dict(n, opts) for n in scene.nodes]
    return json.dumps(payload, indent=opts.indent)


def aabb_of(node: ObjectNode) -> Aabb:
    half = node.bbox_extent.scaled(0.5)
    return Aabb(min=node.bbox_center - half, max=node.bbox_center + half)


def scene_from_nodes(nodes: Iterable[ObjectNode]) -> SceneGraph:
    return SceneGraph(nodes=tuple(nodes))


def scene_issues(json_text: str) -> tuple[int, list[SceneError]]:
    """Lenient validation pass: (node count, all issues found).

    Unlike parse_scene, keeps going after the first bad node so a
    validation report can list every problem at once.
    """
    try:
        data = json.loads(json_text)
    except json.JSONDecodeError as exc:
        return 0, [SceneError(f"malformed JSON: {exc}")]
    if not isinstance(data, list):
        return 0, [SceneError("top-level value must be an array")]

    issues: list[SceneError] = []
    seen: set[int] = set()
    for index, obj in enumerate(data):
        try:
            node = _parse_node(obj, index)
        except SceneError as exc:
            issues.append(exc)
            continue
        if node.id in seen:
            issues.append(SceneError(f"duplicate id {node.id}", index, "id"))
        seen.add(node.id)
    return len(data), issues
