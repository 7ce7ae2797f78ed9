"""Shared scene model: node graph, edit vocabulary, anchoring and diffing.

The model is a versioned snapshot value. Every operation is a pure function
returning a new model; nothing here mutates its inputs, which is what makes
replicas, merges and network replay safe to reason about.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Optional, Union

QUAT_NORM_TOL = 1e-9


class SceneError(Exception):
    """Base class for scene model failures."""


class DescriptorError(SceneError):
    """Raised when a model descriptor document is malformed."""


class EditError(SceneError):
    """Raised when an edit cannot be applied to a model."""


class IncompatibleModelsError(SceneError):
    """Raised when two models do not share the same node universe."""


class Role(Enum):
    EXPERT = "Expert"
    OPERATOR = "Operator"


class NodeKind(Enum):
    VALVE = "Valve"
    EXCHANGER_UNIT = "ExchangerUnit"
    PIPE = "Pipe"
    LABEL = "Label"


class ValveState(Enum):
    OPEN = "Open"
    CLOSED = "Closed"

    def toggled(self) -> "ValveState":
        return ValveState.CLOSED if self is ValveState.OPEN else ValveState.OPEN


class Handedness(Enum):
    ONE_HANDED = "OneHanded"
    TWO_HANDED = "TwoHanded"


@dataclass(frozen=True)
class Pose:
    """Rigid transform: position in meters plus a unit quaternion (w, x, y, z)."""

    position: tuple[float, float, float] = (0.0, 0.0, 0.0)
    orientation: tuple[float, float, float, float] = (1.0, 0.0, 0.0, 0.0)

    def __post_init__(self) -> None:
        if len(self.position) != 3:
            raise ValueError("position must be a 3-vector")
        if len(self.orientation) != 4:
            raise ValueError("orientation must be a quaternion (w, x, y, z)")
        norm = math.sqrt(sum(c * c for c in self.orientation))
        if abs(norm - 1.0) > QUAT_NORM_TOL:
            raise ValueError(f"quaternion norm {norm!r} deviates from 1 beyond {QUAT_NORM_TOL}")

    def rotate(self, v: tuple[float, float, float]) -> tuple[float, float, float]:
        """Rotate a vector by this pose's orientation."""
        w, x, y, z = self.orientation
        vx, vy, vz = v
        # q * (0, v) * q^-1, expanded
        tx = 2.0 * (y * vz - z * vy)
        ty = 2.0 * (z * vx - x * vz)
        tz = 2.0 * (x * vy - y * vx)
        return (
            vx + w * tx + (y * tz - z * ty),
            vy + w * ty + (z * tx - x * tz),
            vz + w * tz + (x * ty - y * tx),
        )

    def compose(self, other: "Pose") -> "Pose":
        """Transform ``other`` by ``self`` (self applied after other's frame)."""
        px, py, pz = self.rotate(other.position)
        sx, sy, sz = self.position
        w1, x1, y1, z1 = self.orientation
        w2, x2, y2, z2 = other.orientation
        quat = (
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        )
        norm = math.sqrt(sum(c * c for c in quat))
        quat = tuple(c / norm for c in quat)
        return Pose((sx + px, sy + py, sz + pz), quat)  # type: ignore[arg-type]

    @staticmethod
    def identity() -> "Pose":
        return Pose()

    def to_dict(self) -> dict:
        return {"pos": list(self.position), "quat": list(self.orientation)}

    @staticmethod
    def from_dict(doc: dict) -> "Pose":
        pos = doc.get("pos", [0.0, 0.0, 0.0])
        quat = doc.get("quat", [1.0, 0.0, 0.0, 0.0])
        return Pose(tuple(float(c) for c in pos), tuple(float(c) for c in quat))  # type: ignore[arg-type]


@dataclass(frozen=True)
class VisualState:
    """Presentation flags on a node: optional highlight color, indication animation."""

    highlight_color: Optional[tuple[float, float, float]] = None
    indication_animation: bool = False

    def __post_init__(self) -> None:
        if self.highlight_color is not None:
            if len(self.highlight_color) != 3 or any(not 0.0 <= c <= 1.0 for c in self.highlight_color):
                raise ValueError("highlight_color components must each be in [0, 1]")


@dataclass(frozen=True)
class SceneNode:
    id: str
    kind: NodeKind
    parent: Optional[str] = None
    local_pose: Pose = field(default_factory=Pose)
    valve_state: Optional[ValveState] = None
    handedness: Optional[Handedness] = None
    visual: VisualState = field(default_factory=VisualState)

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("node id must be non-empty")
        is_valve = self.kind is NodeKind.VALVE
        if is_valve and (self.valve_state is None or self.handedness is None):
            raise ValueError(f"valve {self.id!r} requires valve_state and handedness")
        if not is_valve and (self.valve_state is not None or self.handedness is not None):
            raise ValueError(f"non-valve {self.id!r} must not carry valve_state/handedness")


@dataclass(frozen=True)
class Annotation:
    id: str
    author_role: Role
    anchor: str
    text: str
    offset: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("annotation id must be non-empty")


# --- Edit vocabulary ---------------------------------------------------------
# Atomic single-field operations; compound gestures are sequences of these.


@dataclass(frozen=True)
class SetPose:
    node: str
    pose: Pose
    author_role: Role = Role.EXPERT
    author_seq: int = 0


@dataclass(frozen=True)
class SetValveState:
    node: str
    state: ValveState
    author_role: Role = Role.EXPERT
    author_seq: int = 0


@dataclass(frozen=True)
class SetHighlight:
    node: str
    color: Optional[tuple[float, float, float]]
    author_role: Role = Role.EXPERT
    author_seq: int = 0


@dataclass(frozen=True)
class SetIndication:
    node: str
    playing: bool
    author_role: Role = Role.EXPERT
    author_seq: int = 0


@dataclass(frozen=True)
class AddAnnotation:
    annotation: Annotation
    author_role: Role = Role.EXPERT
    author_seq: int = 0


@dataclass(frozen=True)
class RemoveAnnotation:
    annotation_id: str
    author_role: Role = Role.EXPERT
    author_seq: int = 0


Edit = Union[SetPose, SetValveState, SetHighlight, SetIndication, AddAnnotation, RemoveAnnotation]

FIELD_EDITS = (SetPose, SetValveState, SetHighlight, SetIndication)

_FIELD_NAME = {SetPose: "pose", SetValveState: "valve_state", SetHighlight: "highlight", SetIndication: "indication"}


def edit_field_key(edit: Edit) -> Optional[tuple[str, str]]:
    """(field, node) key for node-field edits; None for annotation edits."""
    name = _FIELD_NAME.get(type(edit))
    return (name, edit.node) if name else None


@dataclass
class SceneModel:
    """Versioned snapshot of the shared scene.

    ``field_authors`` tracks, per (field, node), the role and version of the
    last committed write; the merge rules in :mod:`replicasim.replica` depend
    on it. ``marker_offset`` is the descriptor-declared marker-to-model
    transform consumed by :func:`anchor_model`.
    """

    nodes: dict[str, SceneNode] = field(default_factory=dict)
    annotations: dict[str, Annotation] = field(default_factory=dict)
    version: int = 0
    world_anchor: Pose = field(default_factory=Pose)
    marker_offset: Pose = field(default_factory=Pose)
    field_authors: dict[tuple[str, str], tuple[Role, int]] = field(default_factory=dict)

    def node(self, node_id: str) -> SceneNode:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise EditError(f"unknown node {node_id!r}") from None

    def valves(self) -> list[SceneNode]:
        return [n for n in self.nodes.values() if n.kind is NodeKind.VALVE]


# --- Operations --------------------------------------------------------------


def load_model(descriptor: dict) -> SceneModel:
    """Build a version-0 model from a descriptor document.

    Descriptor schema::

        {"marker_offset": {"pos": [x,y,z], "quat": [w,x,y,z]},
         "nodes": [{"id", "kind", "parent"?, "pose"?, "valve_state"?, "handedness"?}, ...]}
    """
    if not isinstance(descriptor, dict):
        raise DescriptorError("descriptor must be a JSON object")
    marker_offset = Pose.from_dict(descriptor.get("marker_offset", {}))
    nodes: dict[str, SceneNode] = {}
    for i, doc in enumerate(descriptor.get("nodes", [])):
        node_id = doc.get("id", "")
        if node_id in nodes:
            raise DescriptorError(f"duplicate node id {node_id!r}")
        try:
            kind = NodeKind(doc.get("kind", ""))
        except ValueError:
            raise DescriptorError(f"node {node_id or i!r}: unknown kind {doc.get('kind')!r}") from None
        valve_state = handedness = None
        if kind is NodeKind.VALVE:
            if "valve_state" not in doc:
                raise DescriptorError(f"valve {node_id!r} missing valve_state")
            if "handedness" not in doc:
                raise DescriptorError(f"valve {node_id!r} missing handedness")
            try:
                valve_state = ValveState(doc["valve_state"])
                handedness = Handedness(doc["handedness"])
            except ValueError as exc:
                raise DescriptorError(f"valve {node_id!r}: {exc}") from None
        try:
            nodes[node_id] = SceneNode(
                id=node_id,
                kind=kind,
                parent=doc.get("parent"),
                local_pose=Pose.from_dict(doc.get("pose", {})),
                valve_state=valve_state,
                handedness=handedness,
            )
        except ValueError as exc:
            raise DescriptorError(str(exc)) from None
    for node in nodes.values():
        if node.parent is not None and node.parent not in nodes:
            raise DescriptorError(f"node {node.id!r} has dangling parent {node.parent!r}")
    _check_parent_cycles(nodes)
    return SceneModel(nodes=nodes, marker_offset=marker_offset)


def _check_parent_cycles(nodes: dict[str, SceneNode]) -> None:
    for start in nodes:
        seen = set()
        cur: Optional[str] = start
        while cur is not None:
            if cur in seen:
                raise DescriptorError(f"parent cycle through node {cur!r}")
            seen.add(cur)
            cur = nodes[cur].parent


def load_model_file(path: str) -> SceneModel:
    with open(path, encoding="utf-8") as fh:
        return load_model(json.load(fh))


def anchor_model(model: SceneModel, marker: Pose) -> SceneModel:
    """Re-anchor the model at a detected marker pose.

    The world anchor becomes ``marker ∘ marker_offset``; node-local poses are
    untouched, so the whole scene moves as one rigid body.
    """
    return replace(model, world_anchor=marker.compose(model.marker_offset))


def apply_edit(model: SceneModel, edit: Edit) -> SceneModel:
    """Apply one edit, returning a new model with version incremented by 1."""
    nodes = model.nodes
    annotations = model.annotations
    new_version = model.version + 1

    if isinstance(edit, FIELD_EDITS):
        node = model.node(edit.node)
        if isinstance(edit, SetPose):
            node = replace(node, local_pose=edit.pose)
        elif isinstance(edit, SetValveState):
            if node.kind is not NodeKind.VALVE:
                raise EditError(f"cannot set valve_state on non-valve {edit.node!r}")
            node = replace(node, valve_state=edit.state)
        elif isinstance(edit, SetHighlight):
            node = replace(node, visual=replace(node.visual, highlight_color=edit.color))
        else:
            node = replace(node, visual=replace(node.visual, indication_animation=edit.playing))
        nodes = dict(nodes)
        nodes[edit.node] = node
    elif isinstance(edit, AddAnnotation):
        ann = edit.annotation
        if ann.anchor not in model.nodes:
            raise EditError(f"annotation {ann.id!r} anchors unknown node {ann.anchor!r}")
        if ann.id in annotations:
            raise EditError(f"annotation id {ann.id!r} already present")
        annotations = dict(annotations)
        annotations[ann.id] = ann
    elif isinstance(edit, RemoveAnnotation):
        if edit.annotation_id not in annotations:
            raise EditError(f"unknown annotation {edit.annotation_id!r}")
        annotations = dict(annotations)
        del annotations[edit.annotation_id]
    else:
        raise EditError(f"unsupported edit {edit!r}")

    field_authors = model.field_authors
    key = edit_field_key(edit)
    if key is not None:
        field_authors = dict(field_authors)
        field_authors[key] = (edit.author_role, new_version)
    return replace(
        model,
        nodes=nodes,
        annotations=annotations,
        version=new_version,
        field_authors=field_authors,
    )


def apply_edits(model: SceneModel, edits: Iterable[Edit]) -> SceneModel:
    for edit in edits:
        model = apply_edit(model, edit)
    return model


def diff(a: SceneModel, b: SceneModel, author_role: Role = Role.EXPERT, start_seq: int = 0) -> list[Edit]:
    """Edits that take ``a`` to ``b`` (same node universe; version ignored)."""
    if set(a.nodes) != set(b.nodes):
        raise IncompatibleModelsError("models do not share the same node id universe")
    edits: list[Edit] = []
    seq = start_seq

    def stamp(make):
        nonlocal seq
        edits.append(make(author_role, seq))
        seq += 1

    for node_id in sorted(a.nodes):
        na, nb = a.nodes[node_id], b.nodes[node_id]
        if na.local_pose != nb.local_pose:
            stamp(lambda r, s, nb=nb: SetPose(nb.id, nb.local_pose, r, s))
        if na.valve_state != nb.valve_state:
            stamp(lambda r, s, nb=nb: SetValveState(nb.id, nb.valve_state, r, s))
        if na.visual.highlight_color != nb.visual.highlight_color:
            stamp(lambda r, s, nb=nb: SetHighlight(nb.id, nb.visual.highlight_color, r, s))
        if na.visual.indication_animation != nb.visual.indication_animation:
            stamp(lambda r, s, nb=nb: SetIndication(nb.id, nb.visual.indication_animation, r, s))
    for ann_id in sorted(a.annotations):
        if a.annotations[ann_id] != b.annotations.get(ann_id):
            stamp(lambda r, s, ann_id=ann_id: RemoveAnnotation(ann_id, r, s))
    for ann_id in sorted(b.annotations):
        ann = b.annotations[ann_id]
        if a.annotations.get(ann_id) != ann:
            stamp(lambda r, s, ann=ann: AddAnnotation(ann, r, s))
    return edits


def field_equal(a: SceneModel, b: SceneModel, include_anchor: bool = True) -> bool:
    """Structural equality of nodes and annotations, ignoring version/provenance."""
    if a.nodes != b.nodes or a.annotations != b.annotations:
        return False
    return not include_anchor or a.world_anchor == b.world_anchor


# --- Canonical serialization --------------------------------------------------


def _node_to_dict(node: SceneNode) -> dict:
    doc: dict = {"id": node.id, "kind": node.kind.value, "pose": node.local_pose.to_dict()}
    if node.parent is not None:
        doc["parent"] = node.parent
    if node.valve_state is not None:
        doc["valve_state"] = node.valve_state.value
    if node.handedness is not None:
        doc["handedness"] = node.handedness.value
    visual: dict = {}
    if node.visual.highlight_color is not None:
        visual["highlight_color"] = list(node.visual.highlight_color)
    if node.visual.indication_animation:
        visual["indication_animation"] = True
    if visual:
        doc["visual"] = visual
    return doc


def to_canonical_dict(model: SceneModel) -> dict:
    return {
        "version": model.version,
        "world_anchor": model.world_anchor.to_dict(),
        "marker_offset": model.marker_offset.to_dict(),
        "nodes": [_node_to_dict(model.nodes[i]) for i in sorted(model.nodes)],
        "annotations": [
            {
                "id": ann.id,
                "author_role": ann.author_role.value,
                "anchor": ann.anchor,
                "text": ann.text,
                "offset": list(ann.offset),
            }
            for ann in (model.annotations[i] for i in sorted(model.annotations))
        ],
        "field_authors": {
            f"{fld}:{node}": [role.value, version]
            for (fld, node), (role, version) in sorted(model.field_authors.items())
        },
    }


def canonical_json(model: SceneModel) -> str:
    """Stable byte-for-byte serialization (sorted node ids, sorted keys)."""
    return json.dumps(to_canonical_dict(model), sort_keys=True, separators=(",", ":"))


# --- Edit wire codec -----------------------------------------------------------


def annotation_to_dict(ann: Annotation) -> dict:
    return {
        "id": ann.id,
        "author_role": ann.author_role.value,
        "anchor": ann.anchor,
        "text": ann.text,
        "offset": list(ann.offset),
    }


def annotation_from_dict(doc: dict) -> Annotation:
    return Annotation(
        id=doc["id"],
        author_role=Role(doc["author_role"]),
        anchor=doc["anchor"],
        text=doc["text"],
        offset=tuple(float(c) for c in doc.get("offset", (0.0, 0.0, 0.0))),  # type: ignore[arg-type]
    )


def edit_to_dict(edit: Edit) -> dict:
    base = {"role": edit.author_role.value, "seq": edit.author_seq}
    if isinstance(edit, SetPose):
        return {"op": "set_pose", "node": edit.node, "pose": edit.pose.to_dict(), **base}
    if isinstance(edit, SetValveState):
        return {"op": "set_valve_state", "node": edit.node, "state": edit.state.value, **base}
    if isinstance(edit, SetHighlight):
        color = list(edit.color) if edit.color is not None else None
        return {"op": "set_highlight", "node": edit.node, "color": color, **base}
    if isinstance(edit, SetIndication):
        return {"op": "set_indication", "node": edit.node, "playing": edit.playing, **base}
    if isinstance(edit, AddAnnotation):
        return {"op": "add_annotation", "annotation": annotation_to_dict(edit.annotation), **base}
    if isinstance(edit, RemoveAnnotation):
        return {"op": "remove_annotation", "annotation_id": edit.annotation_id, **base}
    raise EditError(f"unsupported edit {edit!r}")


def edit_from_dict(doc: dict) -> Edit:
    op = doc.get("op")
    role = Role(doc["role"])
    seq = int(doc["seq"])
    if op == "set_pose":
        return SetPose(doc["node"], Pose.from_dict(doc["pose"]), role, seq)
    if op == "set_valve_state":
        return SetValveState(doc["node"], ValveState(doc["state"]), role, seq)
    if op == "set_highlight":
        color = doc.get("color")
        return SetHighlight(doc["node"], tuple(color) if color is not None else None, role, seq)
    if op == "set_indication":
        return SetIndication(doc["node"], bool(doc["playing"]), role, seq)
    if op == "add_annotation":
        return AddAnnotation(annotation_from_dict(doc["annotation"]), role, seq)
    if op == "remove_annotation":
        return RemoveAnnotation(doc["annotation_id"], role, seq)
    raise EditError(f"unknown edit op {op!r}")
