"""Client-private replicas and role-aware synchronization with the shared model.

Merge policy, per field per node:

* annotation adds always append, first writer keeps a contested id;
* annotations already shared survive any sync that is not an Expert removal;
* an Expert edit wins every field conflict, in either request order;
* an Operator edit never overwrites a field whose current value was
  authored by the Expert (even a stale one);
* same-role conflicts resolve by host commit order (last writer wins).

Rejected edits never abort a batch; the remaining edits still apply.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

from replicasim.scene import (
    AddAnnotation,
    Edit,
    EditError,
    RemoveAnnotation,
    Role,
    SceneModel,
    apply_edit,
    edit_field_key,
)

DEFAULT_REPLICA_SCALE = 0.2

REJECT_EXPERT_PRECEDENCE = "expert-precedence"
REJECT_ANNOTATION_RETENTION = "annotation-retention"
REJECT_DUPLICATE_ANNOTATION = "duplicate-annotation"
REJECT_UNKNOWN_TARGET = "unknown-target"


class ReplicaError(Exception):
    pass


class ProtocolError(ReplicaError):
    """Raised for malformed sync requests (e.g. base version from the future)."""


@dataclass(frozen=True)
class Replica:
    """A client-owned scaled copy of the shared model with a private edit log."""

    owner: str
    owner_role: Role
    scale_factor: float
    base_version: int
    working: SceneModel
    pending: tuple[Edit, ...] = ()


@dataclass(frozen=True)
class SyncRequest:
    owner: str
    owner_role: Role
    base_version: int
    edits: tuple[Edit, ...] = ()


@dataclass(frozen=True)
class MergeOutcome:
    merged: SceneModel
    accepted: tuple[Edit, ...]
    rejected: tuple[tuple[Edit, str], ...]


@dataclass(frozen=True)
class RebaseResult:
    replica: Replica
    dropped: tuple[Edit, ...]


def create_replica(shared: SceneModel, owner: str, role: Role, scale: float = DEFAULT_REPLICA_SCALE) -> Replica:
    """Take a private snapshot of the shared model at its current version.

    ``scale`` is display metadata (the reduced-copy factor); it never touches
    geometry, so relative node poses are identical to the shared model's.
    """
    if scale <= 0:
        raise ReplicaError(f"invalid replica scale {scale!r}; must be > 0")
    return Replica(
        owner=owner,
        owner_role=role,
        scale_factor=scale,
        base_version=shared.version,
        working=shared,
    )


def edit_replica(replica: Replica, edit: Edit) -> Replica:
    """Apply an edit privately. The shared model is untouched by construction."""
    working = apply_edit(replica.working, edit)
    return replace(replica, working=working, pending=replica.pending + (edit,))


def make_sync_request(replica: Replica) -> SyncRequest:
    return SyncRequest(
        owner=replica.owner,
        owner_role=replica.owner_role,
        base_version=replica.base_version,
        edits=replica.pending,
    )


def synchronize(request: SyncRequest, shared: SceneModel) -> MergeOutcome:
    """Merge a replica's pending edits into the shared model.

    Pure function: identical (request, shared) inputs produce a bit-identical
    outcome. The version bumps once per accepted batch, not per edit.
    """
    if request.base_version > shared.version:
        raise ProtocolError(
            f"base_version {request.base_version} is ahead of shared version {shared.version}"
        )
    accepted: list[Edit] = []
    rejected: list[tuple[Edit, str]] = []
    # Working views of the merge in progress, so edits inside one batch see
    # each other (e.g. an add followed by a duplicate add of the same id).
    annotations = dict(shared.annotations)
    known_nodes = shared.nodes

    for edit in request.edits:
        if isinstance(edit, AddAnnotation):
            ann = edit.annotation
            if ann.anchor not in known_nodes:
                rejected.append((edit, REJECT_UNKNOWN_TARGET))
            elif ann.id in annotations:
                rejected.append((edit, REJECT_DUPLICATE_ANNOTATION))
            else:
                annotations[ann.id] = ann
                accepted.append(edit)
        elif isinstance(edit, RemoveAnnotation):
            if edit.annotation_id not in annotations:
                rejected.append((edit, REJECT_UNKNOWN_TARGET))
            elif request.owner_role is not Role.EXPERT:
                rejected.append((edit, REJECT_ANNOTATION_RETENTION))
            else:
                del annotations[edit.annotation_id]
                accepted.append(edit)
        else:
            key = edit_field_key(edit)
            if edit.node not in known_nodes:
                rejected.append((edit, REJECT_UNKNOWN_TARGET))
                continue
            author = shared.field_authors.get(key)
            if (
                request.owner_role is not Role.EXPERT
                and author is not None
                and author[0] is Role.EXPERT
            ):
                rejected.append((edit, REJECT_EXPERT_PRECEDENCE))
            else:
                # Expert edits always win; same-role conflicts fall to the
                # incoming request, which holds the later host sequence.
                accepted.append(edit)

    new_version = shared.version + 1 if accepted else shared.version
    merged = apply_commit(shared, tuple(accepted), new_version)
    return MergeOutcome(merged=merged, accepted=tuple(accepted), rejected=tuple(rejected))


def apply_commit(shared: SceneModel, accepted: tuple[Edit, ...], new_version: int) -> SceneModel:
    """Replay a committed batch onto a model copy.

    Host and clients both build their post-commit state through this one
    function, which is what makes replayed models bit-equal to the host's.
    """
    model = shared
    for edit in accepted:
        model = apply_edit(model, edit)
    field_authors = dict(shared.field_authors)
    for edit in accepted:
        key = edit_field_key(edit)
        if key is not None:
            field_authors[key] = (edit.author_role, new_version)
    return replace(model, version=new_version, field_authors=field_authors)


def rebase_replica(replica: Replica, shared: SceneModel) -> RebaseResult:
    """Rebuild a replica on top of a newer shared snapshot.

    Pending edits are re-applied in order; any that no longer apply (target
    removed remotely, annotation id now taken) are dropped and reported.
    """
    if shared.version < replica.base_version:
        raise ReplicaError(
            f"shared version {shared.version} is behind replica base {replica.base_version}"
        )
    working = shared
    kept: list[Edit] = []
    dropped: list[Edit] = []
    for edit in replica.pending:
        try:
            working = apply_edit(working, edit)
        except EditError:
            dropped.append(edit)
        else:
            kept.append(edit)
    rebased = replace(
        replica, working=working, pending=tuple(kept), base_version=shared.version
    )
    return RebaseResult(replica=rebased, dropped=tuple(dropped))


def acknowledge_commit(replica: Replica, outcome_accepted: tuple[Edit, ...], shared: SceneModel) -> Replica:
    """Clear a replica's accepted edits after its own sync commit lands.

    Accepted edits are identified by (author_role, author_seq); rejected ones
    stay pending so the owner can see and revise them.
    """
    accepted_keys = {(e.author_role, e.author_seq) for e in outcome_accepted}
    remaining = tuple(e for e in replica.pending if (e.author_role, e.author_seq) not in accepted_keys)
    result = rebase_replica(replace(replica, pending=remaining), shared)
    return result.replica


# --- Canonical JSON forms (wire and JSONL logs; see docs/protocol.md) ------------


def sync_request_to_dict(request: SyncRequest) -> dict:
    from replicasim.scene import edit_to_dict

    return {
        "owner": request.owner,
        "owner_role": request.owner_role.value,
        "base_version": request.base_version,
        "edits": [edit_to_dict(e) for e in request.edits],
    }


def sync_request_from_dict(doc: dict) -> SyncRequest:
    from replicasim.scene import edit_from_dict

    return SyncRequest(
        owner=doc["owner"],
        owner_role=Role(doc["owner_role"]),
        base_version=int(doc["base_version"]),
        edits=tuple(edit_from_dict(e) for e in doc["edits"]),
    )


def merge_outcome_to_dict(outcome: MergeOutcome) -> dict:
    from replicasim.scene import edit_to_dict

    return {
        "new_version": outcome.merged.version,
        "accepted": [edit_to_dict(e) for e in outcome.accepted],
        "rejected": [{"edit": edit_to_dict(e), "reason": reason} for e, reason in outcome.rejected],
    }
