"""Vertex correspondence between a demonstrator skeleton and a new character.

End effectors are matched first by the inner product of normalized
root-to-end-effector vectors in the neutral poses; remaining vertices follow
their kinematic chains: hop d from a source end effector maps to hop
min(d, chain length) from the matched target end effector. Characters of very
different sizes compare fairly because the vectors are normalized.

When the target runs out of distinct end effectors (or a source's best target
is already claimed), sources fall back to their best-scoring target, so
several source end effectors may share one target limb.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .igraph import EigTrace, make_trace
from .skeleton import Pose, Skeleton, end_effector_vectors


class CorrespondenceError(ValueError):
    pass


VERTEX_MAP_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class EeAssignment:
    """Source end effector -> target end effector, with the score table."""

    pairs: tuple[tuple[int, int], ...]  # (src node, dst node)
    scores: np.ndarray  # (n_src_ee, n_dst_ee) inner products
    src_ees: tuple[int, ...]
    dst_ees: tuple[int, ...]

    def target_of(self, src_ee: int) -> int:
        for s, d in self.pairs:
            if s == src_ee:
                return d
        raise CorrespondenceError(f"source end effector {src_ee} not assigned")

    @property
    def unmapped_dst_ees(self) -> tuple[int, ...]:
        used = {d for _, d in self.pairs}
        return tuple(d for d in self.dst_ees if d not in used)


@dataclass(frozen=True)
class VertexMap:
    """Total map from demonstrator node index to target node index."""

    src_skeleton: str
    dst_skeleton: str
    mapping: np.ndarray  # (n_src,) int
    ee_assignment: EeAssignment
    pinned: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "mapping", np.asarray(self.mapping, dtype=int))

    def apply(self, node: int) -> int:
        if not 0 <= node < self.mapping.shape[0]:
            raise CorrespondenceError(f"node index {node} outside source skeleton")
        return int(self.mapping[node])


def _unit_ee_vectors(skel: Skeleton, neutral: Pose) -> tuple[tuple[int, ...], np.ndarray]:
    ees, vecs = [], []
    for ee, v in end_effector_vectors(skel, neutral):
        norm = float(np.linalg.norm(v))
        if norm < 1e-9:
            raise CorrespondenceError(
                f"skeleton {skel.name}: end effector {skel.joints[ee].name} coincides with the "
                "root; direction matching is undefined"
            )
        ees.append(ee)
        vecs.append(v / norm)
    return tuple(ees), np.stack(vecs)


def match_end_effectors(
    src: Skeleton, src_neutral: Pose, dst: Skeleton, dst_neutral: Pose
) -> EeAssignment:
    """Assign every source end effector a target end effector.

    Sources are visited in descending order of their best score (ties by
    source index). While a source's best target is unclaimed it takes it;
    sources whose best target is already claimed, or that arrive after all
    targets are claimed, fall back to that same best target, sharing it.
    Score ties between targets break toward the lowest target node index.
    """
    src_ees, src_vecs = _unit_ee_vectors(src, src_neutral)
    dst_ees, dst_vecs = _unit_ee_vectors(dst, dst_neutral)
    scores = src_vecs @ dst_vecs.T  # (n_src, n_dst)
    best = scores.argmax(axis=1)  # lowest index wins ties
    order = sorted(range(len(src_ees)), key=lambda s: (-scores[s, best[s]], s))
    used: set[int] = set()
    result: dict[int, int] = {}
    deferred: list[int] = []
    for s in order:
        if len(used) < len(dst_ees) and best[s] not in used:
            result[s] = int(best[s])
            used.add(int(best[s]))
        else:
            deferred.append(s)
    for s in deferred:
        result[s] = int(best[s])
    pairs = tuple((src_ees[s], dst_ees[result[s]]) for s in range(len(src_ees)))
    return EeAssignment(pairs=pairs, scores=scores, src_ees=src_ees, dst_ees=dst_ees)


def propagate_vertices(
    src: Skeleton,
    dst: Skeleton,
    ee_assignment: EeAssignment,
    pinned: dict[int, int] | None = None,
) -> VertexMap:
    """Extend an end-effector assignment to every source vertex.

    Chains are walked from each end effector toward the root; hop d on the
    source chain maps to hop min(d, target chain length) on the target chain,
    so chains longer than their target saturate at the target root. Vertices
    on no end-effector chain inherit the nearest mapped ancestor's target.
    Pinned entries override everything.
    """
    pinned = dict(pinned or {})
    mapping = np.full(src.node_count, -1, dtype=int)
    for s_node, d_node in pinned.items():
        if not 0 <= s_node < src.node_count:
            raise CorrespondenceError(f"pinned source node {s_node} out of range")
        if not 0 <= d_node < dst.node_count:
            raise CorrespondenceError(f"pinned target node {d_node} out of range")
        mapping[s_node] = d_node
    if mapping[src.root_index] < 0:
        mapping[src.root_index] = dst.root_index
    for src_ee, dst_ee in sorted(ee_assignment.pairs):
        chain_src = src.chain_to_root(src_ee)
        chain_dst = dst.chain_to_root(dst_ee)
        for d, node in enumerate(chain_src):
            if mapping[node] < 0:
                mapping[node] = chain_dst[min(d, len(chain_dst) - 1)]
    for node in range(src.node_count):
        if mapping[node] < 0:
            walk = src.joints[node].parent
            while walk is not None and mapping[walk] < 0:
                walk = src.joints[walk].parent
            mapping[node] = mapping[walk] if walk is not None else dst.root_index
    return VertexMap(
        src_skeleton=src.name,
        dst_skeleton=dst.name,
        mapping=mapping,
        ee_assignment=ee_assignment,
        pinned=pinned,
    )


def build_vertex_map(
    src: Skeleton, dst: Skeleton, pinned: dict[int, int] | None = None
) -> VertexMap:
    assignment = match_end_effectors(src, src.neutral_pose(), dst, dst.neutral_pose())
    return propagate_vertices(src, dst, assignment, pinned)


def remap_eig(trace: EigTrace, map_a: VertexMap, map_b: VertexMap) -> EigTrace:
    """Rewrite trace edge ids through the vertex maps; features are untouched
    (they stay the demonstration's reference values)."""
    ids = trace.edge_ids
    n_a = map_a.mapping.shape[0]
    n_b = map_b.mapping.shape[0]
    if ids[:, :, 0].max() >= n_a or ids[:, :, 1].max() >= n_b:
        raise CorrespondenceError("trace references nodes outside the vertex maps")
    remapped = np.stack([map_a.mapping[ids[:, :, 0]], map_b.mapping[ids[:, :, 1]]], axis=2)
    metadata = dict(trace.metadata)
    metadata["remapped"] = True
    metadata["target_skeletons"] = [map_a.dst_skeleton, map_b.dst_skeleton]
    return make_trace(remapped, trace.features, trace.fps, metadata)


# ---------------------------------------------------------------------------
# Serialization


def vertex_map_to_dict(vm: VertexMap) -> dict:
    return {
        "schema_version": VERTEX_MAP_SCHEMA_VERSION,
        "src_skeleton": vm.src_skeleton,
        "dst_skeleton": vm.dst_skeleton,
        "mapping": vm.mapping.tolist(),
        "ee_assignment": {
            "pairs": [list(p) for p in vm.ee_assignment.pairs],
            "scores": vm.ee_assignment.scores.tolist(),
            "src_ees": list(vm.ee_assignment.src_ees),
            "dst_ees": list(vm.ee_assignment.dst_ees),
            "unmapped_dst_ees": list(vm.ee_assignment.unmapped_dst_ees),
        },
        "pinned": {str(k): v for k, v in vm.pinned.items()},
    }


def vertex_map_from_dict(doc: dict) -> VertexMap:
    try:
        if doc["schema_version"] != VERTEX_MAP_SCHEMA_VERSION:
            raise CorrespondenceError(
                f"unsupported vertex map schema_version {doc['schema_version']}"
            )
        ee = doc["ee_assignment"]
        assignment = EeAssignment(
            pairs=tuple(tuple(p) for p in ee["pairs"]),
            scores=np.asarray(ee["scores"], dtype=np.float64),
            src_ees=tuple(ee["src_ees"]),
            dst_ees=tuple(ee["dst_ees"]),
        )
        return VertexMap(
            src_skeleton=doc["src_skeleton"],
            dst_skeleton=doc["dst_skeleton"],
            mapping=np.asarray(doc["mapping"], dtype=int),
            ee_assignment=assignment,
            pinned={int(k): int(v) for k, v in doc.get("pinned", {}).items()},
        )
    except (KeyError, TypeError) as exc:
        raise CorrespondenceError(f"malformed vertex map: {exc}") from exc


def save_vertex_map(vm: VertexMap, path: str | Path, provenance: dict | None = None):
    doc = vertex_map_to_dict(vm)
    if provenance is not None:
        doc["provenance"] = provenance
    Path(path).write_text(json.dumps(doc, sort_keys=True) + "\n")


def load_vertex_map(path: str | Path) -> VertexMap:
    return vertex_map_from_dict(json.loads(Path(path).read_text()))
