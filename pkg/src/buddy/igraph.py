"""Pairwise interaction graphs between two characters.

Every node of character A is connected to every node of character B. An edge
(i, j) carries a 6D feature: the relative position p_j - p_i followed by the
midpoint (p_i + p_j) / 2, both in the world frame (Z up). Edge features for a
frame are stored row-major with i outer and j inner.

A full graph is information-equivalent to the partner's pose: given one
character's positions and all edge features, the other character's positions
are recovered exactly (see reconstruct_partner).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .skeleton import Pose

EIG_TRACE_SCHEMA_VERSION = 1


class GraphError(ValueError):
    """Raised for inconsistent or malformed graph features."""


@dataclass(frozen=True)
class EdgeFeature:
    """Single inter-character edge: node i on character A, node j on B."""

    i: int
    j: int
    rel: np.ndarray  # p_j - p_i
    mid: np.ndarray  # (p_i + p_j) / 2

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.rel, self.mid])


@dataclass(frozen=True)
class GraphFeature:
    """Ordered edge features over node pairs of two characters.

    Stored as parallel arrays for speed; `edge(k)` gives a dataclass view.
    `features` is (E, 6) with columns [rel_x, rel_y, rel_z, mid_x, mid_y, mid_z].
    """

    i_idx: np.ndarray  # (E,) int
    j_idx: np.ndarray  # (E,) int
    features: np.ndarray  # (E, 6) float64
    m: int  # node count of character A
    n: int  # node count of character B

    @property
    def edge_count(self) -> int:
        return self.features.shape[0]

    def edge(self, k: int) -> EdgeFeature:
        return EdgeFeature(
            i=int(self.i_idx[k]),
            j=int(self.j_idx[k]),
            rel=self.features[k, :3].copy(),
            mid=self.features[k, 3:].copy(),
        )

    def edges(self) -> list[EdgeFeature]:
        return [self.edge(k) for k in range(self.edge_count)]


def full_graph(pose_a: Pose, pose_b: Pose) -> GraphFeature:
    """All m*n inter-character edges, row-major over (i, j)."""
    pa, pb = pose_a.positions, pose_b.positions
    m, n = pa.shape[0], pb.shape[0]
    rel = pb[None, :, :] - pa[:, None, :]  # (m, n, 3)
    mid = (pb[None, :, :] + pa[:, None, :]) * 0.5
    feats = np.concatenate([rel.reshape(m * n, 3), mid.reshape(m * n, 3)], axis=1)
    ii, jj = np.meshgrid(np.arange(m), np.arange(n), indexing="ij")
    return GraphFeature(ii.reshape(-1), jj.reshape(-1), feats, m, n)


def pair_features(pa: np.ndarray, pb: np.ndarray) -> np.ndarray:
    """(m*n, 6) edge feature matrix straight from position arrays.

    Batched variant of full_graph for hot loops; leading axes broadcast, so
    (..., m, 3) x (..., n, 3) -> (..., m*n, 6).
    """
    m, n = pa.shape[-2], pb.shape[-2]
    rel = pb[..., None, :, :] - pa[..., :, None, :]
    mid = (pb[..., None, :, :] + pa[..., :, None, :]) * 0.5
    lead = rel.shape[:-3]
    return np.concatenate(
        [rel.reshape(*lead, m * n, 3), mid.reshape(*lead, m * n, 3)], axis=-1
    )


def reconstruct_partner(pose_k: Pose, graph: GraphFeature, k: str = "A", tol: float = 1e-6) -> Pose:
    """Recover the partner's pose from one pose and a full graph feature.

    With character A given, every j is determined by p_j = p_i + rel for any
    i; all m candidates must agree, and midpoints must be consistent with the
    recovered positions. Disagreement beyond `tol` raises GraphError.
    """
    if k not in ("A", "B"):
        raise GraphError(f"character selector must be 'A' or 'B', got {k!r}")
    m, n = graph.m, graph.n
    if graph.edge_count != m * n:
        raise GraphError("reconstruction needs the full graph (m*n edges)")
    rel = graph.features[:, :3].reshape(m, n, 3)
    mid = graph.features[:, 3:].reshape(m, n, 3)
    p = pose_k.positions
    if k == "A":
        if p.shape[0] != m:
            raise GraphError(f"pose has {p.shape[0]} nodes, graph side A has {m}")
        candidates = p[:, None, :] + rel  # (m, n, 3), candidate p_j per i
        recovered = candidates.mean(axis=0)
        spread = np.abs(candidates - recovered[None, :, :]).max()
        mid_err = np.abs(mid - (p[:, None, :] + recovered[None, :, :]) * 0.5).max()
    else:
        if p.shape[0] != n:
            raise GraphError(f"pose has {p.shape[0]} nodes, graph side B has {n}")
        candidates = p[None, :, :] - rel  # (m, n, 3), candidate p_i per j
        recovered = candidates.mean(axis=1)
        spread = np.abs(candidates - recovered[:, None, :]).max()
        mid_err = np.abs(mid - (recovered[:, None, :] + p[None, :, :]) * 0.5).max()
    if spread > tol or mid_err > tol:
        raise GraphError(
            f"inconsistent graph feature: spread {spread:.3e}, midpoint error {mid_err:.3e}"
        )
    return Pose(recovered)


def edge_length(phi: np.ndarray) -> np.ndarray | float:
    """Edge length |rel|; phi is (..., 6)."""
    phi = np.asarray(phi)
    out = np.linalg.norm(phi[..., :3], axis=-1)
    return float(out) if out.ndim == 0 else out


def edge_mid_height(phi: np.ndarray) -> np.ndarray | float:
    """Midpoint height (Z component of mid); phi is (..., 6)."""
    phi = np.asarray(phi)
    out = phi[..., 5]
    return float(out) if out.ndim == 0 else out


def edge_rel_xy(phi: np.ndarray) -> np.ndarray:
    """Relative-position XY projection; phi is (..., 6)."""
    return np.asarray(phi)[..., 0:2]


# ---------------------------------------------------------------------------
# Embedded-graph trace files
#
# A trace stores, per frame, the selected edges (node pair plus its feature at
# that frame). Consumers are the transfer reward and the replay tooling.


@dataclass(frozen=True)
class EigTrace:
    """Per-frame selected edges: ids (T, n_bar, 2) and features (T, n_bar, 6)."""

    edge_ids: np.ndarray
    features: np.ndarray
    fps: float
    n_bar: int
    metadata: dict

    @property
    def frame_count(self) -> int:
        return self.edge_ids.shape[0]


def make_trace(
    edge_ids: Iterable, features: Iterable, fps: float, metadata: dict | None = None
) -> EigTrace:
    ids = np.asarray(edge_ids, dtype=int)
    feats = np.asarray(features, dtype=np.float64)
    if ids.ndim != 3 or ids.shape[2] != 2:
        raise GraphError(f"edge ids must be (T, n_bar, 2), got {ids.shape}")
    if feats.shape != (*ids.shape[:2], 6):
        raise GraphError(f"features must be (T, n_bar, 6), got {feats.shape}")
    return EigTrace(ids, feats, float(fps), int(ids.shape[1]), dict(metadata or {}))


def trace_to_dict(trace: EigTrace) -> dict:
    frames = []
    for t in range(trace.frame_count):
        frames.append(
            [
                {
                    "i": int(trace.edge_ids[t, s, 0]),
                    "j": int(trace.edge_ids[t, s, 1]),
                    "rel": [float(v) for v in trace.features[t, s, :3]],
                    "mid": [float(v) for v in trace.features[t, s, 3:]],
                }
                for s in range(trace.n_bar)
            ]
        )
    return {
        "schema_version": EIG_TRACE_SCHEMA_VERSION,
        "fps": trace.fps,
        "metadata": {"n_bar": trace.n_bar, **trace.metadata},
        "frames": frames,
    }


def trace_from_dict(data: dict) -> EigTrace:
    try:
        if data["schema_version"] != EIG_TRACE_SCHEMA_VERSION:
            raise GraphError(f"unsupported trace schema_version {data['schema_version']}")
        frames = data["frames"]
        ids = np.array([[[e["i"], e["j"]] for e in fr] for fr in frames], dtype=int)
        feats = np.array([[e["rel"] + e["mid"] for e in fr] for fr in frames], dtype=np.float64)
        md = dict(data.get("metadata", {}))
        md.pop("n_bar", None)
        if ids.size == 0:
            raise GraphError("trace has no frames")
        return make_trace(ids, feats, data["fps"], md)
    except (KeyError, TypeError) as exc:
        raise GraphError(f"malformed trace file: {exc}") from exc


def save_trace(trace: EigTrace, path: str | Path, provenance: dict | None = None):
    doc = trace_to_dict(trace)
    if provenance is not None:
        doc["provenance"] = provenance
    Path(path).write_text(json.dumps(doc, sort_keys=True) + "\n")


def load_trace(path: str | Path) -> EigTrace:
    return trace_from_dict(json.loads(Path(path).read_text()))
