"""Character morphology: kinematic trees, forward kinematics, neutral-pose helpers.

A Skeleton is an ordered list of joints forming a tree. Each joint owns one
node; node positions in the world frame are what the rest of the pipeline
consumes. Conventions: Z is up, lengths are meters, angles are radians.

The root joint of every simulated character is a planar-free root carrying
(x, y, yaw) coordinates plus a fixed offset; vertical root motion, where an
embodiment needs it, comes from an explicit prismatic joint in the chain.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

ASSET_SCHEMA_VERSION = 1

BUNDLED_ASSETS = ("humanoid22", "quadarm", "wheelarm")


class SkeletonError(ValueError):
    """Raised for malformed skeletons, poses, or coordinate vectors."""


class JointKind(str, Enum):
    FIXED = "fixed"
    REVOLUTE = "revolute"
    PRISMATIC = "prismatic"
    BALL = "ball"
    PLANAR_FREE_ROOT = "planar-free-root"


# Degrees of freedom per joint kind. Ball joints use a rotation-vector
# parameterization; the planar root is (x, y, yaw).
_DOF = {
    JointKind.FIXED: 0,
    JointKind.REVOLUTE: 1,
    JointKind.PRISMATIC: 1,
    JointKind.BALL: 3,
    JointKind.PLANAR_FREE_ROOT: 3,
}


@dataclass(frozen=True)
class JointSpec:
    """One joint / one node of the kinematic tree.

    Attributes:
        name: joint name, unique within a skeleton
        parent: parent node index, or None for the root
        kind: joint kind (see JointKind)
        offset: position in the parent frame at zero coordinates, meters
        axis: unit rotation/translation axis (revolute and prismatic only)
        limits: (lo, hi) per degree of freedom, radians or meters
    """

    name: str
    parent: Optional[int]
    kind: JointKind
    offset: tuple[float, float, float]
    axis: Optional[tuple[float, float, float]] = None
    limits: tuple[tuple[float, float], ...] = ()

    def dof(self) -> int:
        return _DOF[self.kind]


@dataclass(frozen=True)
class Skeleton:
    """A kinematic tree plus the metadata the pipeline needs.

    Attributes:
        joints: ordered joint list; index in this list is the node index
        end_effectors: node indices used for correspondence (must be leaves)
        norm_length: morphology scale used to normalize lengths and heights
        heading_pair: optional (a, b) node pair whose lateral axis defines the
            character's heading yaw; None means heading is always zero
        name: asset identifier, carried through serialized artifacts
    """

    joints: tuple[JointSpec, ...]
    end_effectors: tuple[int, ...]
    norm_length: float
    heading_pair: Optional[tuple[int, int]] = None
    name: str = "skeleton"

    def __post_init__(self):
        _validate_tree(self.joints)
        if self.norm_length <= 0:
            raise SkeletonError(f"norm_length must be positive, got {self.norm_length}")
        children = self.child_table()
        for ee in self.end_effectors:
            if not 0 <= ee < len(self.joints):
                raise SkeletonError(f"end effector index {ee} out of range")
            if children[ee]:
                raise SkeletonError(f"end effector {self.joints[ee].name} is not a leaf")
        if self.heading_pair is not None:
            a, b = self.heading_pair
            if not (0 <= a < len(self.joints) and 0 <= b < len(self.joints)):
                raise SkeletonError(f"heading pair {self.heading_pair} out of range")

    @property
    def node_count(self) -> int:
        return len(self.joints)

    @property
    def root_index(self) -> int:
        return next(i for i, j in enumerate(self.joints) if j.parent is None)

    @property
    def dof_count(self) -> int:
        return sum(j.dof() for j in self.joints)

    def dof_layout(self) -> list[tuple[int, int]]:
        """Per-node (start, stop) slice into the flat coordinate vector."""
        layout, cursor = [], 0
        for j in self.joints:
            layout.append((cursor, cursor + j.dof()))
            cursor += j.dof()
        return layout

    def child_table(self) -> list[list[int]]:
        children: list[list[int]] = [[] for _ in self.joints]
        for i, j in enumerate(self.joints):
            if j.parent is not None:
                children[j.parent].append(i)
        return children

    def limits_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """(lo, hi) arrays over the flat coordinate vector."""
        lo = np.full(self.dof_count, -np.inf)
        hi = np.full(self.dof_count, np.inf)
        for j, (a, b) in zip(self.joints, self.dof_layout()):
            for k, lim in enumerate(j.limits):
                lo[a + k], hi[a + k] = lim
        return lo, hi

    def chain_to_root(self, node: int) -> list[int]:
        """Node indices from `node` up to and including the root."""
        chain = [node]
        while self.joints[chain[-1]].parent is not None:
            chain.append(self.joints[chain[-1]].parent)
        return chain

    def zero_coords(self) -> "GeneralizedCoords":
        return GeneralizedCoords(np.zeros(self.dof_count))

    def neutral_pose(self) -> "Pose":
        return forward_kinematics(self, self.zero_coords())


@dataclass(frozen=True)
class Pose:
    """World-frame 3D positions, one per skeleton node."""

    positions: np.ndarray  # (n, 3) float64

    def __post_init__(self):
        p = np.asarray(self.positions, dtype=np.float64)
        if p.ndim != 2 or p.shape[1] != 3:
            raise SkeletonError(f"pose positions must be (n, 3), got {p.shape}")
        if not np.all(np.isfinite(p)):
            raise SkeletonError("pose contains non-finite positions")
        object.__setattr__(self, "positions", p)

    @property
    def node_count(self) -> int:
        return self.positions.shape[0]


@dataclass(frozen=True)
class GeneralizedCoords:
    """Flat coordinate vector matching a skeleton's dof layout."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64).reshape(-1)
        object.__setattr__(self, "values", v)

    def within_limits(self, skel: Skeleton, tol: float = 1e-9) -> bool:
        lo, hi = skel.limits_arrays()
        return bool(np.all(self.values >= lo - tol) and np.all(self.values <= hi + tol))


def _validate_tree(joints: Sequence[JointSpec]):
    roots = [i for i, j in enumerate(joints) if j.parent is None]
    if len(roots) != 1:
        raise SkeletonError(f"skeleton must have exactly one root, found {len(roots)}")
    names = [j.name for j in joints]
    if len(set(names)) != len(names):
        raise SkeletonError("duplicate joint names")
    for i, j in enumerate(joints):
        if j.parent is not None:
            if not 0 <= j.parent < len(joints):
                raise SkeletonError(f"joint {j.name}: parent index {j.parent} out of range")
            if j.parent >= i:
                raise SkeletonError(
                    f"joint {j.name}: parents must precede children (parent {j.parent} >= {i})"
                )
        if j.kind in (JointKind.REVOLUTE, JointKind.PRISMATIC):
            if j.axis is None:
                raise SkeletonError(f"joint {j.name}: {j.kind.value} joint needs an axis")
            norm = math.sqrt(sum(a * a for a in j.axis))
            if abs(norm - 1.0) > 1e-9:
                raise SkeletonError(f"joint {j.name}: axis must have unit norm, got {norm}")
        if len(j.limits) != j.dof():
            raise SkeletonError(
                f"joint {j.name}: expected {j.dof()} limit pairs, got {len(j.limits)}"
            )
        for lo, hi in j.limits:
            if lo > hi:
                raise SkeletonError(f"joint {j.name}: limit lo {lo} > hi {hi}")


def rotvec_to_matrix(v: np.ndarray) -> np.ndarray:
    """Rotation matrix from a rotation vector (axis * angle), Rodrigues form."""
    angle = float(np.linalg.norm(v))
    if angle < 1e-12:
        return np.eye(3)
    axis = v / angle
    return axis_angle_matrix(axis, angle)


def axis_angle_matrix(axis: np.ndarray, angle: float) -> np.ndarray:
    x, y, z = axis
    c, s = math.cos(angle), math.sin(angle)
    t = 1.0 - c
    return np.array(
        [
            [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
            [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
            [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
        ]
    )


def yaw_matrix(yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _joint_motion(j: JointSpec, q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(rotation, translation) of the joint frame produced by coordinates q."""
    if j.kind == JointKind.FIXED:
        return np.eye(3), np.zeros(3)
    if j.kind == JointKind.REVOLUTE:
        return axis_angle_matrix(np.asarray(j.axis), float(q[0])), np.zeros(3)
    if j.kind == JointKind.PRISMATIC:
        return np.eye(3), float(q[0]) * np.asarray(j.axis)
    if j.kind == JointKind.BALL:
        return rotvec_to_matrix(q), np.zeros(3)
    if j.kind == JointKind.PLANAR_FREE_ROOT:
        return yaw_matrix(float(q[2])), np.array([q[0], q[1], 0.0])
    raise SkeletonError(f"unknown joint kind {j.kind}")


def fk_with_frames(skel: Skeleton, coords: GeneralizedCoords) -> tuple[np.ndarray, np.ndarray]:
    """Positions (n, 3) and world rotations (n, 3, 3) of every joint frame.

    Frames compose parent-to-child: each joint contributes a fixed offset in
    its parent frame followed by its own motion. A node sits at the origin of
    its joint frame after the motion is applied.
    """
    q = coords.values
    if q.shape[0] != skel.dof_count:
        raise SkeletonError(
            f"coordinate vector has {q.shape[0]} values, skeleton expects {skel.dof_count}"
        )
    layout = skel.dof_layout()
    rots = np.zeros((skel.node_count, 3, 3))
    pos = np.zeros((skel.node_count, 3))
    for i, j in enumerate(skel.joints):
        a, b = layout[i]
        mot_r, mot_t = _joint_motion(j, q[a:b])
        if j.parent is None:
            # Planar root: translate by (offset + x, y), then yaw about Z.
            rots[i] = mot_r
            pos[i] = np.asarray(j.offset) + mot_t
        else:
            pr, pp = rots[j.parent], pos[j.parent]
            anchor = pp + pr @ np.asarray(j.offset)
            rots[i] = pr @ mot_r
            pos[i] = anchor + pr @ mot_t
    return pos, rots


def forward_kinematics(skel: Skeleton, coords: GeneralizedCoords) -> Pose:
    """World positions of every node for the given coordinate vector."""
    pos, _ = fk_with_frames(skel, coords)
    return Pose(pos)


def end_effector_vectors(skel: Skeleton, neutral: Pose) -> list[tuple[int, np.ndarray]]:
    """Root-to-end-effector vectors in the given neutral pose."""
    if not skel.end_effectors:
        raise SkeletonError(f"skeleton {skel.name} has no end effectors")
    if neutral.node_count != skel.node_count:
        raise SkeletonError("neutral pose node count does not match skeleton")
    root = neutral.positions[skel.root_index]
    return [(ee, neutral.positions[ee] - root) for ee in skel.end_effectors]


def default_norm_length(skel: Skeleton, neutral: Pose) -> float:
    """Sum of parent-child bone lengths in the neutral pose.

    Used as the normalization scale when an asset does not pin one explicitly.
    Invariant to root translation and rotation.
    """
    if neutral.node_count != skel.node_count:
        raise SkeletonError("neutral pose node count does not match skeleton")
    total = 0.0
    for i, j in enumerate(skel.joints):
        if j.parent is not None:
            total += float(np.linalg.norm(neutral.positions[i] - neutral.positions[j.parent]))
    return total


def heading_yaw(skel: Skeleton, positions: np.ndarray) -> float:
    """Heading angle derived from the skeleton's lateral node pair.

    The facing direction is up x lateral; returns 0 when no pair is declared
    or the lateral axis is vertical.
    """
    if skel.heading_pair is None:
        return 0.0
    a, b = skel.heading_pair
    lat = positions[b] - positions[a]
    fx, fy = -lat[1], lat[0]  # cross((0,0,1), lat) projected to XY
    if fx * fx + fy * fy < 1e-16:
        return 0.0
    return math.atan2(fy, fx)


# ---------------------------------------------------------------------------
# Asset files


def skeleton_to_dict(skel: Skeleton) -> dict:
    return {
        "schema_version": ASSET_SCHEMA_VERSION,
        "name": skel.name,
        "joints": [
            {
                "name": j.name,
                "parent": j.parent,
                "kind": j.kind.value,
                "offset": list(j.offset),
                **({"axis": list(j.axis)} if j.axis is not None else {}),
                "limits": [list(l) for l in j.limits],
            }
            for j in skel.joints
        ],
        "end_effectors": list(skel.end_effectors),
        "norm_length": skel.norm_length,
        **({"heading_pair": list(skel.heading_pair)} if skel.heading_pair else {}),
    }


def skeleton_from_dict(data: dict) -> Skeleton:
    try:
        version = data["schema_version"]
        if version != ASSET_SCHEMA_VERSION:
            raise SkeletonError(f"unsupported skeleton schema_version {version}")
        joints = tuple(
            JointSpec(
                name=j["name"],
                parent=j["parent"],
                kind=JointKind(j["kind"]),
                offset=tuple(j["offset"]),
                axis=tuple(j["axis"]) if "axis" in j else None,
                limits=tuple(tuple(l) for l in j.get("limits", [])),
            )
            for j in data["joints"]
        )
        skel = Skeleton(
            joints=joints,
            end_effectors=tuple(data["end_effectors"]),
            norm_length=float(data["norm_length"]) if data.get("norm_length") else _BOOTSTRAP,
            heading_pair=tuple(data["heading_pair"]) if "heading_pair" in data else None,
            name=data.get("name", "skeleton"),
        )
    except (KeyError, TypeError) as exc:
        raise SkeletonError(f"malformed skeleton asset: {exc}") from exc
    if skel.norm_length == _BOOTSTRAP:
        neutral = skel.neutral_pose()
        skel = Skeleton(
            joints=skel.joints,
            end_effectors=skel.end_effectors,
            norm_length=default_norm_length(skel, neutral),
            heading_pair=skel.heading_pair,
            name=skel.name,
        )
    return skel


_BOOTSTRAP = 1.0  # placeholder replaced by default_norm_length when unset


def load_skeleton(source: str | Path) -> Skeleton:
    """Load a skeleton from a bundled asset name or a file path."""
    name = str(source)
    if name in BUNDLED_ASSETS:
        text = resources.files("buddy.assets").joinpath(f"{name}.json").read_text()
    else:
        path = Path(source)
        if not path.exists():
            raise SkeletonError(
                f"unknown skeleton {source!r}: not a bundled asset {BUNDLED_ASSETS} or a file"
            )
        text = path.read_text()
    return skeleton_from_dict(json.loads(text))


def save_skeleton(skel: Skeleton, path: str | Path):
    Path(path).write_text(json.dumps(skeleton_to_dict(skel), indent=2, sort_keys=True) + "\n")
