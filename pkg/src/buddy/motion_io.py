"""Demonstration motion ingest and generation.

Three sources of two-character position trajectories feed the pipeline:
a BVH subset (single character per file), a JSON trajectory format, and
scripted synthetic interactions between two bundled humanoids. Everything
downstream consumes world-frame positions sampled at a fixed rate.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .skeleton import (
    GeneralizedCoords,
    JointKind,
    JointSpec,
    Pose,
    Skeleton,
    fk_with_frames,
    load_skeleton,
    yaw_matrix,
)

TRAJECTORY_SCHEMA_VERSION = 1

DEMO_KINDS = ("handshake", "circling", "sparring_lite", "rps")


class MotionIoError(ValueError):
    """Schema or contract violation in motion data."""


class BvhParseError(MotionIoError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class CharacterTrack:
    """One character's positions over time: (T, nodes, 3), world frame."""

    skeleton_id: str
    positions: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.positions, dtype=np.float64)
        if p.ndim != 3 or p.shape[2] != 3:
            raise MotionIoError(f"positions must be (T, n, 3), got {p.shape}")
        object.__setattr__(self, "positions", p)


@dataclass(frozen=True)
class Trajectory:
    """Frames for K characters at a fixed rate; K = 2 for demonstrations."""

    fps: float
    characters: tuple[CharacterTrack, ...]

    def __post_init__(self):
        if self.fps <= 0:
            raise MotionIoError(f"fps must be positive, got {self.fps}")
        if not self.characters:
            raise MotionIoError("empty trajectory")
        counts = {c.positions.shape[0] for c in self.characters}
        if len(counts) != 1:
            raise MotionIoError(f"characters disagree on frame count: {sorted(counts)}")
        if next(iter(counts)) == 0:
            raise MotionIoError("empty trajectory")
        for k, c in enumerate(self.characters):
            if not np.all(np.isfinite(c.positions)):
                raise MotionIoError(f"characters[{k}]: non-finite positions")

    @property
    def frame_count(self) -> int:
        return self.characters[0].positions.shape[0]

    @property
    def character_count(self) -> int:
        return len(self.characters)

    @property
    def duration_s(self) -> float:
        return (self.frame_count - 1) / self.fps

    def pose(self, k: int, t: int) -> Pose:
        return Pose(self.characters[k].positions[t])


# ---------------------------------------------------------------------------
# JSON trajectory files


def trajectory_to_dict(traj: Trajectory, provenance: dict | None = None) -> dict:
    doc = {
        "schema_version": TRAJECTORY_SCHEMA_VERSION,
        "fps": traj.fps,
        "characters": [
            {"skeleton": c.skeleton_id, "frames": c.positions.tolist()}
            for c in traj.characters
        ],
    }
    if provenance is not None:
        doc["provenance"] = provenance
    return doc


def trajectory_from_dict(doc: dict) -> Trajectory:
    def fail(path, msg):
        raise MotionIoError(f"{path}: {msg}")

    if not isinstance(doc, dict):
        fail("$", "expected an object")
    version = doc.get("schema_version")
    if version != TRAJECTORY_SCHEMA_VERSION:
        fail("schema_version", f"unsupported value {version!r}")
    fps = doc.get("fps")
    if not isinstance(fps, (int, float)) or fps <= 0:
        fail("fps", f"expected a positive number, got {fps!r}")
    chars = doc.get("characters")
    if not isinstance(chars, list) or not chars:
        fail("characters", "expected a non-empty list")
    tracks = []
    for k, c in enumerate(chars):
        if not isinstance(c, dict) or "skeleton" not in c or "frames" not in c:
            fail(f"characters[{k}]", "expected an object with 'skeleton' and 'frames'")
        frames = c["frames"]
        if not isinstance(frames, list) or not frames:
            fail(f"characters[{k}].frames", "empty trajectory")
        node_count = None
        for t, frame in enumerate(frames):
            if not isinstance(frame, list):
                fail(f"characters[{k}].frames[{t}]", "expected a list of points")
            if node_count is None:
                node_count = len(frame)
            elif len(frame) != node_count:
                fail(f"characters[{k}].frames[{t}]", f"expected {node_count} points, got {len(frame)}")
            for p_idx, point in enumerate(frame):
                if not (isinstance(point, list) and len(point) == 3
                        and all(isinstance(v, (int, float)) for v in point)):
                    fail(f"characters[{k}].frames[{t}][{p_idx}]", "expected [x, y, z] numbers")
        tracks.append(CharacterTrack(skeleton_id=str(c["skeleton"]),
                                     positions=np.array(frames, dtype=np.float64)))
    try:
        return Trajectory(fps=float(fps), characters=tuple(tracks))
    except MotionIoError as exc:
        raise MotionIoError(f"$: {exc}") from exc


def save_trajectory_json(traj: Trajectory, provenance: dict | None = None) -> bytes:
    """Serialize with full round-trip precision (shortest exact decimal repr)."""
    return (json.dumps(trajectory_to_dict(traj, provenance), sort_keys=True) + "\n").encode()


def load_trajectory_json(data: bytes) -> Trajectory:
    try:
        doc = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MotionIoError(f"$: not valid JSON ({exc})") from exc
    return trajectory_from_dict(doc)


# ---------------------------------------------------------------------------
# Resampling


def resample(traj: Trajectory, target_fps: float) -> Trajectory:
    """Per-node linear interpolation onto a uniform grid at target_fps.

    First and last frames are preserved exactly; source-aligned samples are
    copied rather than recomputed.
    """
    if target_fps <= 0:
        raise MotionIoError(f"target fps must be positive, got {target_fps}")
    src = traj.frame_count
    if src == 1 or target_fps == traj.fps:
        scale = 1.0 if src == 1 else target_fps / traj.fps
        if scale == 1.0:
            return Trajectory(fps=target_fps, characters=traj.characters)
    duration = (src - 1) / traj.fps
    count = int(round(duration * target_fps)) + 1
    out_tracks = []
    for c in traj.characters:
        pos = c.positions
        new = np.empty((count, *pos.shape[1:]))
        for idx in range(count):
            s = idx * traj.fps / target_fps  # source frame position
            lo = min(int(math.floor(s)), src - 1)
            w = s - lo
            if w < 1e-9 or lo == src - 1:
                new[idx] = pos[lo]
            elif w > 1 - 1e-9:
                new[idx] = pos[lo + 1]
            else:
                new[idx] = (1 - w) * pos[lo] + w * pos[lo + 1]
        new[0] = pos[0]
        new[-1] = pos[-1]
        out_tracks.append(CharacterTrack(c.skeleton_id, new))
    return Trajectory(fps=target_fps, characters=tuple(out_tracks))


# ---------------------------------------------------------------------------
# BVH subset
#
# Supported: HIERARCHY with OFFSET/CHANNELS/End Site, rotation orders ZXY and
# XYZ, a single Xposition/Yposition/Zposition triple on the root, MOTION with
# Frames/Frame Time. Anything else is an explicit unsupported-feature error.

_ROT_ORDERS = {
    ("Zrotation", "Xrotation", "Yrotation"): "ZXY",
    ("Xrotation", "Yrotation", "Zrotation"): "XYZ",
}

_AXIS_ROT = {
    "X": lambda a: np.array([[1, 0, 0], [0, math.cos(a), -math.sin(a)], [0, math.sin(a), math.cos(a)]]),
    "Y": lambda a: np.array([[math.cos(a), 0, math.sin(a)], [0, 1, 0], [-math.sin(a), 0, math.cos(a)]]),
    "Z": lambda a: np.array([[math.cos(a), -math.sin(a), 0], [math.sin(a), math.cos(a), 0], [0, 0, 1]]),
}


@dataclass
class _BvhNode:
    name: str
    parent: Optional[int]
    offset: np.ndarray
    has_position: bool = False
    rot_order: Optional[str] = None


class _Lines:
    def __init__(self, data: bytes):
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError:
            text = data.decode("latin-1")
        self.lines = text.splitlines()
        self.pos = 0

    @property
    def line_no(self) -> int:
        return self.pos  # 1-based number of the last consumed line

    def next_tokens(self) -> list[str]:
        while self.pos < len(self.lines):
            toks = self.lines[self.pos].split()
            self.pos += 1
            if toks:
                return toks
        raise BvhParseError("unexpected end of file", self.pos)

    def peek_tokens(self) -> list[str] | None:
        save = self.pos
        try:
            toks = self.next_tokens()
        except BvhParseError:
            return None
        self.pos = save
        return toks


def parse_bvh(data: bytes) -> tuple[Skeleton, Trajectory]:
    """Parse the supported BVH subset into a skeleton and a position track.

    The returned skeleton is a geometric descriptor (tree, offsets, leaves);
    its joints are typed ball/fixed with wide limits because BVH carries no
    actuation semantics. Positions come from the file's own Euler kinematics.
    """
    lines = _Lines(data)
    toks = lines.next_tokens()
    if toks != ["HIERARCHY"]:
        raise BvhParseError(f"expected HIERARCHY, got {' '.join(toks)}", lines.line_no)
    nodes: list[_BvhNode] = []
    channel_owner: list[int] = []  # node index per motion column

    def parse_joint(parent: Optional[int], header: list[str]):
        if header[0] == "End" and len(header) >= 2 and header[1] == "Site":
            name = f"{nodes[parent].name}_end" if parent is not None else "end"
            is_end = True
        elif header[0] in ("ROOT", "JOINT") and len(header) >= 2:
            name = header[1]
            is_end = False
        else:
            raise BvhParseError(f"expected ROOT/JOINT/End Site, got {' '.join(header)}", lines.line_no)
        if lines.next_tokens() != ["{"]:
            raise BvhParseError("expected '{'", lines.line_no)
        toks = lines.next_tokens()
        if toks[0] != "OFFSET" or len(toks) != 4:
            raise BvhParseError(f"expected OFFSET x y z, got {' '.join(toks)}", lines.line_no)
        try:
            offset = np.array([float(v) for v in toks[1:]])
        except ValueError:
            raise BvhParseError(f"bad OFFSET values {' '.join(toks[1:])}", lines.line_no)
        node = _BvhNode(name=name, parent=parent, offset=offset)
        nodes.append(node)
        me = len(nodes) - 1
        toks = lines.next_tokens()
        if toks[0] == "CHANNELS":
            if is_end:
                raise BvhParseError("End Site cannot have channels", lines.line_no)
            try:
                n_ch = int(toks[1])
            except (IndexError, ValueError):
                raise BvhParseError("bad CHANNELS count", lines.line_no)
            names = toks[2:]
            if len(names) != n_ch:
                raise BvhParseError(f"CHANNELS lists {len(names)} names for count {n_ch}", lines.line_no)
            if n_ch == 6:
                if names[:3] != ["Xposition", "Yposition", "Zposition"]:
                    raise BvhParseError(
                        f"unsupported channel layout {' '.join(names)} "
                        "(only Xposition Yposition Zposition + rotations)", lines.line_no)
                node.has_position = True
                rot = tuple(names[3:])
            elif n_ch == 3:
                rot = tuple(names)
            else:
                raise BvhParseError(f"unsupported channel count {n_ch}", lines.line_no)
            if rot not in _ROT_ORDERS:
                raise BvhParseError(f"unsupported rotation order {' '.join(rot)}", lines.line_no)
            node.rot_order = _ROT_ORDERS[rot]
            channel_owner.extend([me] * n_ch)
            toks = lines.next_tokens()
        elif not is_end:
            raise BvhParseError("joint without CHANNELS", lines.line_no)
        while toks != ["}"]:
            parse_joint(me, toks)
            toks = lines.next_tokens()

    header = lines.next_tokens()
    if header[0] != "ROOT":
        raise BvhParseError(f"expected ROOT, got {' '.join(header)}", lines.line_no)
    parse_joint(None, header)
    if not nodes[0].has_position:
        raise BvhParseError("root must carry position channels", lines.line_no)

    toks = lines.next_tokens()
    if toks != ["MOTION"]:
        raise BvhParseError(f"expected MOTION, got {' '.join(toks)}", lines.line_no)
    toks = lines.next_tokens()
    if toks[0] != "Frames:" or len(toks) != 2:
        raise BvhParseError("expected 'Frames: N'", lines.line_no)
    try:
        n_frames = int(toks[1])
    except ValueError:
        raise BvhParseError(f"bad frame count {toks[1]}", lines.line_no)
    if n_frames < 1:
        raise BvhParseError(f"frame count must be >= 1, got {n_frames}", lines.line_no)
    toks = lines.next_tokens()
    if toks[:2] != ["Frame", "Time:"] or len(toks) != 3:
        raise BvhParseError("expected 'Frame Time: dt'", lines.line_no)
    try:
        dt = float(toks[2])
    except ValueError:
        raise BvhParseError(f"bad frame time {toks[2]}", lines.line_no)
    if dt <= 0:
        raise BvhParseError(f"frame time must be positive, got {dt}", lines.line_no)

    rows = np.empty((n_frames, len(channel_owner)))
    for f in range(n_frames):
        toks = lines.next_tokens()
        if len(toks) != len(channel_owner):
            raise BvhParseError(
                f"frame {f}: expected {len(channel_owner)} values, got {len(toks)}", lines.line_no)
        try:
            rows[f] = [float(v) for v in toks]
        except ValueError:
            raise BvhParseError(f"frame {f}: non-numeric value", lines.line_no)
    if lines.peek_tokens() is not None:
        raise BvhParseError("trailing content after motion data", lines.line_no + 1)

    # Column slicing per node, in declaration order.
    col_of: dict[int, int] = {}
    c = 0
    while c < len(channel_owner):
        owner = channel_owner[c]
        col_of[owner] = c
        c += 6 if nodes[owner].has_position else 3

    positions = np.empty((n_frames, len(nodes), 3))
    for f in range(n_frames):
        rots = [np.eye(3)] * len(nodes)
        for idx, node in enumerate(nodes):
            if node.rot_order is not None:
                base = col_of[idx] + (3 if node.has_position else 0)
                angles = np.deg2rad(rows[f, base : base + 3])
                r = np.eye(3)
                for axis_char, ang in zip(node.rot_order, angles):
                    r = r @ _AXIS_ROT[axis_char](ang)
            else:
                r = np.eye(3)
            if node.parent is None:
                trans = node.offset + rows[f, col_of[idx] : col_of[idx] + 3]
                rots[idx] = r
                positions[f, idx] = trans
            else:
                p_rot = rots[node.parent]
                anchor = positions[f, node.parent] + p_rot @ node.offset
                rots[idx] = p_rot @ r
                positions[f, idx] = anchor

    wide = ((-1e6, 1e6), (-1e6, 1e6), (-12.6, 12.6))
    ball = ((-math.tau, math.tau),) * 3
    joints = []
    for idx, node in enumerate(nodes):
        if node.parent is None:
            joints.append(JointSpec(node.name, None, JointKind.PLANAR_FREE_ROOT,
                                    tuple(node.offset), limits=wide))
        elif node.rot_order is not None:
            joints.append(JointSpec(node.name, node.parent, JointKind.BALL,
                                    tuple(node.offset), limits=ball))
        else:
            joints.append(JointSpec(node.name, node.parent, JointKind.FIXED, tuple(node.offset)))
    children = [False] * len(nodes)
    for nd in nodes:
        if nd.parent is not None:
            children[nd.parent] = True
    leaves = tuple(i for i, has in enumerate(children) if not has)
    skel = Skeleton(joints=tuple(joints), end_effectors=leaves, norm_length=1.0, name="bvh")
    # Recompute the scale from the parsed geometry.
    from .skeleton import default_norm_length

    neutral = Pose(positions[0])
    skel = Skeleton(joints=skel.joints, end_effectors=skel.end_effectors,
                    norm_length=max(default_norm_length(skel, neutral), 1e-6), name="bvh")
    track = CharacterTrack(skeleton_id="bvh", positions=positions)
    return skel, Trajectory(fps=1.0 / dt, characters=(track,))


def write_bvh(skel: Skeleton, coord_track: np.ndarray, fps: float) -> bytes:
    """Emit the supported BVH subset from a coordinate track.

    Works for skeletons whose revolute axes are principal (X, Y or Z) and that
    contain no prismatic joints; the bundled humanoid qualifies.
    """
    coords = np.asarray(coord_track, dtype=np.float64)
    if coords.ndim != 2 or coords.shape[1] != skel.dof_count:
        raise MotionIoError(f"coord track must be (T, {skel.dof_count}), got {coords.shape}")
    layout = skel.dof_layout()
    for j in skel.joints:
        if j.kind == JointKind.PRISMATIC:
            raise MotionIoError("BVH export does not support prismatic joints")
        if j.kind == JointKind.REVOLUTE:
            axis = np.abs(np.asarray(j.axis))
            if not np.isclose(axis.max(), 1.0):
                raise MotionIoError(f"joint {j.name}: BVH export needs a principal revolute axis")

    children = skel.child_table()
    out: list[str] = ["HIERARCHY"]

    def emit(idx: int, depth: int):
        j = skel.joints[idx]
        pad = "  " * depth
        if j.parent is None:
            out.append(f"{pad}ROOT {j.name}")
        elif not children[idx] and j.kind == JointKind.FIXED:
            out.append(f"{pad}End Site")
            out.append(f"{pad}{{")
            out.append(f"{pad}  OFFSET {j.offset[0]:.8f} {j.offset[1]:.8f} {j.offset[2]:.8f}")
            out.append(f"{pad}}}")
            return
        else:
            out.append(f"{pad}JOINT {j.name}")
        out.append(f"{pad}{{")
        out.append(f"{pad}  OFFSET {j.offset[0]:.8f} {j.offset[1]:.8f} {j.offset[2]:.8f}")
        if j.parent is None:
            out.append(f"{pad}  CHANNELS 6 Xposition Yposition Zposition Zrotation Xrotation Yrotation")
        else:
            out.append(f"{pad}  CHANNELS 3 Zrotation Xrotation Yrotation")
        for c in children[idx]:
            emit(c, depth + 1)
        out.append(f"{pad}}}")

    root = skel.root_index
    emit(root, 0)

    def euler_zxy(r: np.ndarray) -> tuple[float, float, float]:
        sb = float(np.clip(r[2, 1], -1.0, 1.0))
        b = math.asin(sb)
        if abs(sb) > 1.0 - 1e-9:
            return math.atan2(r[1, 0], r[0, 0]), b, 0.0
        return math.atan2(-r[0, 1], r[1, 1]), b, math.atan2(-r[2, 0], r[2, 2])

    rows = []
    from .skeleton import axis_angle_matrix, rotvec_to_matrix

    for q in coords:
        vals: list[float] = []
        for idx, j in enumerate(skel.joints):
            a, b = layout[idx]
            if j.kind == JointKind.PLANAR_FREE_ROOT:
                vals.extend([q[a], q[a + 1], 0.0, math.degrees(q[a + 2]), 0.0, 0.0])
            elif j.kind == JointKind.BALL:
                za, xa, ya = euler_zxy(rotvec_to_matrix(q[a:b]))
                vals.extend([math.degrees(za), math.degrees(xa), math.degrees(ya)])
            elif j.kind == JointKind.REVOLUTE:
                za, xa, ya = euler_zxy(axis_angle_matrix(np.asarray(j.axis), q[a]))
                vals.extend([math.degrees(za), math.degrees(xa), math.degrees(ya)])
            elif j.kind == JointKind.FIXED and children[idx]:
                vals.extend([0.0, 0.0, 0.0])
        rows.append(" ".join(f"{v:.10f}" for v in vals))

    out.append("MOTION")
    out.append(f"Frames: {coords.shape[0]}")
    out.append(f"Frame Time: {1.0 / fps:.8f}")
    out.extend(rows)
    return ("\n".join(out) + "\n").encode()


# ---------------------------------------------------------------------------
# Synthetic two-character demonstrations


def _smoothstep(x: float) -> float:
    x = min(max(x, 0.0), 1.0)
    return x * x * (3.0 - 2.0 * x)


class _KnotSignal:
    """Band-limited random scalar signal: values drawn at regular knots,
    smoothstep-interpolated between them (C1, zero slope at each knot).

    This is the hidden "intent" driving an interaction: unpredictable from a
    single character's instantaneous state, but readable from whoever already
    expresses it.
    """

    def __init__(self, rng: np.random.Generator, duration_s: float, knot_dt: float,
                 lo: float, hi: float):
        count = int(duration_s / knot_dt) + 3
        self.values = rng.uniform(lo, hi, size=count)
        self.knot_dt = knot_dt

    def __call__(self, t: float) -> float:
        s = max(t, 0.0) / self.knot_dt
        i = min(int(s), len(self.values) - 2)
        return self.values[i] + (self.values[i + 1] - self.values[i]) * _smoothstep(s - i)


def _minimal_rotvec(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Rotation vector of the minimal rotation taking src to dst (unit-free)."""
    a = src / np.linalg.norm(src)
    b = dst / np.linalg.norm(dst)
    cross = np.cross(a, b)
    s, c = np.linalg.norm(cross), float(np.dot(a, b))
    if s < 1e-12:
        if c > 0:
            return np.zeros(3)
        # Antiparallel: pick any perpendicular axis.
        perp = np.cross(a, [1.0, 0.0, 0.0])
        if np.linalg.norm(perp) < 1e-9:
            perp = np.cross(a, [0.0, 1.0, 0.0])
        return perp / np.linalg.norm(perp) * math.pi
    return cross / s * math.atan2(s, c)


class _HumanoidRig:
    """Coordinate-space puppeteering of the bundled humanoid.

    Exposes named coordinate slots and an exact two-link arm solver so the
    demo scripts can place wrists at world targets.
    """

    def __init__(self):
        self.skel = load_skeleton("humanoid22")
        layout = self.skel.dof_layout()
        names = {j.name: i for i, j in enumerate(self.skel.joints)}
        self.slot = {name: layout[idx] for name, idx in names.items()}
        self.node = names
        self.arm = {}
        for side in ("l", "r"):
            sh = self.skel.joints[names[f"{side}_shoulder"]]
            el = self.skel.joints[names[f"{side}_elbow"]]
            wr = self.skel.joints[names[f"{side}_wrist"]]
            self.arm[side] = {
                "u0": np.asarray(el.offset) / np.linalg.norm(el.offset),
                "f0": np.asarray(wr.offset) / np.linalg.norm(wr.offset),
                "a": float(np.linalg.norm(el.offset)),
                "b": float(np.linalg.norm(wr.offset)),
                "sign": -1.0 if side == "l" else 1.0,
            }

    def set(self, q: np.ndarray, name: str, values):
        a, b = self.slot[name]
        q[a:b] = values

    def solve_arm(self, q: np.ndarray, side: str, target: np.ndarray):
        """Set shoulder (ball) and elbow (hinge) coords so the wrist hits target.

        Unreachable targets are clamped to the reachable sphere shell.
        """
        pos, rots = fk_with_frames(self.skel, GeneralizedCoords(q))
        sh_idx = self.node[f"{side}_shoulder"]
        parent = self.skel.joints[sh_idx].parent
        r_parent = rots[parent]
        s = pos[sh_idx]
        arm = self.arm[side]
        local = r_parent.T @ (np.asarray(target) - s)
        a, b = arm["a"], arm["b"]
        r = float(np.linalg.norm(local))
        r = min(max(r, abs(a - b) + 1e-4), a + b - 1e-4)
        cos_e = (r * r - a * a - b * b) / (2 * a * b)
        theta = arm["sign"] * math.acos(min(max(cos_e, -1.0), 1.0))
        cz, sz = math.cos(theta), math.sin(theta)
        f_rot = np.array([cz * arm["f0"][0] - sz * arm["f0"][1],
                          sz * arm["f0"][0] + cz * arm["f0"][1], arm["f0"][2]])
        w = a * arm["u0"] + b * f_rot
        if r > 1e-9 and np.linalg.norm(local) > 1e-9:
            rv = _minimal_rotvec(w, local * (r / np.linalg.norm(local)))
        else:
            rv = np.zeros(3)
        self.set(q, f"{side}_shoulder", np.clip(rv, -2.9, 2.9))
        self.set(q, f"{side}_elbow", [theta])


def _face(a_xy: np.ndarray, b_xy: np.ndarray) -> float:
    d = b_xy - a_xy
    return math.atan2(d[1], d[0])


def _rest_hand(root_xy, yaw, side_sign, z) -> np.ndarray:
    local = np.array([0.12, side_sign * 0.38, 0.0])
    world = yaw_matrix(yaw) @ local
    return np.array([root_xy[0] + world[0], root_xy[1] + world[1], z])


def synth_demo_coords(
    kind: str,
    seed: int,
    duration_s: float = 12.0,
    fps: float = 60.0,
    infeasible: bool = False,
    jitter: float = 0.004,
) -> tuple[Trajectory, list[np.ndarray]]:
    """Scripted two-humanoid interaction; also returns the coordinate tracks.

    Kinds: handshake (right hands converge and oscillate), circling (joined
    hands, roots orbit a common center), sparring_lite (alternating arm
    extensions toward the partner's torso), rps (synchronized right-arm
    pumping). Deterministic given (kind, seed, duration, fps).

    Returned positions carry `jitter` meters of seeded white observation
    noise, standing in for capture error; the coordinate tracks are the clean
    actuation trail underneath.

    With infeasible=True the first character's right toe stabs below the
    ground for five frames mid-sequence, mimicking a capture glitch. (The
    humanoid's arms cannot reach the ground by construction, so the glitch
    lives in a foot.)
    """
    if kind not in DEMO_KINDS:
        raise MotionIoError(f"unknown demo kind {kind!r}, expected one of {DEMO_KINDS}")
    if duration_s <= 0:
        raise MotionIoError(f"duration must be positive, got {duration_s}")
    if fps <= 0:
        raise MotionIoError(f"fps must be positive, got {fps}")
    rig = _HumanoidRig()
    rng = np.random.default_rng(seed)
    frames = int(round(duration_s * fps)) + 1
    dt = 1.0 / fps

    # Scenario constants and driver signals drawn once so every frame is a
    # pure function of t. The handshake runs on hidden knot signals that
    # character A expresses immediately and B follows with a lag, so B's
    # future is readable from A's present but not from B's own state.
    p = {
        "breath_phase": rng.uniform(0, 2 * math.pi),
        "sway_hz": rng.uniform(0.28, 0.34),
        "lag": rng.uniform(0.18, 0.26),
        "idle_phase_a": rng.uniform(0, 2 * math.pi),
        "idle_phase_b": rng.uniform(0, 2 * math.pi),
        "circle_r": rng.uniform(0.42, 0.48),
        "jab_period": rng.uniform(1.1, 1.3),
        "pump_hz": rng.uniform(1.2, 1.4),
    }
    # Each channel is a slow random knot envelope plus a fixed-frequency
    # oscillation. Pose features are position-only, so the oscillation phase
    # direction of a limb cannot be read from one character's instantaneous
    # state; the lagged copy on the partner disambiguates it.
    def channel(knot_dt, k_lo, k_hi, amp, hz):
        knots = _KnotSignal(rng, duration_s, knot_dt, k_lo, k_hi)
        phase = rng.uniform(0, 2 * math.pi)
        freq = hz * rng.uniform(0.9, 1.1)
        return lambda tt: knots(tt) + amp * math.sin(2 * math.pi * freq * tt + phase)

    drv = {
        "shake": channel(2.0, -0.04, 0.04, 0.08, 1.5),
        "reach": channel(2.2, -0.04, 0.04, 0.03, 0.9),
        "gside": channel(1.8, -0.03, 0.03, 0.0, 1.0),
        "breath": channel(2.4, -0.06, 0.06, 0.04, 0.45),
        "sway": channel(2.0, -0.03, 0.03, 0.04, 0.6),
        "leftz": channel(2.0, 0.90, 1.00, 0.08, 0.7),
        "lefty": channel(1.9, 0.30, 0.40, 0.03, 0.5),
    }

    coords = [np.zeros((frames, rig.skel.dof_count)) for _ in range(2)]
    q_tmp = [np.zeros(rig.skel.dof_count), np.zeros(rig.skel.dof_count)]

    def build_frame(t: float, f: int):
        qa, qb = q_tmp[0], q_tmp[1]
        qa[:] = 0.0
        qb[:] = 0.0
        if kind == "handshake":
            lag = {"a": 0.0, "b": p["lag"]}
            # Roots: each character expresses the breath/sway drivers at its
            # own lag; distances stay positive and bounded.
            d_of = lambda tt: 1.12 - 0.40 * _smoothstep(tt / 1.5)
            xa = -(d_of(t) + drv["breath"](t)) / 2
            xb = (d_of(t - lag["b"]) + drv["breath"](t - lag["b"])) / 2
            a_xy = np.array([xa, drv["sway"](t)])
            b_xy = np.array([xb, -drv["sway"](t - lag["b"])])
            raise_f = _smoothstep((t - 0.8) / 0.8)

            def grip(tt):
                mid = (a_xy + b_xy) / 2
                return np.array([
                    mid[0] + drv["reach"](tt),
                    mid[1] + drv["gside"](tt),
                    1.06 + drv["shake"](tt),
                ])

            for q, xy, other_xy, who in ((qa, a_xy, b_xy, "a"), (qb, b_xy, a_xy, "b")):
                tt = t - lag[who]
                yaw = _face(xy, other_xy)
                rig.set(q, "pelvis", [xy[0], xy[1], yaw])
                knee = 0.03 + 0.25 * max(drv["breath"](tt), 0.0)
                rig.set(q, "l_knee", [knee])
                rig.set(q, "r_knee", [knee])
                rig.set(q, "spine3", [0.6 * drv["sway"](tt), 0, 0])
                rig.set(q, "neck", [0, 0.8 * drv["shake"](tt), 0])
                rest_r = _rest_hand(xy, yaw, -1, 0.80)
                tgt = raise_f * grip(tt) + (1 - raise_f) * rest_r
                rig.solve_arm(q, "r", tgt)
                lz = drv["leftz"](tt)
                ly = drv["lefty"](tt)
                local = yaw_matrix(yaw) @ np.array([0.10, ly, 0.0])
                rig.solve_arm(q, "l", np.array([xy[0] + local[0], xy[1] + local[1], lz]))
        elif kind == "circling":
            alpha = 2 * math.pi * t / max(duration_s * 0.9, 4.0)
            r = p["circle_r"] * (1 + 0.015 * math.sin(2 * math.pi * 0.3 * t))
            a_xy = np.array([r * math.cos(alpha), r * math.sin(alpha)])
            b_xy = np.array([r * math.cos(alpha + math.pi), r * math.sin(alpha + math.pi)])
            center = np.array([0.0, 0.0, 1.05 + 0.05 * math.sin(2 * math.pi * 0.5 * t)])
            gait = 2 * math.pi * 1.4 * t
            for q, xy, other_xy, phase in ((qa, a_xy, b_xy, 0.0), (qb, b_xy, a_xy, math.pi)):
                yaw = _face(xy, other_xy)
                rig.set(q, "pelvis", [xy[0], xy[1], yaw])
                rig.set(q, "l_knee", [0.10 * (1 + math.sin(gait + phase)) / 2])
                rig.set(q, "r_knee", [0.10 * (1 + math.sin(gait + phase + math.pi)) / 2])
                rig.solve_arm(q, "r", center + np.array([0, 0, 0.0]))
                rest_l = _rest_hand(xy, yaw, 1, 0.82)
                rig.solve_arm(q, "l", rest_l)
        elif kind == "sparring_lite":
            d = 1.05 + 0.12 * math.sin(2 * math.pi * 0.15 * t + p["breath_phase"])
            ya = 0.08 * math.sin(2 * math.pi * 0.35 * t)
            yb = 0.08 * math.sin(2 * math.pi * 0.35 * t + p["idle_phase_b"])
            a_xy = np.array([-d / 2, ya])
            b_xy = np.array([d / 2, yb])
            cycle = int(t / p["jab_period"])
            in_cycle = (t - cycle * p["jab_period"]) / p["jab_period"]
            env = _smoothstep(in_cycle / 0.25) * _smoothstep((0.85 - in_cycle) / 0.25)
            attacker = "a" if cycle % 2 == 0 else "b"
            arm = "r" if (cycle // 2) % 2 == 0 else "l"
            chest = {"a": np.array([a_xy[0], a_xy[1], 1.25]),
                     "b": np.array([b_xy[0], b_xy[1], 1.25])}
            for q, xy, other_xy, who in ((qa, a_xy, b_xy, "a"), (qb, b_xy, a_xy, "b")):
                yaw = _face(xy, other_xy)
                rig.set(q, "pelvis", [xy[0], xy[1], yaw])
                rig.set(q, "spine3", [0, 0.06 * math.sin(2 * math.pi * 0.35 * t), 0])
                other = "b" if who == "a" else "a"
                for side in ("l", "r"):
                    rest = _rest_hand(xy, yaw, 1 if side == "l" else -1, 1.05)
                    if who == attacker and side == arm:
                        tgt = (1 - env) * rest + env * chest[other]
                    elif who != attacker and side == arm:
                        block = (chest[who] + chest[other]) / 2 + np.array([0, 0, 0.05])
                        tgt = (1 - env) * rest + env * block
                    else:
                        tgt = rest
                    rig.solve_arm(q, side, tgt)
        else:  # rps
            d = 0.9 + 0.02 * math.sin(2 * math.pi * 0.2 * t + p["breath_phase"])
            a_xy = np.array([-d / 2, 0.0])
            b_xy = np.array([d / 2, 0.0])
            round_t = t % 2.3
            pump = math.sin(2 * math.pi * p["pump_hz"] * round_t) if round_t < 1.5 else 0.0
            hold = _smoothstep((round_t - 1.5) / 0.2) if round_t >= 1.5 else 0.0
            for q, xy, other_xy in ((qa, a_xy, b_xy), (qb, b_xy, a_xy)):
                yaw = _face(xy, other_xy)
                rig.set(q, "pelvis", [xy[0], xy[1], yaw])
                rig.set(q, "spine3", [0, 0.05 * pump, 0])
                fwd = yaw_matrix(yaw) @ np.array([0.35, -0.10, 0.0])
                z = 1.10 + 0.12 * pump - 0.06 * hold
                rig.solve_arm(q, "r", np.array([xy[0] + fwd[0], xy[1] + fwd[1], z]))
                rig.solve_arm(q, "l", _rest_hand(xy, yaw, 1, 0.82))
        if infeasible:
            dip_start = min(6.0, duration_s * 0.5)
            if dip_start <= t < dip_start + 5 * dt:
                rig.set(qa, "r_ankle", [1.2])
        coords[0][f] = qa
        coords[1][f] = qb

    for f in range(frames):
        build_frame(f * dt, f)

    noise_rng = np.random.default_rng([seed, 0xB0D1])
    tracks = []
    for k in range(2):
        pos = np.empty((frames, rig.skel.node_count, 3))
        for f in range(frames):
            pos[f], _ = fk_with_frames(rig.skel, GeneralizedCoords(coords[k][f]))
        if jitter > 0:
            pos = pos + noise_rng.normal(scale=jitter, size=pos.shape)
        tracks.append(CharacterTrack(skeleton_id="humanoid22", positions=pos))
    traj = Trajectory(fps=fps, characters=tuple(tracks))
    return traj, coords


def synth_demo(kind: str, seed: int, duration_s: float = 12.0, fps: float = 60.0,
               infeasible: bool = False) -> Trajectory:
    traj, _ = synth_demo_coords(kind, seed, duration_s, fps, infeasible)
    return traj
