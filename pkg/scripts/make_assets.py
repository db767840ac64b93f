"""Regenerate the bundled character assets under src/buddy/assets/.

Run from the repo root: python scripts/make_assets.py
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from buddy.skeleton import JointKind, JointSpec, Skeleton, save_skeleton

WIDE_XY = ((-10.0, 10.0), (-10.0, 10.0), (-12.6, 12.6))


def j(name, parent, kind, offset, axis=None, limits=()):
    return JointSpec(name=name, parent=parent, kind=JointKind(kind), offset=offset,
                     axis=axis, limits=limits)


def ball_limits(r):
    return ((-r, r), (-r, r), (-r, r))


def humanoid22() -> Skeleton:
    """22-node biped. Canonical node ordering (index: name):

    0 pelvis, 1 l_hip, 2 r_hip, 3 spine1, 4 l_knee, 5 r_knee, 6 spine2,
    7 l_ankle, 8 r_ankle, 9 spine3, 10 l_foot, 11 r_foot, 12 neck,
    13 l_collar, 14 r_collar, 15 head, 16 l_shoulder, 17 r_shoulder,
    18 l_elbow, 19 r_elbow, 20 l_wrist, 21 r_wrist.

    Neutral is a T-pose with the pelvis 0.95 m above the ground.
    """
    y_axis = (0.0, 1.0, 0.0)
    z_axis = (0.0, 0.0, 1.0)
    joints = (
        j("pelvis", None, "planar-free-root", (0.0, 0.0, 0.95), limits=WIDE_XY),
        j("l_hip", 0, "ball", (0.0, 0.09, -0.06), limits=ball_limits(2.0)),
        j("r_hip", 0, "ball", (0.0, -0.09, -0.06), limits=ball_limits(2.0)),
        j("spine1", 0, "ball", (0.0, 0.0, 0.11), limits=ball_limits(0.9)),
        j("l_knee", 1, "revolute", (0.0, 0.0, -0.40), axis=y_axis, limits=((-2.4, 2.4),)),
        j("r_knee", 2, "revolute", (0.0, 0.0, -0.40), axis=y_axis, limits=((-2.4, 2.4),)),
        j("spine2", 3, "fixed", (0.0, 0.0, 0.12)),
        j("l_ankle", 4, "revolute", (0.0, 0.0, -0.40), axis=y_axis, limits=((-1.3, 1.3),)),
        j("r_ankle", 5, "revolute", (0.0, 0.0, -0.40), axis=y_axis, limits=((-1.3, 1.3),)),
        j("spine3", 6, "ball", (0.0, 0.0, 0.12), limits=ball_limits(0.9)),
        j("l_foot", 7, "fixed", (0.13, 0.0, -0.06)),
        j("r_foot", 8, "fixed", (0.13, 0.0, -0.06)),
        j("neck", 9, "ball", (0.0, 0.0, 0.10), limits=ball_limits(1.0)),
        j("l_collar", 9, "fixed", (0.0, 0.08, 0.04)),
        j("r_collar", 9, "fixed", (0.0, -0.08, 0.04)),
        j("head", 12, "fixed", (0.0, 0.0, 0.16)),
        j("l_shoulder", 13, "ball", (0.0, 0.10, 0.0), limits=ball_limits(2.9)),
        j("r_shoulder", 14, "ball", (0.0, -0.10, 0.0), limits=ball_limits(2.9)),
        j("l_elbow", 16, "revolute", (0.0, 0.26, 0.0), axis=z_axis, limits=((-2.7, 2.7),)),
        j("r_elbow", 17, "revolute", (0.0, -0.26, 0.0), axis=z_axis, limits=((-2.7, 2.7),)),
        j("l_wrist", 18, "fixed", (0.0, 0.25, 0.0)),
        j("r_wrist", 19, "fixed", (0.0, -0.25, 0.0)),
    )
    skel = Skeleton(joints=joints, end_effectors=(10, 11, 20, 21), norm_length=1.0,
                    heading_pair=(1, 2), name="humanoid22")
    # Pin the default bone-sum scale so the asset is self-contained.
    from buddy.skeleton import default_norm_length

    return Skeleton(joints=joints, end_effectors=(10, 11, 20, 21),
                    norm_length=default_norm_length(skel, skel.neutral_pose()),
                    heading_pair=(1, 2), name="humanoid22")


def quadarm() -> Skeleton:
    """Four two-segment legs plus a three-revolute arm ending in a gripper."""
    y_axis = (0.0, 1.0, 0.0)
    z_axis = (0.0, 0.0, 1.0)
    legs = []
    for idx, (leg, sx, sy) in enumerate(
        [("fl", 1, 1), ("fr", 1, -1), ("rl", -1, 1), ("rr", -1, -1)]
    ):
        legs.append(j(f"{leg}_hip", 0, "revolute", (0.18 * sx, 0.12 * sy, -0.05),
                      axis=y_axis, limits=((-1.2, 1.2),)))
    knees = [
        j(f"{leg}_knee", 1 + i, "revolute", (0.0, 0.0, -0.15), axis=y_axis,
          limits=((-1.8, 1.8),))
        for i, leg in enumerate(["fl", "fr", "rl", "rr"])
    ]
    feet = [
        j(f"{leg}_foot", 5 + i, "fixed", (0.0, 0.0, -0.13))
        for i, leg in enumerate(["fl", "fr", "rl", "rr"])
    ]
    joints = (
        j("base", None, "planar-free-root", (0.0, 0.0, 0.34), limits=WIDE_XY),
        *legs,
        *knees,
        *feet,
        j("arm_base", 0, "revolute", (0.10, 0.0, 0.05), axis=z_axis, limits=((-2.6, 2.6),)),
        j("arm_link1", 13, "revolute", (0.06, 0.0, 0.02), axis=y_axis, limits=((-1.9, 1.9),)),
        j("arm_link2", 14, "revolute", (0.20, 0.0, 0.10), axis=y_axis, limits=((-2.4, 2.4),)),
        j("gripper", 15, "fixed", (0.20, 0.0, 0.10)),
    )
    # norm_length pinned below the raw bone sum: four legs double-count scale
    # relative to the body height this value is meant to normalize.
    return Skeleton(joints=joints, end_effectors=(9, 10, 11, 12, 16), norm_length=2.2,
                    heading_pair=(1, 2), name="quadarm")


def wheelarm() -> Skeleton:
    """Tall mobile base with a lift + extend prismatic arm and a yaw wrist."""
    joints = (
        j("base", None, "planar-free-root", (0.0, 0.0, 0.12), limits=WIDE_XY),
        j("mast", 0, "fixed", (0.0, 0.0, 0.55)),
        j("lift", 1, "prismatic", (0.0, 0.0, 0.05), axis=(0.0, 0.0, 1.0),
          limits=((-0.45, 0.55),)),
        j("extend", 2, "prismatic", (0.08, 0.0, 0.05), axis=(1.0, 0.0, 0.0),
          limits=((0.0, 0.50),)),
        j("wrist", 3, "revolute", (0.14, 0.0, 0.0), axis=(0.0, 0.0, 1.0),
          limits=((-2.6, 2.6),)),
        j("gripper", 4, "fixed", (0.16, 0.0, 0.02)),
    )
    # norm_length pinned above the bone sum: the telescoping arm's workspace,
    # not its retracted length, is the scale comparisons should use.
    return Skeleton(joints=joints, end_effectors=(5,), norm_length=3.6, name="wheelarm")


def main():
    out_dir = Path(__file__).resolve().parents[1] / "src" / "buddy" / "assets"
    out_dir.mkdir(parents=True, exist_ok=True)
    for build in (humanoid22, quadarm, wheelarm):
        skel = build()
        path = out_dir / f"{skel.name}.json"
        save_skeleton(skel, path)
        print(f"wrote {path} ({skel.node_count} nodes, {skel.dof_count} dof, "
              f"norm_length {skel.norm_length:.4f})")


if __name__ == "__main__":
    main()
