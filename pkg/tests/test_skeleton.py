import math

import numpy as np
import pytest

from buddy.skeleton import (
    GeneralizedCoords,
    JointKind,
    JointSpec,
    Pose,
    Skeleton,
    SkeletonError,
    default_norm_length,
    end_effector_vectors,
    forward_kinematics,
    load_skeleton,
    save_skeleton,
    skeleton_from_dict,
    skeleton_to_dict,
    yaw_matrix,
)
from helpers import fk_matrix_oracle, random_tree_skeleton


def two_link_chain():
    joints = (
        JointSpec("root", None, JointKind.PLANAR_FREE_ROOT, (0, 0, 0),
                  limits=((-5, 5), (-5, 5), (-6.3, 6.3))),
        JointSpec("a", 0, JointKind.REVOLUTE, (0, 0, 1), axis=(0, 0, 1),
                  limits=((-3.2, 3.2),)),
        JointSpec("b", 1, JointKind.FIXED, (0, 0, 1)),
    )
    return Skeleton(joints=joints, end_effectors=(2,), norm_length=2.0, name="chain")


class TestForwardKinematics:
    def test_zero_coords_cumulative_offsets(self):
        skel = two_link_chain()
        pose = forward_kinematics(skel, skel.zero_coords())
        np.testing.assert_allclose(
            pose.positions, [[0, 0, 0], [0, 0, 1], [0, 0, 2]], atol=1e-15
        )

    def test_revolute_quarter_turn(self):
        joints = (
            JointSpec("root", None, JointKind.PLANAR_FREE_ROOT, (0, 0, 0),
                      limits=((-5, 5), (-5, 5), (-6.3, 6.3))),
            JointSpec("pivot", 0, JointKind.REVOLUTE, (0, 0, 0), axis=(0, 0, 1),
                      limits=((-3.2, 3.2),)),
            JointSpec("tip", 1, JointKind.FIXED, (1, 0, 0)),
        )
        skel = Skeleton(joints=joints, end_effectors=(2,), norm_length=1.0)
        q = np.zeros(4)
        q[3] = math.pi / 2
        pose = forward_kinematics(skel, GeneralizedCoords(q))
        np.testing.assert_allclose(pose.positions[2] - pose.positions[1], [0, 1, 0], atol=1e-12)

    def test_matches_matrix_oracle_on_random_trees(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            skel = random_tree_skeleton(rng, nodes=5)
            lo, hi = skel.limits_arrays()
            q = rng.uniform(np.maximum(lo, -2), np.minimum(hi, 2))
            pose = forward_kinematics(skel, GeneralizedCoords(q))
            np.testing.assert_allclose(pose.positions, fk_matrix_oracle(skel, q), atol=1e-9)

    def test_dimension_mismatch_raises(self):
        skel = two_link_chain()
        with pytest.raises(SkeletonError, match="coordinate vector"):
            forward_kinematics(skel, GeneralizedCoords(np.zeros(2)))

    def test_planar_root_equivariance(self):
        """Moving the planar root transforms every node by the same rigid map."""
        rng = np.random.default_rng(5)
        skel = load_skeleton("humanoid22")
        q = rng.uniform(-0.3, 0.3, skel.dof_count)
        base = forward_kinematics(skel, GeneralizedCoords(q)).positions
        dx, dy, dyaw = 0.7, -0.4, 1.1
        q2 = q.copy()
        rot = yaw_matrix(dyaw)
        xy = rot[:2, :2] @ q[:2] + [dx, dy]
        q2[0], q2[1], q2[2] = xy[0], xy[1], q[2] + dyaw
        moved = forward_kinematics(skel, GeneralizedCoords(q2)).positions
        expected = (rot @ base.T).T + [dx, dy, 0.0]
        np.testing.assert_allclose(moved, expected, atol=1e-9)

    def test_in_limit_coords_stay_finite(self):
        rng = np.random.default_rng(11)
        for name in ("humanoid22", "quadarm", "wheelarm"):
            skel = load_skeleton(name)
            lo, hi = skel.limits_arrays()
            for _ in range(20):
                q = rng.uniform(np.maximum(lo, -8), np.minimum(hi, 8))
                pose = forward_kinematics(skel, GeneralizedCoords(q))
                assert np.all(np.isfinite(pose.positions))


class TestEndEffectorVectors:
    def test_subtraction(self):
        skel = two_link_chain()
        neutral = Pose(np.array([[0.0, 0.0, 1.0], [0.3, 0, 1.5], [0.7, -0.2, 1.4]]))
        vecs = end_effector_vectors(skel, neutral)
        assert vecs[0][0] == 2
        np.testing.assert_allclose(vecs[0][1], [0.7, -0.2, 0.4], atol=1e-15)

    def test_root_coincident_gives_zero_vector(self):
        skel = two_link_chain()
        neutral = Pose(np.array([[1.0, 2.0, 3.0], [0.0, 0, 0], [1.0, 2.0, 3.0]]))
        (_, v), = end_effector_vectors(skel, neutral)
        np.testing.assert_allclose(v, np.zeros(3), atol=1e-15)

    def test_quadarm_five_vectors_match_fk(self, quadarm):
        neutral = quadarm.neutral_pose()
        vecs = end_effector_vectors(quadarm, neutral)
        assert len(vecs) == 5
        oracle = fk_matrix_oracle(quadarm, np.zeros(quadarm.dof_count))
        root = oracle[quadarm.root_index]
        for ee, v in vecs:
            np.testing.assert_allclose(v, oracle[ee] - root, atol=1e-9)

    def test_empty_end_effectors_raises(self):
        joints = two_link_chain().joints
        skel = Skeleton(joints=joints, end_effectors=(), norm_length=1.0)
        with pytest.raises(SkeletonError, match="no end effectors"):
            end_effector_vectors(skel, skel.neutral_pose())


class TestNormLength:
    def test_two_link_unit_chain(self):
        skel = two_link_chain()
        assert default_norm_length(skel, skel.neutral_pose()) == pytest.approx(2.0)

    def test_homogeneity_under_scaling(self):
        skel = two_link_chain()
        base = default_norm_length(skel, skel.neutral_pose())
        scaled = Pose(skel.neutral_pose().positions * 3.5)
        assert default_norm_length(skel, scaled) == pytest.approx(3.5 * base)

    def test_humanoid_matches_bone_table(self, humanoid):
        neutral = humanoid.neutral_pose()
        table = sum(
            np.linalg.norm(neutral.positions[i] - neutral.positions[j.parent])
            for i, j in enumerate(humanoid.joints)
            if j.parent is not None
        )
        assert default_norm_length(humanoid, neutral) == pytest.approx(table, abs=1e-12)

    def test_invariant_to_root_motion(self, humanoid):
        q = np.zeros(humanoid.dof_count)
        base = default_norm_length(humanoid, forward_kinematics(humanoid, GeneralizedCoords(q)))
        q[0], q[1], q[2] = 2.0, -1.0, 2.2
        moved = default_norm_length(humanoid, forward_kinematics(humanoid, GeneralizedCoords(q)))
        assert moved == pytest.approx(base, abs=1e-9)


class TestValidation:
    def test_child_before_parent_rejected(self):
        with pytest.raises(SkeletonError, match="precede"):
            Skeleton(
                joints=(
                    JointSpec("root", None, JointKind.PLANAR_FREE_ROOT, (0, 0, 0),
                              limits=((-1, 1),) * 3),
                    JointSpec("a", 2, JointKind.FIXED, (0, 0, 1)),
                    JointSpec("b", 0, JointKind.FIXED, (0, 0, 1)),
                ),
                end_effectors=(), norm_length=1.0,
            )

    def test_two_roots_rejected(self):
        with pytest.raises(SkeletonError, match="exactly one root"):
            Skeleton(
                joints=(
                    JointSpec("r1", None, JointKind.PLANAR_FREE_ROOT, (0, 0, 0),
                              limits=((-1, 1),) * 3),
                    JointSpec("r2", None, JointKind.PLANAR_FREE_ROOT, (0, 0, 0),
                              limits=((-1, 1),) * 3),
                ),
                end_effectors=(), norm_length=1.0,
            )

    def test_non_unit_axis_rejected(self):
        with pytest.raises(SkeletonError, match="unit norm"):
            JointSpec("j", 0, JointKind.REVOLUTE, (0, 0, 0), axis=(0, 0, 2),
                      limits=((-1, 1),))
            Skeleton(
                joints=(
                    JointSpec("root", None, JointKind.PLANAR_FREE_ROOT, (0, 0, 0),
                              limits=((-1, 1),) * 3),
                    JointSpec("j", 0, JointKind.REVOLUTE, (0, 0, 0), axis=(0, 0, 2),
                              limits=((-1, 1),)),
                ),
                end_effectors=(), norm_length=1.0,
            )

    def test_inverted_limits_rejected(self):
        with pytest.raises(SkeletonError, match="lo .* hi|limit"):
            Skeleton(
                joints=(
                    JointSpec("root", None, JointKind.PLANAR_FREE_ROOT, (0, 0, 0),
                              limits=((1, -1), (-1, 1), (-1, 1))),
                ),
                end_effectors=(), norm_length=1.0,
            )

    def test_non_leaf_end_effector_rejected(self):
        joints = two_link_chain().joints
        with pytest.raises(SkeletonError, match="not a leaf"):
            Skeleton(joints=joints, end_effectors=(1,), norm_length=1.0)


class TestAssets:
    def test_bundled_assets_load(self):
        for name, nodes in (("humanoid22", 22), ("quadarm", 17), ("wheelarm", 6)):
            skel = load_skeleton(name)
            assert skel.node_count == nodes
            assert skel.norm_length > 0

    def test_roundtrip(self, tmp_path, quadarm):
        path = tmp_path / "quad.json"
        save_skeleton(quadarm, path)
        again = load_skeleton(path)
        assert again.node_count == quadarm.node_count
        assert again.norm_length == quadarm.norm_length
        assert [j.name for j in again.joints] == [j.name for j in quadarm.joints]

    def test_norm_length_defaults_to_bone_sum(self, humanoid):
        doc = skeleton_to_dict(humanoid)
        doc["norm_length"] = None
        skel = skeleton_from_dict(doc)
        expected = default_norm_length(humanoid, humanoid.neutral_pose())
        assert skel.norm_length == pytest.approx(expected)

    def test_unknown_asset_name(self):
        with pytest.raises(SkeletonError, match="unknown skeleton"):
            load_skeleton("does-not-exist")
