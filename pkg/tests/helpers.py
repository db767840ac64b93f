"""Shared test oracles: finite differences and an independent FK."""

from __future__ import annotations

import math

import numpy as np

from buddy import nn
from buddy.skeleton import JointKind, Skeleton


def finite_difference_grads(loss_fn, params: list[nn.Tensor], eps: float = 1e-5):
    """Central-difference gradients of loss_fn() w.r.t. each param Tensor."""
    grads = []
    for p in params:
        g = np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = float(loss_fn().data)
            flat[i] = orig - eps
            lo = float(loss_fn().data)
            flat[i] = orig
            gflat[i] = (hi - lo) / (2 * eps)
        grads.append(g)
    return grads


def max_rel_error(analytic: list[np.ndarray], numeric: list[np.ndarray],
                  floor: float = 1e-4) -> float:
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float((np.abs(a - n) / denom).max()))
    return worst


def gradcheck(loss_fn, params: list[nn.Tensor], eps: float = 1e-5, tol: float = 1e-4) -> float:
    """Backprop vs central differences; returns the worst relative error."""
    for p in params:
        p.grad = None
    loss = loss_fn()
    loss.backward()
    analytic = [p.grad.copy() if p.grad is not None else np.zeros_like(p.data) for p in params]
    numeric = finite_difference_grads(loss_fn, params, eps)
    err = max_rel_error(analytic, numeric)
    assert err < tol, f"gradient mismatch: max relative error {err:.3e}"
    return err


# Independent forward kinematics oracle built on homogeneous 4x4 matrices.


def _hom(rot: np.ndarray, trans: np.ndarray) -> np.ndarray:
    m = np.eye(4)
    m[:3, :3] = rot
    m[:3, 3] = trans
    return m


def _axis_angle(axis, angle):
    axis = np.asarray(axis, dtype=float)
    k = np.array([
        [0, -axis[2], axis[1]],
        [axis[2], 0, -axis[0]],
        [-axis[1], axis[0], 0],
    ])
    return np.eye(3) + math.sin(angle) * k + (1 - math.cos(angle)) * (k @ k)


def fk_matrix_oracle(skel: Skeleton, coords: np.ndarray) -> np.ndarray:
    """World node positions via explicit homogeneous matrix products."""
    layout = skel.dof_layout()
    mats: list[np.ndarray] = [np.eye(4)] * skel.node_count
    pos = np.zeros((skel.node_count, 3))
    for i, j in enumerate(skel.joints):
        a, b = layout[i]
        q = coords[a:b]
        if j.kind == JointKind.FIXED:
            motion = np.eye(4)
        elif j.kind == JointKind.REVOLUTE:
            motion = _hom(_axis_angle(j.axis, q[0]), np.zeros(3))
        elif j.kind == JointKind.PRISMATIC:
            motion = _hom(np.eye(3), q[0] * np.asarray(j.axis))
        elif j.kind == JointKind.BALL:
            angle = np.linalg.norm(q)
            rot = np.eye(3) if angle < 1e-12 else _axis_angle(q / angle, angle)
            motion = _hom(rot, np.zeros(3))
        else:  # planar root
            motion = _hom(_axis_angle([0, 0, 1], q[2]), np.array([q[0], q[1], 0.0]))
        local = _hom(np.eye(3), np.asarray(j.offset)) @ motion
        mats[i] = local if j.parent is None else mats[j.parent] @ local
        pos[i] = mats[i][:3, 3]
    return pos


def random_tree_skeleton(rng: np.random.Generator, nodes: int = 5) -> Skeleton:
    """Random valid kinematic tree exercising every joint kind."""
    from buddy.skeleton import JointSpec

    kinds = [JointKind.REVOLUTE, JointKind.PRISMATIC, JointKind.BALL, JointKind.FIXED]
    joints = [
        JointSpec("root", None, JointKind.PLANAR_FREE_ROOT,
                  tuple(rng.uniform(-0.2, 0.2, 3)),
                  limits=((-5, 5), (-5, 5), (-6.3, 6.3)))
    ]
    for i in range(1, nodes):
        kind = kinds[int(rng.integers(len(kinds)))]
        parent = int(rng.integers(i))
        axis = None
        limits = ()
        if kind in (JointKind.REVOLUTE, JointKind.PRISMATIC):
            v = rng.normal(size=3)
            axis = tuple(v / np.linalg.norm(v))
            limits = ((-2.0, 2.0),)
        elif kind == JointKind.BALL:
            limits = ((-2.0, 2.0),) * 3
        joints.append(JointSpec(f"j{i}", parent, kind, tuple(rng.uniform(-0.5, 0.5, 3)),
                                axis=axis, limits=limits))
    has_child = [False] * nodes
    for j in joints:
        if j.parent is not None:
            has_child[j.parent] = True
    leaves = tuple(i for i, c in enumerate(has_child) if not c)
    return Skeleton(joints=tuple(joints), end_effectors=leaves, norm_length=1.0, name="random")
