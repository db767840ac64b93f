"""Two-agent kinematic environment driven by a demonstration reference.

Agents are velocity-limited kinematic characters: actions are joint-target
deltas, clamped per degree of freedom, integrated first-order, with poses from
forward kinematics. There is no contact or inertia; physical plausibility is
enforced by termination instead (any node below ground, a limit escape, or a
non-finite state ends the episode with a zero terminal reward).

Each control step consumes a fixed number of reference frames. The shared
consistency reward compares the agents' realized edges (always headed by the
root-to-root edge) against the demonstration's reference edges; regularizers
are per-agent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .correspondence import VertexMap
from .igraph import EigTrace
from .motion_io import Trajectory
from .reward import (
    AgentRegState,
    RewardBreakdown,
    RewardWeights,
    interaction_reward,
    regularization_rewards,
    total_reward,
)
from .skeleton import GeneralizedCoords, JointKind, Skeleton, forward_kinematics

GROUND_LIMIT = -0.01  # meters; nodes below this end the episode


class EnvError(ValueError):
    pass


# Per-kind default velocity limits (units per second).
_DEFAULT_VMAX = {
    JointKind.REVOLUTE: 4.0,
    JointKind.PRISMATIC: 1.0,
    JointKind.BALL: 4.0,
}
_PLANAR_VMAX = (1.5, 1.5, 3.0)  # x, y, yaw


def default_dof_vmax(skel: Skeleton) -> np.ndarray:
    out = np.empty(skel.dof_count)
    for j, (a, b) in zip(skel.joints, skel.dof_layout()):
        if j.kind == JointKind.PLANAR_FREE_ROOT:
            out[a:b] = _PLANAR_VMAX
        elif j.kind in _DEFAULT_VMAX:
            out[a:b] = _DEFAULT_VMAX[j.kind]
    return out


@dataclass
class EpisodeConfig:
    """Everything one transfer episode needs.

    The trace must already be remapped onto the agents' skeletons; reference
    features stay the demonstration's. Control rate must divide the demo fps.
    """

    demo: Trajectory
    trace: EigTrace
    skeletons: tuple[Skeleton, Skeleton]
    maps: tuple[Optional[VertexMap], Optional[VertexMap]] = (None, None)
    control_hz: float = 30.0
    weights: RewardWeights = field(default_factory=RewardWeights)
    gamma: float = 0.99
    spawn_scale: float = 1.0
    dof_vmax: tuple[Optional[np.ndarray], Optional[np.ndarray]] = (None, None)

    def __post_init__(self):
        ratio = self.demo.fps / self.control_hz
        if abs(ratio - round(ratio)) > 1e-9 or ratio < 1:
            raise EnvError(
                f"control rate {self.control_hz} must divide demo fps {self.demo.fps}"
            )
        if self.trace.frame_count != self.demo.frame_count:
            raise EnvError(
                f"trace has {self.trace.frame_count} frames, demo has {self.demo.frame_count}"
            )


@dataclass
class AgentState:
    coords: np.ndarray
    velocities: np.ndarray
    positions: np.ndarray  # FK of coords
    embodiment: str


def _scene_norm_length(skels) -> float:
    return float(np.mean([s.norm_length for s in skels]))


class InteractionEnv:
    """Owns two agents and the reference clock. Not thread-safe; one rollout
    worker per instance."""

    def __init__(self, config: EpisodeConfig):
        self.config = config
        self.skels = config.skeletons
        self.steps_per_frame = int(round(config.demo.fps / config.control_hz))
        self.n_steps = (config.demo.frame_count - 1) // self.steps_per_frame
        if self.n_steps < 1:
            raise EnvError("demo too short for one control step")
        self.dt = 1.0 / config.control_hz
        self.n_bar = config.trace.n_bar
        self.l_hat = _scene_norm_length(self.skels)
        demo_skels = [_demo_skeleton(c.skeleton_id) for c in config.demo.characters]
        self.l_ref = _scene_norm_length(demo_skels)
        self.vmax = tuple(
            v if v is not None else default_dof_vmax(s)
            for v, s in zip(config.dof_vmax, self.skels)
        )
        self.max_delta = tuple(v * self.dt for v in self.vmax)
        self._limits = tuple(s.limits_arrays() for s in self.skels)
        self._ref_root_edges = self._reference_root_edges()
        self.states: list[AgentState] = []
        self.step_idx = 0
        self.done = False
        self._spawn_yaw = (0.0, 0.0)

    # -- reference bookkeeping -------------------------------------------------

    def _reference_root_edges(self) -> np.ndarray:
        """(T, 6) root-to-root edge of the demonstration at every frame."""
        roots = [
            c.positions[:, _demo_skeleton(c.skeleton_id).root_index]
            for c in self.config.demo.characters
        ]
        rel = roots[1] - roots[0]
        mid = (roots[0] + roots[1]) * 0.5
        return np.concatenate([rel, mid], axis=1)

    def reference_edges(self, frame: int) -> np.ndarray:
        """(n_bar + 1, 6) reference features, root edge prepended as slot 0."""
        return np.concatenate(
            [self._ref_root_edges[frame][None, :], self.config.trace.features[frame]], axis=0
        )

    def current_edges(self, frame: int) -> np.ndarray:
        """(n_bar + 1, 6) realized features for the remapped node pairs."""
        pa, pb = self.states[0].positions, self.states[1].positions
        ids = self.config.trace.edge_ids[frame]
        ra, rb = pa[self.skels[0].root_index], pb[self.skels[1].root_index]
        rows = np.empty((self.n_bar + 1, 6))
        rows[0, :3] = rb - ra
        rows[0, 3:] = (ra + rb) * 0.5
        pi = pa[ids[:, 0]]
        pj = pb[ids[:, 1]]
        rows[1:, :3] = pj - pi
        rows[1:, 3:] = (pi + pj) * 0.5
        return rows

    def frame_for_step(self, step: int) -> int:
        return min(step * self.steps_per_frame, self.config.demo.frame_count - 1)

    # -- lifecycle ---------------------------------------------------------------

    def reset(self, rng: np.random.Generator | None = None) -> list[np.ndarray]:
        """Spawn agents along the demo's initial root separation direction.

        Deterministic: the rng parameter is accepted for interface symmetry
        but the default spawn adds no noise.
        """
        ref0 = self._ref_root_edges[0]
        rel_xy = ref0[:2]
        dist_ref = float(np.linalg.norm(ref0[:3]))
        if np.linalg.norm(rel_xy) < 1e-9:
            raise EnvError("demo roots overlap at frame 0; spawn direction undefined")
        direction = rel_xy / np.linalg.norm(rel_xy)
        dist = dist_ref * (self.l_hat / self.l_ref) * self.config.spawn_scale
        if dist < 1e-6:
            raise EnvError("spawn distance collapsed to zero")
        centers = (-direction * dist / 2, direction * dist / 2)
        yaw_a = math.atan2(direction[1], direction[0])
        self._spawn_yaw = (yaw_a, _wrap(yaw_a + math.pi))
        self.states = []
        for k, skel in enumerate(self.skels):
            q = np.zeros(skel.dof_count)
            root_slice = skel.dof_layout()[skel.root_index]
            q[root_slice[0]] = centers[k][0]
            q[root_slice[0] + 1] = centers[k][1]
            q[root_slice[0] + 2] = self._spawn_yaw[k]
            pose = forward_kinematics(skel, GeneralizedCoords(q))
            self.states.append(
                AgentState(
                    coords=q,
                    velocities=np.zeros_like(q),
                    positions=pose.positions,
                    embodiment=skel.name,
                )
            )
        self.step_idx = 0
        self.done = False
        return [self.observation(k) for k in range(2)]

    def step(
        self, actions: list[np.ndarray]
    ) -> tuple[list[np.ndarray], list[RewardBreakdown], bool, dict]:
        """Apply per-agent joint-target deltas; returns (obs, rewards, done, info).

        Termination is sticky: once done, further calls return the terminal
        observation with zero rewards and mutate nothing.
        """
        if not self.states:
            raise EnvError("call reset() before step()")
        if self.done:
            zero = [RewardBreakdown(r_ic=0.0, r_total=0.0) for _ in range(2)]
            return [self.observation(k) for k in range(2)], zero, True, {"sticky": True}
        deltas = []
        for k, skel in enumerate(self.skels):
            a = np.asarray(actions[k], dtype=np.float64)
            if a.shape != (skel.dof_count,):
                raise EnvError(
                    f"agent {k}: action has shape {a.shape}, expected ({skel.dof_count},)"
                )
            delta = np.clip(a, -self.max_delta[k], self.max_delta[k])
            lo, hi = self._limits[k]
            new_q = np.clip(self.states[k].coords + delta, lo, hi)
            deltas.append(new_q - self.states[k].coords)
            self.states[k].velocities = deltas[k] / self.dt
            self.states[k].coords = new_q
            self.states[k].positions = forward_kinematics(
                skel, GeneralizedCoords(new_q)
            ).positions
        self.step_idx += 1
        frame = self.frame_for_step(self.step_idx)

        infeasible = False
        for st in self.states:
            if not np.all(np.isfinite(st.positions)) or not np.all(np.isfinite(st.coords)):
                infeasible = True
            elif st.positions[:, 2].min() < GROUND_LIMIT:
                infeasible = True
        horizon_done = self.step_idx >= self.n_steps
        self.done = infeasible or horizon_done

        if infeasible:
            rewards = [RewardBreakdown(r_ic=0.0, r_total=0.0) for _ in range(2)]
        else:
            rewards = self._rewards(frame, deltas)
        obs = [self.observation(k) for k in range(2)]
        info = {"frame": frame, "infeasible": infeasible, "step": self.step_idx}
        return obs, rewards, self.done, info

    def _rewards(self, frame: int, deltas: list[np.ndarray]) -> list[RewardBreakdown]:
        cur = self.current_edges(frame)
        ref = self.reference_edges(frame)
        shared = interaction_reward(cur, ref, self.l_hat, self.l_ref, self.config.weights)
        out = []
        for k, skel in enumerate(self.skels):
            reg = regularization_rewards(
                AgentRegState(
                    root_height=float(self.states[k].positions[skel.root_index, 2]),
                    nominal_height=float(skel.joints[skel.root_index].offset[2]),
                    roll=0.0,
                    pitch=0.0,
                    effort=deltas[k],
                ),
                self.config.weights,
            )
            bd = RewardBreakdown(**{**shared.__dict__})
            out.append(total_reward(bd, reg))
        return out

    # -- observations --------------------------------------------------------------

    def observation(self, k: int) -> np.ndarray:
        skel = self.skels[k]
        st = self.states[k]
        other = self.states[1 - k]
        root_slice = skel.dof_layout()[skel.root_index]
        yaw = st.coords[root_slice[0] + 2]
        c, s = math.cos(yaw), math.sin(yaw)
        rel = other.positions[self.skels[1 - k].root_index] - st.positions[skel.root_index]
        rel_local = np.array([c * rel[0] + s * rel[1], -s * rel[0] + c * rel[1], rel[2]])
        frame = self.frame_for_step(min(self.step_idx + 1, self.n_steps))
        ref = self.reference_edges(frame)
        cur = self.current_edges(frame)
        align = _alignment(cur[0, :2], self._ref_root_edges[frame][:2])
        block = np.concatenate(
            [
                ref[:, :3].reshape(-1) / self.l_ref,
                ref[:, 5] / self.l_ref,
                cur[:, :3].reshape(-1) / self.l_hat,
                cur[:, 5] / self.l_hat,
            ]
        )
        return assemble_observation(
            skel=skel,
            coords=st.coords,
            velocities=st.velocities,
            vmax=self.vmax[k],
            l_hat=self.l_hat,
            root_z=float(st.positions[skel.root_index, 2]),
            partner_rel_local=rel_local,
            align=align,
            phase=self.step_idx / self.n_steps,
            ref_block=block,
        )

    def obs_dim(self, k: int) -> int:
        return observation_dim(self.skels[k], self.n_bar)

    def action_dim(self, k: int) -> int:
        return self.skels[k].dof_count

    def max_node_speed_bound(self, k: int) -> float:
        """Loose kinematic speed bound: planar speed plus every rotational
        dof's rate times the norm-length moment arm."""
        v = self.vmax[k]
        skel = self.skels[k]
        root_slice = skel.dof_layout()[skel.root_index]
        planar = float(np.linalg.norm(v[root_slice[0] : root_slice[0] + 2]))
        rest = float(v.sum() - v[root_slice[0] : root_slice[1]].sum() + v[root_slice[0] + 2])
        return planar + rest * skel.norm_length


def assemble_observation(
    skel: Skeleton,
    coords: np.ndarray,
    velocities: np.ndarray,
    vmax: np.ndarray,
    l_hat: float,
    root_z: float,
    partner_rel_local: np.ndarray,
    align: np.ndarray,
    phase: float,
    ref_block: np.ndarray,
) -> np.ndarray:
    """Fixed per-embodiment observation layout; all entries are O(1)-scaled.

    [non-root coords normalized to limits | coord velocities / vmax |
     partner root offset in own heading frame / scene scale | root z / scene
     scale | root-edge alignment cos, sin | phase | reference block: per slot,
     ref rel / L_ref, ref mid_z / L_ref, current rel / L_hat, current mid_z /
     L_hat]. Pretraining reuses the layout with the relational parts zeroed.
    """
    lo, hi = skel.limits_arrays()
    root_slice = skel.dof_layout()[skel.root_index]
    non_root = np.ones(skel.dof_count, dtype=bool)
    non_root[root_slice[0] : root_slice[1]] = False
    center = np.where(np.isfinite(lo + hi), (lo + hi) / 2, 0.0)
    span = np.where(np.isfinite(hi - lo), np.maximum((hi - lo) / 2, 1e-6), 1.0)
    coords_n = ((coords - center) / span)[non_root]
    vel_n = velocities / np.maximum(vmax, 1e-6)
    return np.concatenate(
        [
            coords_n,
            vel_n,
            partner_rel_local / l_hat,
            [root_z / l_hat],
            align,
            [phase],
            ref_block,
        ]
    )


def observation_dim(skel: Skeleton, n_bar: int) -> int:
    return (skel.dof_count - 3) + skel.dof_count + 3 + 1 + 2 + 1 + 8 * (n_bar + 1)


def _wrap(a: float) -> float:
    return (a + math.pi) % (2 * math.pi) - math.pi


def _alignment(cur_xy: np.ndarray, ref_xy: np.ndarray) -> np.ndarray:
    cn, rn = np.linalg.norm(cur_xy), np.linalg.norm(ref_xy)
    if cn < 1e-9 or rn < 1e-9:
        return np.array([0.0, 0.0])
    cos = float(np.dot(cur_xy, ref_xy) / (cn * rn))
    sin = float((cur_xy[0] * ref_xy[1] - cur_xy[1] * ref_xy[0]) / (cn * rn))
    return np.array([cos, sin])


def _demo_skeleton(skeleton_id: str) -> Skeleton:
    from .skeleton import load_skeleton

    return load_skeleton(skeleton_id)


# ---------------------------------------------------------------------------
# Rollouts


@dataclass
class EpisodeLog:
    coords: list[list[np.ndarray]]  # per step, per agent
    actions: list[list[np.ndarray]]
    breakdowns: list[list[RewardBreakdown]]
    returns: np.ndarray  # discounted, per agent
    mean_r_ic: float
    length: int
    terminated_early: bool


def rollout(
    env: InteractionEnv,
    policy: Callable[[list[np.ndarray]], list[np.ndarray]],
    record: bool = False,
) -> EpisodeLog:
    """Run one episode to termination; returns discounted per-agent returns."""
    obs = env.reset()
    gamma = env.config.gamma
    returns = np.zeros(2)
    disc = 1.0
    r_ic_sum, steps = 0.0, 0
    coords_log, act_log, bd_log = [], [], []
    while True:
        actions = policy(obs)
        obs, rewards, done, info = env.step(actions)
        returns += disc * np.array([bd.r_total for bd in rewards])
        disc *= gamma
        r_ic_sum += rewards[0].r_ic
        steps += 1
        if record:
            coords_log.append([st.coords.copy() for st in env.states])
            act_log.append([np.asarray(a, dtype=np.float64).copy() for a in actions])
            bd_log.append(rewards)
        if done:
            break
    return EpisodeLog(
        coords=coords_log,
        actions=act_log,
        breakdowns=bd_log,
        returns=returns,
        mean_r_ic=r_ic_sum / steps,
        length=steps,
        terminated_early=steps < env.n_steps,
    )


def replay_episode(env: InteractionEnv, coords: list[list[np.ndarray]],
                   actions: list[list[np.ndarray]]) -> list[list[RewardBreakdown]]:
    """Recompute rewards from a logged episode for audit.

    Drives the environment with the logged actions and checks the resulting
    coordinates match the log; raises EnvError on divergence.
    """
    env.reset()
    out = []
    for step, (qs, acts) in enumerate(zip(coords, actions)):
        _, rewards, done, _ = env.step(acts)
        for k in range(2):
            if not np.allclose(env.states[k].coords, qs[k], atol=1e-12):
                raise EnvError(f"replay diverged from log at step {step}, agent {k}")
        out.append(rewards)
        if done and step + 1 < len(coords):
            raise EnvError(f"replay terminated early at step {step}")
        if done:
            break
    return out


def teleop_policy(env: InteractionEnv, coord_tracks: list[np.ndarray]) -> Callable:
    """Tracks reference coordinate tracks frame-by-frame (oracle driving).

    Only meaningful when the agents share the reference's topology; used for
    audits and for replaying demonstrations through the feasibility filter.
    """
    for k in range(2):
        if coord_tracks[k].shape[1] != env.skels[k].dof_count:
            raise EnvError(
                f"agent {k}: coord track dof {coord_tracks[k].shape[1]} does not match "
                f"skeleton dof {env.skels[k].dof_count}"
            )

    def policy(obs):
        frame = env.frame_for_step(env.step_idx + 1)
        return [coord_tracks[k][frame] - env.states[k].coords for k in range(2)]

    return policy
