"""Interaction-consistency and regularization rewards for transfer training.

The consistency reward compares the agents' current selected edges against the
demonstration's reference edges through three distances: normalized edge
lengths, the planar direction of the root-to-root edge, and normalized
midpoint heights. The combination is multiplicative, with a small additive
escape term driven by lengths alone so the signal stays alive far from the
reference:

    r_ic = 0.9 * exp(-w_l * d_l) * exp(-w_ed * d_ed) * exp(-w_cp * d_cp)
         + 0.1 * exp(-w_far * d_far),      d_far = d_l

By convention, edge arrays are (M, 6) rows of [rel, mid] and slot 0 is always
the root-to-root edge; callers prepend it regardless of what the selector
chose so the direction metric always has its operand.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .igraph import edge_length, edge_mid_height, edge_rel_xy


class RewardError(ValueError):
    pass


# Mixture coefficients of the multiplicative and escape terms.
MIX_MAIN = 0.9
MIX_FAR = 0.1


@dataclass(frozen=True)
class RewardWeights:
    """Exponential sharpness per distance; w_far must stay the gentlest."""

    w_l: float = 2.0
    w_ed: float = 1.0
    w_cp: float = 1.0
    w_far: float = 0.2
    w_height: float = 2.0
    w_lateral: float = 1.0
    w_torque: float = 0.05

    def __post_init__(self):
        for name in ("w_l", "w_ed", "w_cp", "w_far", "w_height", "w_lateral", "w_torque"):
            if getattr(self, name) <= 0:
                raise RewardError(f"{name} must be positive, got {getattr(self, name)}")
        if self.w_far >= min(self.w_l, self.w_ed, self.w_cp):
            raise RewardError(
                f"w_far ({self.w_far}) must be smaller than w_l/w_ed/w_cp "
                f"({self.w_l}, {self.w_ed}, {self.w_cp})"
            )


@dataclass
class RewardBreakdown:
    d_l: float = 0.0
    d_ed: float = 0.0
    d_cp: float = 0.0
    d_far: float = 0.0
    r_ic: float = 1.0
    r_height: float = 1.0
    r_lateral: float = 1.0
    r_torque: float = 1.0
    r_total: float = 1.0
    ed_cosine: float = 1.0  # raw direction cosine, kept inspectable
    ed_degenerate: bool = False  # root edge had a (near) vertical projection

    def as_row(self) -> dict:
        return {
            "d_l": self.d_l,
            "d_ed": self.d_ed,
            "d_cp": self.d_cp,
            "d_far": self.d_far,
            "r_ic": self.r_ic,
            "r_height": self.r_height,
            "r_lateral": self.r_lateral,
            "r_torque": self.r_torque,
            "r_total": self.r_total,
            "ed_cosine": self.ed_cosine,
            "ed_degenerate": int(self.ed_degenerate),
        }


def _check_edges(current: np.ndarray, reference: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    cur = np.asarray(current, dtype=np.float64)
    ref = np.asarray(reference, dtype=np.float64)
    if cur.ndim != 2 or cur.shape[1] != 6 or ref.shape != cur.shape:
        raise RewardError(f"edge arrays must share shape (M, 6); got {cur.shape} vs {ref.shape}")
    return cur, ref


def d_length(current: np.ndarray, reference: np.ndarray, l_hat: float, l_ref: float) -> float:
    """Sum over edges of |len(cur)/l_hat - len(ref)/l_ref|."""
    cur, ref = _check_edges(current, reference)
    if l_hat <= 0 or l_ref <= 0:
        raise RewardError("normalization lengths must be positive")
    return float(np.abs(edge_length(cur) / l_hat - edge_length(ref) / l_ref).sum())


def d_center_point(current: np.ndarray, reference: np.ndarray, l_hat: float, l_ref: float) -> float:
    """Sum over edges of |mid_z(cur)/l_hat - mid_z(ref)/l_ref|."""
    cur, ref = _check_edges(current, reference)
    if l_hat <= 0 or l_ref <= 0:
        raise RewardError("normalization lengths must be positive")
    return float(np.abs(edge_mid_height(cur) / l_hat - edge_mid_height(ref) / l_ref).sum())


def _direction_terms(current_root: np.ndarray, reference_root: np.ndarray,
                     eps: float = 1e-9) -> tuple[float, float, bool]:
    """(distance in [0, 2], raw cosine, degenerate flag) of the root edge pair.

    The cosine compares XY projections; a vanishing projection on either side
    has no defined direction, and the distance defaults to the orthogonal
    value 1.
    """
    cur_xy = edge_rel_xy(np.asarray(current_root, dtype=np.float64))
    ref_xy = edge_rel_xy(np.asarray(reference_root, dtype=np.float64))
    cur_n = float(np.linalg.norm(cur_xy))
    ref_n = float(np.linalg.norm(ref_xy))
    if cur_n < eps or ref_n < eps:
        return 1.0, 0.0, True
    cos = float(np.dot(cur_xy, ref_xy) / (cur_n * ref_n))
    cos = min(max(cos, -1.0), 1.0)
    return 1.0 - cos, cos, False


def d_edge_direction(current_root: np.ndarray, reference_root: np.ndarray) -> float:
    """1 - cos of the XY angle between the two root edges (aligned -> 0,
    orthogonal -> 1, opposed -> 2)."""
    dist, _, _ = _direction_terms(current_root, reference_root)
    return dist


def consistency_from_distances(d_l: float, d_ed: float, d_cp: float,
                               weights: RewardWeights) -> float:
    if min(d_l, d_ed, d_cp) < 0 or not all(map(math.isfinite, (d_l, d_ed, d_cp))):
        raise RewardError(f"distances must be finite and non-negative: {(d_l, d_ed, d_cp)}")
    main = MIX_MAIN * math.exp(-weights.w_l * d_l) * math.exp(-weights.w_ed * d_ed) * math.exp(
        -weights.w_cp * d_cp)
    return main + MIX_FAR * math.exp(-weights.w_far * d_l)


def interaction_reward(
    current_edges: np.ndarray,
    reference_edges: np.ndarray,
    l_hat: float,
    l_ref: float,
    weights: RewardWeights,
) -> RewardBreakdown:
    """Consistency part of the reward; slot 0 of both arrays is the root edge."""
    cur, ref = _check_edges(current_edges, reference_edges)
    d_l = d_length(cur, ref, l_hat, l_ref)
    d_cp = d_center_point(cur, ref, l_hat, l_ref)
    d_ed, cos, degenerate = _direction_terms(cur[0], ref[0])
    r_ic = consistency_from_distances(d_l, d_ed, d_cp, weights)
    return RewardBreakdown(
        d_l=d_l, d_ed=d_ed, d_cp=d_cp, d_far=d_l, r_ic=r_ic,
        ed_cosine=cos, ed_degenerate=degenerate, r_total=r_ic,
    )


@dataclass(frozen=True)
class AgentRegState:
    """What the regularizers look at; effort is a per-step actuation proxy."""

    root_height: float
    nominal_height: float
    roll: float = 0.0
    pitch: float = 0.0
    effort: np.ndarray = field(default_factory=lambda: np.zeros(1))


def regularization_rewards(state: AgentRegState, weights: RewardWeights) -> dict:
    """Each component lives in (0, 1] and decreases in its deviation."""
    r_h = math.exp(-weights.w_height * abs(state.root_height - state.nominal_height))
    r_lat = math.exp(-weights.w_lateral * (state.roll**2 + state.pitch**2))
    effort = np.asarray(state.effort, dtype=np.float64)
    r_tau = math.exp(-weights.w_torque * float(effort @ effort))
    return {"r_height": r_h, "r_lateral": r_lat, "r_torque": r_tau}


def total_reward(breakdown: RewardBreakdown, reg: dict) -> RewardBreakdown:
    breakdown.r_height = reg["r_height"]
    breakdown.r_lateral = reg["r_lateral"]
    breakdown.r_torque = reg["r_torque"]
    breakdown.r_total = (
        breakdown.r_ic * breakdown.r_height * breakdown.r_lateral * breakdown.r_torque
    )
    return breakdown
