"""Centralized hierarchical control for two-agent transfer.

One high-level network reads both agents' observations and emits a latent per
agent; per-embodiment low-level networks turn (latent, own observation) into
normalized joint-target deltas. Agents with the same embodiment share one
low-level network object, so an update through either agent moves both.

Low-level networks are pretrained supervised: a throwaway frame encoder plays
the high level's role by encoding the next reference frame, and the low level
learns the action that tracks it. Transfer training then optimizes the whole
stack against the environment reward with a clipped-surrogate policy gradient
(generalized advantage estimation, learned value baseline) or, alternatively,
a separable evolution strategy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import nn
from .env import (
    InteractionEnv,
    assemble_observation,
    default_dof_vmax,
    observation_dim,
    rollout,
)
from .skeleton import GeneralizedCoords, Skeleton, forward_kinematics


class PolicyError(ValueError):
    pass


@dataclass
class PolicyConfig:
    latent_dim: int = 16
    high_hidden: tuple[int, ...] = (128, 128)
    low_hidden: tuple[int, ...] = (128, 128)
    log_std_init: float = -1.0


class PolicyBundle:
    """High-level coordinator plus aliased per-embodiment low-level policies."""

    def __init__(
        self,
        embodiments: list[str],
        obs_dims: list[int],
        action_dims: list[int],
        action_scales: list[np.ndarray],
        config: PolicyConfig | None = None,
        rng: np.random.Generator | None = None,
    ):
        if len(embodiments) != len(obs_dims) or len(embodiments) != len(action_dims):
            raise PolicyError("embodiments, obs_dims and action_dims must align")
        config = config or PolicyConfig()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.config = config
        self.embodiments = list(embodiments)
        self.obs_dims = list(obs_dims)
        self.action_dims = list(action_dims)
        self.action_scales = [np.asarray(s, dtype=np.float64) for s in action_scales]
        self.n_agents = len(embodiments)
        total_obs = sum(obs_dims)
        self.high: Optional[nn.Mlp] = None
        if config.latent_dim > 0:
            self.high = nn.Mlp(
                [total_obs, *config.high_hidden, config.latent_dim * self.n_agents], "elu", rng
            )
        # One low-level network per distinct embodiment; duplicates alias it.
        self.low: dict[str, nn.Mlp] = {}
        self.log_std: dict[str, nn.Tensor] = {}
        for emb, od, ad in zip(embodiments, obs_dims, action_dims):
            if emb in self.low:
                if self.low[emb].sizes[0] != config.latent_dim + od or self.low[emb].sizes[-1] != ad:
                    raise PolicyError(f"embodiment {emb!r} reused with different dimensions")
                continue
            self.low[emb] = nn.Mlp([config.latent_dim + od, *config.low_hidden, ad], "elu", rng)
            self.log_std[emb] = nn.parameter(np.full(ad, config.log_std_init))

    # -- parameters ------------------------------------------------------------

    def actor_params(self, include_low: bool = True) -> list[nn.Tensor]:
        params: list[nn.Tensor] = []
        if self.high is not None:
            params.extend(self.high.params)
        if include_low:
            for emb in sorted(self.low):
                params.extend(self.low[emb].params)
        for emb in sorted(self.log_std):
            params.append(self.log_std[emb])
        return params

    def checksum(self) -> str:
        return nn.params_checksum([p.data for p in self.actor_params()])

    def low_checksum(self, embodiment: str) -> str:
        return nn.params_checksum([p.data for p in self.low[embodiment].params])

    # -- acting ------------------------------------------------------------------

    def latents_np(self, obs: list[np.ndarray]) -> list[np.ndarray]:
        if self.high is None:
            return [np.zeros(0) for _ in range(self.n_agents)]
        joint = np.concatenate(obs)
        out = self.high.forward_np(joint)
        ld = self.config.latent_dim
        return [out[k * ld : (k + 1) * ld] for k in range(self.n_agents)]

    def act(
        self,
        obs: list[np.ndarray],
        stochastic: bool = False,
        rng: np.random.Generator | None = None,
        details: bool = False,
    ):
        """Actions per agent (joint-target deltas, already scaled).

        Deterministic mode returns the mean action; stochastic mode adds
        Gaussian exploration noise in normalized units.
        """
        for k, o in enumerate(obs):
            if o.shape != (self.obs_dims[k],):
                raise PolicyError(
                    f"agent {k}: observation has shape {o.shape}, expected ({self.obs_dims[k]},)"
                )
        latents = self.latents_np(obs)
        actions, norms, low_inputs = [], [], []
        for k, emb in enumerate(self.embodiments):
            inp = np.concatenate([latents[k], obs[k]])
            low_inputs.append(inp)
            mean = self.low[emb].forward_np(inp)
            a_norm = mean
            if stochastic:
                if rng is None:
                    raise PolicyError("stochastic action sampling needs an rng")
                a_norm = mean + np.exp(self.log_std[emb].data) * rng.standard_normal(mean.shape)
            norms.append(a_norm)
            actions.append(a_norm * self.action_scales[k])
        if details:
            return actions, {"latents": latents, "low_inputs": low_inputs, "norm_actions": norms}
        return actions


def act(bundle: PolicyBundle, obs: list[np.ndarray], stochastic: bool,
        rng: np.random.Generator | None = None) -> list[np.ndarray]:
    return bundle.act(obs, stochastic=stochastic, rng=rng)


# ---------------------------------------------------------------------------
# Motion dataset + low-level pretraining


def sample_motion_dataset(
    skel: Skeleton,
    seed: int,
    clips: int = 8,
    duration_s: float = 8.0,
    control_hz: float = 30.0,
) -> list[np.ndarray]:
    """Smooth random in-limit coordinate tracks for one embodiment.

    Each degree of freedom follows a sum of three low-frequency sinusoids
    scaled into its limit range, with rates capped by the default velocity
    limits. The planar root wanders gently around the spawn.
    """
    rng = np.random.default_rng(seed)
    lo, hi = skel.limits_arrays()
    vmax = default_dof_vmax(skel)
    steps = int(duration_s * control_hz) + 1
    t = np.arange(steps) / control_hz
    root_slice = skel.dof_layout()[skel.root_index]
    out = []
    for _ in range(clips):
        track = np.zeros((steps, skel.dof_count))
        for d in range(skel.dof_count):
            span = hi[d] - lo[d]
            if not np.isfinite(span):
                span = 2.0
            center = (hi[d] + lo[d]) / 2 if np.isfinite(hi[d] + lo[d]) else 0.0
            amp_budget = 0.4 * span / 2
            wave = np.zeros(steps)
            for _h in range(3):
                f = rng.uniform(0.1, 0.7)
                a = rng.uniform(0.2, 1.0)
                # Rate cap: amplitude * 2 pi f <= 0.8 * vmax.
                a_max = 0.8 * vmax[d] / (2 * math.pi * f)
                a = min(a * amp_budget / 3, a_max / 3)
                wave += a * np.sin(2 * math.pi * f * t + rng.uniform(0, 2 * math.pi))
            track[:, d] = center + wave
        # Planar root: gentle wander, keep near origin.
        for off in (0, 1):
            track[:, root_slice[0] + off] *= 0.2
        out.append(np.clip(track, lo, hi))
    return out


@dataclass
class PretrainConfig:
    epochs: int = 60
    batch_size: int = 128
    lr: float = 1e-3
    encoder_hidden: tuple[int, ...] = (64,)


def pretrain_low_level(
    skel: Skeleton,
    dataset: list[np.ndarray],
    bundle_config: PolicyConfig,
    n_bar: int,
    l_hat: float,
    control_hz: float = 30.0,
    config: PretrainConfig | None = None,
    seed: int = 0,
) -> tuple[nn.Mlp, nn.Tensor, list[dict]]:
    """Supervised reference tracking for one embodiment.

    A frame encoder maps the next reference frame to a latent; the low-level
    net maps (latent, local observation) to the normalized tracking action.
    The encoder is discarded by callers after pretraining; only the low-level
    network and its exploration log-std are kept.
    """
    config = config or PretrainConfig()
    if not dataset:
        raise PolicyError("empty pretraining dataset")
    rng = np.random.default_rng(seed)
    dt = 1.0 / control_hz
    vmax = default_dof_vmax(skel)
    max_delta = vmax * dt
    obs_dim = observation_dim(skel, n_bar)
    d = skel.dof_count
    lo, hi = skel.limits_arrays()
    center = np.where(np.isfinite(lo + hi), (lo + hi) / 2, 0.0)
    span = np.where(np.isfinite(hi - lo), np.maximum((hi - lo) / 2, 1e-6), 1.0)

    latent_dim = bundle_config.latent_dim
    encoder = nn.Mlp([2 * d, *config.encoder_hidden, latent_dim], "elu", rng) if latent_dim else None
    low = nn.Mlp([latent_dim + obs_dim, *bundle_config.low_hidden, d], "elu", rng)
    log_std = nn.parameter(np.full(d, bundle_config.log_std_init))
    params = low.params + (encoder.params if encoder else [])
    opt = nn.Adam(params, lr=config.lr)

    samples = []
    zeros_block = np.zeros(8 * (n_bar + 1))
    for track in dataset:
        steps = track.shape[0]
        for t in range(1, steps - 1):
            vel = (track[t] - track[t - 1]) / dt
            target = np.clip(track[t + 1] - track[t], -max_delta, max_delta)
            pose = forward_kinematics(skel, GeneralizedCoords(track[t]))
            obs = assemble_observation(
                skel=skel,
                coords=track[t],
                velocities=vel,
                vmax=vmax,
                l_hat=l_hat,
                root_z=float(pose.positions[skel.root_index, 2]),
                partner_rel_local=np.zeros(3),
                align=np.zeros(2),
                phase=t / steps,
                ref_block=zeros_block,
            )
            enc_in = np.concatenate([(track[t + 1] - center) / span, target / max_delta])
            samples.append((obs, enc_in, target / max_delta))
    obs_arr = np.stack([s[0] for s in samples])
    enc_arr = np.stack([s[1] for s in samples])
    tgt_arr = np.stack([s[2] for s in samples])

    history = []
    n = obs_arr.shape[0]
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total, batches = 0.0, 0
        for lo_i in range(0, n, config.batch_size):
            idx = order[lo_i : lo_i + config.batch_size]
            opt.zero_grad()
            if encoder is not None:
                lat = encoder(nn.constant(enc_arr[idx]))
                inp = nn.concat_cols([lat, nn.constant(obs_arr[idx])])
            else:
                inp = nn.constant(obs_arr[idx])
            pred = low(inp)
            err = nn.add(pred, nn.constant(-tgt_arr[idx]))
            loss = nn.tmean(nn.square(err))
            loss.backward()
            opt.step()
            total += float(loss.data)
            batches += 1
        history.append({"epoch": epoch, "loss": total / batches})
    return low, log_std, history


def tracking_error(
    skel: Skeleton,
    low: nn.Mlp,
    dataset: list[np.ndarray],
    bundle_config: PolicyConfig,
    n_bar: int,
    l_hat: float,
    control_hz: float = 30.0,
    encoder: nn.Mlp | None = None,
) -> float:
    """Mean per-node position error (meters) when the low level tracks a
    reference through the same latent interface used during pretraining."""
    dt = 1.0 / control_hz
    vmax = default_dof_vmax(skel)
    max_delta = vmax * dt
    lo, hi = skel.limits_arrays()
    center = np.where(np.isfinite(lo + hi), (lo + hi) / 2, 0.0)
    span = np.where(np.isfinite(hi - lo), np.maximum((hi - lo) / 2, 1e-6), 1.0)
    zeros_block = np.zeros(8 * (n_bar + 1))
    errors = []
    for track in dataset:
        q = track[0].copy()
        vel = np.zeros_like(q)
        for t in range(track.shape[0] - 1):
            target = np.clip(track[t + 1] - q, -max_delta, max_delta)
            pose = forward_kinematics(skel, GeneralizedCoords(q))
            obs = assemble_observation(
                skel=skel, coords=q, velocities=vel, vmax=vmax, l_hat=l_hat,
                root_z=float(pose.positions[skel.root_index, 2]),
                partner_rel_local=np.zeros(3), align=np.zeros(2),
                phase=t / track.shape[0], ref_block=zeros_block,
            )
            if encoder is not None:
                enc_in = np.concatenate([(track[t + 1] - center) / span, target / max_delta])
                lat = encoder.forward_np(enc_in)
                inp = np.concatenate([lat, obs])
            else:
                inp = obs
            a = np.clip(low.forward_np(inp) * max_delta, -max_delta, max_delta)
            new_q = np.clip(q + a, lo, hi)
            vel = (new_q - q) / dt
            q = new_q
            ref_pose = forward_kinematics(skel, GeneralizedCoords(track[t + 1]))
            cur_pose = forward_kinematics(skel, GeneralizedCoords(q))
            errors.append(
                float(np.linalg.norm(cur_pose.positions - ref_pose.positions, axis=1).mean())
            )
    return float(np.mean(errors))


# ---------------------------------------------------------------------------
# Transfer training


@dataclass
class TransferConfig:
    algo: str = "ppo"  # ppo | es
    iterations: int = 40
    episodes_per_iter: int = 8
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip: float = 0.2
    ppo_epochs: int = 8
    minibatch: int = 512
    lr: float = 3e-4
    vf_lr: float = 1e-3
    ent_coef: float = 0.0
    value_hidden: tuple[int, ...] = (128, 128)
    freeze_low: bool = False
    es_sigma: float = 0.05
    es_pop: int = 16
    es_lr: float = 0.05


@dataclass
class TrainReport:
    rows: list[dict] = field(default_factory=list)

    def append(self, **kwargs):
        self.rows.append(kwargs)


def random_policy_baseline(env: InteractionEnv, bundle: PolicyBundle, seed: int,
                           episodes: int = 3) -> dict:
    """Mean r_ic and episode length of the untrained stochastic policy."""
    rng = np.random.default_rng(seed)
    r_ics, lengths = [], []
    for _ in range(episodes):
        log = rollout(env, lambda obs: bundle.act(obs, stochastic=True, rng=rng))
        r_ics.append(log.mean_r_ic)
        lengths.append(log.length)
    return {"mean_r_ic": float(np.mean(r_ics)), "mean_length": float(np.mean(lengths))}


def train_transfer(
    env: InteractionEnv,
    bundle: PolicyBundle,
    config: TransferConfig | None = None,
    seed: int = 0,
) -> tuple[PolicyBundle, TrainReport]:
    """Optimize the bundle against the environment's discounted return."""
    config = config or TransferConfig()
    if config.algo == "ppo":
        return _train_ppo(env, bundle, config, seed)
    if config.algo == "es":
        return _train_es(env, bundle, config, seed)
    raise PolicyError(f"unknown algorithm {config.algo!r}")


def _gaussian_logp_np(a_norm: np.ndarray, mean: np.ndarray, log_std: np.ndarray) -> float:
    z = (a_norm - mean) / np.exp(log_std)
    return float(-0.5 * (z @ z) - log_std.sum() - 0.5 * len(log_std) * math.log(2 * math.pi))

def _collect_episode(env, bundle, rng):
    obs = env.reset()
    rows = []
    r_ic_sum = 0.0
    while True:
        actions, det = bundle.act(obs, stochastic=True, rng=rng, details=True)
        logp = 0.0
        for k, emb in enumerate(bundle.embodiments):
            mean = bundle.low[emb].forward_np(det["low_inputs"][k])
            logp += _gaussian_logp_np(det["norm_actions"][k], mean, bundle.log_std[emb].data)
        new_obs, rewards, done, info = env.step(actions)
        rows.append(
            {
                "obs": obs,
                "norm_actions": det["norm_actions"],
                "logp": logp,
                "reward": float(np.mean([bd.r_total for bd in rewards])),
                "r_ic": rewards[0].r_ic,
            }
        )
        r_ic_sum += rewards[0].r_ic
        obs = new_obs
        if done:
            break
    return rows, r_ic_sum / len(rows), len(rows) < env.n_steps


def _train_ppo(env, bundle, config, seed):
    rng = np.random.default_rng(seed)
    total_obs = sum(bundle.obs_dims)
    critic = nn.Mlp([total_obs, *config.value_hidden, 1], "elu", rng)
    actor_params = bundle.actor_params(include_low=not config.freeze_low)
    opt_actor = nn.Adam(actor_params, lr=config.lr)
    opt_critic = nn.Adam(critic.params, lr=config.vf_lr)
    report = TrainReport()

    for it in range(config.iterations):
        episodes = []
        r_ics, lengths, terms = [], [], []
        for _ in range(config.episodes_per_iter):
            rows, mean_ric, early = _collect_episode(env, bundle, rng)
            episodes.append(rows)
            r_ics.append(mean_ric)
            lengths.append(len(rows))
            terms.append(early)
        # GAE over each episode.
        all_joint_obs, all_obs_per_agent, all_actions, all_logp, all_adv, all_ret = (
            [], [[] for _ in range(bundle.n_agents)], [[] for _ in range(bundle.n_agents)], [], [], [],
        )
        mean_return = 0.0
        for rows in episodes:
            joint = np.stack([np.concatenate(r["obs"]) for r in rows])
            values = critic.forward_np(joint)[:, 0]
            rewards = np.array([r["reward"] for r in rows])
            mean_return += rewards.sum()
            adv = np.zeros(len(rows))
            last = 0.0
            for t in reversed(range(len(rows))):
                next_v = values[t + 1] if t + 1 < len(rows) else 0.0
                delta = rewards[t] + config.gamma * next_v - values[t]
                last = delta + config.gamma * config.gae_lambda * last
                adv[t] = last
            rets = adv + values
            all_joint_obs.append(joint)
            all_adv.append(adv)
            all_ret.append(rets)
            all_logp.extend(r["logp"] for r in rows)
            for k in range(bundle.n_agents):
                all_obs_per_agent[k].extend(r["obs"][k] for r in rows)
                all_actions[k].extend(r["norm_actions"][k] for r in rows)
        mean_return /= len(episodes)
        if not math.isfinite(mean_return):
            raise PolicyError(f"training diverged at iteration {it}: non-finite return")
        joint_obs = np.concatenate(all_joint_obs)
        adv = np.concatenate(all_adv)
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
        rets = np.concatenate(all_ret)
        logp_old = np.array(all_logp)
        obs_k = [np.stack(all_obs_per_agent[k]) for k in range(bundle.n_agents)]
        act_k = [np.stack(all_actions[k]) for k in range(bundle.n_agents)]
        n = joint_obs.shape[0]
        ld = bundle.config.latent_dim

        for _epoch in range(config.ppo_epochs):
            order = rng.permutation(n)
            for lo_i in range(0, n, config.minibatch):
                idx = order[lo_i : lo_i + config.minibatch]
                opt_actor.zero_grad()
                logp_new = None
                ent = None
                if bundle.high is not None:
                    latents = bundle.high(nn.constant(joint_obs[idx]))
                for k, emb in enumerate(bundle.embodiments):
                    if bundle.high is not None and ld > 0:
                        lat_k = nn.slice_cols(latents, k * ld, (k + 1) * ld)
                        inp = nn.concat_cols([lat_k, nn.constant(obs_k[k][idx])])
                    else:
                        inp = nn.constant(obs_k[k][idx])
                    mean = bundle.low[emb](inp)
                    log_std = bundle.log_std[emb]
                    inv_std = nn.exp(nn.mul(log_std, -1.0))
                    diff = nn.mul(nn.add(nn.constant(act_k[k][idx]), nn.mul(mean, -1.0)), inv_std)
                    quad = nn.mul(nn.tsum(nn.square(diff), axis=1), -0.5)
                    const = -0.5 * bundle.action_dims[k] * math.log(2 * math.pi)
                    lp_k = nn.add(quad, nn.add(nn.mul(nn.tsum(log_std), -1.0), nn.constant(const)))
                    logp_new = lp_k if logp_new is None else nn.add(logp_new, lp_k)
                    ent_k = nn.tsum(log_std)
                    ent = ent_k if ent is None else nn.add(ent, ent_k)
                ratio = nn.exp(nn.add(logp_new, nn.constant(-logp_old[idx])))
                a_const = nn.constant(adv[idx])
                unclipped = nn.mul(ratio, a_const)
                clipped = nn.mul(
                    nn.constant(np.clip(ratio.data, 1 - config.clip, 1 + config.clip)), a_const
                )
                # min(u, c) = c where u > c: realize with a data-dependent mask.
                take_clipped = (unclipped.data > clipped.data).astype(np.float64)
                surrogate = nn.add(
                    nn.mul(unclipped, 1.0 - take_clipped), nn.mul(clipped, take_clipped)
                )
                loss = nn.mul(nn.tmean(surrogate), -1.0)
                if config.ent_coef > 0:
                    loss = nn.add(loss, nn.mul(ent, -config.ent_coef))
                loss.backward()
                opt_actor.step()

                opt_critic.zero_grad()
                v = critic(nn.constant(joint_obs[idx]))
                verr = nn.add(nn.reshape(v, (-1,)), nn.constant(-rets[idx]))
                vloss = nn.tmean(nn.square(verr))
                vloss.backward()
                opt_critic.step()

        report.append(
            iteration=it,
            mean_return=float(mean_return),
            mean_r_ic=float(np.mean(r_ics)),
            mean_length=float(np.mean(lengths)),
            termination_rate=float(np.mean(terms)),
            checksum=bundle.checksum(),
        )
    return bundle, report


def _flatten(params: list[nn.Tensor]) -> np.ndarray:
    return np.concatenate([p.data.reshape(-1) for p in params])


def _unflatten(params: list[nn.Tensor], flat: np.ndarray):
    c = 0
    for p in params:
        n = p.data.size
        p.data = flat[c : c + n].reshape(p.data.shape).copy()
        c += n


def _train_es(env, bundle, config, seed):
    """Separable evolution strategy with antithetic sampling and rank shaping."""
    rng = np.random.default_rng(seed)
    params = bundle.actor_params(include_low=not config.freeze_low)
    theta = _flatten(params)
    report = TrainReport()

    def fitness(flat):
        _unflatten(params, flat)
        log = rollout(env, lambda obs: bundle.act(obs, stochastic=False))
        return float(log.returns.mean()), log

    for it in range(config.iterations):
        half = config.es_pop // 2
        noise = rng.standard_normal((half, theta.size))
        eps = np.concatenate([noise, -noise])
        fits = np.empty(eps.shape[0])
        for i in range(eps.shape[0]):
            fits[i], _ = fitness(theta + config.es_sigma * eps[i])
        ranks = np.empty_like(fits)
        ranks[np.argsort(fits)] = np.linspace(-0.5, 0.5, len(fits))
        theta = theta + config.es_lr / (len(fits) * config.es_sigma) * (eps.T @ ranks)
        center_fit, log = fitness(theta)
        if not math.isfinite(center_fit):
            raise PolicyError(f"training diverged at iteration {it}: non-finite return")
        report.append(
            iteration=it,
            mean_return=center_fit,
            mean_r_ic=log.mean_r_ic,
            mean_length=float(log.length),
            termination_rate=float(log.terminated_early),
            checksum=bundle.checksum(),
        )
    _unflatten(params, theta)
    return bundle, report


# ---------------------------------------------------------------------------
# Checkpointing


def save_bundle(bundle: PolicyBundle, path: str | Path):
    arrays: dict[str, np.ndarray] = {}
    if bundle.high is not None:
        for k, (w, b) in enumerate(zip(bundle.high.weights, bundle.high.biases)):
            arrays[f"high.w{k}"] = w.data
            arrays[f"high.b{k}"] = b.data
    for emb in sorted(bundle.low):
        mlp = bundle.low[emb]
        for k, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
            arrays[f"low.{emb}.w{k}"] = w.data
            arrays[f"low.{emb}.b{k}"] = b.data
        arrays[f"log_std.{emb}"] = bundle.log_std[emb].data
    for k, s in enumerate(bundle.action_scales):
        arrays[f"scale.{k}"] = s
    meta = {
        "kind": "policy",
        "embodiments": bundle.embodiments,
        "obs_dims": bundle.obs_dims,
        "action_dims": bundle.action_dims,
        "latent_dim": bundle.config.latent_dim,
        "high_hidden": list(bundle.config.high_hidden),
        "low_hidden": list(bundle.config.low_hidden),
    }
    nn.save_checkpoint(path, arrays, meta)


def load_bundle(path: str | Path) -> PolicyBundle:
    arrays, meta = nn.load_checkpoint(path)
    if meta.get("kind") != "policy":
        raise PolicyError(f"{path} is not a policy checkpoint")
    config = PolicyConfig(
        latent_dim=int(meta["latent_dim"]),
        high_hidden=tuple(meta["high_hidden"]),
        low_hidden=tuple(meta["low_hidden"]),
    )
    bundle = PolicyBundle(
        embodiments=list(meta["embodiments"]),
        obs_dims=[int(v) for v in meta["obs_dims"]],
        action_dims=[int(v) for v in meta["action_dims"]],
        action_scales=[arrays[f"scale.{k}"] for k in range(len(meta["embodiments"]))],
        config=config,
    )
    if bundle.high is not None:
        for k in range(len(bundle.high.weights)):
            bundle.high.weights[k].data = arrays[f"high.w{k}"]
            bundle.high.biases[k].data = arrays[f"high.b{k}"]
    for emb in sorted(bundle.low):
        mlp = bundle.low[emb]
        for k in range(len(mlp.weights)):
            mlp.weights[k].data = arrays[f"low.{emb}.w{k}"]
            mlp.biases[k].data = arrays[f"low.{emb}.b{k}"]
        bundle.log_std[emb].data = arrays[f"log_std.{emb}"]
    return bundle
