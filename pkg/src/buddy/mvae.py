"""Single-character motion prior: a variational autoencoder over pose transitions.

The encoder maps a transition (s_t, s_{t+1}) to a Gaussian latent; the decoder
maps (s_t, z) back to s_{t+1}. Only the decoder is reused downstream, where a
graph encoder supplies z from interaction features instead of sampling it.

Pose vectors are root-relative and heading-aligned: [root_z, planar velocity
(heading frame), yaw rate, flattened local node offsets]. This makes the
decoder invariant to where in the world a character stands.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import nn
from .motion_io import Trajectory
from .skeleton import Skeleton, heading_yaw, load_skeleton, yaw_matrix


class MvaeError(ValueError):
    pass


def _wrap_angle(a: float) -> float:
    return (a + math.pi) % (2 * math.pi) - math.pi


class PoseFeaturizer:
    """Bidirectional map between world positions and pose feature vectors.

    A feature at frame t needs frame t-1 for the velocity terms, so a track of
    T frames yields T-1 features. Reconstruction integrates the planar state
    from an anchor (previous root xy and heading).
    """

    def __init__(self, skel: Skeleton):
        self.skel = skel
        self.root = skel.root_index
        self.others = [i for i in range(skel.node_count) if i != self.root]
        self.dim = 4 + 3 * len(self.others)

    def feature(self, pos_t: np.ndarray, pos_prev: np.ndarray, fps: float) -> np.ndarray:
        psi = heading_yaw(self.skel, pos_t)
        psi_prev = heading_yaw(self.skel, pos_prev)
        root = pos_t[self.root]
        inv = yaw_matrix(psi).T
        v_xy = inv @ ((root - pos_prev[self.root]) * fps)
        local = (inv @ (pos_t[self.others] - root).T).T
        return np.concatenate(
            [[root[2], v_xy[0], v_xy[1], _wrap_angle(psi - psi_prev) * fps], local.reshape(-1)]
        )

    def track_features(self, positions: np.ndarray, fps: float) -> np.ndarray:
        return np.stack(
            [self.feature(positions[t], positions[t - 1], fps) for t in range(1, len(positions))]
        )

    def reconstruct(
        self, feat: np.ndarray, prev_xy: np.ndarray, prev_yaw: float, fps: float
    ) -> tuple[np.ndarray, np.ndarray, float]:
        """World positions plus the new (xy, yaw) anchor."""
        root_z, vx, vy, yaw_rate = feat[0], feat[1], feat[2], feat[3]
        yaw = prev_yaw + yaw_rate / fps
        rot = yaw_matrix(yaw)
        delta = rot @ np.array([vx, vy, 0.0]) / fps
        xy = prev_xy + delta[:2]
        root = np.array([xy[0], xy[1], root_z])
        local = feat[4:].reshape(-1, 3)
        pos = np.empty((self.skel.node_count, 3))
        pos[self.root] = root
        pos[self.others] = root + (rot @ local.T).T
        return pos, xy, yaw

    def anchor(self, pos: np.ndarray) -> tuple[np.ndarray, float]:
        return pos[self.root][:2].copy(), heading_yaw(self.skel, pos)

    # Batched variants used by evaluation rollouts (leading trial axis).

    def feature_batch(self, pos_t: np.ndarray, pos_prev: np.ndarray, fps: float) -> np.ndarray:
        return np.stack([self.feature(p, q, fps) for p, q in zip(pos_t, pos_prev)])

    def reconstruct_batch(self, feats, prev_xy, prev_yaw, fps):
        out_pos = np.empty((len(feats), self.skel.node_count, 3))
        out_xy = np.empty((len(feats), 2))
        out_yaw = np.empty(len(feats))
        for b in range(len(feats)):
            out_pos[b], out_xy[b], out_yaw[b] = self.reconstruct(
                feats[b], prev_xy[b], prev_yaw[b], fps
            )
        return out_pos, out_xy, out_yaw


@dataclass
class PoseNormalizer:
    """Per-coordinate whitening fitted on the training features."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, features: np.ndarray) -> "PoseNormalizer":
        std = features.std(axis=0)
        return cls(mean=features.mean(axis=0), std=np.maximum(std, 1e-6))

    def normalize(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / self.std

    def denormalize(self, x: np.ndarray) -> np.ndarray:
        return x * self.std + self.mean


@dataclass
class MvaeConfig:
    z_dim: int = 16
    hidden: tuple[int, ...] = (256, 256)
    beta: float = 0.3
    lr: float = 1e-3
    epochs: int = 40
    batch_size: int = 64
    rollout_window: int = 8
    activation: str = "elu"


@dataclass
class MotionVae:
    """Transition VAE; `decode` and `rollout` are the inference surface."""

    encoder: nn.Mlp
    decoder: nn.Mlp
    normalizer: PoseNormalizer
    featurizer: PoseFeaturizer
    config: MvaeConfig
    fps: float
    skeleton_id: str = "humanoid22"

    @property
    def z_dim(self) -> int:
        return self.config.z_dim

    @property
    def feature_dim(self) -> int:
        return self.featurizer.dim

    def decoder_checksum(self) -> str:
        return nn.params_checksum([p.data for p in self.decoder.params])

    def decode(self, q_t: np.ndarray, z: np.ndarray) -> np.ndarray:
        """Next pose feature from the current one and a latent (both unnormalized
        on the feature side; z is used as-is). Deterministic."""
        q_t = np.asarray(q_t, dtype=np.float64)
        z = np.asarray(z, dtype=np.float64)
        batched = q_t.ndim == 2
        qn = self.normalizer.normalize(q_t)
        x = np.concatenate([qn, z], axis=-1)
        if x.shape[-1] != self.decoder.sizes[0]:
            raise MvaeError(
                f"decoder expects input dim {self.decoder.sizes[0]}, got {x.shape[-1]}"
            )
        out = self.decoder.forward_np(x)
        return self.normalizer.denormalize(out) if batched else self.normalizer.denormalize(out)

    def rollout(self, q_0: np.ndarray, z_sequence: np.ndarray) -> np.ndarray:
        """Autoregressive feature rollout: returns (horizon + 1, F)."""
        feats = [np.asarray(q_0, dtype=np.float64)]
        for step, z in enumerate(np.asarray(z_sequence, dtype=np.float64)):
            nxt = self.decode(feats[-1], z)
            if not np.all(np.isfinite(nxt)):
                raise MvaeError(f"rollout diverged at step {step}")
            feats.append(nxt)
        return np.stack(feats)


def transitions_from_trajectory(traj: Trajectory, skel: Skeleton) -> list[np.ndarray]:
    """Per-character feature tracks (each (T-1, F)) from a trajectory."""
    feat = PoseFeaturizer(skel)
    out = []
    for c in traj.characters:
        if c.positions.shape[1] != skel.node_count:
            raise MvaeError(
                f"trajectory character has {c.positions.shape[1]} nodes, skeleton has {skel.node_count}"
            )
        if c.positions.shape[0] < 2:
            raise MvaeError("need at least 2 frames per clip")
        out.append(feat.track_features(c.positions, traj.fps))
    return out


def kl_diag_gaussian(mu: np.ndarray, log_var: np.ndarray) -> float:
    """KL(N(mu, sigma) || N(0, 1)) in closed form, summed over dims."""
    return float(0.5 * np.sum(np.exp(log_var) + mu**2 - 1.0 - log_var))


def train_mvae(
    clips: list[np.ndarray],
    fps: float,
    config: MvaeConfig | None = None,
    seed: int = 0,
    skel: Skeleton | None = None,
) -> tuple[MotionVae, list[dict]]:
    """Fit the transition VAE on feature clips; returns (model, loss history).

    Loss: MSE(next prediction) + beta * KL(latent || N(0,1)). Scheduled
    sampling replaces the conditioning pose with the model's own previous
    prediction, with probability annealed 0 -> 1 across epochs, inside
    windows of `rollout_window` consecutive transitions.
    """
    config = config or MvaeConfig()
    skel = skel or load_skeleton("humanoid22")
    if not clips:
        raise MvaeError("empty dataset")
    for c in clips:
        if c.shape[0] < 1:
            raise MvaeError("each clip needs at least one transition")
    featurizer = PoseFeaturizer(skel)
    dim = clips[0].shape[1]
    if dim != featurizer.dim:
        raise MvaeError(f"feature dim {dim} does not match skeleton ({featurizer.dim})")

    rng = np.random.default_rng(seed)
    norm = PoseNormalizer.fit(np.concatenate(clips, axis=0))
    data = [norm.normalize(c) for c in clips]

    encoder = nn.Mlp([2 * dim, *config.hidden, 2 * config.z_dim], config.activation, rng)
    decoder = nn.Mlp([dim + config.z_dim, *config.hidden, dim], config.activation, rng)
    params = encoder.params + decoder.params
    opt = nn.Adam(params, lr=config.lr)

    window = max(1, config.rollout_window)
    # Window start indices over all clips: (clip, start).
    starts = [
        (ci, s)
        for ci, clip in enumerate(data)
        for s in range(0, max(1, clip.shape[0] - window + 1))
    ]
    windows_per_batch = max(1, config.batch_size // window)
    history: list[dict] = []

    # Fixed teacher-forced probe: comparable across epochs, independent of the
    # scheduled-sampling ramp. Uses the posterior mean latent.
    all_x = np.concatenate([c[:-1] for c in data if c.shape[0] >= 2], axis=0)
    all_y = np.concatenate([c[1:] for c in data if c.shape[0] >= 2], axis=0)
    if all_x.shape[0] == 0:
        all_x = np.concatenate(data, axis=0)
        all_y = all_x
    probe_idx = np.linspace(0, all_x.shape[0] - 1, min(1024, all_x.shape[0])).astype(int)
    probe_x, probe_y = all_x[probe_idx], all_y[probe_idx]

    def probe_loss() -> float:
        stats = encoder.forward_np(np.concatenate([probe_x, probe_y], axis=1))
        mu = stats[:, : config.z_dim]
        pred = decoder.forward_np(np.concatenate([probe_x, mu], axis=1))
        return float(np.mean((pred - probe_y) ** 2))

    p0 = probe_loss()
    history.append({"epoch": -1, "recon": p0, "kl": 0.0, "loss": p0,
                    "eval_recon": p0, "p_self": 0.0})

    for epoch in range(config.epochs):
        p_self = epoch / max(1, config.epochs - 1)
        order = rng.permutation(len(starts))
        ep_recon, ep_kl, n_terms = 0.0, 0.0, 0
        for batch_lo in range(0, len(order), windows_per_batch):
            chosen = [starts[i] for i in order[batch_lo : batch_lo + windows_per_batch]]
            opt.zero_grad()
            losses = []
            recon_acc, kl_acc, count = 0.0, 0.0, 0
            cur = np.stack([data[ci][s] for ci, s in chosen])  # (B, F) conditioning pose
            for w in range(window):
                rows = [(ci, s + w) for ci, s in chosen if s + w < data[ci].shape[0]]
                if not rows:
                    break
                cur = cur[: len(rows)]
                x_t = np.stack([data[ci][t] for ci, t in rows])
                x_next = np.stack(
                    [
                        data[ci][t + 1] if t + 1 < data[ci].shape[0] else data[ci][t]
                        for ci, t in rows
                    ]
                )
                use_self = rng.random(len(rows)) < p_self
                cond = np.where(use_self[:, None], cur, x_t)

                enc_in = nn.constant(np.concatenate([cond, x_next], axis=1))
                stats = encoder(enc_in)
                mu = nn.slice_cols(stats, 0, config.z_dim)
                log_var = nn.slice_cols(stats, config.z_dim, 2 * config.z_dim)
                eps = rng.standard_normal((len(rows), config.z_dim))
                z = nn.add(mu, nn.mul(nn.exp(nn.mul(log_var, 0.5)), nn.constant(eps)))
                pred = decoder(nn.concat_cols([nn.constant(cond), z]))
                err = nn.add(pred, nn.mul(nn.constant(x_next), -1.0))
                recon = nn.tmean(nn.square(err))
                kl = nn.mul(
                    nn.tsum(
                        nn.add(
                            nn.add(nn.exp(log_var), nn.square(mu)),
                            nn.add(nn.mul(log_var, -1.0), nn.constant(-1.0)),
                        )
                    ),
                    0.5 / len(rows),
                )
                losses.append(nn.add(recon, nn.mul(kl, config.beta)))
                recon_acc += float(recon.data)
                kl_acc += float(kl.data)
                count += 1
                cur = pred.data.copy()  # next step's self-conditioning input
            total = losses[0]
            for l in losses[1:]:
                total = nn.add(total, l)
            total = nn.mul(total, 1.0 / len(losses))
            total.backward()
            opt.step()
            ep_recon += recon_acc / count
            ep_kl += kl_acc / count
            n_terms += 1
        history.append(
            {
                "epoch": epoch,
                "recon": ep_recon / n_terms,
                "kl": ep_kl / n_terms,
                "loss": (ep_recon + config.beta * ep_kl) / n_terms,
                "eval_recon": probe_loss(),
                "p_self": p_self,
            }
        )
    model = MotionVae(
        encoder=encoder,
        decoder=decoder,
        normalizer=norm,
        featurizer=featurizer,
        config=config,
        fps=fps,
        skeleton_id=skel.name,
    )
    return model, history


# ---------------------------------------------------------------------------
# Checkpointing


def save_mvae(model: MotionVae, path: str | Path):
    arrays = {}
    for label, mlp in (("enc", model.encoder), ("dec", model.decoder)):
        for k, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
            arrays[f"{label}.w{k}"] = w.data
            arrays[f"{label}.b{k}"] = b.data
    arrays["norm.mean"] = model.normalizer.mean
    arrays["norm.std"] = model.normalizer.std
    meta = {
        "kind": "mvae",
        "z_dim": model.config.z_dim,
        "hidden": list(model.config.hidden),
        "beta": model.config.beta,
        "activation": model.config.activation,
        "fps": model.fps,
        "skeleton": model.skeleton_id,
        "feature_dim": model.feature_dim,
    }
    nn.save_checkpoint(path, arrays, meta)


def load_mvae(path: str | Path) -> MotionVae:
    arrays, meta = nn.load_checkpoint(path)
    if meta.get("kind") != "mvae":
        raise MvaeError(f"{path} is not a motion-vae checkpoint")
    skel = load_skeleton(meta["skeleton"])
    config = MvaeConfig(
        z_dim=int(meta["z_dim"]),
        hidden=tuple(meta["hidden"]),
        beta=float(meta["beta"]),
        activation=meta["activation"],
    )
    featurizer = PoseFeaturizer(skel)
    dim = featurizer.dim
    encoder = nn.Mlp([2 * dim, *config.hidden, 2 * config.z_dim], config.activation)
    decoder = nn.Mlp([dim + config.z_dim, *config.hidden, dim], config.activation)
    for label, mlp in (("enc", encoder), ("dec", decoder)):
        for k in range(len(mlp.weights)):
            mlp.weights[k].data = arrays[f"{label}.w{k}"]
            mlp.biases[k].data = arrays[f"{label}.b{k}"]
    norm = PoseNormalizer(mean=arrays["norm.mean"], std=arrays["norm.std"])
    return MotionVae(
        encoder=encoder,
        decoder=decoder,
        normalizer=norm,
        featurizer=featurizer,
        config=config,
        fps=float(meta["fps"]),
        skeleton_id=meta["skeleton"],
    )
