"""Sparse interaction-graph learning by hard multi-head attention.

Each attention head selects exactly one inter-character edge per frame; the
selected raw 6D features are encoded into the motion decoder's latent space so
that each character's next pose can be predicted from its own pose plus the
selected edges. Training minimizes that prediction error plus a temporal
consistency penalty on the selection weights.

Selection variants used by the ablation table:
  attention: learned hard attention with n_bar heads (the default)
  fixed:     n_bar edges drawn once, kept for the whole run
  full:      all m*n edges, no selection
  none:      no partner information at all (zero latent)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import nn
from .igraph import EigTrace, GraphFeature, make_trace, pair_features
from .motion_io import Trajectory
from .mvae import MotionVae
from .skeleton import Skeleton, load_skeleton


class EmbeddingError(ValueError):
    pass


ABLATION_CONFIGS = ("E0", "E1", "E4", "E8", "EF", "ER4")


@dataclass
class EmbeddingConfig:
    n_bar: int = 4
    mode: str = "attention"  # attention | fixed | full | none
    lambda_var: float = 0.1
    epochs: int = 30
    lr: float = 1e-3
    window: int = 32  # contiguous frames per batch; also the variance window
    key_width: int = 32  # per-head query/key projection width
    pose_hidden: tuple[int, ...] = (64,)
    edge_hidden: tuple[int, ...] = (32,)
    encoder_hidden: tuple[int, ...] = (64,)
    embed_width: int = 32  # pose/edge encoder output width
    tau_start: float = 2.0
    tau_end: float = 0.5

    def tau_at(self, epoch: int, total_epochs: int) -> float:
        """Annealed linearly over the first half of training, then fixed."""
        half = max(1, total_epochs // 2)
        frac = min(1.0, epoch / half)
        return self.tau_start + (self.tau_end - self.tau_start) * frac


class EdgeSelector:
    """Pose-queried multi-head hard attention over edge features."""

    def __init__(self, feature_dim: int, config: EmbeddingConfig, rng: np.random.Generator):
        self.config = config
        self.n_bar = config.n_bar
        self.key_width = config.key_width
        w = config.embed_width
        self.pose_encoder = nn.Mlp([feature_dim, *config.pose_hidden, w], "elu", rng)
        self.edge_encoder = nn.Mlp([6, *config.edge_hidden, w], "elu", rng)
        bound = 1.0 / math.sqrt(w)
        self.w_q = [
            nn.parameter(rng.uniform(-bound, bound, size=(w, config.key_width)))
            for _ in range(config.n_bar)
        ]
        self.w_k = [
            nn.parameter(rng.uniform(-bound, bound, size=(w, config.key_width)))
            for _ in range(config.n_bar)
        ]

    @property
    def params(self) -> list[nn.Tensor]:
        return [*self.pose_encoder.params, *self.edge_encoder.params, *self.w_q, *self.w_k]

    def checksum(self) -> str:
        return nn.params_checksum([p.data for p in self.params])

    def encode_keys_np(self, edge_feats: np.ndarray) -> np.ndarray:
        """(B, E, w) edge keys; shared across heads and characters."""
        b, e, _ = edge_feats.shape
        return self.edge_encoder.forward_np(edge_feats.reshape(b * e, 6)).reshape(b, e, -1)

    def scores_np(
        self, query_feat: np.ndarray, edge_feats: np.ndarray, keys: np.ndarray | None = None
    ) -> np.ndarray:
        """(heads, B, E) attention scores, gradient-free path.

        Score(h, b, e) = (q_b W_q^h) . (k_be W_k^h) / sqrt(d), computed as
        q_b (W_q^h W_k^h^T) . k_be so the per-edge work is one dot product.
        """
        if keys is None:
            keys = self.encode_keys_np(edge_feats)
        q = self.pose_encoder.forward_np(query_feat)
        scale = 1.0 / math.sqrt(self.key_width)
        out = np.empty((self.n_bar, keys.shape[0], keys.shape[1]))
        for h in range(self.n_bar):
            u = q @ (self.w_q[h].data @ self.w_k[h].data.T)  # (B, w)
            out[h] = np.einsum("bew,bw->be", keys, u) * scale
        return out

    def select_np(
        self,
        query_feat: np.ndarray,
        edge_feats: np.ndarray,
        keys: np.ndarray | None = None,
    ) -> tuple[np.ndarray, np.ndarray]:
        """Deterministic hard selection: (ids (B, n_bar), feats (B, n_bar, 6))."""
        scores = self.scores_np(query_feat, edge_feats, keys)
        ids = scores.argmax(axis=2).transpose(1, 0)  # (B, n_bar)
        b = edge_feats.shape[0]
        sel = edge_feats[np.arange(b)[:, None], ids]
        return ids, sel


def select_edges(
    selector: EdgeSelector,
    query_feat: np.ndarray,
    graph: GraphFeature,
    hard: bool = True,
    rng: np.random.Generator | None = None,
    temperature: float = 1.0,
    noise: bool = True,
) -> tuple[nn.Tensor, list[nn.Tensor], np.ndarray]:
    """Single-frame selection with gradients.

    Returns (embedded features (n_bar, 6) with straight-through gradients,
    per-head selection weights, per-head chosen edge ids from the weights'
    argmax). The values are the raw edge features, so in hard mode each output
    row is exactly one row of `graph.features`.
    """
    if graph.edge_count == 0:
        raise EmbeddingError("cannot select edges from an empty graph")
    feats = graph.features
    keys = selector.edge_encoder(nn.constant(feats))  # (E, w)
    q = selector.pose_encoder(nn.constant(np.asarray(query_feat)[None, :]))  # (1, w)
    scale = 1.0 / math.sqrt(selector.key_width)
    rows, weights, ids = [], [], []
    for h in range(selector.n_bar):
        kh = nn.matmul(keys, selector.w_k[h])
        qh = nn.matmul(q, selector.w_q[h])
        scores = nn.mul(nn.reshape(nn.matmul(kh, nn.reshape(qh, (-1, 1))), (-1,)), scale)
        w = nn.gumbel_softmax(scores, temperature, hard, rng, noise=noise)
        weights.append(w)
        ids.append(int(np.argmax(w.data)))
        rows.append(nn.matmul(nn.reshape(w, (1, -1)), nn.constant(feats)))
    phi = rows[0]
    if len(rows) > 1:
        stacked = nn.concat_cols(rows)  # (1, n_bar*6)
        phi = nn.reshape(stacked, (selector.n_bar, 6))
    else:
        phi = nn.reshape(phi, (1, 6))
    return phi, weights, np.array(ids)


class GraphEncoder:
    """Flattened selected-edge features -> motion-decoder latent."""

    def __init__(self, in_dim: int, z_dim: int, config: EmbeddingConfig, rng: np.random.Generator):
        self.mlp = nn.Mlp([in_dim, *config.encoder_hidden, z_dim], "elu", rng)
        self.in_dim = in_dim
        self.z_dim = z_dim

    @property
    def params(self) -> list[nn.Tensor]:
        return self.mlp.params

    def checksum(self) -> str:
        return nn.params_checksum([p.data for p in self.params])


@dataclass
class EigModel:
    """Everything needed to turn poses into a decoder latent at each frame."""

    mode: str
    n_bar: int
    selector: Optional[EdgeSelector]
    encoder: Optional[GraphEncoder]
    fixed_edges: Optional[np.ndarray]  # (n_bar, 2) node pairs for mode="fixed"
    config: EmbeddingConfig

    def latent_np(
        self,
        query_feat_n: np.ndarray,
        edge_feats: np.ndarray,
        z_dim: int,
        keys: np.ndarray | None = None,
    ) -> np.ndarray:
        """(B, z) latent for a batch of frames; deterministic (argmax, no noise).

        `keys` may carry precomputed edge encodings when the caller evaluates
        several characters against the same edge set.
        """
        b = edge_feats.shape[0]
        if self.mode == "none":
            return np.zeros((b, z_dim))
        if self.mode == "full":
            flat = edge_feats.reshape(b, -1)
        elif self.mode == "fixed":
            flat = self._gather_fixed(edge_feats).reshape(b, -1)
        else:
            _, sel = self.selector.select_np(query_feat_n, edge_feats, keys)
            flat = sel.reshape(b, -1)
        return self.encoder.mlp.forward_np(flat)

    def precompute_keys(self, edge_feats: np.ndarray) -> np.ndarray | None:
        return self.selector.encode_keys_np(edge_feats) if self.mode == "attention" else None

    def _gather_fixed(self, edge_feats: np.ndarray) -> np.ndarray:
        n = int(round(math.sqrt(edge_feats.shape[1])))
        flat_ids = self.fixed_edges[:, 0] * n + self.fixed_edges[:, 1]
        return edge_feats[:, flat_ids]

    def hard_ids_np(self, query_feat_n: np.ndarray, edge_feats: np.ndarray) -> np.ndarray:
        if self.mode == "attention":
            ids, _ = self.selector.select_np(query_feat_n, edge_feats)
            return ids
        if self.mode == "fixed":
            return np.broadcast_to(
                self.fixed_edges[None, :, :], (edge_feats.shape[0], self.n_bar, 2)
            ).copy()
        raise EmbeddingError(f"mode {self.mode!r} has no per-frame edge ids")


@dataclass
class TrainResult:
    model: EigModel
    history: list[dict]
    audit: dict = field(default_factory=dict)


def _frozen_mlp(mlp: nn.Mlp, x: nn.Tensor) -> nn.Tensor:
    """Forward through an Mlp treating its parameters as constants."""
    act = {"elu": nn.elu, "tanh": nn.tanh, "relu": nn.relu}[mlp.activation]
    h = x
    last = len(mlp.weights) - 1
    for k, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
        h = nn.add(nn.matmul(h, nn.constant(w.data)), nn.constant(b.data))
        if k != last:
            h = act(h)
    return h


def _demo_arrays(demo: Trajectory, mvae: MotionVae) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(features (2, T-1, F) normalized, raw features, edge feats (T, E, 6))."""
    if demo.character_count != 2:
        raise EmbeddingError(f"embedding needs a two-character demo, got K={demo.character_count}")
    feat = mvae.featurizer
    raw = []
    for c in demo.characters:
        if c.positions.shape[1] != feat.skel.node_count:
            raise EmbeddingError(
                f"demo character has {c.positions.shape[1]} nodes, decoder expects "
                f"{feat.skel.node_count}"
            )
        raw.append(feat.track_features(c.positions, demo.fps))
    raw = np.stack(raw)  # (2, T-1, F)
    normed = np.stack([mvae.normalizer.normalize(r) for r in raw])
    edges = pair_features(demo.characters[0].positions, demo.characters[1].positions)
    return normed, raw, edges


def train_embedding(
    demo: Trajectory,
    mvae: MotionVae,
    config: EmbeddingConfig | None = None,
    seed: int = 0,
) -> TrainResult:
    """Fit selector and graph encoder against the frozen motion decoder.

    Per step, for each character, the next pose feature is predicted from its
    current feature and the latent encoded from the selected edges; the
    reconstruction loss sums over both characters (one shared selector and
    encoder). The consistency term is the mean, over edges and heads, of each
    selection weight's variance across the contiguous batch window.
    """
    config = config or EmbeddingConfig()
    rng = np.random.default_rng(seed)
    normed, _, edges_all = _demo_arrays(demo, mvae)
    t_pairs = normed.shape[1] - 1  # transitions (s_t, s_{t+1}), t in [0, t_pairs)
    if t_pairs < 1:
        raise EmbeddingError("demo too short to form transitions")
    feature_dim = normed.shape[2]
    e_count = edges_all.shape[1]
    z_dim = mvae.z_dim
    decoder_before = mvae.decoder_checksum()

    selector = None
    fixed_edges = None
    if config.mode == "attention":
        if config.n_bar < 1:
            raise EmbeddingError("attention mode needs n_bar >= 1")
        selector = EdgeSelector(feature_dim, config, rng)
    elif config.mode == "fixed":
        m = demo.characters[0].positions.shape[1]
        n = demo.characters[1].positions.shape[1]
        flat = rng.integers(0, m * n, size=config.n_bar)
        fixed_edges = np.stack([flat // n, flat % n], axis=1)
    elif config.mode == "none":
        model = EigModel("none", 0, None, None, None, config)
        return TrainResult(model, [], {})
    elif config.mode != "full":
        raise EmbeddingError(f"unknown mode {config.mode!r}")

    enc_in = e_count * 6 if config.mode == "full" else config.n_bar * 6
    encoder = GraphEncoder(enc_in, z_dim, config, rng)
    params = list(encoder.params) + (list(selector.params) if selector else [])
    opt = nn.Adam(params, lr=config.lr)

    window = min(config.window, t_pairs)
    n_windows = max(1, t_pairs - window + 1)
    # One epoch sees roughly every transition once via disjoint-ish windows.
    batches_per_epoch = max(1, t_pairs // window)
    history: list[dict] = []
    audit: dict = {}
    scale = 1.0 / math.sqrt(config.key_width)

    for epoch in range(config.epochs):
        tau = config.tau_at(epoch, config.epochs)
        starts = rng.choice(n_windows, size=min(batches_per_epoch, n_windows), replace=False)
        ep = {"l_recon": 0.0, "l_var": 0.0, "count": 0}
        for start in starts:
            idx = np.arange(start, start + window)
            frame_idx = idx + 1  # pose frame carrying feature s_t
            batch_edges = edges_all[frame_idx]  # (W, E, 6)
            opt.zero_grad()
            losses = []
            var_terms = []
            noises = []
            keys = None
            if config.mode == "attention":
                keys = selector.edge_encoder(
                    nn.constant(batch_edges.reshape(window * e_count, 6))
                )  # (W*E, w), shared by both characters and all heads
            for k in range(2):
                cond = normed[k, idx]  # (W, F)
                target = normed[k, idx + 1]
                if config.mode == "attention":
                    q = selector.pose_encoder(nn.constant(cond))
                    head_rows = []
                    for h in range(selector.n_bar):
                        # (q W_q) . (k W_k) realized as u = q W_q W_k^T, then u . k.
                        u = nn.matmul(nn.matmul(q, selector.w_q[h]),
                                      nn.transpose(selector.w_k[h]))
                        urep = nn.repeat_rows(u, e_count)
                        scores = nn.reshape(
                            nn.mul(nn.rowwise_dot(keys, urep), scale), (window, e_count)
                        )
                        g = nn.gumbel_noise(rng, (window, e_count))
                        noises.append(g)
                        w = nn.gumbel_softmax(
                            nn.add(scores, nn.constant(g)), tau, hard=True, noise=False
                        )
                        head_rows.append(nn.weighted_value_sum(w, batch_edges))
                        wm = nn.tmean(w, axis=0)
                        var = nn.add(
                            nn.tmean(nn.square(w), axis=0), nn.mul(nn.square(wm), -1.0)
                        )
                        var_terms.append(nn.tmean(var))
                    flat = nn.concat_cols(head_rows)
                elif config.mode == "fixed":
                    n = demo.characters[1].positions.shape[1]
                    flat_ids = fixed_edges[:, 0] * n + fixed_edges[:, 1]
                    flat = nn.constant(batch_edges[:, flat_ids].reshape(window, -1))
                else:  # full
                    flat = nn.constant(batch_edges.reshape(window, -1))
                z = encoder.mlp(flat)
                pred = _frozen_mlp(mvae.decoder, nn.concat_cols([nn.constant(cond), z]))
                err = nn.add(pred, nn.constant(-target))
                losses.append(nn.tmean(nn.square(err)))
            l_recon = nn.add(losses[0], losses[1])
            if var_terms:
                l_var = var_terms[0]
                for v in var_terms[1:]:
                    l_var = nn.add(l_var, v)
                l_var = nn.mul(l_var, 1.0 / len(var_terms))
                total = nn.add(l_recon, nn.mul(l_var, config.lambda_var))
            else:
                l_var = nn.constant(0.0)
                total = l_recon
            total.backward()
            opt.step()
            ep["l_recon"] += float(l_recon.data)
            ep["l_var"] += float(l_var.data)
            ep["count"] += 1
            if epoch == config.epochs - 1:
                audit = {
                    "window_start": int(start),
                    "tau": tau,
                    "gumbel_noise": [g.copy() for g in noises],
                    "l_recon": float(l_recon.data),
                    "l_var": float(l_var.data),
                }
        history.append(
            {
                "epoch": epoch,
                "l_recon": ep["l_recon"] / ep["count"],
                "l_var": ep["l_var"] / ep["count"],
                "loss": (ep["l_recon"] + config.lambda_var * ep["l_var"]) / ep["count"],
                "tau": tau,
            }
        )

    if mvae.decoder_checksum() != decoder_before:
        raise EmbeddingError("frozen decoder was modified during embedding training")
    model = EigModel(config.mode, config.n_bar, selector, encoder, fixed_edges, config)
    return TrainResult(model, history, audit)


def evaluate_prediction(
    model: EigModel,
    mvae: MotionVae,
    demo: Trajectory,
    horizon: int = 120,
    trials: int = 500,
    seed: int = 0,
) -> dict:
    """Closed-loop future-pose prediction error under re-selected edges.

    Per trial: pick a random start frame, roll both characters forward for
    `horizon` steps feeding predictions back in (edges re-selected from the
    predicted poses each step), and accumulate squared error against ground
    truth over frames, characters, nodes and coordinates. Returns the trial
    mean, its standard error, and the per-trial values.
    """
    pos = [c.positions for c in demo.characters]
    if len(pos) != 2:
        raise EmbeddingError("evaluation needs a two-character demo")
    t_total = pos[0].shape[0]
    if horizon < 0:
        raise EmbeddingError("horizon must be non-negative")
    if t_total - 1 - horizon < 1:
        raise EmbeddingError(
            f"demo too short for horizon {horizon}: {t_total} frames"
        )
    if horizon == 0:
        return {"mse": 0.0, "stderr": 0.0, "per_trial": np.zeros(trials), "horizon": 0}
    rng = np.random.default_rng(seed)
    starts = rng.integers(1, t_total - horizon, size=trials)
    feat = mvae.featurizer
    fps = demo.fps

    cur = np.stack([np.stack([pos[k][starts] for k in range(2)], axis=1)])[0]  # (trials, 2, N, 3)
    prev = np.stack([np.stack([pos[k][starts - 1] for k in range(2)], axis=1)])[0]
    xy = np.empty((trials, 2, 2))
    yaw = np.empty((trials, 2))
    for k in range(2):
        xy[:, k], yaw[:, k] = _anchor_batch(feat, cur[:, k])
    sq_sum = np.zeros(trials)
    n_vals = 0
    for step in range(horizon):
        edge_feats = pair_features(cur[:, 0], cur[:, 1])  # (trials, E, 6)
        keys = model.precompute_keys(edge_feats)
        new_cur = np.empty_like(cur)
        for k in range(2):
            f_raw = _feature_batch(feat, cur[:, k], prev[:, k], fps)
            f_n = mvae.normalizer.normalize(f_raw)
            z = model.latent_np(f_n, edge_feats, mvae.z_dim, keys=keys)
            pred = mvae.decode(f_raw, z)
            new_pos, xy[:, k], yaw[:, k] = _reconstruct_batch(feat, pred, xy[:, k], yaw[:, k], fps)
            new_cur[:, k] = new_pos
        prev = cur
        cur = new_cur
        gt = np.stack([pos[k][starts + step + 1] for k in range(2)], axis=1)
        sq_sum += ((cur - gt) ** 2).reshape(trials, -1).sum(axis=1)
        n_vals += cur[0].size
    per_trial = sq_sum / n_vals
    mse = float(per_trial.mean())
    stderr = float(per_trial.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    return {"mse": mse, "stderr": stderr, "per_trial": per_trial, "horizon": horizon}


def _feature_batch(feat, pos_t, pos_prev, fps):
    """Vectorized PoseFeaturizer.feature over a leading batch axis."""
    skel = feat.skel
    psi = _heading_batch(skel, pos_t)
    psi_prev = _heading_batch(skel, pos_prev)
    root = pos_t[:, feat.root]
    c, s = np.cos(psi), np.sin(psi)
    v = (root - pos_prev[:, feat.root]) * fps
    vx = c * v[:, 0] + s * v[:, 1]
    vy = -s * v[:, 0] + c * v[:, 1]
    dyaw = np.mod(psi - psi_prev + np.pi, 2 * np.pi) - np.pi
    local = pos_t[:, feat.others] - root[:, None, :]
    lx = c[:, None] * local[:, :, 0] + s[:, None] * local[:, :, 1]
    ly = -s[:, None] * local[:, :, 0] + c[:, None] * local[:, :, 1]
    out = np.concatenate(
        [
            root[:, 2:3],
            vx[:, None],
            vy[:, None],
            (dyaw * fps)[:, None],
            np.stack([lx, ly, local[:, :, 2]], axis=2).reshape(pos_t.shape[0], -1),
        ],
        axis=1,
    )
    return out


def _reconstruct_batch(feat, feats, prev_xy, prev_yaw, fps):
    b = feats.shape[0]
    yaw = prev_yaw + feats[:, 3] / fps
    c, s = np.cos(yaw), np.sin(yaw)
    dx = (c * feats[:, 1] - s * feats[:, 2]) / fps
    dy = (s * feats[:, 1] + c * feats[:, 2]) / fps
    xy = prev_xy + np.stack([dx, dy], axis=1)
    local = feats[:, 4:].reshape(b, -1, 3)
    wx = c[:, None] * local[:, :, 0] - s[:, None] * local[:, :, 1]
    wy = s[:, None] * local[:, :, 0] + c[:, None] * local[:, :, 1]
    pos = np.empty((b, feat.skel.node_count, 3))
    root = np.concatenate([xy, feats[:, 0:1]], axis=1)
    pos[:, feat.root] = root
    pos[:, feat.others, 0] = root[:, 0:1] + wx
    pos[:, feat.others, 1] = root[:, 1:2] + wy
    pos[:, feat.others, 2] = root[:, 2:3] + local[:, :, 2]
    return pos, xy, yaw


def _heading_batch(skel: Skeleton, pos: np.ndarray) -> np.ndarray:
    if skel.heading_pair is None:
        return np.zeros(pos.shape[0])
    a, b = skel.heading_pair
    lat = pos[:, b] - pos[:, a]
    fx, fy = -lat[:, 1], lat[:, 0]
    out = np.arctan2(fy, fx)
    return np.where(fx * fx + fy * fy < 1e-16, 0.0, out)


def _anchor_batch(feat, pos):
    return pos[:, feat.root, :2].copy(), _heading_batch(feat.skel, pos)


def run_ablation(
    demo: Trajectory,
    mvae: MotionVae,
    seeds: list[int],
    horizon: int = 120,
    trials: int = 500,
    base_config: EmbeddingConfig | None = None,
    configs: tuple[str, ...] = ABLATION_CONFIGS,
) -> list[dict]:
    """Train and evaluate every selection variant; returns one row per
    (config, seed) with the closed-loop MSE and its standard error."""
    base = base_config or EmbeddingConfig()
    rows = []
    for name in configs:
        if name not in ABLATION_CONFIGS:
            raise EmbeddingError(f"unknown ablation config {name!r}")
        for seed in seeds:
            cfg = _ablation_config(name, base)
            result = train_embedding(demo, mvae, cfg, seed=seed)
            ev = evaluate_prediction(
                result.model, mvae, demo, horizon=horizon, trials=trials, seed=seed + 7919
            )
            rows.append(
                {
                    "config": name,
                    "seed": seed,
                    "mse": ev["mse"],
                    "stderr": ev["stderr"],
                    "n_bar": cfg.n_bar,
                    "mode": cfg.mode,
                }
            )
    return rows


def _ablation_config(name: str, base: EmbeddingConfig) -> EmbeddingConfig:
    import dataclasses

    if name == "E0":
        return dataclasses.replace(base, mode="none", n_bar=0)
    if name == "EF":
        return dataclasses.replace(base, mode="full", n_bar=0)
    if name == "ER4":
        return dataclasses.replace(base, mode="fixed", n_bar=4)
    return dataclasses.replace(base, mode="attention", n_bar=int(name[1:]))


def export_eig(
    model: EigModel, mvae: MotionVae, demo: Trajectory, extra_metadata: dict | None = None
) -> EigTrace:
    """Deterministic per-frame hard selection over the demonstration.

    Selection uses argmax scores (no sampling noise) queried from the first
    character's pose, so repeated exports of the same checkpoint are
    identical. Frame 0 reuses itself as the velocity reference.
    """
    if model.mode not in ("attention", "fixed"):
        raise EmbeddingError(f"mode {model.mode!r} does not define an exportable edge set")
    pos = [c.positions for c in demo.characters]
    t_total = pos[0].shape[0]
    feat = mvae.featurizer
    prev = np.concatenate([pos[0][0:1], pos[0][:-1]], axis=0)
    f_raw = _feature_batch(feat, pos[0], prev, demo.fps)
    f_n = mvae.normalizer.normalize(f_raw)
    edge_feats = pair_features(pos[0], pos[1])  # (T, E, 6)
    ids = model.hard_ids_np(f_n, edge_feats)  # (T, n_bar, 2)
    n = pos[1].shape[1]
    flat_ids = ids[:, :, 0] * n + ids[:, :, 1]
    feats = np.take_along_axis(edge_feats, flat_ids[:, :, None], axis=1)
    dup_rate = float(
        np.mean([len(np.unique(flat_ids[t])) < model.n_bar for t in range(t_total)])
    )
    metadata = {
        "source_demo": "",
        "selector_checksum": model.selector.checksum() if model.selector else "fixed",
        "mode": model.mode,
        "duplication_rate": dup_rate,
        "skeletons": [c.skeleton_id for c in demo.characters],
        **(extra_metadata or {}),
    }
    return make_trace(ids, feats, demo.fps, metadata)


# ---------------------------------------------------------------------------
# Checkpointing


def save_eig_model(model: EigModel, path: str | Path):
    if model.mode == "none":
        nn.save_checkpoint(path, {}, {"kind": "eig", "mode": "none", "n_bar": 0})
        return
    arrays = {}
    meta = {
        "kind": "eig",
        "mode": model.mode,
        "n_bar": model.n_bar,
        "key_width": model.config.key_width,
        "embed_width": model.config.embed_width,
        "pose_hidden": list(model.config.pose_hidden),
        "edge_hidden": list(model.config.edge_hidden),
        "encoder_hidden": list(model.config.encoder_hidden),
        "encoder_in": model.encoder.in_dim,
        "z_dim": model.encoder.z_dim,
    }
    for k, (w, b) in enumerate(zip(model.encoder.mlp.weights, model.encoder.mlp.biases)):
        arrays[f"enc.w{k}"] = w.data
        arrays[f"enc.b{k}"] = b.data
    if model.selector is not None:
        meta["feature_dim"] = model.selector.pose_encoder.sizes[0]
        for label, mlp in (("pose", model.selector.pose_encoder), ("edge", model.selector.edge_encoder)):
            for k, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
                arrays[f"{label}.w{k}"] = w.data
                arrays[f"{label}.b{k}"] = b.data
        for h in range(model.n_bar):
            arrays[f"wq{h}"] = model.selector.w_q[h].data
            arrays[f"wk{h}"] = model.selector.w_k[h].data
    if model.fixed_edges is not None:
        arrays["fixed_edges"] = model.fixed_edges.astype(np.float64)
    nn.save_checkpoint(path, arrays, meta)


def load_eig_model(path: str | Path) -> EigModel:
    arrays, meta = nn.load_checkpoint(path)
    if meta.get("kind") != "eig":
        raise EmbeddingError(f"{path} is not an embedding checkpoint")
    mode = meta["mode"]
    if mode == "none":
        return EigModel("none", 0, None, None, None, EmbeddingConfig(mode="none", n_bar=0))
    config = EmbeddingConfig(
        n_bar=int(meta["n_bar"]),
        mode=mode,
        key_width=int(meta["key_width"]),
        embed_width=int(meta["embed_width"]),
        pose_hidden=tuple(meta["pose_hidden"]),
        edge_hidden=tuple(meta["edge_hidden"]),
        encoder_hidden=tuple(meta["encoder_hidden"]),
    )
    rng = np.random.default_rng(0)
    encoder = GraphEncoder(int(meta["encoder_in"]), int(meta["z_dim"]), config, rng)
    for k in range(len(encoder.mlp.weights)):
        encoder.mlp.weights[k].data = arrays[f"enc.w{k}"]
        encoder.mlp.biases[k].data = arrays[f"enc.b{k}"]
    selector = None
    if mode == "attention":
        selector = EdgeSelector(int(meta["feature_dim"]), config, rng)
        for label, mlp in (("pose", selector.pose_encoder), ("edge", selector.edge_encoder)):
            for k in range(len(mlp.weights)):
                mlp.weights[k].data = arrays[f"{label}.w{k}"]
                mlp.biases[k].data = arrays[f"{label}.b{k}"]
        for h in range(config.n_bar):
            selector.w_q[h].data = arrays[f"wq{h}"]
            selector.w_k[h].data = arrays[f"wk{h}"]
    fixed = arrays["fixed_edges"].astype(int) if "fixed_edges" in arrays else None
    return EigModel(mode, config.n_bar, selector, encoder, fixed, config)
