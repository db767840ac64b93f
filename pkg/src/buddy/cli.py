"""Command-line entry point wiring the full pipeline.

Subcommands: gen, train-mvae, embed, ablate, map, transfer, eval, replay,
pipeline. Exit codes: 0 success, 1 usage error, 2 runtime error. Every
artifact carries a provenance header (tool, seed, git state, resolved
parameters) and is byte-identical across reruns with the same seed.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import config as cfg
from . import correspondence, embedding, env as envmod, igraph, motion_io, mvae as mvae_mod
from . import policy as policy_mod
from . import reporting
from .reward import RewardWeights
from .skeleton import load_skeleton


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _build_parser() -> _Parser:
    p = _Parser(prog="buddy", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="generate a synthetic two-character demonstration")
    g.add_argument("--kind", choices=motion_io.DEMO_KINDS, default="handshake")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--duration", type=float, default=12.0)
    g.add_argument("--fps", type=float, default=60.0)
    g.add_argument("--infeasible", action="store_true",
                   help="inject a below-ground glitch to exercise termination")
    g.add_argument("--out", required=True)

    t = sub.add_parser("train-mvae", help="pretrain the single-character motion decoder")
    t.add_argument("--data", required=True, help="demo json file or directory of them")
    t.add_argument("--out", required=True)
    t.add_argument("--epochs", type=int, default=40)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--z-dim", type=int, default=16)
    t.add_argument("--beta", type=float, default=0.3)
    t.add_argument("--hidden", type=int, nargs="*", default=[256, 256])

    e = sub.add_parser("embed", help="learn the sparse interaction graph on a demo")
    e.add_argument("--demo", required=True)
    e.add_argument("--mvae", required=True)
    e.add_argument("--nbar", type=int, default=4)
    e.add_argument("--lambda", dest="lambda_var", type=float, default=0.1)
    e.add_argument("--epochs", type=int, default=30)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out", required=True, help="edge trace json")
    e.add_argument("--ckpt", help="selector checkpoint path")
    e.add_argument("--report", help="loss history csv (figure rendered alongside)")

    a = sub.add_parser("ablate", help="compare edge-selection variants")
    a.add_argument("--demo", required=True)
    a.add_argument("--mvae", required=True)
    a.add_argument("--seeds", type=int, default=3)
    a.add_argument("--horizon", type=int, default=120)
    a.add_argument("--trials", type=int, default=500)
    a.add_argument("--epochs", type=int, default=30)
    a.add_argument("--configs", nargs="*", default=list(embedding.ABLATION_CONFIGS))
    a.add_argument("--out", required=True, help="csv table (figure rendered alongside)")

    m = sub.add_parser("map", help="build a vertex correspondence between skeletons")
    m.add_argument("--src", required=True, help="asset name or skeleton file")
    m.add_argument("--dst", required=True)
    m.add_argument("--out", required=True)

    tr = sub.add_parser("transfer", help="train transfer policies against an edge trace")
    tr.add_argument("--demo", required=True)
    tr.add_argument("--eig", required=True)
    tr.add_argument("--map-a", required=True)
    tr.add_argument("--map-b", required=True)
    tr.add_argument("--embodiments", required=True, help="comma-separated pair, e.g. quadarm,quadarm")
    tr.add_argument("--out", required=True, help="policy checkpoint")
    tr.add_argument("--report", help="training report csv (figure rendered alongside)")
    tr.add_argument("--algo", choices=["ppo", "es"], default="ppo")
    tr.add_argument("--iterations", type=int, default=40)
    tr.add_argument("--episodes-per-iter", type=int, default=8)
    tr.add_argument("--pretrain-epochs", type=int, default=60)
    tr.add_argument("--control-hz", type=float, default=30.0)
    tr.add_argument("--freeze-low", action="store_true")
    tr.add_argument("--seed", type=int, default=0)

    ev = sub.add_parser("eval", help="roll out a trained policy and log the episode")
    ev.add_argument("--policy", required=True)
    ev.add_argument("--demo", required=True)
    ev.add_argument("--eig", required=True)
    ev.add_argument("--map-a", required=True)
    ev.add_argument("--map-b", required=True)
    ev.add_argument("--embodiments", required=True)
    ev.add_argument("--control-hz", type=float, default=30.0)
    ev.add_argument("--out", required=True, help="episode log json")
    ev.add_argument("--log-reward", action="store_true",
                    help="also dump per-step reward breakdown csv + figure")
    ev.add_argument("--seed", type=int, default=0)

    rp = sub.add_parser("replay", help="re-derive rewards from a logged episode for audit")
    rp.add_argument("--log", required=True)
    rp.add_argument("--out", required=True, help="agent pose trajectory json")
    rp.add_argument("--tolerance", type=float, default=1e-12)

    pl = sub.add_parser("pipeline", help="run the full chain from one config file")
    pl.add_argument("--config", required=True)
    return p


# ---------------------------------------------------------------------------
# Stage implementations


def _load_demo(path: str) -> motion_io.Trajectory:
    return motion_io.load_trajectory_json(Path(path).read_bytes())


def _cmd_gen(seed, kind, duration, fps, infeasible, out) -> dict:
    traj = motion_io.synth_demo(kind, seed=seed, duration_s=duration, fps=fps,
                                infeasible=infeasible)
    prov = cfg.provenance(seed, {"stage": "gen", "kind": kind, "duration_s": duration,
                                 "fps": fps, "infeasible": infeasible})
    Path(out).write_bytes(motion_io.save_trajectory_json(traj, prov))
    return {"frames": traj.frame_count, "out": out}


def _cmd_train_mvae(data, out, epochs, seed, z_dim, beta, hidden) -> dict:
    paths = sorted(Path(data).glob("*.json")) if Path(data).is_dir() else [Path(data)]
    if not paths:
        raise mvae_mod.MvaeError(f"no demo files found under {data}")
    skel = load_skeleton("humanoid22")
    clips = []
    fps = None
    for p in paths:
        traj = _load_demo(str(p))
        fps = traj.fps
        clips.extend(mvae_mod.transitions_from_trajectory(traj, skel))
    config = mvae_mod.MvaeConfig(epochs=epochs, z_dim=z_dim, beta=beta, hidden=tuple(hidden))
    model, history = mvae_mod.train_mvae(clips, fps, config, seed=seed, skel=skel)
    mvae_mod.save_mvae(model, out)
    return {"out": out, "final_loss": history[-1]["loss"], "clips": len(clips)}


def _cmd_embed(demo, mvae, nbar, lambda_var, epochs, seed, out, ckpt=None, report=None) -> dict:
    traj = _load_demo(demo)
    model = mvae_mod.load_mvae(mvae)
    econf = embedding.EmbeddingConfig(n_bar=nbar, lambda_var=lambda_var, epochs=epochs)
    result = embedding.train_embedding(traj, model, econf, seed=seed)
    prov = cfg.provenance(seed, {"stage": "embed", "n_bar": nbar, "lambda": lambda_var,
                                 "epochs": epochs, "demo": str(demo)})
    trace = embedding.export_eig(result.model, model, traj,
                                 extra_metadata={"source_demo": str(demo)})
    igraph.save_trace(trace, out, provenance=prov)
    if ckpt:
        embedding.save_eig_model(result.model, ckpt)
    if report:
        reporting.write_csv(report, result.history, provenance=prov)
        reporting.render_loss_figure(result.history, reporting.figure_path(report),
                                     keys=("l_recon", "l_var", "loss"))
    return {"out": out, "final_l_recon": result.history[-1]["l_recon"],
            "duplication_rate": trace.metadata.get("duplication_rate")}


def _cmd_ablate(demo, mvae, seeds, horizon, trials, epochs, configs, out) -> dict:
    traj = _load_demo(demo)
    model = mvae_mod.load_mvae(mvae)
    base = embedding.EmbeddingConfig(epochs=epochs)
    rows = embedding.run_ablation(traj, model, seeds=list(range(seeds)), horizon=horizon,
                                  trials=trials, base_config=base, configs=tuple(configs))
    prov = cfg.provenance(0, {"stage": "ablate", "seeds": seeds, "horizon": horizon,
                              "trials": trials, "configs": list(configs)})
    reporting.write_csv(out, rows, provenance=prov,
                        columns=["config", "seed", "mse", "stderr", "n_bar", "mode"])
    reporting.render_ablation_figure(rows, reporting.figure_path(out))
    return {"out": out, "rows": len(rows)}


def _cmd_map(src, dst, out) -> dict:
    s, d = load_skeleton(src), load_skeleton(dst)
    vm = correspondence.build_vertex_map(s, d)
    prov = cfg.provenance(0, {"stage": "map", "src": str(src), "dst": str(dst)})
    correspondence.save_vertex_map(vm, out, provenance=prov)
    return {"out": out, "pairs": list(vm.ee_assignment.pairs)}


def _weights_from_dict(d: dict) -> RewardWeights:
    keys = ("w_l", "w_ed", "w_cp", "w_far", "w_height", "w_lateral", "w_torque")
    return RewardWeights(**{k: d[k] for k in keys if k in d})


def build_env(demo, trace, maps, embodiments, control_hz=30.0, weights=None,
              spawn_scale=1.0, remap=True) -> envmod.InteractionEnv:
    """Assemble the transfer environment from loaded artifacts."""
    skels = tuple(load_skeleton(e) for e in embodiments)
    if remap:
        trace = correspondence.remap_eig(trace, maps[0], maps[1])
    config = envmod.EpisodeConfig(
        demo=demo, trace=trace, skeletons=skels, maps=tuple(maps),
        control_hz=control_hz, weights=weights or RewardWeights(),
        spawn_scale=spawn_scale,
    )
    return envmod.InteractionEnv(config)


def make_bundle(environment: envmod.InteractionEnv, embodiments, seed,
                latent_dim=16, pretrain_epochs=60, pretrain_clips=6) -> policy_mod.PolicyBundle:
    """Policy bundle with pretrained low-level networks."""
    pconf = policy_mod.PolicyConfig(latent_dim=latent_dim)
    bundle = policy_mod.PolicyBundle(
        embodiments=list(embodiments),
        obs_dims=[environment.obs_dim(k) for k in range(2)],
        action_dims=[environment.action_dim(k) for k in range(2)],
        action_scales=[environment.max_delta[k] for k in range(2)],
        config=pconf,
        rng=np.random.default_rng(seed),
    )
    if pretrain_epochs > 0:
        done: set[str] = set()
        for k, emb in enumerate(embodiments):
            if emb in done:
                continue
            done.add(emb)
            skel = environment.skels[k]
            dataset = policy_mod.sample_motion_dataset(
                skel, seed=seed + 101, clips=pretrain_clips,
                control_hz=environment.config.control_hz,
            )
            low, log_std, _ = policy_mod.pretrain_low_level(
                skel, dataset, pconf, n_bar=environment.n_bar, l_hat=environment.l_hat,
                control_hz=environment.config.control_hz,
                config=policy_mod.PretrainConfig(epochs=pretrain_epochs), seed=seed + 17,
            )
            bundle.low[emb] = low
            bundle.log_std[emb] = log_std
    return bundle


def _cmd_transfer(demo, eig, map_a, map_b, embodiments, out, report=None, algo="ppo",
                  iterations=40, episodes_per_iter=8, pretrain_epochs=60, control_hz=30.0,
                  freeze_low=False, seed=0, weights=None, latent_dim=16,
                  spawn_scale=1.0, pretrain_clips=6) -> dict:
    traj = _load_demo(demo)
    trace = igraph.load_trace(eig)
    maps = (correspondence.load_vertex_map(map_a), correspondence.load_vertex_map(map_b))
    embs = embodiments.split(",") if isinstance(embodiments, str) else list(embodiments)
    if len(embs) != 2:
        raise UsageError("--embodiments must name exactly two characters")
    environment = build_env(traj, trace, maps, embs, control_hz=control_hz,
                            weights=weights, spawn_scale=spawn_scale)
    bundle = make_bundle(environment, embs, seed, latent_dim=latent_dim,
                         pretrain_epochs=pretrain_epochs, pretrain_clips=pretrain_clips)
    baseline = policy_mod.random_policy_baseline(environment, bundle, seed=seed + 23)
    tconf = policy_mod.TransferConfig(
        algo=algo, iterations=iterations, episodes_per_iter=episodes_per_iter,
        freeze_low=freeze_low,
    )
    bundle, train_report = policy_mod.train_transfer(environment, bundle, tconf, seed=seed)
    policy_mod.save_bundle(bundle, out)
    prov = cfg.provenance(seed, {"stage": "transfer", "algo": algo, "iterations": iterations,
                                 "embodiments": embs, "baseline_r_ic": baseline["mean_r_ic"]})
    if report:
        reporting.write_csv(report, train_report.rows, provenance=prov)
        reporting.render_training_figure(train_report.rows, reporting.figure_path(report))
    final = train_report.rows[-1]
    return {"out": out, "final_r_ic": final["mean_r_ic"],
            "baseline_r_ic": baseline["mean_r_ic"], "final_return": final["mean_return"]}


def _cmd_eval(policy, demo, eig, map_a, map_b, embodiments, out, control_hz=30.0,
              log_reward=False, seed=0, weights=None, spawn_scale=1.0) -> dict:
    traj = _load_demo(demo)
    trace = igraph.load_trace(eig)
    maps = (correspondence.load_vertex_map(map_a), correspondence.load_vertex_map(map_b))
    embs = embodiments.split(",") if isinstance(embodiments, str) else list(embodiments)
    environment = build_env(traj, trace, maps, embs, control_hz=control_hz,
                            weights=weights, spawn_scale=spawn_scale)
    bundle = policy_mod.load_bundle(policy)
    log = envmod.rollout(environment, lambda obs: bundle.act(obs, stochastic=False), record=True)
    prov = cfg.provenance(seed, {"stage": "eval", "policy": str(policy)})
    doc = _episode_doc(environment, embs, log, prov)
    Path(out).write_text(json.dumps(doc, sort_keys=True) + "\n")
    if log_reward:
        rows = _breakdown_rows(log.breakdowns)
        csv_path = str(Path(out).with_suffix("")) + ".rewards.csv"
        reporting.write_csv(csv_path, rows, provenance=prov)
        reporting.render_reward_figure(rows, reporting.figure_path(csv_path))
    return {"out": out, "mean_r_ic": log.mean_r_ic, "length": log.length,
            "terminated_early": log.terminated_early}


def _episode_doc(environment, embs, log, prov) -> dict:
    return {
        "schema_version": 1,
        "provenance": prov,
        "control_hz": environment.config.control_hz,
        "spawn_scale": environment.config.spawn_scale,
        "embodiments": list(embs),
        "weights": {k: getattr(environment.config.weights, k)
                    for k in ("w_l", "w_ed", "w_cp", "w_far", "w_height", "w_lateral", "w_torque")},
        "demo": motion_io.trajectory_to_dict(environment.config.demo),
        "trace": igraph.trace_to_dict(environment.config.trace),
        "episode": {
            "coords": [[q.tolist() for q in step] for step in log.coords],
            "actions": [[a.tolist() for a in step] for step in log.actions],
            "breakdowns": [[bd.as_row() for bd in step] for step in log.breakdowns],
            "returns": log.returns.tolist(),
            "length": log.length,
            "terminated_early": log.terminated_early,
        },
    }


def _breakdown_rows(breakdowns) -> list[dict]:
    rows = []
    for step, pair in enumerate(breakdowns):
        for agent, bd in enumerate(pair):
            rows.append({"step": step, "agent": agent, **bd.as_row()})
    return rows


def _cmd_replay(log, out, tolerance=1e-12) -> dict:
    doc = json.loads(Path(log).read_text())
    if doc.get("schema_version") != 1:
        raise envmod.EnvError(f"unsupported episode schema_version {doc.get('schema_version')}")
    demo = motion_io.trajectory_from_dict(doc["demo"])
    trace = igraph.trace_from_dict(doc["trace"])
    environment = build_env(
        demo, trace, (None, None), doc["embodiments"], control_hz=doc["control_hz"],
        weights=_weights_from_dict(doc["weights"]), spawn_scale=doc["spawn_scale"], remap=False,
    )
    ep = doc["episode"]
    coords = [[np.array(q) for q in step] for step in ep["coords"]]
    actions = [[np.array(a) for a in step] for step in ep["actions"]]
    rederived = envmod.replay_episode(environment, coords, actions)
    max_err = 0.0
    for step, (pair, logged) in enumerate(zip(rederived, ep["breakdowns"])):
        for bd, ref in zip(pair, logged):
            for key, value in bd.as_row().items():
                max_err = max(max_err, abs(float(value) - float(ref[key])))
    if max_err > tolerance:
        raise envmod.EnvError(
            f"replay rewards deviate from log by {max_err:.3e} (> {tolerance:g})"
        )
    # Re-derive agent pose tracks from the logged coordinates for export.
    from .skeleton import GeneralizedCoords, forward_kinematics

    tracks = []
    for k, emb in enumerate(doc["embodiments"]):
        skel = load_skeleton(emb)
        pos = np.stack([
            forward_kinematics(skel, GeneralizedCoords(step[k])).positions for step in coords
        ])
        tracks.append(motion_io.CharacterTrack(skeleton_id=emb, positions=pos))
    traj = motion_io.Trajectory(fps=doc["control_hz"], characters=tuple(tracks))
    prov = cfg.provenance(0, {"stage": "replay", "log": str(log), "max_reward_error": max_err})
    Path(out).write_bytes(motion_io.save_trajectory_json(traj, prov))
    rows = _breakdown_rows(rederived)
    csv_path = str(Path(out).with_suffix("")) + ".rewards.csv"
    reporting.write_csv(csv_path, rows, provenance=prov)
    return {"out": out, "max_reward_error": max_err, "steps": len(rederived)}


def _cmd_pipeline(config_path: str) -> dict:
    resolved = cfg.load_config(config_path)
    run = resolved["run"]
    out_dir = Path(run["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    seed = run["seed"]
    dump = out_dir / "resolved_config.json"
    dump.write_text(json.dumps(
        {"provenance": cfg.provenance(seed, resolved)}, sort_keys=True, indent=2) + "\n")

    gen, emb_cfg, mv = resolved["gen"], resolved["embed"], resolved["mvae"]
    tr, ev = resolved["transfer"], resolved["eval"]
    demo_path = out_dir / "demo.json"
    print("[1/6] generating demonstration")
    _cmd_gen(seed, gen["kind"], gen["duration_s"], gen["fps"], gen["infeasible"], str(demo_path))
    print("[2/6] pretraining motion decoder")
    mvae_path = out_dir / "mvae.ckpt"
    _cmd_train_mvae(str(demo_path), str(mvae_path), mv["epochs"], seed + 1, mv["z_dim"],
                    mv["beta"], mv["hidden"])
    print("[3/6] learning interaction embedding")
    eig_path = out_dir / "eig.json"
    _cmd_embed(str(demo_path), str(mvae_path), emb_cfg["n_bar"], emb_cfg["lambda"],
               emb_cfg["epochs"], seed + 2, str(eig_path), ckpt=str(out_dir / "selector.ckpt"),
               report=str(out_dir / "embed_history.csv"))
    print("[4/6] building vertex correspondences")
    embs = tr["embodiments"]
    map_paths = []
    for k, emb_name in enumerate(embs):
        mp = out_dir / f"map_{'ab'[k]}.json"
        _cmd_map("humanoid22", emb_name, str(mp))
        map_paths.append(str(mp))
    print("[5/6] training transfer policies")
    policy_path = out_dir / "policy.ckpt"
    weights = _weights_from_dict(tr)
    tr_info = _cmd_transfer(
        str(demo_path), str(eig_path), map_paths[0], map_paths[1], embs, str(policy_path),
        report=str(out_dir / "report.csv"), algo=tr["algo"], iterations=tr["iterations"],
        episodes_per_iter=tr["episodes_per_iter"], pretrain_epochs=tr["pretrain_epochs"],
        control_hz=tr["control_hz"], freeze_low=tr["freeze_low"], seed=seed + 3,
        weights=weights, latent_dim=tr["latent_dim"], spawn_scale=tr["spawn_scale"],
        pretrain_clips=tr["pretrain_clips"],
    )
    print("[6/6] evaluating")
    episode_path = out_dir / "episode.json"
    ev_info = _cmd_eval(str(policy_path), str(demo_path), str(eig_path), map_paths[0],
                        map_paths[1], embs, str(episode_path), control_hz=tr["control_hz"],
                        log_reward=True, seed=seed + 4, weights=weights,
                        spawn_scale=tr["spawn_scale"])
    return {"out_dir": str(out_dir), "transfer": tr_info, "eval": ev_info}


# ---------------------------------------------------------------------------


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "gen":
            info = _cmd_gen(args.seed, args.kind, args.duration, args.fps,
                            args.infeasible, args.out)
        elif args.command == "train-mvae":
            info = _cmd_train_mvae(args.data, args.out, args.epochs, args.seed,
                                   args.z_dim, args.beta, args.hidden)
        elif args.command == "embed":
            info = _cmd_embed(args.demo, args.mvae, args.nbar, args.lambda_var, args.epochs,
                              args.seed, args.out, ckpt=args.ckpt, report=args.report)
        elif args.command == "ablate":
            info = _cmd_ablate(args.demo, args.mvae, args.seeds, args.horizon, args.trials,
                               args.epochs, args.configs, args.out)
        elif args.command == "map":
            info = _cmd_map(args.src, args.dst, args.out)
        elif args.command == "transfer":
            info = _cmd_transfer(args.demo, args.eig, args.map_a, args.map_b, args.embodiments,
                                 args.out, report=args.report, algo=args.algo,
                                 iterations=args.iterations,
                                 episodes_per_iter=args.episodes_per_iter,
                                 pretrain_epochs=args.pretrain_epochs,
                                 control_hz=args.control_hz, freeze_low=args.freeze_low,
                                 seed=args.seed)
        elif args.command == "eval":
            info = _cmd_eval(args.policy, args.demo, args.eig, args.map_a, args.map_b,
                             args.embodiments, args.out, control_hz=args.control_hz,
                             log_reward=args.log_reward, seed=args.seed)
        elif args.command == "replay":
            info = _cmd_replay(args.log, args.out, tolerance=args.tolerance)
        elif args.command == "pipeline":
            info = _cmd_pipeline(args.config)
        else:  # pragma: no cover - argparse enforces the choices
            raise UsageError(f"unknown command {args.command!r}")
    except UsageError as exc:
        print(f"buddy: error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"buddy: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    print(json.dumps(info, sort_keys=True, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
