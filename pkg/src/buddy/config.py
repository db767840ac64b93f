"""Run configuration: one TOML file with per-stage sections.

Unknown sections or keys are rejected; every default is echoed into the
resolved dump that lands in artifact provenance headers, so a run is fully
described by any file it wrote.
"""

from __future__ import annotations

import subprocess
import sys
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

TOOL_VERSION = "buddy 0.1.0"

CONFIG_SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


# section -> key -> default (types are inferred from the defaults)
DEFAULTS: dict[str, dict] = {
    "run": {"seed": 0, "out_dir": "runs/pipeline"},
    "gen": {"kind": "handshake", "duration_s": 12.0, "fps": 60.0, "infeasible": False},
    "mvae": {
        "epochs": 40,
        "z_dim": 16,
        "hidden": [256, 256],
        "beta": 0.3,
        "lr": 1e-3,
        "batch_size": 64,
        "rollout_window": 8,
    },
    "embed": {
        "n_bar": 4,
        "lambda": 0.1,
        "epochs": 30,
        "lr": 1e-3,
        "window": 32,
        "key_width": 32,
        "embed_width": 32,
        "tau_start": 2.0,
        "tau_end": 0.5,
    },
    "ablate": {"seeds": 3, "horizon": 120, "trials": 500,
               "configs": ["E0", "E1", "E4", "E8", "EF", "ER4"]},
    "map": {"src": "humanoid22", "dst": "quadarm"},
    "transfer": {
        "embodiments": ["quadarm", "quadarm"],
        "algo": "ppo",
        "iterations": 40,
        "episodes_per_iter": 8,
        "control_hz": 30.0,
        "gamma": 0.99,
        "gae_lambda": 0.95,
        "clip": 0.2,
        "ppo_epochs": 8,
        "minibatch": 512,
        "lr": 3e-4,
        "vf_lr": 1e-3,
        "ent_coef": 0.0,
        "freeze_low": False,
        "latent_dim": 16,
        "spawn_scale": 1.0,
        "pretrain_epochs": 60,
        "pretrain_clips": 6,
        "w_l": 2.0,
        "w_ed": 1.0,
        "w_cp": 1.0,
        "w_far": 0.2,
        "w_height": 2.0,
        "w_lateral": 1.0,
        "w_torque": 0.05,
    },
    "eval": {"episodes": 1, "stochastic": False},
}


def default_config() -> dict:
    return {s: dict(kv) for s, kv in DEFAULTS.items()}


def _check_type(section: str, key: str, value, default):
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, list):
        ok = isinstance(value, list)
    else:
        ok = isinstance(value, str)
    if not ok:
        raise ConfigError(
            f"[{section}] {key}: expected {type(default).__name__}, got {value!r}"
        )


def load_config(path: str | Path) -> dict:
    """Parse and validate a TOML run config; returns the resolved tree with
    every default filled in."""
    try:
        raw = tomllib.loads(Path(path).read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: not valid TOML ({exc})") from exc
    return resolve_config(raw, source=str(path))


def resolve_config(raw: dict, source: str = "<dict>") -> dict:
    resolved = default_config()
    for section, kv in raw.items():
        if section not in DEFAULTS:
            raise ConfigError(f"{source}: unknown section [{section}]")
        if not isinstance(kv, dict):
            raise ConfigError(f"{source}: section [{section}] must be a table")
        for key, value in kv.items():
            if key not in DEFAULTS[section]:
                raise ConfigError(f"{source}: unknown key [{section}] {key}")
            _check_type(section, key, value, DEFAULTS[section][key])
            resolved[section][key] = value
    resolved["schema_version"] = CONFIG_SCHEMA_VERSION
    return resolved


def git_describe() -> str | None:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True, text=True, timeout=5,
        )
    except (OSError, subprocess.TimeoutExpired):
        return None
    if out.returncode != 0:
        return None
    return out.stdout.strip()


def provenance(seed: int, resolved_config: dict | None = None, **extra) -> dict:
    """Header recorded in every artifact; no timestamps so reruns are
    byte-identical."""
    return {
        "tool": TOOL_VERSION,
        "seed": seed,
        "git": git_describe(),
        "config": resolved_config or {},
        **extra,
    }
