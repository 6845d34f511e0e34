"""Run configuration: canonical defaults, ablation switches, file parsing.

Config files are flat ``key = value`` text with dotted section keys
(``value.lr = 3e-4``); a dotted key maps to the dataclass field with dots
replaced by underscores. CLI overrides use the same keys. Every resolved
value is echoed into the run manifest.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from .errors import ConfigurationError

ABLATIONS = (
    "linear-value-function",
    "dynamics-target-sa",
    "no-target-encoder",
    "revert",
    "non-linear-model",
    "mse-reward-loss",
    "no-reward-scaling",
    "no-min",
    "no-lap",
    "no-mr",
    "one-step-return",
    "no-unroll",
)


@dataclass
class RunConfig:
    # discounting / replay
    gamma: float = 0.99
    buffer_capacity: int = 1_000_000
    batch_size: int = 256
    target_update_freq: int = 250
    replay_ratio: int = 1
    # horizons and loss weights
    enc_horizon: int = 5
    q_horizon: int = 3
    dynamics_weight: float = 1.0
    reward_weight: float = 0.1
    terminal_weight: float = 0.1
    preactiv_weight: float = 1e-5
    # noise and exploration
    target_noise: float = 0.2
    target_noise_clip: float = 0.3
    exploration_noise: float = 0.2
    initial_random_steps: int = 10_000
    # prioritized replay
    lap_alpha: float = 0.4
    lap_min_priority: float = 1.0
    # optimizers
    encoder_lr: float = 1e-4
    encoder_weight_decay: float = 1e-4
    value_lr: float = 3e-4
    value_grad_clip: float = 20.0
    policy_lr: float = 3e-4
    # network dimensions
    zs_dim: int = 512
    za_dim: int = 256
    zsa_dim: int = 512
    hidden_dim: int = 512
    reward_bins: int = 65
    reward_half_range: float = 10.0
    gumbel_tau: float = 10.0
    # run control
    env_name: str = "gridworld-discrete"
    seed: int = 0
    total_steps: int = 10_000
    eval_every: int = 1_000
    eval_episodes: int = 10
    checkpoint_every: int = 10_000
    stop_at_eval_return: float | None = None
    torch_threads: int = 0  # 0 leaves the torch default untouched
    # environment construction
    grid_size: int = 5
    image_size: int = 40
    pixel_continuous: bool = False
    max_episode_steps: int = 100
    mdp_feature_dim: int = 6
    mdp_states: int = 10
    mdp_actions: int = 3
    # recorded interpretation switches
    reward_scale_floor: float = 1e-8
    reward_stat: str = "abs_mean"  # or "signed_mean"
    priority_td_mode: str = "mean"  # mean of the twin |td|; or "max"
    amortize_encoder_updates: bool = False
    explore_noise_on_onehot: bool = True
    # ablation wiring (set via `ablation`, or directly for experiments)
    ablation: str = ""
    linear_value: bool = False
    dynamics_target_sa: bool = False
    no_target_encoder: bool = False
    nonlinear_model: bool = False
    mse_reward_loss: bool = False
    no_reward_scaling: bool = False
    no_min: bool = False
    no_lap: bool = False
    no_mr: bool = False

    def env_config(self) -> dict:
        return {
            "grid_size": self.grid_size,
            "image_size": self.image_size,
            "continuous": self.pixel_continuous,
            "max_episode_steps": self.max_episode_steps,
            "feature_dim": self.mdp_feature_dim,
            "n_states": self.mdp_states,
            "n_actions": self.mdp_actions,
            "gamma": self.gamma,
        }


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def key_to_field(key: str) -> str:
    field = key.replace(".", "_").replace("-", "_")
    if field not in _FIELDS:
        raise ConfigurationError(f"unknown config key {key!r}")
    return field


def field_to_key(field: str) -> str:
    return field.replace("_", ".")


def coerce(field: str, raw: str):
    """Parse a raw string into the field's declared type."""
    f = _FIELDS[field]
    text = raw.strip()
    if f.type in ("bool", bool):
        if text.lower() in ("true", "1", "yes"):
            return True
        if text.lower() in ("false", "0", "no"):
            return False
        raise ConfigurationError(f"cannot parse {text!r} as bool for {field}")
    if f.type in ("int", int):
        try:
            return int(text)
        except ValueError as e:
            raise ConfigurationError(f"cannot parse {text!r} as int for {field}") from e
    if f.type in ("float", float, "float | None"):
        if f.type == "float | None" and text.lower() in ("none", "null", ""):
            return None
        try:
            return float(text)
        except ValueError as e:
            raise ConfigurationError(f"cannot parse {text!r} as float for {field}") from e
    return text


def parse_config_file(path) -> dict:
    """Read ``key = value`` lines; '#' starts a comment; blank lines ignored."""
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ConfigurationError(
                    f"{path}:{lineno}: expected 'key = value', got {stripped!r}"
                )
            key, _, raw = stripped.partition("=")
            try:
                field = key_to_field(key.strip())
                values[field] = coerce(field, raw)
            except ConfigurationError as e:
                raise ConfigurationError(f"{path}:{lineno}: {e}") from e
    return values


def resolve_config(
    file_values: dict | None = None, overrides: dict | None = None
) -> tuple[RunConfig, dict]:
    """Defaults, then file values, then overrides; returns (config, overrides-applied)."""
    merged: dict = {}
    applied: dict = {}
    for source in (file_values or {}), (overrides or {}):
        for field, value in source.items():
            if field not in _FIELDS:
                raise ConfigurationError(f"unknown config field {field!r}")
            merged[field] = value
            applied[field_to_key(field)] = value
    cfg = RunConfig(**merged)
    return apply_ablation(cfg), applied


def parse_ablation_list(text: str) -> list[str]:
    """Split, validate and deduplicate a comma-separated switch list."""
    names = [n.strip() for n in text.split(",") if n.strip()]
    unknown = [n for n in names if n not in ABLATIONS]
    if unknown:
        raise ConfigurationError(
            f"unknown ablation switch(es) {', '.join(unknown)}; "
            f"valid names: {', '.join(ABLATIONS)}"
        )
    seen = []
    for n in names:
        if n not in seen:
            seen.append(n)
    return seen


def apply_ablation(cfg: RunConfig) -> RunConfig:
    """Rewire the config per the named switches (validated, deduplicated)."""
    for name in parse_ablation_list(cfg.ablation):
        if name == "linear-value-function":
            cfg.linear_value = True
        elif name == "dynamics-target-sa":
            cfg.dynamics_target_sa = True
        elif name == "no-target-encoder":
            cfg.no_target_encoder = True
        elif name == "revert":
            cfg.linear_value = True
            cfg.dynamics_target_sa = True
            cfg.no_target_encoder = True
        elif name == "non-linear-model":
            cfg.nonlinear_model = True
        elif name == "mse-reward-loss":
            cfg.mse_reward_loss = True
        elif name == "no-reward-scaling":
            cfg.no_reward_scaling = True
        elif name == "no-min":
            cfg.no_min = True
        elif name == "no-lap":
            cfg.no_lap = True
        elif name == "no-mr":
            cfg.no_mr = True
        elif name == "one-step-return":
            cfg.q_horizon = 1
        elif name == "no-unroll":
            cfg.enc_horizon = 1
    return cfg


def config_to_dict(cfg: RunConfig) -> dict:
    """All resolved values under their dotted keys (manifest form)."""
    return {field_to_key(f.name): getattr(cfg, f.name) for f in dataclasses.fields(RunConfig)}
