"""Training orchestration: seeding, metrics, manifests, checkpoints, eval.

One metrics record is written per environment step as a JSON line. All
scientific fields are deterministic for a fixed seed; the wall_clock field
is the only volatile one, and ``canonical_metrics_bytes`` strips it for
byte-level comparisons.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from . import __version__
from .agent import MRQAgent
from .buffer import ReplayBuffer, Transition
from .config import RunConfig, config_to_dict
from .envs import make_env
from .errors import NumericError

METRIC_FIELDS = (
    "step",
    "episode_return",
    "eval_return",
    "loss_encoder",
    "loss_reward",
    "loss_dynamics",
    "loss_terminal",
    "loss_value",
    "loss_policy",
    "r_bar",
    "mean_priority",
    "clipped_action_count",
    "wall_clock",
)

EVAL_SEED_OFFSET = 761_203


@dataclass
class RunResult:
    steps: int
    episodes: int
    final_eval_return: float | None
    last_eval_step: int | None
    stopped_early: bool
    metrics_path: Path
    manifest_path: Path
    checkpoint_path: Path | None


def write_manifest(path: Path, cfg: RunConfig, overrides: dict, env_spec) -> None:
    manifest = {
        "artifact_version": __version__,
        "config": config_to_dict(cfg),
        "overrides": overrides,
        "seed": cfg.seed,
        "env_spec": {
            "obs_kind": env_spec.obs_kind,
            "obs_shape": list(env_spec.obs_shape),
            "action_kind": env_spec.action_kind,
            "action_dim": env_spec.action_dim,
            "max_episode_steps": env_spec.max_episode_steps,
        },
        "torch_threads": torch.get_num_threads(),
        "start_timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def evaluate(agent: MRQAgent, env, episodes: int) -> float:
    """Mean return of noiseless policy episodes."""
    total = 0.0
    for _ in range(episodes):
        obs = env.reset()
        done = False
        while not done:
            action = agent.select_action(obs, explore=False)
            obs, reward, terminal, truncated = env.step(action)
            total += reward
            done = terminal or truncated
    return total / episodes


def train_run(cfg: RunConfig, out_dir, overrides: dict | None = None) -> RunResult:
    """Run the full training loop, writing manifest, metrics, checkpoints."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.torch_threads > 0:
        torch.set_num_threads(cfg.torch_threads)
    torch.manual_seed(cfg.seed)

    env = make_env(cfg.env_name, cfg.env_config(), seed=cfg.seed)
    eval_env = make_env(cfg.env_name, cfg.env_config(), seed=cfg.seed + EVAL_SEED_OFFSET)
    agent = MRQAgent(cfg, env.spec)
    buffer = ReplayBuffer(
        cfg.buffer_capacity,
        env.spec.obs_shape,
        env.spec.action_dim,
        obs_dtype=np.uint8 if env.spec.obs_kind == "pixel" else np.float32,
        discrete_actions=env.spec.action_kind == "discrete",
        alpha=cfg.lap_alpha,
        min_priority=cfg.lap_min_priority,
    )
    sample_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 2]))

    manifest_path = out / "manifest.json"
    write_manifest(manifest_path, cfg, overrides or {}, env.spec)
    metrics_path = out / "metrics.jsonl"
    checkpoint_path = out / "checkpoint.pt"

    start = time.monotonic()
    obs = env.reset()
    episode_return = 0.0
    episodes = 0
    final_eval = None
    last_eval_step = None
    stopped_early = False

    with open(metrics_path, "w") as metrics:
        for step in range(1, cfg.total_steps + 1):
            action = agent.select_action(obs, explore=True)
            next_obs, reward, terminal, truncated = env.step(action)
            transition = Transition(
                obs, agent.action_to_vector(action), reward, terminal, truncated, next_obs
            )
            buffer.add(transition)
            agent.observe(transition)
            episode_return += reward

            record = {field: None for field in METRIC_FIELDS}
            record["step"] = step

            if terminal or truncated:
                episodes += 1
                record["episode_return"] = round(episode_return, 10)
                episode_return = 0.0
                obs = env.reset()
            else:
                obs = next_obs

            if step > cfg.initial_random_steps:
                try:
                    stats = agent.gradient_step(buffer, sample_rng)
                except NumericError:
                    agent.save(checkpoint_path)
                    raise
                for name in (
                    "loss_encoder",
                    "loss_reward",
                    "loss_dynamics",
                    "loss_terminal",
                    "loss_value",
                    "loss_policy",
                ):
                    value = getattr(stats, name)
                    if value is not None:
                        record[name] = round(value, 8)

            if cfg.eval_every > 0 and step % cfg.eval_every == 0:
                final_eval = evaluate(agent, eval_env, cfg.eval_episodes)
                last_eval_step = step
                record["eval_return"] = round(final_eval, 10)

            record["r_bar"] = round(agent.reward_scale, 10)
            record["mean_priority"] = round(buffer.mean_priority(), 10)
            record["clipped_action_count"] = env.clipped_action_count
            record["wall_clock"] = round(time.monotonic() - start, 3)
            metrics.write(json.dumps(record) + "\n")

            if cfg.checkpoint_every > 0 and step % cfg.checkpoint_every == 0:
                agent.save(checkpoint_path)

            if (
                cfg.stop_at_eval_return is not None
                and final_eval is not None
                and final_eval >= cfg.stop_at_eval_return
            ):
                stopped_early = True
                break

    agent.save(checkpoint_path)
    return RunResult(
        steps=step,
        episodes=episodes,
        final_eval_return=final_eval,
        last_eval_step=last_eval_step,
        stopped_early=stopped_early,
        metrics_path=metrics_path,
        manifest_path=manifest_path,
        checkpoint_path=checkpoint_path,
    )


def canonical_metrics_bytes(path) -> bytes:
    """Metrics file with the volatile wall_clock field removed per line.

    Determinism comparisons use this canonical form; every other field is
    reproducible bit-for-bit for a fixed seed.
    """
    out = []
    for line in Path(path).read_text().splitlines():
        record = json.loads(line)
        record.pop("wall_clock", None)
        out.append(json.dumps(record, sort_keys=True))
    return ("\n".join(out) + "\n").encode()


def load_metrics(path) -> list[dict]:
    """Parse a metrics JSONL file; malformed lines are skipped and counted."""
    records = []
    skipped = 0
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError:
            skipped += 1
    if skipped:
        import sys

        print(f"warning: skipped {skipped} malformed metric line(s) in {path}", file=sys.stderr)
    return records
