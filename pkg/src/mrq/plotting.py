"""Static learning-curve plots: mean over seeds with a bootstrap CI band."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .runner import load_metrics

BOOTSTRAP_RESAMPLES = 10_000


def eval_curve(records: list[dict]) -> tuple[np.ndarray, np.ndarray]:
    steps, values = [], []
    for r in records:
        if r.get("eval_return") is not None:
            steps.append(r["step"])
            values.append(r["eval_return"])
    return np.asarray(steps), np.asarray(values, dtype=np.float64)


def bootstrap_band(
    curves: np.ndarray, resamples: int = BOOTSTRAP_RESAMPLES, seed: int = 0
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Mean curve and 95% bootstrap interval over the seed axis.

    curves has shape [seeds, points]; a single seed collapses the band onto
    the curve.
    """
    mean = curves.mean(axis=0)
    n = curves.shape[0]
    rng = np.random.default_rng(seed)
    samples = curves[rng.integers(0, n, size=(resamples, n))].mean(axis=1)
    lo = np.percentile(samples, 2.5, axis=0)
    hi = np.percentile(samples, 97.5, axis=0)
    return mean, lo, hi


def group_by_env(metric_files: list[Path]) -> dict[str, list[Path]]:
    """Group metrics files by the env name in the sibling manifest."""
    groups: dict[str, list[Path]] = {}
    for path in metric_files:
        manifest = Path(path).parent / "manifest.json"
        env = "run"
        if manifest.exists():
            env = json.loads(manifest.read_text())["config"].get("env.name", "run")
        groups.setdefault(env, []).append(Path(path))
    return groups


def plot_metrics(metric_files, out_dir) -> list[Path]:
    """One image per environment: eval return vs. step with a CI band."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for env, files in group_by_env([Path(f) for f in metric_files]).items():
        curves = []
        steps_ref = None
        for f in files:
            steps, values = eval_curve(load_metrics(f))
            if steps.size == 0:
                continue
            if steps_ref is None:
                steps_ref = steps
            n = min(len(steps_ref), len(steps))
            steps_ref = steps_ref[:n]
            curves = [c[:n] for c in curves]
            curves.append(values[:n])
        if not curves:
            continue
        curves = np.vstack(curves)
        mean, lo, hi = bootstrap_band(curves)
        fig, ax = plt.subplots(figsize=(5, 3.2))
        ax.plot(steps_ref, mean, label=f"{env} (n={curves.shape[0]})")
        ax.fill_between(steps_ref, lo, hi, alpha=0.25)
        ax.set_xlabel("environment steps")
        ax.set_ylabel("evaluation return")
        ax.legend(loc="best")
        fig.tight_layout()
        target = out / f"{env.replace('/', '_')}.png"
        fig.savefig(target, dpi=120)
        plt.close(fig)
        written.append(target)
    return written
