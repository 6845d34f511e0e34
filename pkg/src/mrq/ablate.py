"""Ablation sweeps: baseline plus switch variants over shared seeds."""

from __future__ import annotations

import dataclasses
import json
import multiprocessing as mp
from pathlib import Path

import numpy as np

from .config import RunConfig, apply_ablation
from .runner import load_metrics, train_run

BASELINE = "baseline"


def final_eval_return(metrics_path) -> float | None:
    last = None
    for record in load_metrics(metrics_path):
        if record.get("eval_return") is not None:
            last = record["eval_return"]
    return last


def _run_one(args) -> tuple[str, int, float | None]:
    variant, seed, base_cfg_dict, out_dir = args
    cfg = RunConfig(**base_cfg_dict)
    cfg.seed = seed
    cfg.ablation = "" if variant == BASELINE else variant
    cfg = apply_ablation(cfg)
    run_dir = Path(out_dir) / variant / f"seed_{seed}"
    result = train_run(cfg, run_dir, overrides={"ablation": cfg.ablation, "seed": seed})
    return variant, seed, final_eval_return(result.metrics_path)


def bootstrap_ci(deltas: np.ndarray, resamples: int = 10_000, seed: int = 0):
    rng = np.random.default_rng(seed)
    n = len(deltas)
    samples = deltas[rng.integers(0, n, size=(resamples, n))].mean(axis=1)
    return float(np.percentile(samples, 2.5)), float(np.percentile(samples, 97.5))


def run_sweep(
    cfg: RunConfig, variants: list[str], seeds: list[int], out_dir, workers: int = 1
) -> dict:
    """Train baseline + variants on shared seeds; return the delta table.

    Each (variant, seed) pair runs in its own process when workers > 1; rows
    report mean final-eval-return difference to the baseline with a 95%
    bootstrap CI over seeds.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    base_dict = dataclasses.asdict(cfg)
    jobs = [
        (variant, seed, base_dict, str(out))
        for variant in [BASELINE, *variants]
        for seed in seeds
    ]
    if workers > 1:
        with mp.get_context("spawn").Pool(workers) as pool:
            results = pool.map(_run_one, jobs)
    else:
        results = [_run_one(job) for job in jobs]

    finals: dict[str, dict[int, float | None]] = {}
    for variant, seed, final in results:
        finals.setdefault(variant, {})[seed] = final

    rows = []
    baseline = finals[BASELINE]
    for variant in variants:
        deltas = np.array(
            [
                (finals[variant][s] or 0.0) - (baseline[s] or 0.0)
                for s in seeds
            ],
            dtype=np.float64,
        )
        lo, hi = bootstrap_ci(deltas)
        rows.append(
            {
                "variant": variant,
                "env": cfg.env_name,
                "mean_delta": float(deltas.mean()),
                "ci_low": lo,
                "ci_high": hi,
                "per_seed": {str(s): float(d) for s, d in zip(seeds, deltas)},
            }
        )
    report = {
        "env": cfg.env_name,
        "seeds": seeds,
        "baseline_final": {str(s): baseline[s] for s in seeds},
        "rows": rows,
    }
    (out / "ablation_report.json").write_text(json.dumps(report, indent=2) + "\n")
    return report


def format_report(report: dict) -> str:
    lines = [
        f"env: {report['env']}   seeds: {report['seeds']}",
        f"{'variant':<24} {'mean delta':>12} {'95% CI':>24}",
    ]
    for row in report["rows"]:
        ci = f"[{row['ci_low']:+.4f}, {row['ci_high']:+.4f}]"
        lines.append(f"{row['variant']:<24} {row['mean_delta']:>+12.4f} {ci:>24}")
    if not report["rows"]:
        lines.append("(no variants requested; baseline only)")
    return "\n".join(lines)
