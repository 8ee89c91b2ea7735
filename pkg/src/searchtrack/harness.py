"""Episode execution, Monte Carlo batches, statistics, and trace export."""

from __future__ import annotations

import concurrent.futures
import csv
import json
import math
import os
from dataclasses import dataclass, replace

import numpy as np
from scipy import stats

from .engine import Episode, RunMetrics
from .prediction import (
    PredictorWeights,
    TrainConfig,
    gen_synthetic_dataset,
    load_weights,
    save_weights,
    train,
)
from .scenario import ScenarioConfig, load_scenario

METRICS_HEADER = ["config", "seed", "mission_time", "tracked_ratio",
                  "mean_tracking_time", "mean_traveled"]

_DEFAULT_WEIGHTS_SEED = 20240
_predictor_cache: dict[str, PredictorWeights] = {}


def default_weights_path() -> str:
    root = os.environ.get("SEARCHTRACK_CACHE",
                          os.path.join(os.path.expanduser("~"), ".cache",
                                       "searchtrack"))
    return os.path.join(root, "default_predictor.json")


def ensure_default_weights(path: str | None = None) -> str:
    """Train (once, deterministically) and cache the runtime predictor."""
    path = path or default_weights_path()
    if not os.path.exists(path):
        os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
        ds = gen_synthetic_dataset(60, kinds=("linear", "turning", "sinusoidal"),
                                   seed=_DEFAULT_WEIGHTS_SEED)
        w = train(ds, TrainConfig(epochs=150), seed=_DEFAULT_WEIGHTS_SEED)
        save_weights(w, path)
    return path


def _predictor_for(cfg: ScenarioConfig) -> PredictorWeights | None:
    if cfg.policy != "hybrid" or not cfg.toggles.lstm:
        return None
    path = cfg.predictor_weights or ensure_default_weights()
    if path not in _predictor_cache:
        _predictor_cache[path] = load_weights(path)
    return _predictor_cache[path]


def run_episode(cfg: ScenarioConfig, predictor: PredictorWeights | None = None
                ) -> tuple[RunMetrics, list[dict]]:
    """Run one seeded episode; identical (cfg, seed) gives an identical trace."""
    if predictor is None:
        predictor = _predictor_for(cfg)
    return Episode(cfg, predictor).run()


def _run_one(args):
    cfg_dict, seed, out_dir = args
    from .scenario import scenario_from_dict
    cfg = scenario_from_dict(cfg_dict)
    cfg.seed = seed
    metrics, trace = run_episode(cfg)
    if out_dir:
        path = os.path.join(out_dir, f"{cfg.name}_seed{seed}.jsonl")
        write_trace(trace, path)
    return (cfg.name, seed, metrics)


def run_monte_carlo(cfgs: list[ScenarioConfig], seeds: list[int],
                    out_dir: str | None = None, max_workers: int | None = None
                    ) -> list[tuple[str, int, RunMetrics]]:
    """All (config, seed) episodes, in parallel; SAT_THREADS bounds workers."""
    if not cfgs or not seeds:
        raise ValueError("need at least one config and one seed")
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    for cfg in cfgs:
        if cfg.policy == "hybrid" and cfg.toggles.lstm and not cfg.predictor_weights:
            ensure_default_weights()  # train once before forking workers
    from .scenario import scenario_to_dict
    jobs = [(scenario_to_dict(cfg), seed, out_dir)
            for cfg in cfgs for seed in seeds]
    if max_workers is None:
        max_workers = int(os.environ.get("SAT_THREADS", "0")) or (os.cpu_count() or 1)
    max_workers = max(1, min(max_workers, len(jobs)))
    if max_workers == 1:
        results = [_run_one(j) for j in jobs]
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=max_workers) as ex:
            results = list(ex.map(_run_one, jobs))
    results.sort(key=lambda r: (r[0], r[1]))
    return results


def summarize(results) -> dict[str, dict[str, float]]:
    """Per-config mean/std over seeds for each metric."""
    by_cfg: dict[str, list[RunMetrics]] = {}
    for name, _seed, m in results:
        by_cfg.setdefault(name, []).append(m)
    out = {}
    for name in sorted(by_cfg):
        ms = by_cfg[name]
        mt = np.array([m.mission_time for m in ms])
        tr = np.array([m.tracked_ratio for m in ms])
        out[name] = {
            "n": len(ms),
            "mission_time_mean": float(mt.mean()),
            "mission_time_std": float(mt.std(ddof=1)) if len(ms) > 1 else 0.0,
            "tracked_ratio_mean": float(tr.mean()),
        }
    return out


def welch_t_test(a, b) -> tuple[float, float]:
    """Welch's unequal-variance t and two-sided p (Student-t CDF,
    Welch-Satterthwaite degrees of freedom)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if len(a) < 2 or len(b) < 2:
        raise ValueError("need at least two samples per group")
    va, vb = a.var(ddof=1), b.var(ddof=1)
    if va == 0.0 and vb == 0.0:
        raise ValueError("both samples have zero variance")
    na, nb = len(a), len(b)
    se2 = va / na + vb / nb
    t = (a.mean() - b.mean()) / math.sqrt(se2)
    dof = se2 ** 2 / ((va / na) ** 2 / (na - 1) + (vb / nb) ** 2 / (nb - 1))
    p = 2.0 * stats.t.sf(abs(t), dof)
    return float(t), float(p)


# -- export -------------------------------------------------------------------

def trace_line(event: dict) -> str:
    return json.dumps(event, sort_keys=True, separators=(",", ":"))


def write_trace(trace: list[dict], path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for ev in trace:
            f.write(trace_line(ev) + "\n")


def read_trace(path: str) -> list[dict]:
    with open(path, "r", encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]


def export(trace: list[dict], metrics_rows: list[tuple[str, int, RunMetrics]],
           out_dir: str) -> None:
    """Trace to JSONL and metrics to CSV under out_dir."""
    os.makedirs(out_dir, exist_ok=True)
    write_trace(trace, os.path.join(out_dir, "trace.jsonl"))
    write_metrics_csv(metrics_rows, os.path.join(out_dir, "metrics.csv"))


def write_metrics_csv(rows: list[tuple[str, int, RunMetrics]], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(METRICS_HEADER)
        for name, seed, m in rows:
            wr.writerow([name, seed, m.mission_time, m.tracked_ratio,
                         m.mean_tracking_time, m.mean_traveled])


def read_metrics_csv(path: str) -> list[dict]:
    with open(path, "r", encoding="utf-8") as f:
        return list(csv.DictReader(f))
