"""Command-line entry points.

    searchtrack run --config scenario.json --seed 3 --out results/
    searchtrack mc --config-dir scenarios/ --seeds 1..20 --policy hybrid --out mc/
    searchtrack stats --metrics a.csv b.csv
    searchtrack train-predictor --synthetic 120 --out weights.json
    searchtrack eval-predictor --weights weights.json --synthetic 200
    searchtrack trace paths --in run.jsonl --out paths.csv
    searchtrack trace verify --in run.jsonl --config scenario.json
"""

from __future__ import annotations

import argparse
import glob
import json
import os
import sys

import numpy as np

from . import harness, trace_tools
from .prediction import (
    TrainConfig,
    ade_fde,
    cv_predict,
    gen_synthetic_dataset,
    load_weights,
    lstm_forward,
    save_weights,
    train,
)
from .scenario import POLICIES, load_scenario


def _parse_seeds(spec: str) -> list[int]:
    if ".." in spec:
        lo, hi = spec.split("..")
        return list(range(int(lo), int(hi) + 1))
    return [int(s) for s in spec.split(",")]


def _load_traj_dir(data_dir: str):
    """Windows from trajectory JSON files ({t,x,y} arrays) in a directory."""
    from .prediction import INPUT_LEN, OUTPUT_LEN, augment_rotations, normalize_window
    dataset = []
    for path in sorted(glob.glob(os.path.join(data_dir, "*.json"))):
        with open(path, "r", encoding="utf-8") as f:
            pts = np.array([[s["x"], s["y"]] for s in json.load(f)])
        span = INPUT_LEN + OUTPUT_LEN
        for s in range(0, len(pts) - span + 1, 5):
            inp, off = normalize_window(pts[s:s + INPUT_LEN])
            tgt = pts[s + INPUT_LEN:s + span] - off
            full = np.concatenate([inp, tgt])
            for rot in augment_rotations(full):
                dataset.append((rot[:INPUT_LEN], rot[INPUT_LEN:]))
    return dataset


def cmd_run(args) -> int:
    cfg = load_scenario(args.config)
    if args.policy:
        cfg.policy = args.policy
    if args.seed is not None:
        cfg.seed = args.seed
    if args.uncapped:
        cfg.time_cap = 0.0
    metrics, trace = harness.run_episode(cfg)
    os.makedirs(args.out, exist_ok=True)
    harness.export(trace, [(cfg.name, cfg.seed, metrics)], args.out)
    print(f"mission_time={metrics.mission_time} "
          f"tracked_ratio={metrics.tracked_ratio:.3f} "
          f"mean_traveled={metrics.mean_traveled:.2f}")
    return 0


def cmd_mc(args) -> int:
    paths = sorted(glob.glob(os.path.join(args.config_dir, "*.json")))
    if not paths:
        print(f"no scenario files in {args.config_dir}", file=sys.stderr)
        return 2
    cfgs = []
    for p in paths:
        cfg = load_scenario(p)
        if args.policy:
            cfg.policy = args.policy
            cfg.name = f"{cfg.name}_{args.policy}"
        cfgs.append(cfg)
    seeds = _parse_seeds(args.seeds)
    results = harness.run_monte_carlo(cfgs, seeds, out_dir=args.out)
    os.makedirs(args.out, exist_ok=True)
    harness.write_metrics_csv(results, os.path.join(args.out, "metrics.csv"))
    for name, row in harness.summarize(results).items():
        print(f"{name}: mission_time {row['mission_time_mean']:.2f} "
              f"+/- {row['mission_time_std']:.2f} over n={row['n']}")
    return 0


def cmd_stats(args) -> int:
    cols = args.column
    sa = [float(r[cols]) for r in harness.read_metrics_csv(args.metrics[0])]
    sb = [float(r[cols]) for r in harness.read_metrics_csv(args.metrics[1])]
    t, p = harness.welch_t_test(sa, sb)
    print(f"welch_t={t:.4f} p={p:.6g}")
    return 0


def cmd_train_predictor(args) -> int:
    if args.data:
        dataset = _load_traj_dir(args.data)
    else:
        dataset = gen_synthetic_dataset(args.synthetic,
                                        kinds=tuple(args.kinds.split(",")),
                                        seed=args.seed)
    if not dataset:
        print("empty training dataset", file=sys.stderr)
        return 2
    cfg = TrainConfig(epochs=args.epochs, hidden_dim=args.hidden)
    w = train(dataset, cfg, seed=args.seed)
    save_weights(w, args.out)
    print(f"trained on {len(dataset)} windows; "
          f"loss {w.loss_history[0]:.5f} -> {w.loss_history[-1]:.5f}; "
          f"saved {args.out}")
    return 0


def cmd_eval_predictor(args) -> int:
    w = load_weights(args.weights)
    if args.data:
        dataset = _load_traj_dir(args.data)
    else:
        dataset = gen_synthetic_dataset(args.synthetic,
                                        kinds=tuple(args.kinds.split(",")),
                                        seed=args.seed, augment=False)
    print("predictor,ade,fde")
    for name, fn in (("lstm", lambda a: lstm_forward(w, a)),
                     ("cv", lambda a: cv_predict(a))):
        ades, fdes = [], []
        for a, b in dataset:
            ade, fde = ade_fde(fn(a), b)
            ades.append(ade)
            fdes.append(fde)
        print(f"{name},{np.mean(ades):.6f},{np.mean(fdes):.6f}")
    return 0


def cmd_trace_paths(args) -> int:
    rows = trace_tools.extract_paths(harness.read_trace(args.infile))
    trace_tools.write_paths_csv(rows, args.out)
    print(f"{len(rows)} rows -> {args.out}")
    return 0


def cmd_trace_verify(args) -> int:
    cfg = load_scenario(args.config)
    ok = trace_tools.replay_check_file(args.infile, cfg)
    print("replay: OK" if ok else "replay: MISMATCH")
    return 0 if ok else 1


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="searchtrack",
                                 description="multi-agent search-and-track "
                                             "simulation engine")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("run", help="run one episode")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--policy", choices=POLICIES, default=None)
    p.add_argument("--uncapped", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("mc", help="Monte Carlo batch over configs x seeds")
    p.add_argument("--config-dir", required=True)
    p.add_argument("--seeds", required=True, help="e.g. 1..20 or 1,5,9")
    p.add_argument("--policy", choices=POLICIES, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_mc)

    p = sub.add_parser("stats", help="Welch t-test between two metrics CSVs")
    p.add_argument("--metrics", nargs=2, required=True)
    p.add_argument("--column", default="mission_time")
    p.set_defaults(fn=cmd_stats)

    p = sub.add_parser("train-predictor", help="train the trajectory predictor")
    p.add_argument("--data", default=None, help="directory of trajectory JSON")
    p.add_argument("--synthetic", type=int, default=120)
    p.add_argument("--kinds", default="linear,turning,sinusoidal")
    p.add_argument("--epochs", type=int, default=300)
    p.add_argument("--hidden", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_train_predictor)

    p = sub.add_parser("eval-predictor", help="ADE/FDE of a weights file")
    p.add_argument("--weights", required=True)
    p.add_argument("--data", default=None)
    p.add_argument("--synthetic", type=int, default=200)
    p.add_argument("--kinds", default="turning,sinusoidal")
    p.add_argument("--seed", type=int, default=999)
    p.set_defaults(fn=cmd_eval_predictor)

    p = sub.add_parser("trace", help="trace post-processing")
    tsub = p.add_subparsers(dest="trace_cmd", required=True)
    tp = tsub.add_parser("paths", help="extract per-entity polylines to CSV")
    tp.add_argument("--in", dest="infile", required=True)
    tp.add_argument("--out", required=True)
    tp.set_defaults(fn=cmd_trace_paths)
    tv = tsub.add_parser("verify", help="re-simulate and compare a trace")
    tv.add_argument("--in", dest="infile", required=True)
    tv.add_argument("--config", required=True)
    tv.set_defaults(fn=cmd_trace_verify)

    args = ap.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
