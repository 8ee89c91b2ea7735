"""Post-hoc trace analysis: plot-ready extracts and replay verification."""

from __future__ import annotations

import csv

from . import ENGINE_VERSION
from .harness import read_trace, run_episode, trace_line
from .scenario import ScenarioConfig


class TraceVersionError(RuntimeError):
    """Trace was produced by a different engine version."""


def extract_paths(trace: list[dict]) -> list[dict]:
    """Pose events flattened to {entity, id, t, x, y, kind} rows."""
    rows = []
    for ev in trace:
        if ev.get("kind") != "pose":
            continue
        kind = ev["entity"]
        if kind == "target" and ev.get("cleared"):
            kind = "target-cleared"
        rows.append({"entity": f"{ev['entity']}{ev['id']}", "t": ev["t"],
                     "x": ev["x"], "y": ev["y"], "kind": kind})
    return rows


def write_paths_csv(rows: list[dict], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        wr = csv.DictWriter(f, fieldnames=["entity", "t", "x", "y", "kind"])
        wr.writeheader()
        wr.writerows(rows)


def replay_check(trace: list[dict], cfg: ScenarioConfig) -> bool:
    """Re-simulate with the trace's seed and compare event by event."""
    if not trace or trace[0].get("kind") != "header":
        raise TraceVersionError("trace has no header line")
    header = trace[0]
    if header.get("version") != ENGINE_VERSION:
        raise TraceVersionError(
            f"trace version {header.get('version')!r} != {ENGINE_VERSION!r}")
    cfg.seed = int(header["seed"])
    _, fresh = run_episode(cfg)
    if len(fresh) != len(trace):
        return False
    for a, b in zip(fresh, trace):
        if trace_line(a) != trace_line(b):
            return False
    return True


def replay_check_file(trace_path: str, cfg: ScenarioConfig) -> bool:
    return replay_check(read_trace(trace_path), cfg)
