"""Trajectory CSV and report JSON persistence.

Trajectory files are plain CSV with header
``step,agent_id,x,y,theta,v,omega``, one row per (step, agent), floats
serialized with 17 significant digits so a write/read round trip is
bit-exact. Reports are JSON with the documented field names.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .config import SimParams, params_from_dict, params_to_dict
from .metrics import MetricsReport, Trajectory

HEADER = "step,agent_id,x,y,theta,v,omega"


class TrajectoryFormatError(ValueError):
    """Malformed trajectory file."""


def write_trajectory(trajectory: Trajectory, path) -> None:
    path = Path(path)
    t_steps, n = trajectory.n_steps, trajectory.n_agents
    with path.open("w") as fh:
        fh.write(HEADER + "\n")
        for t in range(t_steps):
            poses = trajectory.poses[t]
            acts = trajectory.actions[t]
            for i in range(n):
                fh.write(
                    f"{t},{i},{poses[i, 0]:.17g},{poses[i, 1]:.17g},"
                    f"{poses[i, 2]:.17g},{acts[i, 0]:.17g},{acts[i, 1]:.17g}\n"
                )


def read_trajectory(path, dt: float = 0.1, seed: int = 0) -> Trajectory:
    path = Path(path)
    with path.open() as fh:
        header = fh.readline().rstrip("\n")
        if header != HEADER:
            raise TrajectoryFormatError(
                f"{path}: bad header {header!r}, expected {HEADER!r}"
            )
        rows = []
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 7:
                raise TrajectoryFormatError(
                    f"{path}: row {lineno}: expected 7 fields, got {len(parts)}"
                )
            try:
                rows.append([float(x) for x in parts])
            except ValueError as exc:
                raise TrajectoryFormatError(f"{path}: row {lineno}: {exc}") from exc
    if not rows:
        raise TrajectoryFormatError(f"{path}: no data rows")
    data = np.asarray(rows)
    steps = data[:, 0].astype(int)
    agents = data[:, 1].astype(int)
    t_steps = steps.max() + 1
    n = agents.max() + 1
    if len(rows) != t_steps * n:
        raise TrajectoryFormatError(
            f"{path}: expected {t_steps * n} rows for T={t_steps}, N={n}, got {len(rows)}"
        )
    poses = np.empty((t_steps, n, 3))
    actions = np.empty((t_steps, n, 2))
    poses[steps, agents] = data[:, 2:5]
    actions[steps, agents] = data[:, 5:7]
    return Trajectory(poses=poses, actions=actions, dt=dt, seed=seed)


def write_metrics(report: MetricsReport, path) -> None:
    Path(path).write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")


def read_metrics(path) -> dict:
    return json.loads(Path(path).read_text())


def write_params(params: SimParams, path) -> None:
    Path(path).write_text(
        json.dumps(params_to_dict(params), indent=2, sort_keys=True) + "\n"
    )


def read_params(path) -> SimParams:
    return params_from_dict(json.loads(Path(path).read_text()))


def persist_run(out_dir, params, trajectory, report, diagnostics, wall_time) -> str:
    """Write the standard run bundle; returns the trajectory path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    traj_path = out / "trajectory.csv"
    write_trajectory(trajectory, traj_path)
    write_metrics(report, out / "metrics.json")
    write_params(params, out / "params.json")
    diag = dict(diagnostics)
    diag["wall_time"] = wall_time
    (out / "diagnostics.json").write_text(json.dumps(diag, indent=2) + "\n")
    return str(traj_path)
