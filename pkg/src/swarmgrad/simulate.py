"""The simulation loop: observe, estimate, act, step — synchronously.

Per step, from one immutable world snapshot, every agent (1) receives
noisy observations of all N-1 neighbors, (2) runs its estimator bank
through predict / memory policy / gated update, (3) picks an action by
descending the steepest neighbor-cost gradient; then the world advances
all poses at once. Agents never see another agent's same-step writes.

Agents dead-reckon their own pose by pushing their previous action
through the same motion model as the world, which (with zero ego process
noise) keeps the ego estimate exact without reading ground truth.

Determinism: for a fixed (params, seed) the trajectory is a pure
function, independent of worker count; all randomness flows from
counter-based streams keyed by (seed, step, agent).
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import __version__
from .config import SimParams
from .control import ControlParams, NumericsError, select_actions_batch
from .estimation import BeliefBank, EstimatorParams
from .metrics import MetricsReport, Trajectory, compute_report
from .perception import FovParams
from .world import advance_poses, init_world, observe_all, step_world


@dataclass(frozen=True)
class RunRecord:
    """Result of one run: params echo, metrics, timing, diagnostics."""

    params: SimParams
    metrics: MetricsReport
    wall_time: float
    version: str
    diagnostics: dict
    trajectory_path: str | None = None


def control_params(p: SimParams) -> ControlParams:
    fov = FovParams(psi=p.psi, k_vis=p.k_vis)
    return ControlParams(
        d0=p.d0, omega_max=p.omega_max, v_max=p.v_max,
        eta_v=p.eta_v, eta_omega=p.eta_omega, lookahead_dt=p.lookahead_dt,
        q=p.q, sigma_phi=p.sigma_phi, sigma_gamma=p.sigma_gamma,
        fov=fov, r_body=p.r_body, v_control=p.v_control, v_fixed=p.v_fixed,
    )


def estimator_params(p: SimParams) -> EstimatorParams:
    fov = FovParams(psi=p.psi, k_vis=p.k_vis)
    return EstimatorParams(
        q=p.q, sigma_phi=p.sigma_phi, sigma_gamma=p.sigma_gamma,
        memory=p.memory, tau_vis=p.tau_vis, q_ego=p.q_ego,
        fov=fov, r_body=p.r_body,
    )


def simulate(params: SimParams) -> tuple[Trajectory, dict]:
    """Run T steps; returns the trajectory and per-step diagnostics.

    The trajectory records, for each step t, the snapshot the decisions
    were made from and the action applied over [t, t+1).
    """
    params.validate()
    world = init_world(params, params.seed)
    n, t_steps = params.N, params.T
    bank = BeliefBank(n)
    est = estimator_params(params)
    ctl = control_params(params)

    ego_poses = world.poses.copy()  # dead-reckoned; stays equal to truth
    prev_actions = np.zeros((n, 2))

    poses_out = np.empty((t_steps, n, 3))
    actions_out = np.empty((t_steps, n, 2))
    diag = {"alive_fraction": [], "mean_p_vis": [], "mean_cov_trace": []}

    for t in range(t_steps):
        phi_obs, gam_obs = observe_all(world, params)
        bank.step(phi_obs, gam_obs, ego_poses, est, params.dt)
        try:
            actions = select_actions_batch(prev_actions, ego_poses, bank, ctl)
        except NumericsError as exc:
            raise NumericsError(f"step {t}: {exc}") from exc

        poses_out[t] = world.poses
        actions_out[t] = actions

        alive = bank.alive
        diag["alive_fraction"].append(float(alive.mean()))
        diag["mean_p_vis"].append(float(bank.p_vis[alive].mean()) if alive.any() else 0.0)
        diag["mean_cov_trace"].append(
            float((bank.ca[alive] + bank.cc[alive]).mean()) if alive.any() else 0.0
        )

        world = step_world(world, actions, params)
        if not np.all(np.isfinite(world.poses)):
            bad = np.nonzero(~np.isfinite(world.poses).all(axis=1))[0][0]
            raise NumericsError(f"step {t}: non-finite pose for agent {bad}")
        ex, ey, eth = advance_poses(
            ego_poses[:, 0], ego_poses[:, 1], ego_poses[:, 2],
            actions[:, 0], actions[:, 1], params.dt,
        )
        ego_poses = np.column_stack([ex, ey, eth])
        prev_actions = actions

    diag["belief_floor_events"] = bank.floor_events
    trajectory = Trajectory(
        poses=poses_out, actions=actions_out, dt=params.dt,
        seed=params.seed, params=params,
    )
    return trajectory, diag


def run_simulation(params: SimParams, out_dir=None) -> RunRecord:
    """Simulate, compute metrics, and optionally persist everything.

    With ``out_dir`` set, writes trajectory.csv, metrics.json,
    diagnostics.json and params.json into it.
    """
    start = time.perf_counter()
    trajectory, diag = simulate(params)
    report = compute_report(
        trajectory, eps=params.eps_dbscan, min_pts=params.min_pts,
        window_fraction=params.eval_window_fraction,
    )
    wall = time.perf_counter() - start
    path = None
    if out_dir is not None:
        from . import trajio  # local import; keeps numpy-only users light

        path = trajio.persist_run(out_dir, params, trajectory, report, diag, wall)
    return RunRecord(
        params=params, metrics=report, wall_time=wall,
        version=__version__, diagnostics=diag, trajectory_path=path,
    )
