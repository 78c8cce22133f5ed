"""Recursive Gaussian estimators for ego pose and neighbor positions.

Each agent dead-reckons its own pose from its actions and runs one
position filter per neighbor. Neighbor filters use a random-walk process
model (intensity Q) and an extended Kalman update on the stacked
(bearing, apparent size) measurement; visibility modulates the update by
inflating the measurement covariance, R_eff = R / max(p_vis, EPS_P), so
the field-of-view gate stays differentiable rather than hard.

Two memory policies are supported. With memory, beliefs persist while a
neighbor is invisible, accumulating process noise. Without memory, a
belief whose visibility falls below tau_vis is discarded and later
re-initialized from a single observation inversion once the neighbor
re-enters the field of view. Beliefs in both policies come into
existence the same way: from the first sufficiently-visible observation.

The scalar functions operate on single beliefs and are thin wrappers
over the array kernels used by ``BeliefBank``, which holds every
(agent, neighbor) filter of a simulation in flat (N, N-1) arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .perception import EPS_COV, FovParams, invert_observation_arrays, visibility
from .world import (
    EPS_D,
    Observation,
    Pose,
    advance_poses,
    neighbor_ids,
    wrap_angle,
)

# visibility floor for the measurement-covariance inflation 1 / p_vis
EPS_P = 1e-3


@dataclass
class NeighborBelief:
    """Gaussian estimate of one neighbor's world position.

    ``alive`` is False only for beliefs discarded under the memoryless
    policy (or not yet initialized); dead beliefs carry no usable state.
    """

    mean: np.ndarray  # (2,)
    cov: np.ndarray  # (2, 2) SPD
    p_vis: float = 1.0
    alive: bool = True
    steps_unseen: int = 0


@dataclass
class EgoBelief:
    """Gaussian belief over the agent's own pose."""

    mean: Pose
    cov: np.ndarray  # (3, 3)


@dataclass(frozen=True)
class EstimatorParams:
    """Filter constants: process/measurement assumptions and memory policy."""

    q: float  # neighbor process noise intensity (length^2 / time)
    sigma_phi: float  # assumed bearing noise std (rad)
    sigma_gamma: float  # assumed apparent-size noise, relative
    memory: bool = True
    tau_vis: float = 0.5
    q_ego: float = 0.0
    fov: FovParams = FovParams(psi=2.0 * np.pi, k_vis=10.0)
    r_body: float = 1.0

    def __post_init__(self):
        if self.q < 0:
            raise ValueError(f"Q must be >= 0, got {self.q}")
        if not (0.0 < self.tau_vis < 1.0):
            raise ValueError(f"tau_vis must be in (0, 1), got {self.tau_vis}")


def propagate_ego(belief: EgoBelief, action, dt: float, q_ego=0.0) -> EgoBelief:
    """Advance the ego belief through the motion model.

    Mean follows the exact-arc unicycle step; covariance is pushed through
    the motion Jacobian F and grows by q_ego * dt (scalar intensity or a
    full 3x3 matrix).
    """
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    p = belief.mean
    nx, ny, nth = advance_poses(p.x, p.y, p.theta, float(action.v), float(action.omega), dt)
    # dx'/dtheta = -(y'-y), dy'/dtheta = (x'-x); translation block is identity
    f = np.array([[1.0, 0.0, -(ny - p.y)], [0.0, 1.0, nx - p.x], [0.0, 0.0, 1.0]])
    q = q_ego * np.eye(3) if np.ndim(q_ego) == 0 else np.asarray(q_ego)
    cov = f @ belief.cov @ f.T + q * dt
    return EgoBelief(mean=Pose(float(nx), float(ny), float(nth)), cov=cov)


def predict_neighbor(belief: NeighborBelief, q: float, dt: float) -> NeighborBelief:
    """Random-walk prediction: mean unchanged, covariance grows by q dt I.

    A dead belief is returned unchanged (no-op signal under the
    memoryless policy).
    """
    if not belief.alive:
        return belief
    return replace(belief, cov=belief.cov + q * dt * np.eye(2))


def spd_floor_arrays(a, b, c, floor=EPS_COV):
    """Clamp eigenvalues of symmetric 2x2 matrices [[a, b], [b, c]].

    Analytic 2x2 eigendecomposition, vectorized. Returns floored
    components plus the count of matrices that needed flooring.
    """
    mean = 0.5 * (a + c)
    diff = 0.5 * (a - c)
    rad = np.sqrt(diff * diff + b * b)
    lo = mean - rad
    bad = lo < floor
    n_bad = int(np.count_nonzero(bad))
    if n_bad == 0:
        return a, b, c, 0
    hi = np.maximum(mean + rad, floor)
    lo_cl = np.maximum(lo, floor)
    # eigenvector for the larger eigenvalue; degenerate rad -> x axis
    with np.errstate(invalid="ignore", divide="ignore"):
        vx = np.where(rad > 0, np.where(diff >= 0, rad + diff, b), 1.0)
        vy = np.where(rad > 0, np.where(diff >= 0, b, rad - diff), 0.0)
    norm = np.hypot(vx, vy)
    norm = np.where(norm > 0, norm, 1.0)
    vx, vy = vx / norm, vy / norm
    fa = hi * vx * vx + lo_cl * vy * vy
    fb = (hi - lo_cl) * vx * vy
    fc = hi * vy * vy + lo_cl * vx * vx
    return np.where(bad, fa, a), np.where(bad, fb, b), np.where(bad, fc, c), n_bad


def ekf_update_arrays(mx, my, a, b, c, ex, ey, eth, phi_obs, gam_obs, p_vis,
                      sigma_phi, sigma_gamma, r_body):
    """Gated EKF update of 2D position filters, vectorized.

    Stacked (bearing, size) measurement with innovation wrapping on the
    bearing channel. R_eff = diag(sigma_phi^2, (sigma_gamma * gamma_hat)^2)
    / max(p_vis, EPS_P); gamma_hat is the size predicted at the prior
    mean. Joseph-form covariance update plus an SPD floor. Pairs whose
    prior mean coincides with the ego position are left untouched.
    Returns (mx, my, a, b, c, n_floored).
    """
    dx = mx - ex
    dy = my - ey
    d2 = dx * dx + dy * dy
    d = np.sqrt(d2)
    ok = d > EPS_D
    d = np.where(ok, d, 1.0)  # safe placeholder; masked out at the end
    d2 = d * d

    phi_hat = wrap_angle(np.arctan2(dy, dx) - eth)
    d_cl = np.maximum(d, r_body + EPS_D)
    ratio = r_body / d_cl
    gam_hat = 2.0 * np.arcsin(ratio)

    # measurement Jacobian rows w.r.t. neighbor position
    h11 = -dy / d2
    h12 = dx / d2
    size_coef = -2.0 * r_body / (d_cl * d_cl * np.sqrt(1.0 - ratio * ratio))
    h21 = size_coef * dx / d
    h22 = size_coef * dy / d

    pv = np.maximum(p_vis, EPS_P)
    r1 = sigma_phi * sigma_phi / pv + EPS_COV
    r2 = (sigma_gamma * gam_hat) ** 2 / pv + EPS_COV

    nu1 = wrap_angle(phi_obs - phi_hat)
    nu2 = gam_obs - gam_hat

    # S = H P H^T + R, K = P H^T S^-1
    a1 = h11 * a + h12 * b
    b1 = h11 * b + h12 * c
    a2 = h21 * a + h22 * b
    b2 = h21 * b + h22 * c
    s11 = a1 * h11 + b1 * h12 + r1
    s12 = a1 * h21 + b1 * h22
    s22 = a2 * h21 + b2 * h22 + r2
    det = s11 * s22 - s12 * s12
    ok = ok & (det > 0) & np.isfinite(det)
    det = np.where(ok, det, 1.0)
    k11 = (a1 * s22 - a2 * s12) / det
    k12 = (a2 * s11 - a1 * s12) / det
    k21 = (b1 * s22 - b2 * s12) / det
    k22 = (b2 * s11 - b1 * s12) / det

    new_mx = mx + k11 * nu1 + k12 * nu2
    new_my = my + k21 * nu1 + k22 * nu2

    # Joseph form: (I - K H) P (I - K H)^T + K R K^T
    g11 = 1.0 - (k11 * h11 + k12 * h21)
    g12 = -(k11 * h12 + k12 * h22)
    g21 = -(k21 * h11 + k22 * h21)
    g22 = 1.0 - (k21 * h12 + k22 * h22)
    p1 = g11 * a + g12 * b
    p2 = g11 * b + g12 * c
    p3 = g21 * a + g22 * b
    p4 = g21 * b + g22 * c
    na = p1 * g11 + p2 * g12 + k11 * k11 * r1 + k12 * k12 * r2
    nb = p1 * g21 + p2 * g22 + k11 * k21 * r1 + k12 * k22 * r2
    nc = p3 * g21 + p4 * g22 + k21 * k21 * r1 + k22 * k22 * r2

    na, nb, nc, n_floored = spd_floor_arrays(na, nb, nc)
    return (
        np.where(ok, new_mx, mx),
        np.where(ok, new_my, my),
        np.where(ok, na, a),
        np.where(ok, nb, b),
        np.where(ok, nc, c),
        n_floored,
    )


def update_neighbor(belief: NeighborBelief, obs: Observation, ego: EgoBelief,
                    params: EstimatorParams, p_vis=None) -> NeighborBelief:
    """Visibility-gated EKF update of a single neighbor belief.

    p_vis defaults to the gate evaluated at the bearing predicted from the
    prior mean; pass a precomputed value to keep it consistent with an
    external policy pass.
    """
    if not belief.alive:
        raise ValueError("cannot update a dead belief")
    e = ego.mean
    if p_vis is None:
        phi_hat = wrap_angle(np.arctan2(belief.mean[1] - e.y, belief.mean[0] - e.x) - e.theta)
        p_vis = visibility(phi_hat, params.fov)
    mx, my, a, b, c, _ = ekf_update_arrays(
        belief.mean[0], belief.mean[1],
        belief.cov[0, 0], belief.cov[0, 1], belief.cov[1, 1],
        e.x, e.y, e.theta, obs.phi, obs.gamma, p_vis,
        params.sigma_phi, params.sigma_gamma, params.r_body,
    )
    return replace(
        belief,
        mean=np.array([mx, my]),
        cov=np.array([[a, b], [b, c]]),
        p_vis=float(p_vis),
    )


def apply_memory_policy(beliefs, visibilities, observations, ego: EgoBelief,
                        params: EstimatorParams, dt: float):
    """One estimation step for a table of neighbor beliefs.

    ``beliefs``, ``visibilities`` and ``observations`` are dicts keyed by
    neighbor id. Alive beliefs are predicted and updated with the gated
    gain. With memory off, beliefs whose visibility drops below tau_vis
    die; dead beliefs re-initialize from the observation inversion at the
    first step their visibility recovers.
    """
    out = {}
    for j, belief in beliefs.items():
        pv = float(visibilities[j])
        obs = observations[j]
        if belief.alive:
            belief = predict_neighbor(belief, params.q, dt)
            if not params.memory and pv < params.tau_vis:
                out[j] = replace(belief, alive=False, p_vis=pv,
                                 steps_unseen=belief.steps_unseen + 1)
                continue
            belief = update_neighbor(belief, obs, ego, params, p_vis=pv)
            unseen = 0 if pv >= params.tau_vis else belief.steps_unseen + 1
            out[j] = replace(belief, steps_unseen=unseen)
        else:
            if pv >= params.tau_vis:
                mean, cov = _init_from_observation(obs, ego, params)
                out[j] = NeighborBelief(mean=mean, cov=cov, p_vis=pv,
                                        alive=True, steps_unseen=0)
            else:
                out[j] = replace(belief, p_vis=pv,
                                 steps_unseen=belief.steps_unseen + 1)
    return out


def _init_from_observation(obs: Observation, ego: EgoBelief, params: EstimatorParams):
    gamma = min(max(float(obs.gamma), 1e-12), np.pi - 1e-12)
    e = ego.mean
    mx, my, a, b, c = invert_observation_arrays(
        e.x, e.y, e.theta, float(obs.phi), gamma,
        params.r_body, params.sigma_phi, params.sigma_gamma,
    )
    return np.array([mx, my]), np.array([[a, b], [b, c]])


def distance_belief(belief: NeighborBelief, ego_pos):
    """First-order distance belief: mean distance and its projected std."""
    if not belief.alive:
        raise ValueError("dead belief has no distance")
    dx = belief.mean[0] - ego_pos[0]
    dy = belief.mean[1] - ego_pos[1]
    mu_d = float(np.hypot(dx, dy))
    if mu_d <= EPS_D:
        raise ValueError("degenerate distance between ego and belief mean")
    ux, uy = dx / mu_d, dy / mu_d
    var = (
        ux * ux * belief.cov[0, 0]
        + 2.0 * ux * uy * belief.cov[0, 1]
        + uy * uy * belief.cov[1, 1]
    )
    return mu_d, float(np.sqrt(max(var, 0.0)))


class BeliefBank:
    """All (agent, neighbor) filters of one simulation, as flat arrays.

    Slot s of agent i refers to neighbor id s + (s >= i); see
    ``world.neighbor_ids``. Beliefs start dead and are created from the
    first sufficiently-visible observation.
    """

    def __init__(self, n: int):
        self.n = n
        shape = (n, n - 1)
        self.ids = neighbor_ids(n)
        self.mx = np.zeros(shape)
        self.my = np.zeros(shape)
        self.ca = np.full(shape, EPS_COV)
        self.cb = np.zeros(shape)
        self.cc = np.full(shape, EPS_COV)
        self.alive = np.zeros(shape, dtype=bool)
        self.p_vis = np.zeros(shape)
        self.steps_unseen = np.zeros(shape, dtype=np.int64)
        self.floor_events = 0

    def step(self, phi_obs, gam_obs, ego_poses, params: EstimatorParams, dt: float):
        """Predict + memory policy + gated update for every pair."""
        ex = ego_poses[:, 0][:, None]
        ey = ego_poses[:, 1][:, None]
        eth = ego_poses[:, 2][:, None]

        q = params.q * dt
        self.ca[self.alive] += q
        self.cc[self.alive] += q

        # visibility: alive beliefs use the predicted bearing, dead slots
        # fall back to the observed bearing (the only cue available)
        dxh = self.mx - ex
        dyh = self.my - ey
        bear_pred = wrap_angle(np.arctan2(dyh, dxh) - eth)
        pv = np.where(
            self.alive,
            visibility(bear_pred, params.fov),
            visibility(phi_obs, params.fov),
        )

        if not params.memory:
            self.alive &= pv >= params.tau_vis

        reinit = (~self.alive) & (pv >= params.tau_vis)
        if reinit.any():
            gam = np.clip(gam_obs[reinit], 1e-12, np.pi - 1e-12)
            i_idx = np.nonzero(reinit)[0]
            mx, my, a, b, c = invert_observation_arrays(
                ego_poses[i_idx, 0], ego_poses[i_idx, 1], ego_poses[i_idx, 2],
                phi_obs[reinit], gam, params.r_body,
                params.sigma_phi, params.sigma_gamma,
            )
            self.mx[reinit] = mx
            self.my[reinit] = my
            self.ca[reinit] = a
            self.cb[reinit] = b
            self.cc[reinit] = c
            self.steps_unseen[reinit] = 0
            self.alive |= reinit

        upd = self.alive & ~reinit
        if upd.any():
            i_idx = np.nonzero(upd)[0]
            mx, my, a, b, c, n_fl = ekf_update_arrays(
                self.mx[upd], self.my[upd],
                self.ca[upd], self.cb[upd], self.cc[upd],
                ego_poses[i_idx, 0], ego_poses[i_idx, 1], ego_poses[i_idx, 2],
                phi_obs[upd], gam_obs[upd], pv[upd],
                params.sigma_phi, params.sigma_gamma, params.r_body,
            )
            self.mx[upd] = mx
            self.my[upd] = my
            self.ca[upd] = a
            self.cb[upd] = b
            self.cc[upd] = c
            self.floor_events += n_fl

        self.p_vis = pv
        seen = pv >= params.tau_vis
        self.steps_unseen = np.where(seen, 0, self.steps_unseen + 1)
        self.steps_unseen[reinit] = 0

    def belief(self, i: int, j: int) -> NeighborBelief:
        """Materialize the (i, j) filter as a NeighborBelief."""
        s = j if j < i else j - 1
        return NeighborBelief(
            mean=np.array([self.mx[i, s], self.my[i, s]]),
            cov=np.array([[self.ca[i, s], self.cb[i, s]],
                          [self.cb[i, s], self.cc[i, s]]]),
            p_vis=float(self.p_vis[i, s]),
            alive=bool(self.alive[i, s]),
            steps_unseen=int(self.steps_unseen[i, s]),
        )
