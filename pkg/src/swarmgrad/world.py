"""Ground-truth simulation state: unicycle kinematics, true geometry, noise.

World coordinates are 2D, x right / y up, headings in radians measured
counter-clockwise from +x and always wrapped to (-pi, pi]. Agents are
disks of radius ``r_body`` driven by (linear velocity v, angular
velocity omega). The world is advanced synchronously: all agents move
from the same snapshot.

Observation noise is drawn from counter-based (Philox) streams keyed by
(master seed, step) and indexed by (agent, neighbor slot), so any
observation is a pure function of (seed, step, i, j) and results do not
depend on evaluation order or worker count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import duals

# geometry guards
EPS_D = 1e-3  # below this separation the geometry is treated as degenerate
EPS_OMEGA = 1e-8  # turn rates below this use the straight-line limit
GAMMA_MIN = 1e-9  # apparent size is clamped into (0, pi]

# namespaces for counter-based random streams
_NS_INIT = 0
_NS_OBS = 1


class GeometryError(ValueError):
    """Raised for degenerate geometry (coincident or overlapping bodies)."""


@dataclass(frozen=True)
class Pose:
    """Position and heading in the world frame; theta wrapped to (-pi, pi]."""

    x: float
    y: float
    theta: float

    @property
    def position(self):
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class AgentAction:
    """Linear and angular velocity command. v >= 0 after clamping."""

    v: float
    omega: float


@dataclass(frozen=True)
class Observation:
    """One noisy (bearing, apparent size) measurement of a neighbor."""

    phi: float
    gamma: float


@dataclass(frozen=True)
class WorldState:
    """Immutable snapshot: step counter plus an (N, 3) pose array."""

    step: int
    poses: np.ndarray  # (N, 3) columns x, y, theta
    seed: int

    @property
    def n_agents(self):
        return self.poses.shape[0]

    def pose(self, i: int) -> Pose:
        x, y, th = self.poses[i]
        return Pose(float(x), float(y), float(th))


def wrap_angle(a):
    """Wrap angle(s) into (-pi, pi]. Works on scalars, arrays and duals."""
    if isinstance(a, duals.DualArray):
        return duals.DualArray(wrap_angle(a.val), a.dot)
    w = np.mod(np.asarray(a, dtype=float) + np.pi, 2.0 * np.pi) - np.pi
    w = np.where(w == -np.pi, np.pi, w)
    if np.ndim(a) == 0:
        return float(w)
    return w


def _stream(seed: int, namespace: int, index: int) -> np.random.Generator:
    """Counter-based generator for stream (seed, namespace, index)."""
    key = np.array(
        [seed & 0xFFFFFFFFFFFFFFFF, ((namespace & 0xFFFF) << 48) | (index & 0xFFFFFFFFFFFF)],
        dtype=np.uint64,
    )
    return np.random.Generator(np.random.Philox(key=key))


def neighbor_ids(n: int) -> np.ndarray:
    """(N, N-1) table mapping (agent, slot) -> neighbor agent id.

    Slot s of agent i holds neighbor j = s if s < i else s + 1, i.e.
    neighbors in ascending id order with agent i skipped.
    """
    ids = np.arange(n)
    table = np.broadcast_to(ids, (n, n)).copy()
    mask = table != ids[:, None]
    return table[mask].reshape(n, n - 1)


def init_world(params, seed: int) -> WorldState:
    """Place N agents uniformly in a disk of radius R_init, headings uniform.

    Identical (seed, params) give bit-identical states.
    """
    n = params.N
    if n < 2:
        raise ValueError(f"N must be >= 2, got {n}")
    if params.dt <= 0:
        raise ValueError(f"dt must be > 0, got {params.dt}")
    rng = _stream(seed, _NS_INIT, 0)
    # radius via sqrt of uniform for a uniform density over the disk
    radii = params.r_init * np.sqrt(rng.random(n))
    angles = rng.uniform(-np.pi, np.pi, n)
    thetas = wrap_angle(rng.uniform(-np.pi, np.pi, n))
    poses = np.column_stack([radii * np.cos(angles), radii * np.sin(angles), thetas])
    return WorldState(step=0, poses=poses, seed=seed)


def advance_poses(x, y, theta, v, omega, dt):
    """Exact-arc unicycle step, smooth through omega = 0.

    Uses x' = x + v dt cos(theta + u/2) sinc(u/2) with u = omega dt, which
    equals the (v/omega)(sin(theta+u) - sin theta) arc form for |u| > 0 and
    reduces to the straight-line limit as u -> 0. Accepts plain arrays or
    DualArrays for (v, omega).
    """
    u = omega * dt
    half = u * 0.5
    small = duals.absolute(duals.value(half)) < 1e-4
    if isinstance(half, duals.DualArray):
        safe = duals.where(small, duals.constant(np.ones_like(half.val), half.n_dirs), half)
    else:
        safe = np.where(small, 1.0, half)
    h2 = half * half
    sinc_h = duals.where(small, 1.0 - h2 * (1.0 / 6.0) + h2 * h2 * (1.0 / 120.0),
                         duals.sin(safe) / safe)
    mid = theta + half
    step = v * dt * sinc_h
    new_x = x + step * duals.cos(mid)
    new_y = y + step * duals.sin(mid)
    new_theta = wrap_angle(theta + u)
    return new_x, new_y, new_theta


def unicycle_step(pose: Pose, action: AgentAction, dt: float) -> Pose:
    """Advance a single pose by one exact-arc integration step."""
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    x, y, th = advance_poses(pose.x, pose.y, pose.theta,
                             float(action.v), float(action.omega), dt)
    return Pose(float(x), float(y), float(th))


def true_bearing(pose_i: Pose, pos_j) -> float:
    """Direction to pos_j relative to the heading of pose_i, in (-pi, pi]."""
    dx = pos_j[0] - pose_i.x
    dy = pos_j[1] - pose_i.y
    if np.hypot(dx, dy) <= EPS_D:
        raise GeometryError(f"coincident positions: {pose_i} vs {pos_j}")
    return wrap_angle(np.arctan2(dy, dx) - pose_i.theta)


def true_apparent_size(pos_i, pos_j, r: float) -> float:
    """Angular width 2 asin(r/d) of a disk of radius r at distance d."""
    d = float(np.hypot(pos_j[0] - pos_i[0], pos_j[1] - pos_i[1]))
    if d <= r:
        raise GeometryError(f"bodies overlap: distance {d} <= radius {r}")
    return 2.0 * np.arcsin(r / d)


def observation_noise(seed: int, step: int, n: int) -> np.ndarray:
    """Standard-normal draws, shape (N, N-1, 2): (bearing, size) per pair."""
    return _stream(seed, _NS_OBS, step).standard_normal((n, n - 1, 2))


def pair_geometry(poses: np.ndarray, r_body: float):
    """True bearing and apparent size for all ordered pairs.

    Returns (N, N-1) arrays (bearing, gamma). Distances at or below
    r_body are clamped to r_body + EPS_D so that gamma stays defined when
    bodies interpenetrate (no collision resolution is performed).
    """
    n = poses.shape[0]
    ids = neighbor_ids(n)
    x, y, th = poses[:, 0], poses[:, 1], poses[:, 2]
    dx = x[ids] - x[:, None]
    dy = y[ids] - y[:, None]
    d = np.hypot(dx, dy)
    bearing = wrap_angle(np.arctan2(dy, dx) - th[:, None])
    d_safe = np.maximum(d, r_body + EPS_D)
    gamma = 2.0 * np.arcsin(r_body / d_safe)
    return bearing, gamma


def observe_all(world: WorldState, params):
    """Noisy (bearing, size) observations for every ordered pair.

    Returns (N, N-1) arrays (phi, gamma). Bearing noise is additive with
    std sigma_phi_true; size noise is multiplicative (relative std
    sigma_gamma_true) by default, additive when gamma_noise_mode is
    "absolute". Observations are produced for every pair regardless of
    visibility; field-of-view gating happens in estimation.
    """
    bearing, gamma = pair_geometry(world.poses, params.r_body)
    eps = observation_noise(world.seed, world.step, world.n_agents)
    phi = wrap_angle(bearing + eps[:, :, 0] * params.sigma_phi_true)
    if params.gamma_noise_mode == "relative":
        gam = gamma * (1.0 + eps[:, :, 1] * params.sigma_gamma_true)
    else:
        gam = gamma + eps[:, :, 1] * params.sigma_gamma_true
    gam = np.clip(gam, GAMMA_MIN, np.pi)
    return phi, gam


def observe(world: WorldState, i: int, j: int, params) -> Observation:
    """Single-pair observation, identical to the batch draw for (i, j)."""
    if i == j:
        raise ValueError("an agent does not observe itself")
    phi, gam = observe_all(world, params)
    slot = j if j < i else j - 1
    return Observation(float(phi[i, slot]), float(gam[i, slot]))


def step_world(world: WorldState, actions: np.ndarray, params) -> WorldState:
    """Advance all poses simultaneously from the current snapshot.

    ``actions`` is (N, 2) columns (v, omega), assumed pre-clamped. Bodies
    may pass through each other; there is no collision resolution.
    """
    actions = np.asarray(actions, dtype=float)
    if actions.shape != (world.n_agents, 2):
        raise ValueError(
            f"actions shape {actions.shape} != ({world.n_agents}, 2)"
        )
    x, y, th = advance_poses(
        world.poses[:, 0], world.poses[:, 1], world.poses[:, 2],
        actions[:, 0], actions[:, 1], params.dt,
    )
    return WorldState(step=world.step + 1, poses=np.column_stack([x, y, th]),
                      seed=world.seed)
