"""Action selection by gradient descent on the expected social-distance cost.

The per-neighbor cost is the exact expected absolute deviation of the
believed inter-agent distance from the desired distance d0. It is
evaluated on a one-step lookahead: the ego pose advanced through the
motion model, the neighbor belief predicted forward, and a fictitious
measurement update applied to the covariance with the visibility-gated
measurement noise at the predicted geometry. Because visibility, the
measurement Jacobians and the resulting distance uncertainty all depend
on the candidate action, three gradient routes open up through this one
scalar: moving toward/away from the believed position, moving to where
future measurements are more informative, and reorienting to keep the
neighbor inside the field of view.

Gradients are exact, computed by forward-mode duals through the whole
chain. Each step an agent evaluates the gradient for every alive
neighbor belief, selects the steepest (largest 2-norm, ties to the
lowest neighbor id), and takes one descent step from its previous
action, clamped to |omega| <= omega_max and 0 <= v <= v_max.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import duals
from .estimation import EPS_P
from .perception import EPS_COV, FovParams
from .world import EPS_D, AgentAction, advance_poses, wrap_angle

SQRT_2_OVER_PI = np.sqrt(2.0 / np.pi)
INV_SQRT_2 = 1.0 / np.sqrt(2.0)
# logistic argument clamp; the gate saturates to double precision long before
_Z_CLIP = 60.0


class NumericsError(RuntimeError):
    """Raised when a gradient or state stops being finite."""


@dataclass(frozen=True)
class ControlParams:
    """Cost and descent constants for one agent population."""

    d0: float
    omega_max: float
    v_max: float = 5.0
    eta_v: float = 5.0
    eta_omega: float = 5.0
    lookahead_dt: float = 0.1
    q: float = 0.1  # neighbor process noise used in the lookahead predict
    sigma_phi: float = 0.01  # assumed bearing noise std
    sigma_gamma: float = 0.01  # assumed apparent-size noise, relative
    fov: FovParams = FovParams(psi=2.0 * np.pi, k_vis=10.0)
    r_body: float = 1.0
    v_control: str = "gradient"  # "gradient" or "fixed"
    v_fixed: float = 2.5

    def __post_init__(self):
        for name in ("d0", "omega_max", "v_max", "eta_v", "eta_omega", "lookahead_dt"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if self.v_control not in ("gradient", "fixed"):
            raise ValueError(f"unknown v_control mode {self.v_control!r}")


@dataclass(frozen=True)
class GradientRecord:
    """Per-neighbor descent direction: d cost / d (v, omega)."""

    neighbor_id: int
    grad: np.ndarray  # (2,)
    cost: float


def expected_abs_deviation(mu_d, sigma_d, d0):
    """Exact E|X - d0| for X ~ N(mu_d, sigma_d^2).

    With t = (mu_d - d0) / sigma: sigma sqrt(2/pi) exp(-t^2/2)
    + (mu_d - d0) erf(t / sqrt(2)). Strictly increasing in sigma_d;
    reduces to |mu_d - d0| as sigma_d -> 0. Scalar-only entry point; the
    generic kernel is ``folded_mean``.
    """
    if sigma_d < 0:
        raise ValueError(f"sigma_d must be >= 0, got {sigma_d}")
    delta = mu_d - d0
    if sigma_d == 0.0:
        return abs(delta)
    return float(folded_mean(delta, sigma_d))


def folded_mean(delta, sigma):
    """E|N(delta, sigma^2)| for sigma > 0; works on arrays and duals."""
    t = delta / sigma
    return sigma * (SQRT_2_OVER_PI * duals.exp(t * t * -0.5)) + delta * duals.erf(
        t * INV_SQRT_2
    )


def _logistic(z):
    z = duals.minimum(duals.maximum(z, -_Z_CLIP), _Z_CLIP)
    return 1.0 / (1.0 + duals.exp(-z))


def lookahead_cost(v, omega, ego_x, ego_y, ego_th, mx, my, ca, cb, cc,
                   p: ControlParams):
    """The differentiable action -> expected-deviation chain.

    (v, omega) may be DualArrays (seeded for d/dv, d/domega) or plain
    arrays; everything else is plain. Inputs broadcast elementwise, so one
    call evaluates any number of (agent, neighbor) pairs.
    """
    nx, ny, nth = advance_poses(ego_x, ego_y, ego_th, v, omega, p.lookahead_dt)

    # neighbor belief predicted over the lookahead (action-independent)
    qdt = p.q * p.lookahead_dt
    pa = ca + qdt
    pb = cb
    pc = cc + qdt

    dx = mx - nx
    dy = my - ny
    d2 = duals.maximum(dx * dx + dy * dy, EPS_D * EPS_D)
    d = duals.sqrt(d2)

    phi_hat = wrap_angle(duals.arctan2(dy, dx) - nth)
    if p.fov.psi >= 2.0 * np.pi - 1e-12:
        inv_pv = 1.0
    else:
        gate = _logistic(p.fov.k_vis * (0.5 * p.fov.psi - duals.absolute(phi_hat)))
        inv_pv = 1.0 / duals.maximum(gate, EPS_P)

    d_cl = duals.maximum(d, p.r_body + EPS_D)
    ratio = p.r_body / d_cl
    gam_hat = 2.0 * duals.arcsin(ratio)

    # stacked (bearing, size) measurement rows w.r.t. neighbor position
    h11 = -dy / d2
    h12 = dx / d2
    size_coef = -2.0 * p.r_body / (d_cl * d_cl * duals.sqrt(1.0 - ratio * ratio))
    h21 = size_coef * (dx / d)
    h22 = size_coef * (dy / d)

    r1 = (p.sigma_phi * p.sigma_phi) * inv_pv + EPS_COV
    r2 = (p.sigma_gamma * p.sigma_gamma) * (gam_hat * gam_hat) * inv_pv + EPS_COV

    # fictitious update, covariance only (expected innovation is zero):
    # posterior information = prior information + H^T R_eff^-1 H
    idet = pa * pc - pb * pb
    i11 = pc / idet
    i12 = -pb / idet
    i22 = pa / idet
    j11 = i11 + h11 * h11 / r1 + h21 * h21 / r2
    j12 = i12 + h11 * h12 / r1 + h21 * h22 / r2
    j22 = i22 + h12 * h12 / r1 + h22 * h22 / r2
    jdet = j11 * j22 - j12 * j12
    s11 = j22 / jdet
    s12 = -j12 / jdet
    s22 = j11 / jdet

    ux = dx / d
    uy = dy / d
    var_d = ux * (ux * s11 + uy * s12) + uy * (ux * s12 + uy * s22) + EPS_COV
    sigma_d = duals.sqrt(var_d)
    return folded_mean(d - p.d0, sigma_d)


def neighbor_cost(action: AgentAction, ego, belief_j, params: ControlParams) -> float:
    """Lookahead expected deviation for one neighbor belief."""
    if not belief_j.alive:
        raise ValueError("dead beliefs carry no cost")
    e = ego.mean
    d = np.hypot(belief_j.mean[0] - e.x, belief_j.mean[1] - e.y)
    if d <= EPS_D:
        raise ValueError("degenerate geometry: belief mean on top of ego")
    return float(
        lookahead_cost(
            float(action.v), float(action.omega), e.x, e.y, e.theta,
            belief_j.mean[0], belief_j.mean[1],
            belief_j.cov[0, 0], belief_j.cov[0, 1], belief_j.cov[1, 1],
            params,
        )
    )


def cost_gradient(action: AgentAction, ego, belief_j, params: ControlParams,
                  neighbor_id: int = 0) -> GradientRecord:
    """Exact d(neighbor_cost)/d(v, omega) via forward-mode duals."""
    if not belief_j.alive:
        raise ValueError("dead beliefs carry no cost")
    e = ego.mean
    v = duals.seed(float(action.v), 0, 2)
    om = duals.seed(float(action.omega), 1, 2)
    out = lookahead_cost(
        v, om, e.x, e.y, e.theta,
        belief_j.mean[0], belief_j.mean[1],
        belief_j.cov[0, 0], belief_j.cov[0, 1], belief_j.cov[1, 1],
        params,
    )
    grad = np.asarray(out.dot, dtype=float).reshape(2)
    if not np.all(np.isfinite(grad)) or not np.isfinite(out.val):
        raise NumericsError(
            f"non-finite gradient {grad} (cost {out.val}) for action {action}, "
            f"ego {e}, belief mean {belief_j.mean}, cov {belief_j.cov}"
        )
    return GradientRecord(neighbor_id=neighbor_id, grad=grad, cost=float(out.val))


def select_action(prev_action: AgentAction, ego, beliefs, params: ControlParams) -> AgentAction:
    """One descent step along the steepest alive-neighbor gradient.

    ``beliefs`` maps neighbor id -> NeighborBelief. Without any alive
    belief the agent coasts: v decays by 0.9, omega resets to 0.
    """
    best = None
    for j in sorted(beliefs):
        b = beliefs[j]
        if not b.alive:
            continue
        rec = cost_gradient(prev_action, ego, b, params, neighbor_id=j)
        norm = float(np.hypot(rec.grad[0], rec.grad[1]))
        if best is None or norm > best[0]:
            best = (norm, rec)
    if best is None:
        return AgentAction(v=_clip(0.9 * prev_action.v, 0.0, params.v_max), omega=0.0)
    rec = best[1]
    if params.v_control == "fixed":
        new_v = params.v_fixed
    else:
        new_v = prev_action.v - params.eta_v * rec.grad[0]
    new_om = prev_action.omega - params.eta_omega * rec.grad[1]
    return AgentAction(
        v=_clip(new_v, 0.0, params.v_max),
        omega=_clip(new_om, -params.omega_max, params.omega_max),
    )


def _clip(x, lo, hi):
    return float(min(max(x, lo), hi))


def select_actions_batch(prev_actions, ego_poses, bank, params: ControlParams):
    """Vectorized select_action over a whole BeliefBank.

    ``prev_actions`` is (N, 2), ``ego_poses`` (N, 3). Returns (N, 2)
    clamped actions. Semantics match per-agent ``select_action`` exactly:
    argmax over gradient norms with first-slot (= lowest id) tie-break.
    """
    n = bank.n
    alive = bank.alive
    actions = np.empty((n, 2))

    rows = np.nonzero(alive)[0]
    if rows.size:
        flat = alive.ravel()
        sel = np.nonzero(flat)[0]
        p = sel.size
        vdot = np.zeros((2, p))
        vdot[0] = 1.0
        odot = np.zeros((2, p))
        odot[1] = 1.0
        v = duals.DualArray(np.repeat(prev_actions[:, 0], n - 1)[sel], vdot)
        om = duals.DualArray(np.repeat(prev_actions[:, 1], n - 1)[sel], odot)
        out = lookahead_cost(
            v, om,
            np.repeat(ego_poses[:, 0], n - 1)[sel],
            np.repeat(ego_poses[:, 1], n - 1)[sel],
            np.repeat(ego_poses[:, 2], n - 1)[sel],
            bank.mx.ravel()[sel], bank.my.ravel()[sel],
            bank.ca.ravel()[sel], bank.cb.ravel()[sel], bank.cc.ravel()[sel],
            params,
        )
        if not (np.all(np.isfinite(out.dot)) and np.all(np.isfinite(out.val))):
            bad = np.nonzero(~(np.isfinite(out.dot).all(axis=0) & np.isfinite(out.val)))[0][0]
            pair = sel[bad]
            raise NumericsError(
                f"non-finite gradient for agent {pair // (n - 1)}, "
                f"neighbor slot {pair % (n - 1)}"
            )
        gv = np.zeros(n * (n - 1))
        gw = np.zeros(n * (n - 1))
        norm = np.full(n * (n - 1), -1.0)
        gv[sel] = out.dot[0]
        gw[sel] = out.dot[1]
        norm[sel] = np.hypot(out.dot[0], out.dot[1])
        gv = gv.reshape(n, n - 1)
        gw = gw.reshape(n, n - 1)
        norm = norm.reshape(n, n - 1)
        pick = np.argmax(norm, axis=1)  # first max = lowest neighbor id
        idx = np.arange(n)
        if params.v_control == "fixed":
            new_v = np.full(n, params.v_fixed)
        else:
            new_v = prev_actions[:, 0] - params.eta_v * gv[idx, pick]
        new_om = prev_actions[:, 1] - params.eta_omega * gw[idx, pick]
        actions[:, 0] = np.clip(new_v, 0.0, params.v_max)
        actions[:, 1] = np.clip(new_om, -params.omega_max, params.omega_max)

    none_alive = ~alive.any(axis=1)
    if none_alive.any():
        actions[none_alive, 0] = np.clip(0.9 * prev_actions[none_alive, 0], 0.0, params.v_max)
        actions[none_alive, 1] = 0.0
    return actions
