"""Differentiable measurement models and their analytic Jacobians.

Bearing and apparent size are the two angular cues an agent reads off a
neighbor. Both are predicted from the ego pose and an estimated neighbor
position, with closed-form gradients used by the estimator update and by
the action-selection chain. Visibility is a smooth logistic gate on the
predicted bearing so that the field-of-view boundary stays
gradient-visible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .world import EPS_D, GeometryError, Pose, Observation, wrap_angle

TWO_PI = 2.0 * np.pi
# minimum covariance eigenvalue kept after flooring
EPS_COV = 1e-9


@dataclass(frozen=True)
class MeasurementPrediction:
    """Predicted cue value with gradients w.r.t. neighbor position and ego pose."""

    value: float
    jac_neighbor: np.ndarray  # (2,) d value / d (x_j, y_j)
    jac_ego: np.ndarray  # (3,) d value / d (x_i, y_i, theta_i)


@dataclass(frozen=True)
class FovParams:
    """Field-of-view gate: full angle psi and logistic sharpness k_vis."""

    psi: float
    k_vis: float = 10.0

    def __post_init__(self):
        if not (0.0 < self.psi <= TWO_PI):
            raise ValueError(f"psi must be in (0, 2*pi], got {self.psi}")
        if self.k_vis <= 0.0:
            raise ValueError(f"k_vis must be > 0, got {self.k_vis}")


def predict_bearing(ego: Pose, mu_j) -> MeasurementPrediction:
    """Bearing of mu_j in the ego frame, with gradients."""
    dx = mu_j[0] - ego.x
    dy = mu_j[1] - ego.y
    d2 = dx * dx + dy * dy
    if d2 <= EPS_D * EPS_D:
        raise GeometryError("bearing undefined at coincident positions")
    value = wrap_angle(np.arctan2(dy, dx) - ego.theta)
    jac_n = np.array([-dy / d2, dx / d2])
    jac_e = np.array([dy / d2, -dx / d2, -1.0])
    return MeasurementPrediction(float(value), jac_n, jac_e)


def predict_size(ego_pos, mu_j, r: float) -> MeasurementPrediction:
    """Apparent size 2 asin(r/d) of the neighbor disk, with gradients."""
    dx = mu_j[0] - ego_pos[0]
    dy = mu_j[1] - ego_pos[1]
    d = np.hypot(dx, dy)
    if d <= r:
        raise GeometryError(f"bodies overlap: distance {d} <= radius {r}")
    value = 2.0 * np.arcsin(r / d)
    # d(value)/d(distance) = -2 r / (d^2 sqrt(1 - r^2/d^2)), distributed
    # along the unit separation vector
    coef = -2.0 * r / (d * d * np.sqrt(1.0 - (r / d) ** 2))
    jac_n = coef * np.array([dx / d, dy / d])
    jac_e = np.array([-jac_n[0], -jac_n[1], 0.0])
    return MeasurementPrediction(float(value), jac_n, jac_e)


def visibility(bearing, fov: FovParams):
    """Probability that a bearing falls inside the field of view.

    Logistic gate logistic(k_vis (psi/2 - |bearing|)); exactly 1 for an
    omnidirectional (psi = 2 pi) field of view, where a logistic in
    |bearing| would spuriously down-weight rear neighbors. Accepts scalars
    or arrays.
    """
    if fov.psi >= TWO_PI - 1e-12:
        return np.ones_like(np.asarray(bearing, dtype=float)) if np.ndim(bearing) else 1.0
    z = fov.k_vis * (0.5 * fov.psi - np.abs(bearing))
    p = _logistic(z)
    return float(p) if np.ndim(bearing) == 0 else p


def _logistic(z):
    # stable in both tails: exp(-|z|) never overflows
    z = np.asarray(z, dtype=float)
    ez = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + ez), ez / (1.0 + ez))


def invert_observation_arrays(ex, ey, eth, phi, gamma, r, sigma_phi, sigma_gamma):
    """Vectorized observation inversion.

    Maps (bearing, size) observations back to world-frame position
    Gaussians: mean at distance r/sin(gamma/2) along the observed bearing,
    covariance from the inverse-map Jacobian applied to the assumed noise
    (sigma_gamma is relative; scaled by the observed gamma). Returns
    (mx, my, cxx, cxy, cyy) with an EPS_COV eigenvalue floor baked in.
    """
    half = 0.5 * gamma
    sin_half = np.sin(half)
    d = r / sin_half
    heading = eth + phi
    ch, sh = np.cos(heading), np.sin(heading)
    mx = ex + d * ch
    my = ey + d * sh
    dd = -r * np.cos(half) / (2.0 * sin_half * sin_half)  # d(distance)/d(gamma)
    vp = sigma_phi**2
    vg = (sigma_gamma * gamma) ** 2
    cxx = d * d * sh * sh * vp + dd * dd * ch * ch * vg + EPS_COV
    cxy = (-d * d * vp + dd * dd * vg) * sh * ch
    cyy = d * d * ch * ch * vp + dd * dd * sh * sh * vg + EPS_COV
    return mx, my, cxx, cxy, cyy


def inverse_measurement(ego: Pose, obs: Observation, r: float, noise):
    """Neighbor position Gaussian implied by a single observation.

    Scalar wrapper over the array kernel. Returns (mean (2,), cov (2,2));
    used to (re)initialize neighbor beliefs.
    """
    gamma = float(obs.gamma)
    if not (0.0 < gamma < np.pi):
        raise ValueError(f"gamma must be in (0, pi), got {gamma}")
    mx, my, cxx, cxy, cyy = invert_observation_arrays(
        ego.x, ego.y, ego.theta, float(obs.phi), gamma, r, noise[0], noise[1]
    )
    mean = np.array([mx, my])
    cov = np.array([[cxx, cxy], [cxy, cyy]])
    return mean, cov
