"""Run configuration: parameter schema, defaults, and the config format.

The config format is flat ``key = value`` text, one pair per line, with
``#`` comments. Keys mirror SimParams field names exactly; unknown keys
are rejected. CLI flags use the same names and override file values.

Noise semantics: ``sigma_phi``, ``sigma_gamma`` and ``q`` are the
*assumed* noise levels the agents' filters use (these are the swept
parameters). The generative observation noise is configured separately
as ``sigma_phi_true`` / ``sigma_gamma_true`` and defaults to a fixed low
reference, so sweeping the assumed levels changes how much agents trust
their senses, not the physics of the sensor.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

import numpy as np

TWO_PI = 2.0 * np.pi


class ConfigError(ValueError):
    """Invalid configuration text or parameter values."""


@dataclass(frozen=True)
class SimParams:
    """Everything a run needs; one flat record, echoed into outputs."""

    # population and time
    N: int = 250
    dt: float = 0.1
    T: int = 2000
    seed: int = 0
    # bodies and goal
    d0: float = 50.0
    r_body: float = 1.0
    r_init: float = 150.0  # initialization disk radius, 3 * d0
    # sensing and motor limits
    psi: float = TWO_PI
    omega_max: float = 0.9
    v_max: float = 5.0
    # assumed (filter-side) noise — the swept parameters
    sigma_phi: float = 0.01
    sigma_gamma: float = 0.01
    q: float = 0.1
    # generative observation noise
    sigma_phi_true: float = 0.01
    sigma_gamma_true: float = 0.01
    gamma_noise_mode: str = "relative"  # or "absolute"
    # estimator policy
    memory: bool = True
    tau_vis: float = 0.5
    k_vis: float = 10.0
    q_ego: float = 0.0
    # descent
    eta_v: float = 5.0
    eta_omega: float = 5.0
    lookahead_dt: float = 0.1
    v_control: str = "gradient"  # or "fixed"
    v_fixed: float = 2.5
    # metrics
    eps_dbscan: float = 0.2
    min_pts: int = 5
    eval_window_fraction: float = 0.5

    def validate(self):
        if self.N < 2:
            raise ConfigError(f"N: must be >= 2, got {self.N}")
        if self.dt <= 0:
            raise ConfigError(f"dt: must be > 0, got {self.dt}")
        if self.T < 1:
            raise ConfigError(f"T: must be >= 1, got {self.T}")
        if not (0.0 < self.psi <= TWO_PI + 1e-12):
            raise ConfigError(f"psi: must be in (0, 2*pi], got {self.psi}")
        if self.omega_max <= 0:
            raise ConfigError(f"omega_max: must be > 0, got {self.omega_max}")
        if self.v_max <= 0:
            raise ConfigError(f"v_max: must be > 0, got {self.v_max}")
        for name in ("sigma_phi", "sigma_gamma", "sigma_phi_true", "sigma_gamma_true"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name}: must be >= 0")
        if self.q < 0 or self.q_ego < 0:
            raise ConfigError("q, q_ego: must be >= 0")
        if not (0.0 < self.tau_vis < 1.0):
            raise ConfigError(f"tau_vis: must be in (0, 1), got {self.tau_vis}")
        if self.k_vis <= 0:
            raise ConfigError(f"k_vis: must be > 0, got {self.k_vis}")
        if self.r_body <= 0 or self.r_init < 0:
            raise ConfigError("r_body must be > 0 and r_init >= 0")
        if self.d0 <= 0:
            raise ConfigError(f"d0: must be > 0, got {self.d0}")
        if self.eta_v <= 0 or self.eta_omega <= 0:
            raise ConfigError("eta_v, eta_omega: must be > 0")
        if self.lookahead_dt <= 0:
            raise ConfigError(f"lookahead_dt: must be > 0, got {self.lookahead_dt}")
        if self.gamma_noise_mode not in ("relative", "absolute"):
            raise ConfigError(f"gamma_noise_mode: unknown mode {self.gamma_noise_mode!r}")
        if self.v_control not in ("gradient", "fixed"):
            raise ConfigError(f"v_control: unknown mode {self.v_control!r}")
        if not (0.0 < self.eval_window_fraction <= 1.0):
            raise ConfigError("eval_window_fraction: must be in (0, 1]")
        if self.eps_dbscan <= 0 or self.min_pts < 1:
            raise ConfigError("eps_dbscan must be > 0 and min_pts >= 1")
        return self


_FIELD_TYPES = {f.name: f.type for f in fields(SimParams)}
_BOOL_FIELDS = {"memory"}
_INT_FIELDS = {"N", "T", "seed", "min_pts"}
_STR_FIELDS = {"gamma_noise_mode", "v_control"}


def _convert(key: str, raw: str):
    if key in _BOOL_FIELDS:
        low = raw.lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    if key in _INT_FIELDS:
        try:
            return int(raw)
        except ValueError as exc:
            raise ConfigError(f"{key}: expected an integer, got {raw!r}") from exc
    if key in _STR_FIELDS:
        return raw
    try:
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"{key}: expected a number, got {raw!r}") from exc


def parse_config(text: str, overrides: dict | None = None) -> SimParams:
    """Parse key=value config text into validated SimParams.

    ``overrides`` (already-typed values keyed by field name) win over the
    file. Unknown keys and malformed lines raise ConfigError with the
    line number.
    """
    values: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key not in _FIELD_TYPES:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if not raw:
            raise ConfigError(f"line {lineno}: empty value for {key!r}")
        values[key] = _convert(key, raw)
    if overrides:
        for key, val in overrides.items():
            if key not in _FIELD_TYPES:
                raise ConfigError(f"unknown parameter {key!r}")
            values[key] = val
    params = SimParams(**values)
    params.validate()
    return params


def params_to_dict(params: SimParams) -> dict:
    return {f.name: getattr(params, f.name) for f in fields(SimParams)}


def params_from_dict(d: dict) -> SimParams:
    unknown = set(d) - set(_FIELD_TYPES)
    if unknown:
        raise ConfigError(f"unknown parameters: {sorted(unknown)}")
    params = SimParams(**d)
    params.validate()
    return params


def with_updates(params: SimParams, **updates) -> SimParams:
    out = replace(params, **updates)
    out.validate()
    return out
