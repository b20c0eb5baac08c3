"""1-DOF surge dynamics of a twin-thruster surface vehicle.

The plant is

    m * dv/dt = c_q |v| v + c_l v + c_thetadot |thetadot v| + tau_L + tau_R

with per-thruster force ``tau = alpha xi + beta xi^2 + gamma xi v``.  All
functions here are pure and operate on immutable parameter records.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class ThrustParams:
    alpha: float = 0.06
    beta: float = 0.0008
    gamma: float = -0.02

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0 or self.gamma > 0:
            raise ValueError(f"thrust coefficients out of domain: {self}")


@dataclass(frozen=True)
class SurgeParams:
    """Physical parameters of the surge plant.

    Attributes:
        m: Total mass including added mass (kg).
        c_q: Quadratic drag (kg/m), non-positive.
        c_l: Linear drag (kg/s), non-positive.
        c_thetadot: Turn-induced drag (kg/rad), non-positive.
        thrust_left: Left thruster model.
        thrust_right: Right thruster model.
    """

    m: float = 38.0
    c_q: float = -4.75
    c_l: float = -6.0
    c_thetadot: float = -1.0
    thrust_left: ThrustParams = field(default_factory=ThrustParams)
    thrust_right: ThrustParams = field(default_factory=ThrustParams)

    def __post_init__(self):
        if not self.m > 0:
            raise ValueError("mass must be positive")
        if self.c_q > 0 or self.c_l > 0 or self.c_thetadot > 0:
            raise ValueError("drag coefficients must be non-positive")

    def theta(self) -> np.ndarray:
        """Parameters in regressor order (c_q, c_l, c_thetadot, alpha_L, beta_L,
        gamma_L, alpha_R, beta_R, gamma_R)."""
        tl, tr = self.thrust_left, self.thrust_right
        return np.array([self.c_q, self.c_l, self.c_thetadot,
                         tl.alpha, tl.beta, tl.gamma,
                         tr.alpha, tr.beta, tr.gamma])

    @classmethod
    def from_theta(cls, m: float, theta) -> "SurgeParams":
        t = [float(x) for x in theta]
        return cls(m=m, c_q=t[0], c_l=t[1], c_thetadot=t[2],
                   thrust_left=ThrustParams(*t[3:6]),
                   thrust_right=ThrustParams(*t[6:9]))


@dataclass(frozen=True)
class ScaleMap:
    """Linear map x = h*v taking [0, v_max] onto [0, 0.5]."""

    v_max: float

    def __post_init__(self):
        if not self.v_max > 0:
            raise ValueError("v_max must be positive")

    @property
    def h(self) -> float:
        return 1.0 / (2.0 * self.v_max)

    def scale(self, v):
        return v * self.h

    def unscale(self, x):
        return x / self.h


def thrust(p: ThrustParams, xi: float, v: float) -> float:
    """Force from one thruster; reverse commands are clamped to zero."""
    xi = max(xi, 0.0)
    return p.alpha * xi + p.beta * xi * xi + p.gamma * xi * v


def accel(p: SurgeParams, v: float, thetadot: float, xi_l: float, xi_r: float) -> float:
    force = (p.c_q * abs(v) * v + p.c_l * v + p.c_thetadot * abs(thetadot * v)
             + thrust(p.thrust_left, xi_l, v) + thrust(p.thrust_right, xi_r, v))
    return force / p.m


def step(p: SurgeParams, v: float, thetadot: float, xi_l: float, xi_r: float,
         dt: float, v_max: float | None = None) -> float:
    """Forward-Euler step of the surge plant, clamped to [0, v_max]."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if not all(math.isfinite(x) for x in (v, thetadot, xi_l, xi_r, dt)):
        raise ValueError("non-finite input to surge step")
    v_next = v + dt * accel(p, v, thetadot, xi_l, xi_r)
    v_next = max(v_next, 0.0)
    if v_max is not None:
        v_next = min(v_next, v_max)
    return v_next


def contraction_dt_bound(p: SurgeParams, v_max: float, xi_max: float) -> float:
    """Largest Euler step for which the scaled surge map is contracting.

    Assumes |thetadot| <= 1 rad/s.  Returns ``math.inf`` when every
    dissipative term vanishes (no constraint on dt).
    """
    if not xi_max > 0:
        raise ValueError("xi_max must be positive")
    gamma_sum = p.thrust_left.gamma + p.thrust_right.gamma
    denom = abs(2.0 * v_max * p.c_q + p.c_l + p.c_thetadot + gamma_sum * xi_max)
    if denom == 0.0:
        return math.inf
    return 2.0 * p.m / denom
