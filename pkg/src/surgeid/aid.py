"""Adaptive identification of the surge plant with known mass.

A series-parallel velocity observer runs alongside the plant model,

    v_hat <- v_hat + dt * (W(v, thetadot, xi)^T theta_hat / m + k_v (v - v_hat)),

and its prediction error drives the parameter update.  Two update laws are
available:

``gradient``
    ``theta_hat <- theta_hat + dt * Gamma * W * dv`` with fixed positive
    gains; the classical Lyapunov form for a scalar plant.
``least_squares`` (default)
    a covariance-gain update on the observer sensitivity
    ``phi = d v_hat / d theta_hat``; ``Gamma`` seeds the covariance.  Needed
    because the nine regressor columns are strongly collinear and fixed
    gains stall in the weak directions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

N_PARAMS = 9
PARAM_NAMES = ("c_q", "c_l", "c_thetadot",
               "alpha_L", "beta_L", "gamma_L",
               "alpha_R", "beta_R", "gamma_R")
GAIN_MODES = ("least_squares", "gradient")


def regressor(v: float, thetadot: float, xi_l: float, xi_r: float) -> np.ndarray:
    return np.array([abs(v) * v, v, abs(thetadot * v),
                     xi_l, xi_l * xi_l, xi_l * v,
                     xi_r, xi_r * xi_r, xi_r * v])


def default_gains(xi_max: float = 100.0, v_max: float = 2.0, rate: float = 1.0) -> np.ndarray:
    """Gains normalised by the typical size of each regressor entry.

    Each entry is ``rate / W_typ**2`` so no single column dominates.
    """
    v_t, x_t = 0.5 * v_max, 0.5 * xi_max
    w_typ = np.array([v_t * v_t, v_t, 0.3 * v_t,
                      x_t, x_t * x_t, x_t * v_t,
                      x_t, x_t * x_t, x_t * v_t])
    return rate / w_typ ** 2


@dataclass
class AidEstimator:
    """Observer plus parameter adaptation over the 9-parameter regressor.

    Attributes:
        m: Known mass (kg).
        theta_hat: Parameter estimate in regressor order.
        v_hat: Observer velocity, i.e. the prediction for the next frame.
        k_v: Observer gain (1/s).
        gamma: Per-parameter gains (gradient mode) or initial covariance
            diagonal (least-squares mode).
        mode: ``"least_squares"`` or ``"gradient"``.
        forgetting: Covariance forgetting factor, least-squares mode only.
    """

    m: float
    theta_hat: np.ndarray = field(default_factory=lambda: np.zeros(N_PARAMS))
    v_hat: float = 0.0
    k_v: float = 1.0
    gamma: np.ndarray = field(default_factory=lambda: default_gains(rate=1e4))
    mode: str = "least_squares"
    forgetting: float = 0.9995
    P: np.ndarray | None = None
    phi: np.ndarray = field(default_factory=lambda: np.zeros(N_PARAMS))
    skipped: int = 0

    def __post_init__(self):
        self.theta_hat = np.array(self.theta_hat, dtype=float)
        self.gamma = np.array(self.gamma, dtype=float)
        self.phi = np.array(self.phi, dtype=float)
        if not self.m > 0 or not self.k_v > 0 or np.any(self.gamma <= 0):
            raise ValueError("AID needs m > 0, k_v > 0 and positive gains")
        if self.theta_hat.shape != (N_PARAMS,) or self.gamma.shape != (N_PARAMS,):
            raise ValueError("AID parameter and gain vectors must have length 9")
        if self.mode not in GAIN_MODES:
            raise ValueError(f"unknown AID gain mode {self.mode!r}")
        if not 0 < self.forgetting <= 1:
            raise ValueError("forgetting factor must lie in (0, 1]")
        self.P = np.diag(self.gamma) if self.P is None else np.array(self.P, dtype=float)

    def update(self, v_meas: float | None, thetadot: float, xi_l: float, xi_r: float,
               dt: float, adapt: bool = True) -> float:
        """Advance one frame and return the prediction made for it.

        Without a measurement the observer propagates on its own estimate and
        the parameters are left alone.  ``adapt=False`` freezes the
        parameters but keeps the observer correction (replay mode).
        """
        v_pred = self.v_hat
        if not all(math.isfinite(x) for x in (thetadot, xi_l, xi_r, dt)) or (
                v_meas is not None and not math.isfinite(v_meas)):
            self.skipped += 1
            return v_pred
        if not dt > 0:
            raise ValueError("dt must be positive")
        xi_l, xi_r = max(xi_l, 0.0), max(xi_r, 0.0)
        if v_meas is None:
            w = regressor(self.v_hat, thetadot, xi_l, xi_r)
            self.v_hat = self.v_hat + dt * float(w @ self.theta_hat) / self.m
            self.phi = self.phi + (dt / self.m) * w
            return v_pred

        dv = v_meas - self.v_hat
        w = regressor(v_meas, thetadot, xi_l, xi_r)
        if self.mode == "gradient":
            self.v_hat = self.v_hat + dt * (float(w @ self.theta_hat) / self.m + self.k_v * dv)
            if adapt and dv != 0.0:
                self.theta_hat = self.theta_hat + dt * self.gamma * w * dv
            return v_pred

        if adapt and dv != 0.0:
            self._ls_step(dv)
            dv = v_meas - self.v_hat
        self.v_hat = self.v_hat + dt * (float(w @ self.theta_hat) / self.m + self.k_v * dv)
        self.phi = (1.0 - self.k_v * dt) * self.phi + (dt / self.m) * w
        return v_pred

    def _ls_step(self, err: float) -> None:
        P, phi = self.P, self.phi
        p_phi = P @ phi
        denom = self.forgetting + float(phi @ p_phi)
        gain = p_phi / denom
        delta = gain * err
        self.theta_hat = self.theta_hat + delta
        P = (P - np.outer(gain, p_phi)) / self.forgetting
        P = 0.5 * (P + P.T)
        if not np.all(np.isfinite(P)) or np.min(np.diag(P)) <= 0:
            P = np.diag(self.gamma)
        self.P = P
        # keep the observer consistent with the revised parameters
        self.v_hat = self.v_hat + float(phi @ delta)

    def copy(self) -> "AidEstimator":
        return AidEstimator.from_dict(self.to_dict())

    def to_dict(self) -> dict:
        return {"m": self.m, "theta_hat": self.theta_hat.tolist(), "v_hat": self.v_hat,
                "k_v": self.k_v, "gamma": self.gamma.tolist(), "mode": self.mode,
                "forgetting": self.forgetting, "P": self.P.tolist(),
                "phi": self.phi.tolist(), "skipped": self.skipped}

    @classmethod
    def from_dict(cls, d: dict) -> "AidEstimator":
        return cls(m=d["m"], theta_hat=d["theta_hat"], v_hat=d["v_hat"], k_v=d["k_v"],
                   gamma=d["gamma"], mode=d.get("mode", "least_squares"),
                   forgetting=d.get("forgetting", 0.9995), P=d.get("P"),
                   phi=d.get("phi", np.zeros(N_PARAMS)), skipped=d.get("skipped", 0))
