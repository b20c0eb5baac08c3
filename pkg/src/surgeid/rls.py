"""Recursive least squares with exponential forgetting, and the quasi-static
velocity map built on it.

The map assumes dv/dt ~ 0, so the velocity is a static function of the
current commands, heading and turn rate:

    v ~ Phi(xi_L, xi_R, theta, thetadot)^T zeta
"""

from __future__ import annotations

import math

import numpy as np

MIN_EIG = 1e-12


def regressor(xi_l: float, xi_r: float, theta: float, thetadot: float) -> np.ndarray:
    return np.array([xi_r, xi_r ** 2, xi_r ** 3,
                     xi_l, xi_l ** 2, xi_l ** 3,
                     math.sin(theta), math.cos(theta), abs(thetadot)])


class RecursiveLeastSquares:
    """Exponentially weighted RLS for ``y = phi^T theta``.

    With forgetting ``lam`` and prior ``P0``, after T samples the estimate
    minimises ``sum_k lam^(T-k) (y_k - phi_k^T theta)^2 + lam^T
    (theta - theta0)^T P0^-1 (theta - theta0)``.
    """

    def __init__(self, n: int, lam: float = 0.995, p0: float = 1e3, theta0=None):
        if not 0 < lam <= 1:
            raise ValueError("forgetting factor must lie in (0, 1]")
        self.lam = float(lam)
        self.p0 = float(p0)
        self.theta = np.zeros(n) if theta0 is None else np.array(theta0, dtype=float)
        self.P = self.p0 * np.eye(n)
        self.resets = 0
        self.skipped = 0

    @property
    def n(self) -> int:
        return self.theta.size

    def predict(self, phi) -> float:
        return float(np.asarray(phi) @ self.theta)

    def update(self, phi, y: float) -> float:
        """One recursion; returns the a-priori prediction ``phi^T theta``."""
        phi = np.asarray(phi, dtype=float)
        y_hat = float(phi @ self.theta)
        if not (math.isfinite(y) and np.all(np.isfinite(phi))):
            self.skipped += 1
            return y_hat
        p_phi = self.P @ phi
        gain = p_phi / (self.lam + float(phi @ p_phi))
        self.theta = self.theta + gain * (y - y_hat)
        P = (self.P - np.outer(gain, p_phi)) / self.lam
        P = 0.5 * (P + P.T)
        if not np.all(np.isfinite(P)) or np.linalg.eigvalsh(P)[0] < MIN_EIG:
            P = self.p0 * np.eye(self.n)
            self.resets += 1
        self.P = P
        return y_hat

    def to_dict(self) -> dict:
        return {"theta": self.theta.tolist(), "P": self.P.tolist(), "lam": self.lam,
                "p0": self.p0, "resets": self.resets, "skipped": self.skipped}

    @classmethod
    def from_dict(cls, d: dict) -> "RecursiveLeastSquares":
        out = cls.__new__(cls)
        RecursiveLeastSquares.__init__(out, len(d["theta"]), d["lam"], d["p0"], d["theta"])
        out.P = np.array(d["P"], dtype=float)
        out.resets = d.get("resets", 0)
        out.skipped = d.get("skipped", 0)
        return out

    def copy(self):
        return type(self).from_dict(self.to_dict())


class RlsEstimator(RecursiveLeastSquares):
    """Quasi-static thruster/heading map; ``zeta`` is the 9-vector of
    coefficients."""

    def __init__(self, lam: float = 0.995, p0: float = 1e3, zeta0=None):
        super().__init__(9, lam, p0, zeta0)

    @property
    def zeta(self) -> np.ndarray:
        return self.theta

    def predict_frame(self, xi_l, xi_r, theta, thetadot) -> float:
        return self.predict(regressor(xi_l, xi_r, theta, thetadot))

    def update_frame(self, xi_l, xi_r, theta, thetadot, v_meas: float | None) -> float:
        phi = regressor(xi_l, xi_r, theta, thetadot)
        if v_meas is None:
            return self.predict(phi)
        return self.update(phi, v_meas)


def batch_weighted_lstsq(Phi, y, lam: float = 1.0, p0: float = 1e3, theta0=None) -> np.ndarray:
    """Closed-form minimiser of the exponentially weighted cost with prior.

    Independent of the recursion above; used to check it.
    """
    Phi = np.asarray(Phi, dtype=float)
    y = np.asarray(y, dtype=float)
    T, n = Phi.shape
    theta0 = np.zeros(n) if theta0 is None else np.asarray(theta0, dtype=float)
    wts = lam ** (T - 1 - np.arange(T))
    A = (Phi * wts[:, None]).T @ Phi + lam ** T * np.eye(n) / p0
    rhs = (Phi * wts[:, None]).T @ y + lam ** T * theta0 / p0
    return np.linalg.solve(A, rhs)
