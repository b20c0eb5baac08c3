"""Shallow ReLU recurrent model with a single recurrent state.

    x_{k+1} = a^T relu(w1 * x_k + W2 u + b)

Trained online by ADAM on a one-step loss augmented with a penalty that
pushes every neuron back inside the simple contraction certificate
``|a_i| + |w1_i|/(n+1) < 1/(n+1)``.  Also provides the three-tier
certification and the piecewise-linear equilibrium analysis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

INPUT_CHANNELS = ("xi_left", "xi_right", "sin_heading", "cos_heading", "heading_rate")
DEFAULT_INPUTS = ("xi_left", "xi_right", "sin_heading", "cos_heading")

CRITICAL_DEDUP_TOL = 1e-12
ROOT_TOL = 1e-9
PSD_TOL = 1e-9


@dataclass
class RnnWeights:
    a: np.ndarray
    w1: np.ndarray
    W2: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=float)
        self.w1 = np.asarray(self.w1, dtype=float)
        self.W2 = np.atleast_2d(np.asarray(self.W2, dtype=float))
        self.b = np.asarray(self.b, dtype=float)
        n = self.a.shape[0]
        if self.w1.shape != (n,) or self.b.shape != (n,) or self.W2.shape[0] != n:
            raise ValueError("inconsistent RNN weight shapes")

    @property
    def n(self) -> int:
        return self.a.shape[0]

    @property
    def m(self) -> int:
        return self.W2.shape[1]

    def flat(self) -> np.ndarray:
        return np.concatenate([self.a, self.w1, self.W2.ravel(), self.b])

    @classmethod
    def from_flat(cls, vec, n: int, m: int) -> "RnnWeights":
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (n * (m + 3),):
            raise ValueError(f"expected {n * (m + 3)} weights, got {vec.shape}")
        return cls(vec[:n], vec[n:2 * n], vec[2 * n:2 * n + n * m].reshape(n, m),
                   vec[2 * n + n * m:])

    @classmethod
    def zeros(cls, n: int, m: int) -> "RnnWeights":
        return cls(np.zeros(n), np.zeros(n), np.zeros((n, m)), np.zeros(n))


@dataclass
class RnnConfig:
    """Hyperparameters of the recurrent estimator.

    ``init_scale=None`` means ``1/(2(n+1))`` so a freshly initialised model
    already satisfies the certificate.
    """

    n: int = 20
    m: int = 4
    eta: float = 10.0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    init_scale: float | None = None
    penalty_margin: float = 0.1
    inputs: tuple = DEFAULT_INPUTS

    def __post_init__(self):
        self.inputs = tuple(self.inputs)
        if self.n <= 1:
            raise ValueError("need n > 1 neurons")
        if len(self.inputs) != self.m:
            raise ValueError(f"{len(self.inputs)} input channels for m={self.m}")
        unknown = set(self.inputs) - set(INPUT_CHANNELS)
        if unknown:
            raise ValueError(f"unknown RNN input channels {sorted(unknown)}")
        if not 0.0 <= self.penalty_margin < 1.0:
            raise ValueError("penalty_margin must lie in [0, 1)")
        if not self.eta > 0:
            raise ValueError("eta must be positive")

    @property
    def scale(self) -> float:
        return 1.0 / (2 * (self.n + 1)) if self.init_scale is None else self.init_scale

    @property
    def n_weights(self) -> int:
        return self.n * (self.m + 1) + 2 * self.n


@dataclass
class CertificationReport:
    theorem3_ok: bool
    gersgorin_ok: bool
    M_psd_ok: bool
    min_eigenvalue_of_M: float
    violating_neurons: list
    contraction_constant: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class Equilibrium:
    x: float
    slope: float
    kind: str


@dataclass
class EquilibriumReport:
    equilibria: list
    critical_values: list
    marginal_segments: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"equilibria": [e.__dict__ for e in self.equilibria],
                "critical_values": list(self.critical_values),
                "marginal_segments": [list(s) for s in self.marginal_segments]}


def relu(z):
    return np.maximum(z, 0.0)


def forward(w: RnnWeights, x: float, u) -> float:
    u = np.asarray(u, dtype=float)
    if u.shape != (w.m,):
        raise ValueError(f"input length {u.shape} does not match m={w.m}")
    return float(w.a @ relu(w.w1 * x + w.W2 @ u + w.b))


def penalty_mask(w: RnnWeights, margin: float = 0.0) -> np.ndarray:
    """psi_i: 1.0 where neuron i violates the simple certificate.

    ``margin`` tightens the threshold to ``(1 - margin)/(n+1)`` so that the
    optimizer's overshoot past the trigger stays inside the certified set.
    """
    lam = 1.0 / (w.n + 1)
    return (np.abs(w.a) + lam * np.abs(w.w1) > (1.0 - margin) * lam).astype(float)


def loss(w: RnnWeights, x_pred: float, x_meas: float, eta: float, margin: float = 0.0) -> float:
    psi = penalty_mask(w, margin)
    return 0.5 * (x_pred - x_meas) ** 2 + 0.5 * eta * float(psi @ (w.a ** 2 + w.w1 ** 2))


def backprop(w: RnnWeights, x: float, u, x_meas: float, eta: float,
             margin: float = 0.0) -> np.ndarray:
    """Gradient of the penalised one-step loss, flattened like ``RnnWeights.flat``.

    ``psi`` is frozen for the step; relu'(0) is taken as 0.
    """
    u = np.asarray(u, dtype=float)
    z = w.w1 * x + w.W2 @ u + w.b
    h = relu(z)
    err = float(w.a @ h) - x_meas
    delta = err * w.a * (z > 0)
    psi = penalty_mask(w, margin)
    g_a = err * h + eta * psi * w.a
    g_w1 = delta * x + eta * psi * w.w1
    return np.concatenate([g_a, g_w1, np.outer(delta, u).ravel(), delta])


@dataclass
class AdamState:
    m1: np.ndarray
    m2: np.ndarray
    t: int = 0

    @classmethod
    def fresh(cls, size: int) -> "AdamState":
        return cls(np.zeros(size), np.zeros(size), 0)


def adam_step(params: np.ndarray, grad: np.ndarray, state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """Bias-corrected ADAM update; returns (new_params, new_state)."""
    t = state.t + 1
    m1 = beta1 * state.m1 + (1 - beta1) * grad
    m2 = beta2 * state.m2 + (1 - beta2) * grad * grad
    m_hat = m1 / (1 - beta1 ** t)
    v_hat = m2 / (1 - beta2 ** t)
    return params - lr * m_hat / (np.sqrt(v_hat) + eps), AdamState(m1, m2, t)


def contraction_constant(w: RnnWeights) -> float:
    """K = (n+1) max_i(|a_i| + |w1_i|/(n+1)); a Lipschitz bound in x when < 1."""
    return (w.n + 1) * float(np.max(np.abs(w.a) + np.abs(w.w1) / (w.n + 1)))


def lmi_matrix(w: RnnWeights, lam=None, p: float = 1.0) -> np.ndarray:
    """The (n+2)x(n+2) contraction matrix with diagonal multiplier ``lam``."""
    n = w.n
    lam = np.full(n, 1.0 / (n + 1)) if lam is None else np.broadcast_to(lam, (n,))
    M = np.zeros((n + 2, n + 2))
    M[0, 0] = 2.0 - p
    M[1, 1] = p
    M[0, 2:] = M[2:, 0] = -w.a
    M[1, 2:] = M[2:, 1] = -lam * w.w1
    M[2:, 2:] = np.diag(lam)
    return M


def certify(w: RnnWeights) -> CertificationReport:
    n = w.n
    if n <= 1:
        raise ValueError("certification needs n > 1")
    lam = 1.0 / (n + 1)
    abs_a, abs_w1 = np.abs(w.a), np.abs(w.w1)
    row = abs_a + lam * abs_w1
    theorem3 = bool(np.max(row) < lam)
    gersgorin = bool(np.sum(abs_a) < 1.0 and lam * np.sum(abs_w1) < 1.0 and np.all(row < lam))
    min_eig = float(np.linalg.eigvalsh(lmi_matrix(w))[0])
    return CertificationReport(
        theorem3_ok=theorem3,
        gersgorin_ok=gersgorin,
        M_psd_ok=min_eig >= -PSD_TOL,
        min_eigenvalue_of_M=min_eig,
        violating_neurons=[int(i) for i in np.flatnonzero(row >= lam)],
        contraction_constant=contraction_constant(w),
    )


def critical_values(w: RnnWeights) -> list:
    nz = w.w1 != 0
    cand = -w.b[nz] / w.w1[nz]
    cand = cand[(cand >= 0.0) & (cand <= 1.0)]
    vals = np.sort(np.concatenate([[0.0, 1.0], cand]))
    out = [float(vals[0])]
    for v in vals[1:]:
        if v - out[-1] > CRITICAL_DEDUP_TOL:
            out.append(float(v))
    return out


def classify_slope(q: float) -> str:
    if abs(abs(q) - 1.0) <= ROOT_TOL:
        return "marginal"
    if 0.0 <= q < 1.0:
        return "stable"
    if -1.0 < q < 0.0:
        return "stable-oscillatory"
    return "unstable"


def equilibria(w: RnnWeights) -> EquilibriumReport:
    """Fixed points of x -> phi(x, 0) on [0, 1], solved segment by segment.

    Between adjacent critical values the map is affine, ``q x + c``; its fixed
    point is kept when it lands inside the segment.  A segment where the map
    is the identity is reported as a marginal segment instead.
    """
    crit = critical_values(w)
    found: list[Equilibrium] = []
    marginal = []
    for lo, hi in zip(crit[:-1], crit[1:]):
        active = (w.w1 * (0.5 * (lo + hi)) + w.b) > 0
        q = float(w.a[active] @ w.w1[active])
        c = float(w.a[active] @ w.b[active])
        if abs(q - 1.0) <= ROOT_TOL:
            if abs(c) <= ROOT_TOL:
                marginal.append((lo, hi))
            continue
        x = c / (1.0 - q)
        if lo - ROOT_TOL <= x <= hi + ROOT_TOL:
            x = min(max(x, lo), hi)
            if found and abs(found[-1].x - x) <= ROOT_TOL:
                continue
            found.append(Equilibrium(x=x, slope=q, kind=classify_slope(q)))
    return EquilibriumReport(equilibria=found, critical_values=crit, marginal_segments=marginal)


def rnn_inputs(channels, xi_l: float, xi_r: float, heading: float, heading_rate: float,
               xi_max: float) -> np.ndarray:
    vals = {"xi_left": max(xi_l, 0.0) / xi_max, "xi_right": max(xi_r, 0.0) / xi_max,
            "sin_heading": math.sin(heading), "cos_heading": math.cos(heading),
            "heading_rate": heading_rate}
    return np.array([vals[c] for c in channels])


class RnnModel:
    """Recurrent estimator: weights, ADAM state and its own recurrent state.

    Single-writer; take ``copy()`` for a snapshot.
    """

    def __init__(self, cfg: RnnConfig | None = None, weights: RnnWeights | None = None,
                 adam: AdamState | None = None, x: float = 0.0, seed: int = 0):
        self.cfg = cfg or RnnConfig()
        if weights is None:
            rng = np.random.default_rng(seed)
            s = self.cfg.scale
            weights = RnnWeights.from_flat(
                rng.uniform(-s, s, self.cfg.n_weights), self.cfg.n, self.cfg.m)
        if (weights.n, weights.m) != (self.cfg.n, self.cfg.m):
            raise ValueError("weights do not match the RNN configuration")
        self.params = weights.flat()
        self.adam = adam or AdamState.fresh(self.params.size)
        self.x = float(x)
        self.skipped = 0

    @property
    def weights(self) -> RnnWeights:
        return RnnWeights.from_flat(self.params, self.cfg.n, self.cfg.m)

    def predict(self, u) -> float:
        return forward(self.weights, self.x, u)

    def predict_and_learn(self, u, x_meas: float | None = None, learn: bool = True) -> float:
        """Predict the next scaled state from the model's own previous estimate.

        When a measurement is supplied (and ``learn``), take one ADAM step on
        the penalised loss of this prediction.  The recurrent state always
        advances to the prediction, never to the measurement.
        """
        u = np.asarray(u, dtype=float)
        if not np.all(np.isfinite(u)) or (x_meas is not None and not math.isfinite(x_meas)):
            self.skipped += 1
            return self.x
        w = self.weights
        x_prev = self.x
        x_next = forward(w, x_prev, u)
        if x_meas is not None and learn:
            grad = backprop(w, x_prev, u, x_meas, self.cfg.eta, self.cfg.penalty_margin)
            if np.any(grad):
                c = self.cfg
                self.params, self.adam = adam_step(self.params, grad, self.adam, c.lr,
                                                   c.beta1, c.beta2, c.eps)
        self.x = x_next
        return x_next

    def copy(self) -> "RnnModel":
        out = RnnModel(self.cfg, self.weights,
                       AdamState(self.adam.m1.copy(), self.adam.m2.copy(), self.adam.t), self.x)
        out.params = self.params.copy()
        out.skipped = self.skipped
        return out

    def to_dict(self) -> dict:
        w = self.weights
        return {"n": self.cfg.n, "m": self.cfg.m, "a": w.a.tolist(), "w1": w.w1.tolist(),
                "W2": w.W2.ravel().tolist(), "b": w.b.tolist(),
                "adam_m1": self.adam.m1.tolist(), "adam_m2": self.adam.m2.tolist(),
                "adam_t": self.adam.t, "x": self.x, "skipped": self.skipped}

    @classmethod
    def from_dict(cls, d: dict, cfg: RnnConfig | None = None) -> "RnnModel":
        cfg = cfg or RnnConfig(n=d["n"], m=d["m"])
        if (cfg.n, cfg.m) != (d["n"], d["m"]):
            raise ValueError(f"snapshot RNN is {d['n']}x{d['m']}, config expects "
                             f"{cfg.n}x{cfg.m}")
        n, m = d["n"], d["m"]
        w = RnnWeights(d["a"], d["w1"], np.array(d["W2"]).reshape(n, m), d["b"])
        adam = AdamState(np.array(d["adam_m1"]), np.array(d["adam_m2"]), d["adam_t"])
        model = cls(cfg, w, adam, d["x"])
        model.skipped = d.get("skipped", 0)
        return model
