"""Fusion of the three velocity predictions."""

from __future__ import annotations

import math

import numpy as np

from surgeid.rls import RecursiveLeastSquares


def average(v_aid: float, v_rnn: float, v_rls: float) -> float:
    return (v_aid + v_rnn + v_rls) / 3.0


class WeightedEnsemble(RecursiveLeastSquares):
    """RLS-weighted combination ``c1 v_aid + c2 v_rnn + c3 v_rls``, no intercept.

    Starts at equal weights, i.e. at the plain average.
    """

    def __init__(self, lam: float = 0.999, p0: float = 1e2, weights0=(1 / 3, 1 / 3, 1 / 3)):
        super().__init__(3, lam, p0, weights0)

    @property
    def c_bar(self) -> np.ndarray:
        return self.theta

    def fuse(self, v_aid: float, v_rnn: float, v_rls: float) -> float:
        return self.predict(_components(v_aid, v_rnn, v_rls))

    def fuse_update(self, v_aid: float, v_rnn: float, v_rls: float,
                    v_meas: float | None) -> float:
        """Fused prediction with the weights held before this sample, then
        (if measured) one RLS step toward ``v_meas``."""
        phi = _components(v_aid, v_rnn, v_rls)
        if v_meas is None:
            return self.predict(phi)
        return self.update(phi, v_meas)


def _components(*vals) -> np.ndarray:
    # a disabled estimator contributes nothing
    return np.array([0.0 if v is None or math.isnan(v) else v for v in vals])


def batch_fusion_weights(V, y) -> np.ndarray:
    """Unregularised least-squares weights for columns ``V`` (T x 3)."""
    return np.linalg.lstsq(np.asarray(V, dtype=float), np.asarray(y, dtype=float), rcond=None)[0]
