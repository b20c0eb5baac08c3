import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from surgeid.ensemble import WeightedEnsemble, average, batch_fusion_weights


@pytest.mark.parametrize("vals,out", [((1, 1, 1), 1.0), ((0.9, 1.1, 1.0), 1.0), ((0, 0, 3), 1.0)])
def test_average(vals, out):
    assert average(*vals) == pytest.approx(out)


def test_starts_as_average():
    assert WeightedEnsemble().fuse(0.3, 0.6, 1.2) == pytest.approx(0.7)


def test_selector_weights():
    ens = WeightedEnsemble(weights0=(1, 0, 0))
    assert ens.fuse(0.42, 1.0, 2.0) == 0.42


def test_causal_prediction(rng):
    ens = WeightedEnsemble()
    before = ens.fuse(0.5, 0.6, 0.7)
    assert ens.fuse_update(0.5, 0.6, 0.7, 3.0) == before
    assert ens.fuse(0.5, 0.6, 0.7) != before


def test_missing_measurement_keeps_weights():
    ens = WeightedEnsemble()
    ens.fuse_update(0.5, 0.6, 0.7, None)
    np.testing.assert_array_equal(ens.c_bar, [1 / 3] * 3)


def test_disabled_component_contributes_nothing():
    ens = WeightedEnsemble(weights0=(0.5, 0.5, 0.5))
    assert ens.fuse(1.0, float("nan"), 1.0) == 1.0


def test_dominant_component_selected(rng):
    ens = WeightedEnsemble()
    V, y = [], []
    for _ in range(500):
        v = rng.uniform(0.5, 1.5)
        row = (v, rng.uniform(0, 2), rng.uniform(0, 2))
        ens.fuse_update(*row, v)
        V.append(row)
        y.append(v)
    assert ens.c_bar[0] > 0.9
    assert batch_fusion_weights(V, y)[0] > 0.9


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_batch_optimality(seed):
    rng = np.random.default_rng(seed)
    y = rng.uniform(0, 2, 300)
    V = y[:, None] + rng.normal(0, [0.05, 0.2, 0.1], (300, 3)) + rng.normal(0, 0.1, (300, 1))
    c = batch_fusion_weights(V, y)
    fused = np.mean((V @ c - y) ** 2)
    assert fused <= np.min(np.mean((V - y[:, None]) ** 2, axis=0)) + 1e-15
