import numpy as np
import pytest

from surgeid.missions import (MissionScript, NoiseModel, Segment, VehicleSpec, make_fleet, patrol_mission,
                              pe_mission, replay_truth, simulate)
from surgeid.surge import SurgeParams


def test_zero_thrust_decays():
    spec = VehicleSpec("q", SurgeParams())
    sim = simulate(spec, MissionScript((Segment("idle", 120.0),)), v0=1.5)
    assert np.all(np.diff(sim.v_true) <= 0)
    assert sim.v_true[-1] < 0.05


def test_noiseless_self_consistent(quiet_vehicle):
    sim = simulate(quiet_vehicle, patrol_mission(300, seed=3))
    np.testing.assert_array_equal(replay_truth(quiet_vehicle, sim), sim.v_true)
    v = np.array([m.value for m in sim.log.messages if m.channel == "velocity"])
    measured = ~np.array([seg.kind == "abort" for seg in
                          (patrol_mission(300, seed=3).at(t)[0] for t in sim.t - sim.t[0])])
    np.testing.assert_array_equal(v, sim.v_true[measured])


def test_outlier_count():
    spec = VehicleSpec("o", SurgeParams(), noise=NoiseModel(0.0, 0.01, 0.5), seed=5)
    sim = simulate(spec, MissionScript((Segment("step", 1000.0, {"left": 0.5, "right": 0.5}),)))
    assert len(sim.t) == 10000
    assert 70 <= sim.log.n_outliers <= 130


def test_commands_within_limits(quiet_vehicle):
    sim = simulate(quiet_vehicle, pe_mission(200))
    assert sim.xi_left.min() >= 0 and sim.xi_left.max() <= quiet_vehicle.xi_max
    assert sim.v_true.min() >= 0 and sim.v_true.max() <= quiet_vehicle.v_max


@pytest.mark.parametrize("kind,params", [
    ("step", {"left": 1.2, "right": 0.5}),
    ("ramp", {"left": 0.0, "right": 0.0, "left_end": -0.1, "right_end": 0.5}),
    ("multisine", {"base": 0.8, "amp": 0.5, "freqs": [0.1], "phases_left": [0], "phases_right": [0]}),
    ("warp", {}),
])
def test_bad_script_rejected(kind, params):
    with pytest.raises(ValueError):
        Segment(kind, 10.0, params)


def test_zero_duration_rejected(quiet_vehicle):
    with pytest.raises(ValueError):
        Segment("idle", 0.0)


def test_fleet_reproducible():
    a, b = make_fleet(4, seed=3), make_fleet(4, seed=3)
    assert a == b
    assert len({s.truth for s in a}) == 4
    for s in a:
        assert s.truth.m == pytest.approx(8 * abs(s.truth.c_q))
        ratio = s.truth.theta() / SurgeParams().theta()
        assert np.all((ratio >= 0.7) & (ratio <= 1.3))


def test_simulation_reproducible(noisy_vehicle):
    script = patrol_mission(120, seed=1)
    assert simulate(noisy_vehicle, script, seed=3).log.messages == \
        simulate(noisy_vehicle, script, seed=3).log.messages


def test_script_round_trip():
    s = patrol_mission(600, seed=8)
    assert MissionScript.from_dict(s.to_dict()) == s
    assert s.duration == pytest.approx(600)


def test_spec_round_trip(noisy_vehicle):
    assert VehicleSpec.from_dict(noisy_vehicle.to_dict()) == noisy_vehicle


def test_aborts_drop_velocity(quiet_vehicle):
    script = MissionScript((Segment("step", 10.0, {"left": 0.5, "right": 0.5}), Segment("abort", 10.0)))
    sim = simulate(quiet_vehicle, script)
    vt = [m.timestamp for m in sim.log.messages if m.channel == "velocity"]
    assert len(vt) == 100 and max(vt) < 10.0
