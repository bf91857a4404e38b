import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special, stats

from bikeobs import datagen
from bikeobs.datagen import (
    G,
    AccelerationTarget,
    ClothoidSegment,
    EndOfPath,
    FrictionGrid,
    UnreachableTarget,
    accelerations_from_inputs,
    build_clothoid_path,
    cross_track_errors,
    nearest_feasible_inputs,
    pick_target,
    pure_pursuit_steer,
    solve_inputs_for_target,
)
from bikeobs.sim import NoiseSpec, VehicleParams, VehicleState

L = 2.7
DT = 0.02


def test_accelerations_examples():
    assert accelerations_from_inputs(5, 5, 0, 0, DT, L) == (0, 0)
    ax, ay = accelerations_from_inputs(5, 5.2, 0, 0, DT, L)
    assert ax == pytest.approx(10.0) and ay == 0
    ax, ay = accelerations_from_inputs(5, 5, 0.05, 0, DT, L)
    assert ax == 0
    assert ay == pytest.approx(5 * math.tan(0.05) * 5 / 2.7, rel=1e-15)
    assert ay == pytest.approx(0.4634, abs=5e-4)


def test_solve_examples():
    assert solve_inputs_for_target(AccelerationTarget(0, 0), 5, 1.3, DT, L) == (5, 0)
    v1, d = solve_inputs_for_target(AccelerationTarget(10, 0), 5, 0, DT, L)
    assert v1 == pytest.approx(5.2) and d == 0
    v1, d = solve_inputs_for_target(AccelerationTarget(0, 2), 5, 0, DT, L)
    assert v1 == 5
    assert d == pytest.approx(math.atan(2 * 2.7 / 25), rel=1e-15)
    assert d == pytest.approx(0.21273, abs=1e-5)


def test_solve_unreachable():
    with pytest.raises(UnreachableTarget):
        solve_inputs_for_target(AccelerationTarget(-4.9, 0), 0.55, 0, DT, L)
    with pytest.raises(UnreachableTarget):
        solve_inputs_for_target(AccelerationTarget(0, 4.9), 1.0, 0, DT, L)
    with pytest.raises(ValueError):
        solve_inputs_for_target(AccelerationTarget(0, 0), 0.1, 0, DT, L)


@settings(max_examples=300, deadline=None)
@given(r=st.floats(0, 1), th=st.floats(-math.pi, math.pi), v=st.floats(2, 29), psi=st.floats(-math.pi, math.pi))
def test_inversion_round_trip(r, th, v, psi):
    t = AccelerationTarget(0.5 * G * r * math.cos(th), 0.5 * G * r * math.sin(th))
    try:
        v1, d = solve_inputs_for_target(t, v, psi, DT, L)
    except UnreachableTarget:
        return
    back = accelerations_from_inputs(v, v1, d, psi, DT, L)
    assert abs(back[0] - t[0]) <= 1e-9 and abs(back[1] - t[1]) <= 1e-9


@settings(max_examples=200, deadline=None)
@given(r=st.floats(0, 1), th=st.floats(-math.pi, math.pi), v=st.floats(0.5, 30), psi=st.floats(-math.pi, math.pi))
def test_nearest_feasible_stays_in_box_and_circle(r, th, v, psi):
    t = AccelerationTarget(0.5 * G * r * math.cos(th), 0.5 * G * r * math.sin(th))
    v1, d = nearest_feasible_inputs(t, v, psi, DT, L)
    assert 0.5 <= v1 <= 30 and abs(d) <= 0.5
    a = accelerations_from_inputs(v, v1, d, psi, DT, L)
    assert math.hypot(*a) <= 0.5 * G * (1 + 1e-12)


def test_grid_eligibility_and_cells():
    g = FrictionGrid()
    assert g.counts.shape == (64, 64)
    cx, cy = np.meshgrid(g.centers, g.centers, indexing="ij")
    np.testing.assert_array_equal(g.eligible, cx**2 + cy**2 <= (0.5 * G) ** 2)
    assert g.cell_of(0.0, 0.0) == (32, 32)
    assert g.cell_of(10.0, 0.0) is None
    with pytest.raises(ValueError):
        g.counts[0, 0] = 1


def test_pick_target_on_empty_grid_is_feasible(rng):
    g = FrictionGrid()
    for _ in range(2000):
        t = pick_target(g, rng)
        assert t.ax**2 + t.ay**2 <= (0.5 * G) ** 2


def test_pick_target_unique_minimum(rng):
    g = FrictionGrid()
    counts = np.ones((64, 64), dtype=int)
    counts[40, 20] = 0
    g.set_counts(counts)
    for _ in range(50):
        t = pick_target(g, rng)
        assert g.cell_of(*t) == (40, 20)
        assert abs(t.ax - g.centers[40]) <= g.cell_size / 2 and abs(t.ay - g.centers[20]) <= g.cell_size / 2


def test_grid_pool_tracks_incremental_adds(rng):
    g = FrictionGrid(cells_per_axis=8)
    for _ in range(500):
        g.add(*pick_target(g, rng))
        c = g.counts[g.eligible]
        expected = sorted(np.flatnonzero((g.counts == c.min()) & g.eligible).tolist())
        assert sorted(g.min_cells()) == expected


def test_grid_counts_nondecreasing(rng):
    g = FrictionGrid(cells_per_axis=16)
    prev = g.counts.copy()
    for _ in range(300):
        g.add(*pick_target(g, rng))
        assert np.all(g.counts >= prev)
        prev = g.counts.copy()


def test_training_config_sizes():
    assert datagen.TrainingSetConfig().steps_per_trajectory * 1000 == 2_000_000
    split = datagen.generate_training_set(datagen.TrainingSetConfig(n_trajectories=1, duration=1.0))
    assert split.n_samples == 50


def test_training_set_properties(small_train):
    assert small_train.kind == "train" and small_train.alpha_levels == [1.0]
    r = 0.5 * G
    diag = math.sqrt(2) * small_train.grid.cell_size
    for t in small_train.trajectories:
        assert t.noise.alpha == 1.0
        assert t.initial[:2] == (0.0, 0.0)
        a = t.meta["accelerations"]
        assert np.all(np.hypot(a[:, 0], a[:, 1]) <= r + diag)
        assert np.all((t.inputs[:, 0] >= 0.5) & (t.inputs[:, 0] <= 30))
        assert np.all(np.abs(t.inputs[:, 1]) <= 0.5)
    assert int(small_train.grid.counts.sum()) <= small_train.n_samples


def test_training_generation_is_deterministic():
    cfg = datagen.TrainingSetConfig(n_trajectories=2, duration=2.0, seed=3)
    a, b = datagen.generate_training_set(cfg), datagen.generate_training_set(cfg)
    for ta, tb in zip(a.trajectories, b.trajectories):
        assert ta.states.tobytes() == tb.states.tobytes()
        assert ta.measurements.tobytes() == tb.measurements.tobytes()
    np.testing.assert_array_equal(a.grid.counts, b.grid.counts)


def test_initial_headings_uniform():
    rng_heads = [datagen.stream(0, 0, i).uniform(-math.pi, math.pi) for i in range(1000)]
    d = stats.kstest(rng_heads, stats.uniform(loc=-math.pi, scale=2 * math.pi).cdf).statistic
    assert d < 1.63 / math.sqrt(1000)  # 1% critical value
    cfg = datagen.TrainingSetConfig(n_trajectories=3, duration=0.1)
    heads = [t.initial.psi for t in datagen.generate_training_set(cfg).trajectories]
    assert heads == pytest.approx(rng_heads[:3])


def test_straight_clothoid():
    p = build_clothoid_path([ClothoidSegment(50.0, 0.0, 0.0)])
    assert p.x[-1] == pytest.approx(50.0, abs=1e-12) and p.y[-1] == pytest.approx(0.0, abs=1e-12)
    assert p.ds == pytest.approx(0.1)


def test_circular_clothoid_endpoint():
    R = 20.0
    ell = 30.0
    p = build_clothoid_path([ClothoidSegment(ell, 1 / R, 1 / R)])
    th = ell / R
    assert p.x[-1] == pytest.approx(R * math.sin(th), abs=1e-6)
    assert p.y[-1] == pytest.approx(R * (1 - math.cos(th)), abs=1e-6)


def test_clothoid_against_fresnel():
    # heading a s^2 / 2 from zero curvature; scipy's fresnel integrates cos(pi t^2 / 2)
    a = 0.01  # dkappa/ds
    ell = 40.0
    p = build_clothoid_path([ClothoidSegment(ell, 0.0, a * ell)])
    scale = math.sqrt(math.pi / a)
    S, C = special.fresnel(ell / scale)
    assert p.x[-1] == pytest.approx(scale * C, abs=1e-6)
    assert p.y[-1] == pytest.approx(scale * S, abs=1e-6)


def test_clothoid_curvature_continuity_and_heading():
    segs = [ClothoidSegment(10, 0, 0.05), ClothoidSegment(15, 0.05, -0.02), ClothoidSegment(5, -0.02, 0)]
    p = build_clothoid_path(segs)
    assert np.max(np.abs(np.diff(p.curvature))) < 0.05 * 0.1 / 10 + 1e-12
    # heading is the integral of curvature (trapezoid exact for linear curvature)
    integral = np.concatenate([[0], np.cumsum(0.5 * (p.curvature[1:] + p.curvature[:-1]) * np.diff(p.s))])
    np.testing.assert_allclose(p.heading, integral, atol=1e-12)
    with pytest.raises(ValueError):
        build_clothoid_path([ClothoidSegment(0, 0, 0)])


def test_validation_path_shape():
    segs, theta0 = datagen.sinusoid_segments()
    p = build_clothoid_path(segs, VehicleState(0, 0, theta0))
    assert p.y.max() == pytest.approx(5.0, abs=1e-3)
    assert p.y.min() == pytest.approx(-5.0, abs=1e-3)
    assert p.x[-1] == pytest.approx(200.0, abs=1e-3)
    assert p.y[-1] == pytest.approx(0.0, abs=1e-6)


def _straight():
    return build_clothoid_path([ClothoidSegment(100.0, 0.0, 0.0)])


def test_pure_pursuit_aligned_straight():
    assert pure_pursuit_steer(_straight(), VehicleState(10, 0, 0), 5.0) == 0


def test_pure_pursuit_goal_dead_ahead():
    # goal exactly on the heading line gives zero steer whatever the lookahead
    for la in (3.0, 7.5, 20.0):
        assert pure_pursuit_steer(_straight(), VehicleState(0, 0, 0), la) == pytest.approx(0.0, abs=1e-15)


def test_pure_pursuit_formula_and_clamp():
    p = _straight()
    z = VehicleState(10, 1.0, 0)
    la = 5.0
    i = int(np.argmin((p.x - 10) ** 2 + (p.y - 1) ** 2))
    g = int(np.searchsorted(p.s, p.s[i] + la))
    eta = math.atan2(p.y[g] - 1.0, p.x[g] - 10)
    assert pure_pursuit_steer(p, z, la) == pytest.approx(math.atan(2 * L * math.sin(eta) / la))
    assert pure_pursuit_steer(p, VehicleState(10, 30, 0), la) == -0.5
    with pytest.raises(EndOfPath):
        pure_pursuit_steer(p, VehicleState(98, 0, 0), 5.0)
    with pytest.raises(ValueError):
        pure_pursuit_steer(p, VehicleState(0, 0, 0), 0.0)


def test_pure_pursuit_converges_on_circle():
    R = 20.0
    path = build_clothoid_path([ClothoidSegment(2 * math.pi * R * 1.2, 1 / R, 1 / R)])
    # start 1 m off the path, pointing along it
    params = VehicleParams()
    speeds = np.full(int(8 / params.dt), 5.0)
    states = _follow_from(path, speeds, params, VehicleState(0.0, -1.0, 0.0))
    cte = cross_track_errors(path, states)
    t = (np.arange(len(states)) + 1) * params.dt
    assert cte[0] > 0.8
    assert np.all(cte[t >= 5.0] < 0.2)


def _follow_from(path, speeds, params, start):
    from bikeobs.sim import _euler

    z = start
    states = []  # zero-noise closed loop
    idx = 0
    for v in speeds:
        idx = datagen.nearest_index(path, z[0], z[1], idx, window=400)
        d = pure_pursuit_steer(path, z, datagen.lookahead_distance(v), params.wheelbase, 0.5, idx, window=400)
        z = _euler(z, v, d, params)
        states.append(z)
    return np.array(states)


def test_speed_profile_bounds(rng):
    v = datagen.random_speed_profile(5000, DT, rng, 10.0)
    assert np.all((v >= 2) & (v <= 20))
    assert np.max(np.abs(np.diff(v))) <= 2 * DT + 1e-12


def test_validation_set(val_split):
    assert val_split.kind == "validation"
    assert len(val_split.trajectories) == 1
    t = val_split.trajectories[0]
    assert abs(len(t) - 995) <= 10
    assert t.noise.alpha == 1.0 and val_split.alpha_levels == [1.0]


def test_validation_zero_noise_tracks_path():
    cfg = datagen.ValidationSetConfig(noise=NoiseSpec.noiseless())
    a = datagen.generate_validation_set(cfg)
    b = datagen.generate_validation_set(cfg)
    np.testing.assert_array_equal(a.trajectories[0].states, b.trajectories[0].states)
    cte = cross_track_errors(a.config["path"], a.trajectories[0].states)
    assert np.percentile(cte, 95) < 0.5


def test_test_sets(test_split):
    assert len(test_split.alpha_levels) == 25
    assert test_split.alpha_levels == pytest.approx([0.25 * i for i in range(25)])
    assert test_split.n_samples == 245_725
    n_true = sum(len(t) for t in test_split.at_alpha(0.0))
    assert n_true == 9829
    for a in test_split.alpha_levels:
        level = test_split.at_alpha(a)
        assert len(level) == 15
        assert sum(len(t) for t in level) == n_true
    base = test_split.at_alpha(0.0)
    for t in base:
        np.testing.assert_array_equal(t.measurements, t.states)
    for t6, t0 in zip(test_split.at_alpha(6.0), base):
        assert t6.states is t0.states or np.array_equal(t6.states, t0.states)


def test_test_paths_distinct_and_tracked():
    cfg = datagen.TestSetConfig(noise=NoiseSpec.noiseless(), alpha_levels=(0.0,))
    split = datagen.generate_test_sets(cfg)
    starts = {tuple(np.round(t.states[10], 6)) for t in split.trajectories}
    assert len(starts) == 15
    for path, t in zip(split.config["paths"], split.trajectories):
        assert np.percentile(cross_track_errors(path, t.states), 95) < 0.5


def test_at_alpha_missing_level(small_test):
    with pytest.raises(KeyError):
        small_test.at_alpha(2.5)
