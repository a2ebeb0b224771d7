"""Synthetic traversal generator: determinism, noise model, loop synthesis."""

import numpy as np
import pytest

from toposlam.dataset import LoopPair
from toposlam.errors import ConfigError, RouteError
from toposlam.se2 import dead_reckon, relative, wrap_angle
from toposlam.simulator import (
    DescriptorModel,
    OdometryNoise,
    World,
    corrupt_odometry,
    generate_traversal,
    heading_bin,
    make_world,
    scenario_from_dict,
    simulate_scenario,
    synthesize_loop_measurement,
    view_bases,
)


def two_place_world(d_g=16, seed=0, spread=10.0):
    return make_world([(0.0, 0.0), (spread, 0.0)], d_g, seed)


def test_make_world_unit_embeddings():
    w = two_place_world(d_g=32)
    for p in w.places:
        assert np.linalg.norm(p.embedding) == pytest.approx(1.0, abs=1e-6)
    with pytest.raises(ValueError):
        World((w.places[0],), 0)


def test_view_bases_deterministic_units():
    w = two_place_world()
    b1 = view_bases(w, 8)
    b2 = view_bases(w, 8)
    assert np.array_equal(b1, b2)
    assert b1.shape == (8, 16)
    assert np.allclose(np.linalg.norm(b1, axis=1), 1.0)


def test_heading_bin_quantization():
    assert heading_bin(0.0, 8) == 0
    assert heading_bin(np.pi / 4 - 1e-9, 8) == 0
    assert heading_bin(np.pi / 4 + 1e-9, 8) == 1
    assert heading_bin(-0.1, 8) == 7  # negative angles wrap into [0, 2pi)
    assert heading_bin(2 * np.pi + 0.1, 8) == 0
    # two bins split the circle into forward/backward half-planes
    assert heading_bin(0.5, 2) == 0
    assert heading_bin(np.pi + 0.5, 2) == 1
    for n_view in (1, 2, 3, 8):
        for theta in np.linspace(-10, 10, 101):
            assert 0 <= heading_bin(theta, n_view) < n_view


def test_traversal_descriptors_unit_norm_and_count():
    w = two_place_world()
    model = DescriptorModel(alpha=1.0, beta=0.5, sigma_d=0.1, n_view=4)
    route = [(0, 0.0), (1, 1.0), (0, 2.0)]
    trav = generate_traversal(w, route, steps_per_leg=5, model=model, seed=3)
    assert len(trav) == 1 + 2 * 5
    norms = np.linalg.norm(trav.descriptor_matrix(), axis=1)
    assert np.allclose(norms, 1.0, atol=1e-6)


def test_traversal_deterministic():
    w = two_place_world()
    model = DescriptorModel(alpha=1.0, beta=0.5, sigma_d=0.1, n_view=4)
    route = [(0, 0.0), (1, 1.0)]
    t1 = generate_traversal(w, route, 4, model, seed=9)
    t2 = generate_traversal(w, route, 4, model, seed=9)
    assert np.array_equal(t1.descriptor_matrix(), t2.descriptor_matrix())
    t3 = generate_traversal(w, route, 4, model, seed=10)
    assert not np.array_equal(t1.descriptor_matrix(), t3.descriptor_matrix())


def test_place_only_model_repeats_descriptors():
    # beta = 0, sigma_d = 0: descriptor depends only on the nearest place
    w = two_place_world()
    model = DescriptorModel(alpha=1.0, beta=0.0, sigma_d=0.0, n_view=4)
    trav = generate_traversal(w, [(0, 0.0), (1, 0.0), (0, 0.0)], 4, model, seed=0)
    D = trav.descriptor_matrix()
    # frames at the start and end sit at place 0 with identical descriptors
    assert np.array_equal(D[0], D[-1])
    # renormalization of an already unit vector can flip last bits
    assert np.allclose(D[0], w.places[0].embedding, atol=1e-12)


def test_opposite_headings_read_farther_apart():
    # same place, opposite quantized headings vs equal headings
    w = two_place_world(d_g=64)
    model = DescriptorModel(alpha=1.0, beta=1.0, sigma_d=0.2, n_view=2)
    same, opposite = [], []
    for seed in range(100):
        trav = generate_traversal(
            w, [(0, 0.0), (0, 0.0), (0, np.pi)], 1, model, seed=seed
        )
        D = trav.descriptor_matrix()
        same.append(float(D[0] @ D[1]))
        opposite.append(float(D[0] @ D[2]))
    assert np.mean(opposite) < np.mean(same)


def test_odometry_noise_free_exact():
    w = two_place_world()
    model = DescriptorModel(1.0, 0.0, 0.0, 1)
    trav = generate_traversal(w, [(0, 0.0), (1, 0.5), (0, 1.0)], 6, model, seed=0)
    odom = corrupt_odometry(trav, OdometryNoise(0.0, 0.0), seed=1)
    poses = trav.pose_array()
    assert np.allclose(odom, relative(poses[:-1], poses[1:]), atol=1e-12)
    rebuilt = dead_reckon(poses[0], odom)
    assert np.allclose(rebuilt[:, :2], poses[:, :2], atol=1e-9)
    assert np.allclose(wrap_angle(rebuilt[:, 2] - poses[:, 2]), 0.0, atol=1e-9)


def test_odometry_noise_layout_stable():
    # turning one sigma off must not reshuffle the other noise stream
    w = two_place_world()
    model = DescriptorModel(1.0, 0.0, 0.0, 1)
    trav = generate_traversal(w, [(0, 0.0), (1, 0.0)], 10, model, seed=0)
    with_rot = corrupt_odometry(trav, OdometryNoise(0.05, 0.2), seed=7)
    no_rot = corrupt_odometry(trav, OdometryNoise(0.05, 0.0), seed=7)
    assert np.allclose(with_rot[:, :2], no_rot[:, :2])
    assert not np.allclose(with_rot[:, 2], no_rot[:, 2])


def test_drift_grows_with_path_length():
    # Monte-Carlo: terminal dead-reckoning error after 500 steps dominates
    # the 10-step error on average
    w = two_place_world(spread=500.0)
    model = DescriptorModel(1.0, 0.0, 0.0, 1)
    noise = OdometryNoise(sigma_t=0.05, sigma_r=0.0)
    terminals = {}
    for steps in (10, 500):
        trav = generate_traversal(w, [(0, 0.0), (1, 0.0)], steps, model, seed=0)
        poses = trav.pose_array()
        errs = []
        for seed in range(100):
            odom = corrupt_odometry(trav, noise, seed=seed)
            rebuilt = dead_reckon(poses[0], odom)
            errs.append(float(np.linalg.norm(rebuilt[-1, :2] - poses[-1, :2])))
        terminals[steps] = np.mean(errs)
    assert terminals[500] > terminals[10]


def test_loop_measurement_radius_rule():
    w = make_world([(0.0, 0.0), (5.1, 0.0)], 8, 0)
    model = DescriptorModel(1.0, 0.0, 0.0, 1)
    trav = generate_traversal(w, [(0, 0.0), (1, 0.0)], 1, model, seed=0)
    meas, valid = synthesize_loop_measurement(
        trav, LoopPair(0, 1), ground_truth_radius=5.0, sigma_loop=0.0
    )
    assert not valid
    assert np.array_equal(meas, np.zeros(3))


def test_loop_measurement_exact_when_noise_free():
    w = two_place_world(spread=2.0)
    model = DescriptorModel(1.0, 0.0, 0.0, 1)
    trav = generate_traversal(w, [(0, 0.0), (1, 1.0), (0, 2.0)], 3, model, seed=0)
    poses = trav.pose_array()
    meas, valid = synthesize_loop_measurement(
        trav, LoopPair(0, 6), ground_truth_radius=5.0, sigma_loop=0.0
    )
    assert valid
    assert np.allclose(meas, relative(poses[0], poses[6]), atol=1e-12)


def test_loop_measurement_noise_within_5_sigma():
    w = two_place_world(spread=2.0)
    model = DescriptorModel(1.0, 0.0, 0.0, 1)
    trav = generate_traversal(w, [(0, 0.0), (1, 1.0), (0, 2.0)], 3, model, seed=0)
    poses = trav.pose_array()
    true = relative(poses[0], poses[6])
    sigma = 0.01
    for seed in range(1000):
        meas, valid = synthesize_loop_measurement(
            trav, LoopPair(0, 6), ground_truth_radius=5.0, sigma_loop=sigma, seed=seed
        )
        assert valid
        assert np.all(np.abs(meas - true) <= 5 * sigma)


def test_loop_measurement_per_pair_streams_independent():
    w = two_place_world(spread=1.0)
    model = DescriptorModel(1.0, 0.0, 0.0, 1)
    trav = generate_traversal(w, [(0, 0.0), (1, 0.0), (0, 0.0)], 2, model, seed=0)
    poses = trav.pose_array()
    m1, _ = synthesize_loop_measurement(trav, LoopPair(0, 3), 5.0, 0.01, seed=0)
    m2, _ = synthesize_loop_measurement(trav, LoopPair(0, 4), 5.0, 0.01, seed=0)
    m1_again, _ = synthesize_loop_measurement(trav, LoopPair(0, 3), 5.0, 0.01, seed=0)
    assert np.array_equal(m1, m1_again)
    noise1 = m1 - relative(poses[0], poses[3])
    noise2 = m2 - relative(poses[0], poses[4])
    assert not np.allclose(noise1, noise2)  # pairs draw from separate streams


def test_scenario_from_dict_auto_headings():
    cfg = {
        "version": 1,
        "seed": 5,
        "d_g": 8,
        "places": [{"x": 0, "y": 0}, {"x": 1, "y": 0}, {"x": 1, "y": 1}],
        "route": [
            {"place": 0, "heading_deg": "auto"},
            {"place": 1, "heading_deg": "auto"},
            {"place": 2, "heading_deg": "auto"},
        ],
        "steps_per_leg": 2,
        "descriptor": {"alpha": 1.0, "beta": 0.0, "sigma_d": 0.0, "n_view": 1},
        "odometry": {"sigma_t": 0.0, "sigma_r": 0.0},
        "loop": {"radius": 5.0, "sigma_loop": 0.0},
    }
    sc = scenario_from_dict(cfg)
    # first leg heads east (0 rad), second leg north (pi/2)
    assert sc.route[0][1] == pytest.approx(0.0)
    assert sc.route[1][1] == pytest.approx(np.pi / 2)
    # last waypoint inherits the previous heading
    assert sc.route[2][1] == pytest.approx(np.pi / 2)
    trav, odom = simulate_scenario(sc, 0)
    assert len(trav) == 5
    assert odom.shape == (4, 3)


def test_scenario_rejects_unknown_place():
    cfg = {
        "version": 1,
        "seed": 5,
        "d_g": 8,
        "places": [{"x": 0, "y": 0}, {"x": 1, "y": 0}],
        "route": [{"place": 0, "heading_deg": 0}, {"place": 7, "heading_deg": 0}],
        "steps_per_leg": 1,
        "descriptor": {"alpha": 1.0, "beta": 0.0, "sigma_d": 0.0, "n_view": 1},
        "odometry": {"sigma_t": 0.0, "sigma_r": 0.0},
        "loop": {"radius": 5.0, "sigma_loop": 0.0},
    }
    with pytest.raises(RouteError):
        scenario_from_dict(cfg)


def test_scenario_rejects_unknown_keys():
    with pytest.raises(ConfigError):
        scenario_from_dict({"version": 1, "bogus": 1})


def test_simulate_scenario_deterministic():
    cfg = {
        "version": 1,
        "seed": 5,
        "d_g": 8,
        "places": [{"x": 0, "y": 0}, {"x": 4, "y": 0}],
        "route": [
            {"place": 0, "heading_deg": 0},
            {"place": 1, "heading_deg": 0},
            {"place": 0, "heading_deg": 180},
        ],
        "steps_per_leg": 3,
        "descriptor": {"alpha": 1.0, "beta": 0.3, "sigma_d": 0.05, "n_view": 4},
        "odometry": {"sigma_t": 0.01, "sigma_r": 0.01},
        "loop": {"radius": 5.0, "sigma_loop": 0.0},
    }
    sc = scenario_from_dict(cfg)
    t1, o1 = simulate_scenario(sc, 3)
    t2, o2 = simulate_scenario(sc, 3)
    assert np.array_equal(t1.descriptor_matrix(), t2.descriptor_matrix())
    assert np.array_equal(o1, o2)
