"""World spawning, stepping, and pinhole projection."""
from __future__ import annotations

import math

import numpy as np
import pytest

from beamid.errors import ConfigError
from beamid.scene import (
    CameraModel,
    ScenarioConfig,
    azimuth_from_u,
    default_scenario,
    ground_truth_frame,
    project,
    spawn_world,
    step_world,
)


def small_config(**overrides) -> ScenarioConfig:
    base = dict(
        lane_count=2,
        lane_y_offsets=(12.0, 16.0),
        road_extent=30.0,
        vehicle_count_range=(3, 3),
        speed_range=(10.0, 10.0),
        frame_rate=10.0,
        seed=0,
    )
    base.update(overrides)
    return ScenarioConfig(**base)


def test_single_vehicle_spawn_is_user():
    cfg = small_config(vehicle_count_range=(1, 1))
    world = spawn_world(cfg, np.random.default_rng(0))
    assert len(world.vehicles) == 1
    assert world.vehicles[0].is_user


def test_spawn_is_deterministic_for_same_seed():
    cfg = small_config()
    a = spawn_world(cfg, np.random.default_rng(cfg.seed))
    b = spawn_world(cfg, np.random.default_rng(cfg.seed))
    assert a == b


def test_spawn_rejects_overfull_config():
    with pytest.raises(ConfigError):
        spawn_world(
            small_config(
                lane_count=1,
                lane_y_offsets=(12.0,),
                road_extent=10.0,
                vehicle_count_range=(8, 8),
            ),
            np.random.default_rng(0),
        )


def test_user_choice_uniform_over_vehicles():
    """Monte-Carlo: each of 3 vehicles is the user about a third of the time."""
    cfg = small_config()
    rng = np.random.default_rng(123)
    hits = np.zeros(3)
    for _ in range(1000):
        world = spawn_world(cfg, rng)
        for i, v in enumerate(world.vehicles):
            if v.is_user:
                hits[i] += 1
    freq = hits / 1000.0
    assert np.all(np.abs(freq - 1.0 / 3.0) <= 0.05)


def test_spawned_vehicles_inside_fov():
    cfg = default_scenario(seed=5)
    rng = np.random.default_rng(5)
    half_fov = math.radians(cfg.camera_fov_deg) / 2.0
    for _ in range(50):
        world = spawn_world(cfg, rng)
        for v in world.vehicles:
            assert abs(math.atan2(v.x, v.y)) <= half_fov


def test_step_advances_by_speed_over_frame_rate():
    cfg = small_config(vehicle_count_range=(1, 1))
    world = spawn_world(cfg, np.random.default_rng(1))
    v0 = world.vehicles[0]
    stepped = step_world(world, cfg)
    assert stepped.vehicles[0].x == pytest.approx(v0.x + 1.0)
    assert stepped.vehicles[0].id == v0.id
    assert stepped.vehicles[0].speed == v0.speed


def test_step_zero_speed_is_identity_on_positions():
    cfg = small_config(speed_range=(0.0, 0.0))
    world = spawn_world(cfg, np.random.default_rng(2))
    stepped = step_world(world, cfg)
    assert [v.x for v in stepped.vehicles] == [v.x for v in world.vehicles]


def test_five_steps_accumulate_five_meters():
    cfg = small_config(vehicle_count_range=(1, 1), road_extent=200.0)
    world = spawn_world(cfg, np.random.default_rng(3))
    x0 = world.vehicles[0].x
    for _ in range(5):
        world = step_world(world, cfg)
    assert world.vehicles[0].x == pytest.approx(x0 + 5.0)


def test_wrap_assigns_fresh_id_and_opposite_end():
    cfg = small_config(vehicle_count_range=(1, 1))
    world = spawn_world(cfg, np.random.default_rng(4))
    seen = {world.vehicles[0].id}
    for _ in range(100):
        prev_x = world.vehicles[0].x
        world = step_world(world, cfg)
        v = world.vehicles[0]
        if v.x < prev_x:  # wrapped this step
            assert v.id not in seen
            assert v.x == pytest.approx(prev_x + 1.0 - cfg.road_extent)
        seen.add(v.id)
    assert len(seen) > 1


def test_retire_policy_drops_exiting_vehicles():
    cfg = small_config(vehicle_count_range=(2, 2), exit_policy="retire")
    world = spawn_world(cfg, np.random.default_rng(6))
    for _ in range(200):
        world = step_world(world, cfg)
    assert len(world.vehicles) == 0


def test_boresight_projects_to_center():
    cam = CameraModel()
    for y in (5.0, 12.0, 40.0):
        center, _ = project(cam, 0.0, y)
        assert center[0] == pytest.approx(0.5)


def test_fov_edge_projects_to_one():
    cam = CameraModel(fov_deg=110.0)
    y = 10.0
    x = y * math.tan(math.radians(55.0))
    center, _ = project(cam, x, y)
    assert center[0] == pytest.approx(1.0)


def test_u_formula_at_thirty_degrees():
    # fov 120, azimuth 30: u = 0.5 + tan(30) / (2 tan(60)), evaluated independently
    cam = CameraModel(fov_deg=120.0)
    y = 10.0
    x = y * math.tan(math.radians(30.0))
    center, _ = project(cam, x, y)
    expected = 0.5 + math.tan(math.radians(30.0)) / (2.0 * math.tan(math.radians(60.0)))
    assert center[0] == pytest.approx(expected, abs=1e-12)
    assert center[0] == pytest.approx(0.666667, abs=1e-6)


def test_out_of_fov_and_behind_camera_are_absent():
    cam = CameraModel(fov_deg=90.0)
    assert project(cam, 20.0, 10.0) is None  # azimuth 63 deg > 45
    assert project(cam, 0.0, -5.0) is None


def test_u_monotone_in_x():
    cam = CameraModel()
    xs = np.linspace(-10.0, 10.0, 41)
    us = [project(cam, float(x), 12.0)[0][0] for x in xs]
    assert all(b > a for a, b in zip(us, us[1:]))


def test_azimuth_round_trip_within_1e9():
    cam = CameraModel(fov_deg=110.0)
    rng = np.random.default_rng(11)
    half = math.radians(55.0)
    for _ in range(200):
        azimuth = rng.uniform(-half, half)
        y = rng.uniform(5.0, 40.0)
        x = y * math.tan(azimuth)
        (u, _), _ = project(cam, x, y)
        assert abs(azimuth_from_u(cam, u) - azimuth) < 1e-9


def test_box_shrinks_with_range():
    cam = CameraModel()
    cfgsize = (4.8, 1.9)
    (_, _), (w_near, h_near) = project(cam, 0.0, 10.0, cfgsize)
    (_, _), (w_far, h_far) = project(cam, 0.0, 20.0, cfgsize)
    assert w_near == pytest.approx(2.0 * w_far, rel=1e-12)
    assert h_near == pytest.approx(2.0 * h_far, rel=1e-12)


def test_ground_truth_single_vehicle():
    cfg = small_config(vehicle_count_range=(1, 1))
    world = spawn_world(cfg, np.random.default_rng(7))
    frame = ground_truth_frame(world, CameraModel(), cfg)
    assert len(frame.objects) == 1
    assert frame.objects[0].is_user


def test_ground_truth_excludes_out_of_fov_distractors():
    cfg = small_config(vehicle_count_range=(3, 3), camera_fov_deg=40.0, road_extent=30.0)
    rng = np.random.default_rng(8)
    # Force a layout: user near boresight, one distractor far off-axis.
    from beamid.scene import VehicleState, WorldSnapshot

    world = WorldSnapshot(
        t=0,
        vehicles=(
            VehicleState(id=0, x=0.0, y=12.0, speed=10.0, is_user=True),
            VehicleState(id=1, x=14.0, y=12.0, speed=10.0, is_user=False),  # 49 deg
            VehicleState(id=2, x=-1.0, y=16.0, speed=10.0, is_user=False),
        ),
    )
    frame = ground_truth_frame(world, CameraModel(fov_deg=40.0), cfg)
    assert [o.id for o in frame.objects] == [0, 2]


def test_ground_truth_ids_unique_and_sorted():
    cfg = default_scenario(seed=9)
    world = spawn_world(cfg, np.random.default_rng(9))
    frame = ground_truth_frame(world, CameraModel(), cfg)
    ids = [o.id for o in frame.objects]
    assert ids == sorted(ids)
    assert len(ids) == len(set(ids))
