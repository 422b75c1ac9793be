"""Street-world simulation and pinhole projection onto the normalized image plane.

The basestation sits at the origin with the camera boresight along +y.
Lanes run parallel to the x axis at positive y offsets and all traffic moves
in the +x direction.  Image coordinates are normalized to [0, 1]^2; no pixel
raster exists anywhere in the pipeline.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, DataError

# Boxes need a vertical extent; the fleet config only carries (length, width).
VEHICLE_HEIGHT_M = 1.6
# Vertical mapping gain: v = 0.5 + mount_height * V_GAIN / range, tuned so the
# nearest default lane lands near v = 0.75.
V_GAIN = 0.5
# Same-lane spacing floor, in multiples of vehicle length.
MIN_GAP_FACTOR = 1.5

_PLACE_ATTEMPTS = 200


@dataclass(frozen=True)
class ScenarioConfig:
    lane_count: int = 3
    lane_y_offsets: tuple[float, ...] = (12.0, 17.0, 22.0)
    road_extent: float = 34.0
    vehicle_count_range: tuple[int, int] = (1, 5)
    speed_range: tuple[float, float] = (8.0, 13.0)
    vehicle_size: tuple[float, float] = (4.8, 1.9)
    frame_rate: float = 10.0
    camera_fov_deg: float = 110.0
    seed: int = 0
    exit_policy: str = "wrap"  # or "retire"
    # Relative draw weights for each count in vehicle_count_range; None means
    # uniform.  Street traffic is sparse most of the time, so the default
    # scenarios skew toward low counts.
    count_weights: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if self.lane_count < 1:
            raise ConfigError(f"lane count must be >= 1, got {self.lane_count}")
        if len(self.lane_y_offsets) != self.lane_count:
            raise ConfigError(
                f"{self.lane_count} lanes declared but {len(self.lane_y_offsets)} offsets given"
            )
        if any(y <= 0.0 for y in self.lane_y_offsets):
            raise ConfigError("lane offsets must be in front of the camera (y > 0)")
        if self.road_extent <= 0.0:
            raise ConfigError(f"road extent must be > 0, got {self.road_extent}")
        lo, hi = self.vehicle_count_range
        if lo < 1 or hi < lo:
            raise ConfigError(f"bad vehicle count range {self.vehicle_count_range}")
        smin, smax = self.speed_range
        if smin < 0.0 or smax < smin:
            raise ConfigError(f"bad speed range {self.speed_range}")
        if self.frame_rate <= 0.0:
            raise ConfigError(f"frame rate must be > 0, got {self.frame_rate}")
        if not 0.0 < self.camera_fov_deg < 180.0:
            raise ConfigError(f"camera FOV must be in (0, 180) deg, got {self.camera_fov_deg}")
        if self.exit_policy not in ("wrap", "retire"):
            raise ConfigError(f"exit policy must be 'wrap' or 'retire', got {self.exit_policy!r}")
        if self.count_weights is not None:
            if len(self.count_weights) != hi - lo + 1:
                raise ConfigError(
                    f"count_weights needs {hi - lo + 1} entries for range {self.vehicle_count_range}"
                )
            if any(w < 0.0 for w in self.count_weights) or sum(self.count_weights) <= 0.0:
                raise ConfigError("count_weights must be nonnegative with a positive sum")


@dataclass(frozen=True)
class VehicleState:
    id: int
    x: float
    y: float
    speed: float  # m/s along the lane direction (+x)
    is_user: bool


@dataclass(frozen=True)
class WorldSnapshot:
    t: int
    vehicles: tuple[VehicleState, ...]

    def user(self) -> VehicleState:
        for v in self.vehicles:
            if v.is_user:
                return v
        raise DataError(f"snapshot t={self.t} has no user vehicle")


@dataclass(frozen=True)
class CameraModel:
    fov_deg: float = 110.0
    image_aspect: float = 16.0 / 9.0
    mount_height: float = 6.0

    def __post_init__(self) -> None:
        if not 0.0 < self.fov_deg < 180.0:
            raise ConfigError(f"camera FOV must be in (0, 180) deg, got {self.fov_deg}")
        if self.image_aspect <= 0.0:
            raise ConfigError(f"image aspect must be > 0, got {self.image_aspect}")


@dataclass(frozen=True)
class GroundTruthObject:
    id: int
    center: tuple[float, float]
    box: tuple[float, float]
    range_m: float
    azimuth: float
    is_user: bool


@dataclass(frozen=True)
class GroundTruthFrame:
    t: int
    objects: tuple[GroundTruthObject, ...]

    def user(self) -> GroundTruthObject:
        for obj in self.objects:
            if obj.is_user:
                return obj
        raise DataError(f"ground-truth frame t={self.t} has no user object")


def lane_spawn_halfspan(config: ScenarioConfig, lane_y: float) -> float:
    """Half of the x span on this lane that is both on-road and inside the FOV."""
    fov_limit = lane_y * math.tan(math.radians(config.camera_fov_deg) / 2.0)
    return min(config.road_extent / 2.0, fov_limit)


def _lane_capacity(config: ScenarioConfig, lane_y: float) -> int:
    gap = MIN_GAP_FACTOR * config.vehicle_size[0]
    return int(2.0 * lane_spawn_halfspan(config, lane_y) / gap) + 1


def spawn_world(
    config: ScenarioConfig,
    rng: np.random.Generator,
    id_start: int = 0,
    t: int = 0,
) -> WorldSnapshot:
    """Spawn a fresh world: uniform count, uniform lanes, one uniform user.

    All vehicles start inside the camera FOV.  Same-lane positions keep at
    least 1.5 vehicle lengths of separation, and every vehicle in a lane
    shares that lane's speed (drawn fresh per spawn), so in-lane spacing is
    invariant under stepping and vehicles never drive through each other.
    A config whose lanes cannot fit the requested maximum is rejected.
    """
    lo, hi = config.vehicle_count_range
    capacity = sum(_lane_capacity(config, y) for y in config.lane_y_offsets)
    if hi > capacity:
        raise ConfigError(
            f"lanes fit at most {capacity} vehicles without overlap, "
            f"but up to {hi} were requested"
        )
    if config.count_weights is None:
        count = int(rng.integers(lo, hi + 1))
    else:
        weights = np.asarray(config.count_weights, dtype=float)
        count = int(rng.choice(np.arange(lo, hi + 1), p=weights / weights.sum()))
    lane_speeds = [float(rng.uniform(*config.speed_range)) for _ in range(config.lane_count)]
    min_gap = MIN_GAP_FACTOR * config.vehicle_size[0]
    placed: list[tuple[int, float]] = []  # (lane, x)
    for _ in range(count):
        for _attempt in range(_PLACE_ATTEMPTS):
            lane = int(rng.integers(config.lane_count))
            half = lane_spawn_halfspan(config, config.lane_y_offsets[lane])
            x = float(rng.uniform(-half, half))
            if all(l != lane or abs(x - px) >= min_gap for l, px in placed):
                break
        else:
            raise ConfigError("could not place vehicles without overlap")
        placed.append((lane, x))
    user_index = int(rng.integers(count))
    vehicles = tuple(
        VehicleState(
            id=id_start + i,
            x=x,
            y=config.lane_y_offsets[lane],
            speed=lane_speeds[lane],
            is_user=(i == user_index),
        )
        for i, (lane, x) in enumerate(placed)
    )
    return WorldSnapshot(t=t, vehicles=vehicles)


def step_world(world: WorldSnapshot, config: ScenarioConfig) -> WorldSnapshot:
    """Advance every vehicle by speed / frame_rate along its lane.

    A vehicle crossing the +x road end either wraps to the opposite end with
    a fresh id (default policy) or retires.  Ids, user flags, and speeds are
    otherwise preserved.
    """
    half = config.road_extent / 2.0
    fresh = max((v.id for v in world.vehicles), default=-1) + 1
    out: list[VehicleState] = []
    for v in world.vehicles:
        x = v.x + v.speed / config.frame_rate
        if x > half:
            if config.exit_policy == "retire":
                continue
            out.append(replace(v, id=fresh, x=x - config.road_extent))
            fresh += 1
        else:
            out.append(replace(v, x=x))
    return WorldSnapshot(t=world.t + 1, vehicles=tuple(out))


def project(
    camera: CameraModel,
    x: float,
    y: float,
    size: tuple[float, float] = (0.0, 0.0),
) -> tuple[tuple[float, float], tuple[float, float]] | None:
    """Project a ground point into the normalized image plane.

    Returns (center, box) or None when the point is behind the camera or
    outside the horizontal field of view.  u follows the ideal pinhole
    tan-mapping; v decreases monotonically with range; the box shrinks
    inversely with range.
    """
    if y <= 0.0:
        return None
    azimuth = math.atan2(x, y)
    half_fov = math.radians(camera.fov_deg) / 2.0
    if abs(azimuth) > half_fov:
        return None
    tan_half = math.tan(half_fov)
    u = 0.5 + math.tan(azimuth) / (2.0 * tan_half)
    range_m = math.hypot(x, y)
    v = min(1.0, max(0.0, 0.5 + camera.mount_height * V_GAIN / range_m))
    tan_half_v = tan_half / camera.image_aspect
    w = size[0] / (2.0 * range_m * tan_half)
    h = VEHICLE_HEIGHT_M / (2.0 * range_m * tan_half_v) if size[0] > 0.0 else 0.0
    return (u, v), (w, h)


def azimuth_from_u(camera: CameraModel, u: float) -> float:
    """Invert the horizontal pinhole mapping."""
    half_fov = math.radians(camera.fov_deg) / 2.0
    return math.atan(math.tan(half_fov) * (2.0 * u - 1.0))


def in_fov(camera: CameraModel, x: float, y: float) -> bool:
    return y > 0.0 and abs(math.atan2(x, y)) <= math.radians(camera.fov_deg) / 2.0


def ground_truth_frame(
    world: WorldSnapshot,
    camera: CameraModel,
    config: ScenarioConfig,
) -> GroundTruthFrame:
    """Project every in-FOV vehicle; the user must be visible.

    Objects come out sorted by id.  A world whose user fell outside the FOV
    is rejected; the episode generator regenerates such frames.
    """
    objects: list[GroundTruthObject] = []
    for v in sorted(world.vehicles, key=lambda s: s.id):
        projected = project(camera, v.x, v.y, config.vehicle_size)
        if projected is None:
            if v.is_user:
                raise DataError(f"user left the field of view at t={world.t}")
            continue
        center, box = projected
        objects.append(
            GroundTruthObject(
                id=v.id,
                center=center,
                box=box,
                range_m=math.hypot(v.x, v.y),
                azimuth=math.atan2(v.x, v.y),
                is_user=v.is_user,
            )
        )
    frame = GroundTruthFrame(t=world.t, objects=tuple(objects))
    frame.user()  # raises if the generator let a userless frame through
    return frame


def default_scenario(seed: int = 0, **overrides) -> ScenarioConfig:
    """Three-lane street used by the benchmark suite.

    Object counts are drawn from a decreasing law (sparse traffic dominates,
    crowded frames are rare), matching how often multi-object scenes occur
    in street recordings.
    """
    base = dict(count_weights=(0.40, 0.30, 0.16, 0.09, 0.05))
    base.update(overrides)
    return ScenarioConfig(seed=seed, **base)


def two_lane_scenario(seed: int = 0, **overrides) -> ScenarioConfig:
    """Narrow two-lane street with the camera closer to the road."""
    base = dict(
        lane_count=2,
        lane_y_offsets=(10.0, 13.5),
        road_extent=26.0,
        vehicle_count_range=(1, 4),
    )
    base.update(overrides)
    return ScenarioConfig(seed=seed, **base)


def six_lane_scenario(seed: int = 0, **overrides) -> ScenarioConfig:
    """Wide six-lane boulevard spanning a larger depth range."""
    base = dict(
        lane_count=6,
        lane_y_offsets=(10.0, 13.5, 17.0, 20.5, 24.0, 27.5),
        road_extent=26.0,
        vehicle_count_range=(1, 6),
    )
    base.update(overrides)
    return ScenarioConfig(seed=seed, **base)
