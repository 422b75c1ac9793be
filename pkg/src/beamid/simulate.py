"""Frame generator chaining world simulation, beam sweep, and detection.

One generator call produces a continuous frame stream.  The stream is made
of passes: the world runs until the transmitting vehicle would leave the
road (or the field of view), then a fresh world spawns with new ids.  Every
emitted frame therefore contains exactly one visible user, and a change of
the labeled user id marks a pass boundary downstream.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, asdict

from .channel import ArrayConfig, NoiseConfig, PowerVector, dft_codebook, los_channel, receive_power
from .detect import Detection, DetectorConfig, synth_detect
from .errors import ConfigError
from .scene import (
    CameraModel,
    GroundTruthFrame,
    ScenarioConfig,
    WorldSnapshot,
    ground_truth_frame,
    in_fov,
    spawn_world,
    step_world,
)
from .seeds import stream_rng


@dataclass(frozen=True)
class SimConfig:
    """Everything needed to regenerate a dataset bit-for-bit."""

    scenario: ScenarioConfig
    camera: CameraModel
    array: ArrayConfig
    noise: NoiseConfig
    detector: DetectorConfig
    beams: int = 64
    tag: str = "default"

    def __post_init__(self) -> None:
        if self.beams < 1:
            raise ConfigError(f"beam count must be >= 1, got {self.beams}")

    def fingerprint(self) -> str:
        doc = {
            "scenario": asdict(self.scenario),
            "camera": asdict(self.camera),
            "array": asdict(self.array),
            "noise": asdict(self.noise),
            "detector": asdict(self.detector),
            "beams": self.beams,
            "tag": self.tag,
        }
        canon = json.dumps(doc, sort_keys=True)
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class FrameRecord:
    t: int
    gt: GroundTruthFrame
    detections: tuple[Detection, ...]
    power: PowerVector
    user_world: tuple[float, float]


def default_sim_config(scenario: ScenarioConfig, tag: str = "default", **overrides) -> SimConfig:
    kwargs = dict(
        scenario=scenario,
        camera=CameraModel(fov_deg=scenario.camera_fov_deg),
        array=ArrayConfig(fov_deg=scenario.camera_fov_deg),
        noise=NoiseConfig(),
        detector=DetectorConfig(),
        tag=tag,
    )
    kwargs.update(overrides)
    return SimConfig(**kwargs)


def generate_frames(sim: SimConfig, n_frames: int, master_seed: int) -> list[FrameRecord]:
    """Simulate n_frames of (ground truth, detections, beam-sweep power).

    World, detector, and receiver noise each draw from their own stream of
    the master seed, so changing one knob leaves the other draws untouched.
    """
    rng_world = stream_rng(master_seed, "world")
    rng_det = stream_rng(master_seed, "detector")
    rng_noise = stream_rng(master_seed, "noise")
    codebook = dft_codebook(sim.array, sim.beams)
    half_road = sim.scenario.road_extent / 2.0

    records: list[FrameRecord] = []
    world: WorldSnapshot | None = None
    next_id = 0
    for t in range(n_frames):
        if world is None:
            world = spawn_world(sim.scenario, rng_world, id_start=next_id, t=t)
        else:
            stepped = step_world(world, sim.scenario)
            user_gone = True
            for v in stepped.vehicles:
                if v.is_user and abs(v.x) <= half_road and in_fov(sim.camera, v.x, v.y):
                    user_gone = v.id != world.user().id  # wrapped users start a new pass
                    break
            if user_gone:
                world = spawn_world(sim.scenario, rng_world, id_start=next_id, t=t)
            else:
                world = WorldSnapshot(t=t, vehicles=stepped.vehicles)
        next_id = max(v.id for v in world.vehicles) + 1

        gt = ground_truth_frame(world, sim.camera, sim.scenario)
        detections = tuple(synth_detect(gt, sim.detector, rng_det))
        user = world.user()
        h = los_channel((user.x, user.y), sim.array, sim.noise, rng_noise)
        power = receive_power(h, codebook, sim.noise, rng_noise, t=t)
        records.append(
            FrameRecord(
                t=t,
                gt=gt,
                detections=detections,
                power=power,
                user_world=(user.x, user.y),
            )
        )
    return records
