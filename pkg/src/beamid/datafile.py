"""JSON Lines dataset persistence, run manifests, and the label firewall.

A dataset file is one header record followed by one record per frame.  The
``detections`` section of a frame carries only what a detector would emit
(center and confidence); every ground-truth field lives under ``labels``,
including the per-detection gt-id alignment used for scoring.  Floats are
serialized with Python's shortest round-trip repr, so write -> read -> write
is byte-identical.
"""
from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .channel import ArrayConfig, NoiseConfig, PowerVector
from .detect import Detection, DetectorConfig
from .errors import DataError
from .scene import CameraModel, GroundTruthFrame, GroundTruthObject, ScenarioConfig
from .simulate import FrameRecord, SimConfig

DATASET_FORMAT = "beamid-dataset-v1"
MANIFEST_NAME = "manifest.json"


def _dumps(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def atomic_write_text(path: str | Path, text: str) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def sha256_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def header_doc(sim: SimConfig, n_frames: int, seed: int) -> dict:
    return {
        "kind": "header",
        "format": DATASET_FORMAT,
        "scenario": sim.tag,
        "frames": n_frames,
        "seed": seed,
        "q": sim.beams,
        "m": sim.array.m,
        "fingerprint": sim.fingerprint(),
        "scenario_config": asdict(sim.scenario),
        "camera_config": asdict(sim.camera),
        "array_config": asdict(sim.array),
        "noise_config": asdict(sim.noise),
        "detector_config": asdict(sim.detector),
    }


def frame_doc(rec: FrameRecord) -> dict:
    user = rec.gt.user()
    return {
        "t": rec.t,
        "power": [float(x) for x in rec.power.p],
        "detections": [
            {"u": d.u, "v": d.v, "conf": d.confidence} for d in rec.detections
        ],
        "labels": {
            "user_gt_id": user.id,
            "user_center": [user.center[0], user.center[1]],
            "user_world_position": [rec.user_world[0], rec.user_world[1]],
            "detection_gt_ids": [d.gt_id for d in rec.detections],
            "objects": [
                {
                    "gt_id": o.id,
                    "u": o.center[0],
                    "v": o.center[1],
                    "range": o.range_m,
                    "azimuth": o.azimuth,
                    "is_user": o.is_user,
                }
                for o in rec.gt.objects
            ],
        },
    }


def write_dataset(path: str | Path, sim: SimConfig, records: list[FrameRecord], seed: int) -> None:
    lines = [_dumps(header_doc(sim, len(records), seed))]
    lines.extend(_dumps(frame_doc(rec)) for rec in records)
    atomic_write_text(path, "\n".join(lines) + "\n")


def _parse_lines(path: str | Path) -> tuple[dict, list[dict]]:
    rows: list[dict] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}: line {lineno} is not valid JSON: {exc}") from None
    if not rows:
        raise DataError(f"{path}: empty dataset")
    header, frames = rows[0], rows[1:]
    if header.get("kind") != "header":
        raise DataError(f"{path}: first record must be the header")
    if header.get("format") != DATASET_FORMAT:
        raise DataError(f"{path}: unrecognized format {header.get('format')!r}")
    return header, frames


def validate_records(header: dict, frames: list[dict], path: str = "dataset") -> None:
    """Structural invariants: t strictly increasing, power width, clean detections."""
    q = header.get("q")
    last_t = None
    for row in frames:
        if "labels" not in row:
            raise DataError(f"{path}: frame t={row.get('t')} lacks labels")
        t = row.get("t")
        if last_t is not None and t <= last_t:
            raise DataError(f"{path}: frame indices not strictly increasing at t={t}")
        last_t = t
        if len(row.get("power", [])) != q:
            raise DataError(
                f"{path}: t={t} has {len(row.get('power', []))} powers, header says {q}"
            )
        for det in row.get("detections", []):
            if set(det) != {"u", "v", "conf"}:
                raise DataError(
                    f"{path}: t={t} detection fields {sorted(det)} leak beyond u/v/conf"
                )
            if not (0.0 <= det["u"] <= 1.0 and 0.0 <= det["v"] <= 1.0):
                raise DataError(f"{path}: t={t} detection center outside [0,1]^2")
        labels = row["labels"]
        if len(labels.get("detection_gt_ids", [])) != len(row.get("detections", [])):
            raise DataError(f"{path}: t={t} gt-id alignment length mismatch")
        if sum(1 for o in labels.get("objects", []) if o.get("is_user")) != 1:
            raise DataError(f"{path}: t={t} must label exactly one user object")


def read_dataset(path: str | Path) -> tuple[dict, list[FrameRecord]]:
    """Load and validate a dataset back into frame records.

    Ground-truth boxes are not persisted (nothing downstream reads them), so
    reconstructed objects carry zero-size boxes.
    """
    header, frames = _parse_lines(path)
    validate_records(header, frames, str(path))
    records: list[FrameRecord] = []
    for row in frames:
        labels = row["labels"]
        objects = tuple(
            GroundTruthObject(
                id=o["gt_id"],
                center=(o["u"], o["v"]),
                box=(0.0, 0.0),
                range_m=o["range"],
                azimuth=o["azimuth"],
                is_user=o["is_user"],
            )
            for o in labels["objects"]
        )
        detections = tuple(
            Detection(u=d["u"], v=d["v"], confidence=d["conf"], gt_id=gt_id)
            for d, gt_id in zip(row["detections"], labels["detection_gt_ids"])
        )
        records.append(
            FrameRecord(
                t=row["t"],
                gt=GroundTruthFrame(t=row["t"], objects=objects),
                detections=detections,
                power=PowerVector(p=np.array(row["power"], dtype=float), t=row["t"]),
                user_world=tuple(labels["user_world_position"]),
            )
        )
    return header, records


def load_model_view(path: str | Path) -> tuple[dict, list[dict]]:
    """The pipeline-visible view: frame index, power, and bare detections.

    No key reachable from the returned records carries ground truth.
    """
    header, frames = _parse_lines(path)
    view = [
        {
            "t": row["t"],
            "power": row["power"],
            "detections": [dict(d) for d in row.get("detections", [])],
        }
        for row in frames
    ]
    return header, view


def _tuplify(doc: dict) -> dict:
    return {k: tuple(v) if isinstance(v, list) else v for k, v in doc.items()}


def sim_config_from_header(header: dict) -> SimConfig:
    return SimConfig(
        scenario=ScenarioConfig(**_tuplify(header["scenario_config"])),
        camera=CameraModel(**header["camera_config"]),
        array=ArrayConfig(**header["array_config"]),
        noise=NoiseConfig(**header["noise_config"]),
        detector=DetectorConfig(**_tuplify(header["detector_config"])),
        beams=header["q"],
        tag=header["scenario"],
    )


def build_manifest(
    command: list[str],
    resolved_config: dict,
    seeds: dict,
    inputs: list[str | Path],
    outputs: list[str | Path],
) -> dict:
    return {
        "kind": "run-manifest",
        "command": command,
        "resolved_config": resolved_config,
        "seeds": seeds,
        "started_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "inputs": {str(p): sha256_file(p) for p in inputs},
        "outputs": {str(p): sha256_file(p) for p in outputs},
    }


def write_manifest(directory: str | Path, manifest: dict) -> Path:
    path = Path(directory) / MANIFEST_NAME
    atomic_write_text(path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def verify_manifest(path: str | Path) -> list[str]:
    """Return a list of hash mismatches; empty means the manifest validates."""
    with open(path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    problems: list[str] = []
    for section in ("inputs", "outputs"):
        for file_path, expected in manifest.get(section, {}).items():
            if not os.path.exists(file_path):
                problems.append(f"missing {section[:-1]}: {file_path}")
            elif sha256_file(file_path) != expected:
                problems.append(f"hash mismatch for {file_path}")
    return problems
