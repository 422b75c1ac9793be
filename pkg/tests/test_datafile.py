"""Dataset serialization: round-trips, invariants, firewall, manifests."""
from __future__ import annotations

import json

import numpy as np
import pytest

from beamid import datafile
from beamid.errors import DataError
from beamid.scene import default_scenario
from beamid.simulate import default_sim_config, generate_frames


@pytest.fixture(scope="module")
def small_dataset(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "episodes.jsonl"
    sim = default_sim_config(default_scenario(seed=51), tag="small")
    records = generate_frames(sim, 60, 51)
    datafile.write_dataset(path, sim, records, 51)
    return path, sim, records


def test_header_then_frames(small_dataset):
    path, sim, records = small_dataset
    header, frames = datafile._parse_lines(path)
    assert header["kind"] == "header"
    assert header["format"] == datafile.DATASET_FORMAT
    assert header["q"] == 64
    assert header["m"] == 16
    assert len(frames) == 60


def test_write_read_write_is_byte_identical(small_dataset, tmp_path):
    path, sim, _ = small_dataset
    header, records = datafile.read_dataset(path)
    second = tmp_path / "again.jsonl"
    datafile.write_dataset(second, sim, records, header["seed"])
    assert path.read_bytes() == second.read_bytes()


def test_same_seed_regenerates_identical_bytes(small_dataset, tmp_path):
    path, sim, _ = small_dataset
    again = tmp_path / "regen.jsonl"
    datafile.write_dataset(again, sim, generate_frames(sim, 60, 51), 51)
    assert path.read_bytes() == again.read_bytes()


def test_frame_indices_strictly_increasing(small_dataset):
    path, _, _ = small_dataset
    _, frames = datafile._parse_lines(path)
    ts = [f["t"] for f in frames]
    assert ts == sorted(ts)
    assert len(set(ts)) == len(ts)


def test_model_view_carries_no_ground_truth(small_dataset):
    path, _, _ = small_dataset
    _, view = datafile.load_model_view(path)
    for row in view:
        assert set(row) == {"t", "power", "detections"}
        for det in row["detections"]:
            assert set(det) == {"u", "v", "conf"}


def test_detection_gt_alignment_matches(small_dataset):
    path, _, records = small_dataset
    _, loaded = datafile.read_dataset(path)
    for orig, back in zip(records, loaded):
        assert [d.gt_id for d in orig.detections] == [d.gt_id for d in back.detections]
        assert np.allclose(orig.power.p, back.power.p)
        assert orig.gt.user().id == back.gt.user().id


def test_validate_rejects_leaky_detections(small_dataset, tmp_path):
    path, _, _ = small_dataset
    lines = path.read_text().splitlines()
    doc = json.loads(lines[1])
    doc["detections"].append({"u": 0.5, "v": 0.5, "conf": 0.9, "gt_id": 3})
    doc["labels"]["detection_gt_ids"].append(3)
    bad = tmp_path / "leaky.jsonl"
    bad.write_text("\n".join([lines[0], json.dumps(doc)] + lines[2:]) + "\n")
    with pytest.raises(DataError, match="leak"):
        datafile.read_dataset(bad)


def test_validate_rejects_shuffled_frames(small_dataset, tmp_path):
    path, _, _ = small_dataset
    lines = path.read_text().splitlines()
    bad = tmp_path / "shuffled.jsonl"
    bad.write_text("\n".join([lines[0], lines[2], lines[1]] + lines[3:]) + "\n")
    with pytest.raises(DataError, match="increasing"):
        datafile.read_dataset(bad)


def test_manifest_validates_and_detects_tampering(small_dataset, tmp_path):
    path, _, _ = small_dataset
    copy = tmp_path / "copy.jsonl"
    copy.write_bytes(path.read_bytes())
    manifest = datafile.build_manifest(
        command=["gen-data"],
        resolved_config={},
        seeds={"master": 51},
        inputs=[],
        outputs=[copy],
    )
    mpath = datafile.write_manifest(tmp_path, manifest)
    assert datafile.verify_manifest(mpath) == []
    copy.write_text(copy.read_text() + "\n")
    problems = datafile.verify_manifest(mpath)
    assert problems and "mismatch" in problems[0]
