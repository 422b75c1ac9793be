"""Parametric detector stand-in: ground-truth geometry to noisy detections.

Miss probability, center jitter, false positives, and an occlusion sweep
replace a learned vision model.  The pipeline downstream consumes only the
detected centers; gt_id rides along strictly for evaluation.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError
from .scene import GroundTruthFrame

CONF_RANGE_DEFAULT = (0.5, 1.0)


@dataclass(frozen=True)
class DetectorConfig:
    p_miss: float = 0.05
    sigma_det: float = 0.01
    fp_rate: float = 0.1
    occlusion_iou: float = 0.4
    conf_range: tuple[float, float] = CONF_RANGE_DEFAULT

    def __post_init__(self) -> None:
        if not 0.0 <= self.p_miss <= 1.0:
            raise ConfigError(f"p_miss must be in [0, 1], got {self.p_miss}")
        if self.sigma_det < 0.0:
            raise ConfigError(f"sigma_det must be >= 0, got {self.sigma_det}")
        if self.fp_rate < 0.0:
            raise ConfigError(f"fp_rate must be >= 0, got {self.fp_rate}")
        if not 0.0 <= self.occlusion_iou <= 1.0:
            raise ConfigError(f"occlusion_iou must be in [0, 1], got {self.occlusion_iou}")
        lo, hi = self.conf_range
        if not 0.0 < lo <= hi <= 1.0:
            raise ConfigError(f"bad confidence range {self.conf_range}")


@dataclass(frozen=True)
class Detection:
    u: float
    v: float
    confidence: float
    gt_id: int | None = None  # evaluation-only; None marks a false positive

    @property
    def center(self) -> tuple[float, float]:
        return (self.u, self.v)


@dataclass(frozen=True)
class RelevantObjectMatrix:
    """N x 2 matrix of normalized detected-object centers, row order preserved."""

    b: np.ndarray

    @property
    def n(self) -> int:
        return self.b.shape[0]


def box_iou(
    c1: tuple[float, float],
    s1: tuple[float, float],
    c2: tuple[float, float],
    s2: tuple[float, float],
) -> float:
    """Intersection over union of two axis-aligned center/size boxes."""
    x_overlap = min(c1[0] + s1[0] / 2, c2[0] + s2[0] / 2) - max(c1[0] - s1[0] / 2, c2[0] - s2[0] / 2)
    y_overlap = min(c1[1] + s1[1] / 2, c2[1] + s2[1] / 2) - max(c1[1] - s1[1] / 2, c2[1] - s2[1] / 2)
    if x_overlap <= 0.0 or y_overlap <= 0.0:
        return 0.0
    inter = x_overlap * y_overlap
    union = s1[0] * s1[1] + s2[0] * s2[1] - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def occlusion_filter(frame: GroundTruthFrame, iou_threshold: float) -> GroundTruthFrame:
    """Drop the farther object of every overlapping pair, nearest first.

    Objects are swept in increasing range order; one is dropped when its box
    overlaps an already-kept box beyond the threshold.  Idempotent.
    """
    kept: list = []
    for obj in sorted(frame.objects, key=lambda o: o.range_m):
        if any(box_iou(obj.center, obj.box, k.center, k.box) > iou_threshold for k in kept):
            continue
        kept.append(obj)
    kept_ids = {obj.id for obj in kept}
    return replace(frame, objects=tuple(o for o in frame.objects if o.id in kept_ids))


def synth_detect(
    frame: GroundTruthFrame,
    cfg: DetectorConfig,
    rng: np.random.Generator,
) -> list[Detection]:
    """Noisy detections for one frame.

    Occlusion is applied first; each surviving object is then emitted with
    probability 1 - p_miss, its center jittered and clamped to the image.
    Poisson(fp_rate) false positives land uniformly in [0, 1]^2.
    """
    visible = occlusion_filter(frame, cfg.occlusion_iou)
    detections: list[Detection] = []
    for obj in visible.objects:
        # One fixed draw triple per object keeps the stream aligned across
        # detector settings, so e.g. raising p_miss only flips miss outcomes.
        missed = rng.random() < cfg.p_miss
        du, dv = rng.normal(0.0, cfg.sigma_det, 2)
        conf = float(rng.uniform(*cfg.conf_range))
        if missed:
            continue
        u = min(1.0, max(0.0, obj.center[0] + du))
        v = min(1.0, max(0.0, obj.center[1] + dv))
        detections.append(Detection(u=u, v=v, confidence=conf, gt_id=obj.id))
    for _ in range(int(rng.poisson(cfg.fp_rate))):
        u, v = rng.uniform(0.0, 1.0, 2)
        conf = float(rng.uniform(*cfg.conf_range))
        detections.append(Detection(u=float(u), v=float(v), confidence=conf, gt_id=None))
    return detections


def build_relevant_object_matrix(detections: list[Detection]) -> RelevantObjectMatrix:
    """Stack detection centers into an N x 2 matrix, order preserved."""
    if not detections:
        return RelevantObjectMatrix(b=np.empty((0, 2)))
    return RelevantObjectMatrix(b=np.array([[d.u, d.v] for d in detections]))
