"""Dataset windowing, splitting, metrics, and the experiment grid.

Sliding windows are cut per pass (a maximal run of frames sharing one user
id), split 70/30 into contiguous blocks so no test window shares a frame
with a training window, and scored by whether the selected detection is the
ground-truth user.  The grid runner trains one predictor per (scenario,
training fraction) and evaluates every requested sequence length on a
window set aligned across lengths for paired comparison.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, NoCandidatesError
from .identify import GATE_RADIUS_DEFAULT, identify_sequence, track_sequence
from .predictor import CenterPredictor, GridSpec, TrainConfig, train
from .seeds import stream_rng
from .simulate import FrameRecord, SimConfig, generate_frames

LOW_CONFIDENCE_OBJECT_COUNT = 4  # strata above this are reported but flagged


@dataclass(frozen=True)
class EpisodeDataset:
    """One pass: contiguous frames sharing a single ground-truth user id."""

    scenario: str
    frames: tuple[FrameRecord, ...]
    fingerprint: str = ""

    def __post_init__(self) -> None:
        ids = {f.gt.user().id for f in self.frames}
        if len(ids) > 1:
            raise DataError(f"episode mixes user ids {sorted(ids)}")


def split_into_episodes(
    records: list[FrameRecord], scenario: str, fingerprint: str = ""
) -> list[EpisodeDataset]:
    """Cut a frame stream at every change of the labeled user id."""
    episodes: list[EpisodeDataset] = []
    chunk: list[FrameRecord] = []
    current: int | None = None
    for rec in records:
        uid = rec.gt.user().id
        if current is not None and uid != current:
            episodes.append(EpisodeDataset(scenario, tuple(chunk), fingerprint))
            chunk = []
        chunk.append(rec)
        current = uid
    if chunk:
        episodes.append(EpisodeDataset(scenario, tuple(chunk), fingerprint))
    return episodes


@dataclass(frozen=True)
class SequenceSample:
    """r consecutive (detections, power) frames plus final-frame labels.

    The identification pipeline sees only ``frame_centers`` and
    ``frame_powers``; everything else is evaluation bookkeeping.
    """

    episode_index: int
    tau: int  # absolute frame index of the final frame
    frame_ts: tuple[int, ...]
    frame_centers: tuple[np.ndarray, ...]  # (n_t, 2) per frame
    frame_powers: tuple[np.ndarray, ...]
    det_gt_ids: tuple[tuple[int | None, ...], ...]
    label_gt_id: int
    label_center: tuple[float, float]
    user_positions: tuple[tuple[float, float], ...]
    gt_count_at_tau: int

    @property
    def r(self) -> int:
        return len(self.frame_ts)


def _frame_view(rec: FrameRecord) -> tuple[np.ndarray, np.ndarray, tuple[int | None, ...]]:
    centers = np.array([[d.u, d.v] for d in rec.detections]).reshape(-1, 2)
    return centers, rec.power.p, tuple(d.gt_id for d in rec.detections)


def sliding_windows(episode: EpisodeDataset, r: int, episode_index: int = 0) -> list[SequenceSample]:
    """One sample per final-frame position, stride 1: T - r + 1 windows."""
    if r < 1:
        raise ConfigError(f"window length must be >= 1, got {r}")
    frames = episode.frames
    if len(frames) < r:
        raise DataError(f"episode has {len(frames)} frames, shorter than window {r}")
    samples: list[SequenceSample] = []
    views = [_frame_view(rec) for rec in frames]
    for end in range(r - 1, len(frames)):
        window = range(end - r + 1, end + 1)
        last = frames[end]
        user = last.gt.user()
        samples.append(
            SequenceSample(
                episode_index=episode_index,
                tau=last.t,
                frame_ts=tuple(frames[i].t for i in window),
                frame_centers=tuple(views[i][0] for i in window),
                frame_powers=tuple(views[i][1] for i in window),
                det_gt_ids=tuple(views[i][2] for i in window),
                label_gt_id=user.id,
                label_center=user.center,
                user_positions=tuple(frames[i].user_world for i in window),
                gt_count_at_tau=len(last.gt.objects),
            )
        )
    return samples


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.7
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError(f"train fraction must be in (0, 1), got {self.train_fraction}")


def split(
    samples: list[SequenceSample], spec: SplitSpec
) -> tuple[list[SequenceSample], list[SequenceSample]]:
    """Deterministic 70/30 split with no frame shared across the boundary.

    Windows are assigned pass by pass: a seeded permutation orders the
    passes, whole passes fill the training side until its quota of
    round(train_fraction * N) windows, the pass straddling the quota is cut
    in window order, and the rest is test.  Test windows that still share a
    frame with a training window (possible only inside the cut pass) are
    dropped to prevent leakage through the sliding-window overlap.
    """
    if not samples:
        raise DataError("cannot split an empty sample list")
    per_episode: dict[int, list[SequenceSample]] = {}
    for s in samples:
        per_episode.setdefault(s.episode_index, []).append(s)
    for group in per_episode.values():
        group.sort(key=lambda s: s.tau)
    episodes = sorted(per_episode)

    rng = stream_rng(spec.seed, "split")
    order = [episodes[i] for i in rng.permutation(len(episodes))]

    total_train = round(spec.train_fraction * len(samples))
    train_side: list[SequenceSample] = []
    test_side: list[SequenceSample] = []
    filled = 0
    for e in order:
        group = per_episode[e]
        take = min(len(group), total_train - filled)
        train_side.extend(group[:take])
        test_side.extend(group[take:])
        filled += take

    train_frames = {(s.episode_index, t) for s in train_side for t in s.frame_ts}
    pruned = [
        s
        for s in test_side
        if all((s.episode_index, t) not in train_frames for t in s.frame_ts)
    ]
    return train_side, pruned


def top1_accuracy(selected_gt_ids: list[int | None], label_gt_ids: list[int]) -> float:
    """Mean indicator of selected == label; abstentions (None) count as wrong."""
    if len(selected_gt_ids) != len(label_gt_ids):
        raise DataError(
            f"{len(selected_gt_ids)} predictions vs {len(label_gt_ids)} labels"
        )
    if not label_gt_ids:
        raise DataError("accuracy over zero samples is undefined")
    hits = sum(1 for s, l in zip(selected_gt_ids, label_gt_ids) if s == l)
    return hits / len(label_gt_ids)


def user_track_consistent(sample: SequenceSample, gate_radius: float = GATE_RADIUS_DEFAULT) -> bool:
    """True when the user's detections carry one track id wherever detected.

    A sequence in which the user was never detected cannot establish an
    association and counts as inconsistent.
    """
    assignment = track_sequence(list(sample.frame_centers), gate_radius)
    ids: list[int] = []
    for frame, gt_ids in enumerate(sample.det_gt_ids):
        for det_index, gt_id in enumerate(gt_ids):
            if gt_id == sample.label_gt_id:
                ids.append(assignment.frame_ids[frame][det_index])
    if not ids:
        return False
    return all(i == ids[0] for i in ids)


def association_accuracy(
    samples: list[SequenceSample], gate_radius: float = GATE_RADIUS_DEFAULT
) -> float:
    """Fraction of sequences whose user kept a single persistent track id."""
    if not samples:
        raise DataError("association accuracy over zero sequences is undefined")
    if any(s.r < 2 for s in samples):
        raise DataError("association accuracy needs sequences of length >= 2")
    good = sum(1 for s in samples if user_track_consistent(s, gate_radius))
    return good / len(samples)


@dataclass(frozen=True)
class SpeedBuckets:
    thresholds: tuple[float, float]  # (slow upper bound, fast lower bound)
    labels: tuple[str, ...]  # per-sample bucket names
    accuracy: dict[str, float]
    counts: dict[str, int]


def sequence_speed(sample: SequenceSample) -> float:
    """Displacement between first and last user positions over the window, / r."""
    (x0, y0), (x1, y1) = sample.user_positions[0], sample.user_positions[-1]
    return math.hypot(x1 - x0, y1 - y0) / sample.r


def speed_buckets(samples: list[SequenceSample], correct: list[bool]) -> SpeedBuckets:
    """Stratify r=5 sequences into slow / average / fast by window speed.

    Boundaries are inclusive toward the extremes (<= mean - std/2 is slow,
    >= mean + std/2 is fast); with zero spread the slow rule wins.
    """
    if len(samples) != len(correct):
        raise DataError("one correctness flag per sequence is required")
    if len(samples) < 2:
        raise DataError("speed buckets need at least 2 sequences")
    if any(s.r != 5 for s in samples):
        raise DataError("speed buckets are defined for r=5 sequences")
    speeds = np.array([sequence_speed(s) for s in samples])
    mu = float(np.mean(speeds))
    sigma = float(np.std(speeds))
    slow_max = mu - sigma / 2.0
    fast_min = mu + sigma / 2.0
    labels = []
    for v in speeds:
        if v <= slow_max:
            labels.append("slow")
        elif v >= fast_min:
            labels.append("fast")
        else:
            labels.append("average")
    accuracy: dict[str, float] = {}
    counts: dict[str, int] = {}
    for bucket in ("slow", "average", "fast"):
        idx = [i for i, b in enumerate(labels) if b == bucket]
        counts[bucket] = len(idx)
        accuracy[bucket] = (
            sum(1 for i in idx if correct[i]) / len(idx) if idx else float("nan")
        )
    return SpeedBuckets(
        thresholds=(slow_max, fast_min),
        labels=tuple(labels),
        accuracy=accuracy,
        counts=counts,
    )


@dataclass
class SampleResult:
    sample: SequenceSample
    selected_gt_id: int | None
    abstained: bool
    correct: bool
    dump: dict


def evaluate_samples(
    samples: list[SequenceSample],
    predictor: CenterPredictor,
    gate_radius: float = GATE_RADIUS_DEFAULT,
) -> list[SampleResult]:
    """Run the identification pipeline over samples and score each decision.

    The pipeline consumes only detection centers and power vectors; ground
    truth joins in afterwards through the per-detection label alignment.
    """
    results: list[SampleResult] = []
    for sample in samples:
        predictions = [
            predictor.predict_center(p) for p in sample.frame_powers
        ]
        dump: dict = {
            "episode": sample.episode_index,
            "tau": sample.tau,
            "r": sample.r,
            "label_gt_id": sample.label_gt_id,
        }
        try:
            decision = identify_sequence(
                list(sample.frame_centers), predictions, gate_radius
            )
        except NoCandidatesError:
            dump.update(
                {"abstained": True, "votes": [], "selected_gt_id": None, "correct": False}
            )
            results.append(
                SampleResult(sample, selected_gt_id=None, abstained=True, correct=False, dump=dump)
            )
            continue
        selected = sample.det_gt_ids[decision.frame][decision.detection_index]
        correct = selected == sample.label_gt_id
        dump.update(
            {
                "abstained": False,
                "votes": [
                    {
                        "frame": v.frame,
                        "track_id": v.track_id,
                        "center": list(v.center),
                        "predicted": list(v.predicted),
                        "distance": math.hypot(
                            v.center[0] - v.predicted[0], v.center[1] - v.predicted[1]
                        ),
                    }
                    for v in decision.votes
                ],
                "chosen_track": decision.track_id,
                "chosen_center": list(decision.center),
                "selected_gt_id": selected,
                "correct": correct,
            }
        )
        results.append(
            SampleResult(sample, selected_gt_id=selected, abstained=False, correct=correct, dump=dump)
        )
    return results


@dataclass
class MetricsReport:
    scenario_train: str
    scenario_test: str
    train_fraction: float
    grid: tuple[int, int]
    seed: int
    top1: dict[int, float] = field(default_factory=dict)  # by sequence length
    by_object_count: dict[int, dict[int, float]] = field(default_factory=dict)
    association: dict[int, float] = field(default_factory=dict)
    speed: SpeedBuckets | None = None
    object_counts: dict[int, dict[int, int]] = field(default_factory=dict)
    train_samples: int = 0
    test_samples: int = 0

    def to_dict(self) -> dict:
        doc = {
            "scenario_train": self.scenario_train,
            "scenario_test": self.scenario_test,
            "train_fraction": self.train_fraction,
            "grid": list(self.grid),
            "seed": self.seed,
            "train_samples": self.train_samples,
            "test_samples": self.test_samples,
            "top1": {str(r): v for r, v in self.top1.items()},
            "association": {str(r): v for r, v in self.association.items()},
            "by_object_count": {
                str(r): {
                    str(n): {
                        "accuracy": acc,
                        "count": self.object_counts[r][n],
                        "low_confidence": n > LOW_CONFIDENCE_OBJECT_COUNT,
                    }
                    for n, acc in strata.items()
                }
                for r, strata in self.by_object_count.items()
            },
        }
        if self.speed is not None:
            doc["speed"] = {
                "thresholds": list(self.speed.thresholds),
                "accuracy": self.speed.accuracy,
                "counts": self.speed.counts,
            }
        return doc

    def csv_rows(self) -> list[dict]:
        base = {
            "scenario_train": self.scenario_train,
            "scenario_test": self.scenario_test,
            "train_fraction": self.train_fraction,
        }
        rows = []
        for r, acc in sorted(self.top1.items()):
            rows.append({**base, "r": r, "stratum": "overall", "value": acc, "count": self.test_samples})
        for r, acc in sorted(self.association.items()):
            rows.append({**base, "r": r, "stratum": "association", "value": acc, "count": self.test_samples})
        for r, strata in sorted(self.by_object_count.items()):
            for n, acc in sorted(strata.items()):
                rows.append(
                    {
                        **base,
                        "r": r,
                        "stratum": f"objects={n}",
                        "value": acc,
                        "count": self.object_counts[r][n],
                    }
                )
        if self.speed is not None:
            for bucket in ("slow", "average", "fast"):
                rows.append(
                    {
                        **base,
                        "r": 5,
                        "stratum": f"speed={bucket}",
                        "value": self.speed.accuracy[bucket],
                        "count": self.speed.counts[bucket],
                    }
                )
        return rows


def paired_test_windows(
    episodes: list[EpisodeDataset],
    r_values: tuple[int, ...],
    spec: SplitSpec,
) -> tuple[list[SequenceSample], dict[int, list[SequenceSample]]]:
    """Split on single-frame windows, then align test windows across lengths.

    Returns (train r=1 windows, {r: test windows}) where every r shares the
    same final-frame positions: those test positions where the longest
    requested window fits entirely inside test frames.
    """
    if not r_values:
        raise ConfigError("at least one sequence length is required")
    r_max = max(r_values)
    base: list[SequenceSample] = []
    by_r: dict[int, dict[tuple[int, int], SequenceSample]] = {r: {} for r in r_values}
    for idx, episode in enumerate(episodes):
        if len(episode.frames) < 1:
            continue
        for r in r_values:
            if len(episode.frames) < r:
                continue
            for sample in sliding_windows(episode, r, idx):
                by_r[r][(sample.episode_index, sample.tau)] = sample
        base.extend(sliding_windows(episode, 1, idx))
    train_side, test_side = split(base, spec)
    train_frames = {(s.episode_index, t) for s in train_side for t in s.frame_ts}
    eligible: list[tuple[int, int]] = []
    for s in test_side:
        key = (s.episode_index, s.tau)
        longest = by_r[r_max].get(key) if r_max in by_r else None
        if r_max == 1:
            longest = s
        if longest is None:
            continue
        if any((key[0], t) in train_frames for t in longest.frame_ts):
            continue
        eligible.append(key)
    test_by_r = {r: [by_r[r][key] for key in eligible] for r in r_values}
    return train_side, test_by_r


def train_predictor(
    train_samples: list[SequenceSample],
    cfg: TrainConfig,
    grid: GridSpec,
    q: int,
    scenario: str = "",
) -> CenterPredictor:
    """Fit the center predictor on the final-frame labels of r=1 windows."""
    if not train_samples:
        raise DataError("empty training split")
    powers = np.array([s.frame_powers[-1] for s in train_samples])
    centers = np.array([s.label_center for s in train_samples])
    params, normalizer, _ = train(powers, centers, cfg, grid)
    return CenterPredictor(
        params=params,
        normalizer=normalizer,
        grid=grid,
        head=cfg.head,
        q=q,
        train_config=cfg,
        scenario=scenario,
    )


def build_report(
    test_by_r: dict[int, list[SequenceSample]],
    predictor: CenterPredictor,
    *,
    scenario_train: str,
    scenario_test: str,
    train_fraction: float,
    seed: int,
    train_samples: int,
    gate_radius: float = GATE_RADIUS_DEFAULT,
) -> tuple[MetricsReport, list[dict]]:
    """Evaluate every sequence length on its aligned test set."""
    report = MetricsReport(
        scenario_train=scenario_train,
        scenario_test=scenario_test,
        train_fraction=train_fraction,
        grid=(predictor.grid.gx, predictor.grid.gy),
        seed=seed,
        train_samples=train_samples,
    )
    dumps: list[dict] = []
    for r in sorted(test_by_r):
        samples = test_by_r[r]
        if not samples:
            continue
        results = evaluate_samples(samples, predictor, gate_radius)
        dumps.extend(res.dump for res in results)
        report.test_samples = len(samples)
        report.top1[r] = top1_accuracy(
            [res.selected_gt_id for res in results], [s.label_gt_id for s in samples]
        )
        strata: dict[int, list[bool]] = {}
        for s, res in zip(samples, results):
            strata.setdefault(s.gt_count_at_tau, []).append(res.correct)
        report.by_object_count[r] = {
            n: sum(flags) / len(flags) for n, flags in sorted(strata.items())
        }
        report.object_counts[r] = {n: len(flags) for n, flags in sorted(strata.items())}
        if r >= 2:
            report.association[r] = association_accuracy(samples, gate_radius)
        if r == 5 and len(samples) >= 2:
            report.speed = speed_buckets(samples, [res.correct for res in results])
    return report, dumps


@dataclass(frozen=True)
class ExperimentConfig:
    sims: dict[str, SimConfig]
    frames: int
    pairs: tuple[tuple[str, str], ...]
    r_values: tuple[int, ...] = (1, 3, 5)
    train_fractions: tuple[float, ...] = (1.0,)
    seed: int = 0
    train: TrainConfig = TrainConfig()
    grid: GridSpec = GridSpec()
    gate_radius: float = GATE_RADIUS_DEFAULT


def nested_subset(
    samples: list[SequenceSample], fraction: float, seed: int
) -> list[SequenceSample]:
    """Deterministic nested subsets: one shared shuffle, prefix per fraction."""
    if not 0.0 < fraction <= 1.0:
        raise ConfigError(f"train fraction must be in (0, 1], got {fraction}")
    rng = stream_rng(seed, "shuffle")
    order = rng.permutation(len(samples))
    keep = max(1, round(fraction * len(samples)))
    return [samples[i] for i in order[:keep]]


def run_experiment(cfg: ExperimentConfig) -> list[tuple[MetricsReport, list[dict]]]:
    """Run every (train scenario, test scenario) x train-fraction grid cell.

    Episodes are generated once per scenario from that scenario's own seed;
    predictors are trained once per (train scenario, fraction) and reused
    across test scenarios, normalizer included.
    """
    for a, b in cfg.pairs:
        for tag in (a, b):
            if tag not in cfg.sims:
                raise ConfigError(f"unknown scenario tag {tag!r}")

    episodes: dict[str, list[EpisodeDataset]] = {}
    splits: dict[str, tuple[list[SequenceSample], dict[int, list[SequenceSample]]]] = {}
    for tag in {t for pair in cfg.pairs for t in pair}:
        sim = cfg.sims[tag]
        records = generate_frames(sim, cfg.frames, sim.scenario.seed)
        episodes[tag] = split_into_episodes(records, tag, sim.fingerprint())
        splits[tag] = paired_test_windows(
            episodes[tag], cfg.r_values, SplitSpec(seed=cfg.seed)
        )

    predictors: dict[tuple[str, float], CenterPredictor] = {}
    out: list[tuple[MetricsReport, list[dict]]] = []
    for train_tag, test_tag in cfg.pairs:
        train_all, _ = splits[train_tag]
        for fraction in cfg.train_fractions:
            key = (train_tag, fraction)
            if key not in predictors:
                subset = nested_subset(train_all, fraction, cfg.seed)
                predictors[key] = train_predictor(
                    subset, cfg.train, cfg.grid, cfg.sims[train_tag].beams, train_tag
                )
            _, test_by_r = splits[test_tag]
            report, dumps = build_report(
                test_by_r,
                predictors[key],
                scenario_train=train_tag,
                scenario_test=test_tag,
                train_fraction=fraction,
                seed=cfg.seed,
                train_samples=max(1, round(fraction * len(train_all))),
                gate_radius=cfg.gate_radius,
            )
            out.append((report, dumps))
    return out
