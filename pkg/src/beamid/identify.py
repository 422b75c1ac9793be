"""User selection among detections, cross-frame tracking, and majority voting.

A frame's decision picks the detection nearest to the power-predicted center.
Across a sequence, detections get persistent track ids from greedy Euclidean
matching, each frame votes for a track, and the modal track wins.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .detect import RelevantObjectMatrix
from .errors import NoCandidatesError

GATE_RADIUS_DEFAULT = 0.15


def select_nearest(matrix: RelevantObjectMatrix | np.ndarray, b_hat: tuple[float, float]) -> int:
    """Row whose center is Euclidean-nearest to b_hat; ties pick the lowest row."""
    b = matrix.b if isinstance(matrix, RelevantObjectMatrix) else np.asarray(matrix)
    if b.shape[0] == 0:
        raise NoCandidatesError("no detected objects to select from")
    d2 = np.sum((b - np.asarray(b_hat)) ** 2, axis=1)
    return int(np.argmin(d2))


def associate(
    prev_centers: np.ndarray,
    prev_ids: list[int],
    next_centers: np.ndarray,
    next_fresh_id: int,
    gate_radius: float = GATE_RADIUS_DEFAULT,
) -> tuple[list[int], int]:
    """Propagate track ids from one frame's detections to the next.

    Greedy global matching: repeatedly link the closest unmatched pair until
    a side runs out or the closest remaining pair exceeds the gate.  Leftover
    detections get fresh ids; leftover tracks retire with no gap tolerance.
    """
    n_prev = len(prev_centers)
    n_next = len(next_centers)
    ids: list[int | None] = [None] * n_next
    if n_prev and n_next:
        prev = np.asarray(prev_centers, dtype=float)
        nxt = np.asarray(next_centers, dtype=float)
        dist = np.sqrt(((prev[:, None, :] - nxt[None, :, :]) ** 2).sum(axis=2))
        used_prev: set[int] = set()
        used_next: set[int] = set()
        for _ in range(min(n_prev, n_next)):
            best = None
            for i in range(n_prev):
                if i in used_prev:
                    continue
                for j in range(n_next):
                    if j in used_next:
                        continue
                    if best is None or dist[i, j] < best[0]:
                        best = (dist[i, j], i, j)
            if best is None or best[0] > gate_radius:
                break
            _, i, j = best
            used_prev.add(i)
            used_next.add(j)
            ids[j] = prev_ids[i]
    for j in range(n_next):
        if ids[j] is None:
            ids[j] = next_fresh_id
            next_fresh_id += 1
    return list(ids), next_fresh_id  # type: ignore[arg-type]


@dataclass
class TrackAssignment:
    """Per-frame track ids aligned with each frame's detection order."""

    frame_ids: list[list[int]] = field(default_factory=list)
    next_fresh_id: int = 0


def track_sequence(
    frame_centers: list[np.ndarray],
    gate_radius: float = GATE_RADIUS_DEFAULT,
) -> TrackAssignment:
    """Run the association over consecutive frames of detection centers."""
    assignment = TrackAssignment()
    prev_centers: np.ndarray | None = None
    prev_ids: list[int] = []
    for centers in frame_centers:
        centers = np.asarray(centers, dtype=float).reshape(-1, 2)
        if prev_centers is None:
            ids = list(range(len(centers)))
            assignment.next_fresh_id = len(centers)
        else:
            ids, assignment.next_fresh_id = associate(
                prev_centers, prev_ids, centers, assignment.next_fresh_id, gate_radius
            )
        assignment.frame_ids.append(ids)
        prev_centers = centers
        prev_ids = ids
    return assignment


@dataclass(frozen=True)
class FrameVote:
    frame: int
    track_id: int
    center: tuple[float, float]
    detection_index: int
    predicted: tuple[float, float]


@dataclass(frozen=True)
class SequenceDecision:
    track_id: int
    center: tuple[float, float]
    frame: int  # frame offset the returned center came from
    detection_index: int
    votes: tuple[FrameVote, ...]


def identify_frame(
    centers: np.ndarray,
    predicted: tuple[float, float],
    frame: int,
    track_ids: list[int],
) -> FrameVote | None:
    """Vote for the track of the detection nearest the predicted center.

    A frame with zero detections abstains (returns None).
    """
    centers = np.asarray(centers, dtype=float).reshape(-1, 2)
    if centers.shape[0] == 0:
        return None
    row = select_nearest(centers, predicted)
    return FrameVote(
        frame=frame,
        track_id=track_ids[row],
        center=(float(centers[row, 0]), float(centers[row, 1])),
        detection_index=row,
        predicted=predicted,
    )


def modal_track(votes: list[FrameVote]) -> int:
    """Most-voted track id; ties go to the id voted in the most recent frame."""
    counts: dict[int, int] = {}
    last_frame: dict[int, int] = {}
    for vote in votes:
        counts[vote.track_id] = counts.get(vote.track_id, 0) + 1
        last_frame[vote.track_id] = vote.frame
    best = max(counts.values())
    tied = [tid for tid, c in counts.items() if c == best]
    return max(tied, key=lambda tid: last_frame[tid])


def identify_sequence(
    frame_centers: list[np.ndarray],
    frame_predictions: list[tuple[float, float]],
    gate_radius: float = GATE_RADIUS_DEFAULT,
) -> SequenceDecision:
    """Associate, vote per frame, and return the modal track's decision.

    The returned center is the winning track's detection at the final frame,
    falling back to its most recent detection when absent there.  Raises
    NoCandidatesError when every frame abstained.
    """
    assignment = track_sequence(frame_centers, gate_radius)
    votes: list[FrameVote] = []
    for frame, (centers, predicted) in enumerate(zip(frame_centers, frame_predictions)):
        vote = identify_frame(centers, predicted, frame, assignment.frame_ids[frame])
        if vote is not None:
            votes.append(vote)
    if not votes:
        raise NoCandidatesError("every frame in the sequence abstained")
    winner = modal_track(votes)
    for frame in range(len(frame_centers) - 1, -1, -1):
        ids = assignment.frame_ids[frame]
        if winner in ids:
            row = ids.index(winner)
            centers = np.asarray(frame_centers[frame], dtype=float).reshape(-1, 2)
            return SequenceDecision(
                track_id=winner,
                center=(float(centers[row, 0]), float(centers[row, 1])),
                frame=frame,
                detection_index=row,
                votes=tuple(votes),
            )
    raise NoCandidatesError("winning track has no detection in any frame")
