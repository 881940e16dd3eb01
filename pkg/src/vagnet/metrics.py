"""Evaluation harness: precision/recall, average precision, time-to-accident.

All functions are pure over immutable inputs. A prediction is positive when
its score is >= the threshold. Average precision is rank-based (counts only),
so any strictly increasing transform of the scores leaves it bit-identical.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import InputError, MetricUndefinedError


@dataclass
class ScoredVideo:
    """One evaluated video: per-frame risk scores plus ground truth."""

    probs: np.ndarray
    label: int
    tau: int | None
    fps: float

    def __post_init__(self):
        arr = np.asarray(self.probs, dtype=np.float64)
        if arr.ndim != 1 or arr.size < 1:
            raise InputError("probs must be a nonempty 1-D array")
        if not ((arr >= 0) & (arr <= 1)).all():
            raise InputError("probs must lie in [0, 1]")
        self.probs = arr
        if self.label not in (0, 1):
            raise InputError(f"label must be 0 or 1; got {self.label}")
        if self.label == 1:
            if self.tau is None or not 0 <= int(self.tau) < arr.size:
                raise InputError(
                    f"positive video needs tau in [0, {arr.size}); got {self.tau}")
            self.tau = int(self.tau)
        elif self.tau is not None:
            raise InputError("negative video must not carry tau")
        if not self.fps > 0:
            raise InputError(f"fps must be > 0; got {self.fps}")


def precision_recall(scores: Sequence[float], labels: Sequence[int],
                     threshold: float) -> tuple[float, float]:
    """(P, R) at one threshold; P is 1 with no predicted positives, R is 0
    with no actual positives."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise InputError(f"scores and labels must be same-length vectors; "
                         f"got {s.shape} and {y.shape}")
    if not np.isin(y, (0, 1)).all():
        raise InputError("labels must be binary")
    pred = s >= threshold
    tp = int(np.sum(pred & (y == 1)))
    fp = int(np.sum(pred & (y == 0)))
    fn = int(np.sum(~pred & (y == 1)))
    precision = 1.0 if tp + fp == 0 else tp / (tp + fp)
    recall = 0.0 if tp + fn == 0 else tp / (tp + fn)
    return precision, recall


def average_precision(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Step integration of the PR curve over distinct descending thresholds.

    Equal scores collapse into one threshold. Undefined (raises) without at
    least one positive sample.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1 or s.size == 0:
        raise InputError(f"scores and labels must be same-length nonempty "
                         f"vectors; got {s.shape} and {y.shape}")
    if not np.isin(y, (0, 1)).all():
        raise InputError("labels must be binary")
    n_pos = int(np.sum(y == 1))
    if n_pos == 0:
        raise MetricUndefinedError("average precision is undefined with no positives")
    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    y_sorted = y[order]
    tp = np.cumsum(y_sorted == 1)
    fp = np.cumsum(y_sorted == 0)
    # last index of each tie block = one PR point per distinct threshold
    block_ends = np.append(np.nonzero(np.diff(s_sorted))[0], s_sorted.size - 1)
    ap = 0.0
    r_prev = 0.0
    for i in block_ends:
        r = int(tp[i]) / n_pos
        p = int(tp[i]) / (int(tp[i]) + int(fp[i]))
        ap += (r - r_prev) * p
        r_prev = r
    return ap


def tta(video: ScoredVideo, threshold: float) -> float:
    """Seconds between the earliest crossing at or before onset and the onset.

    0.0 when no frame up to the onset crosses the threshold.
    """
    if video.label != 1:
        raise InputError("tta is defined for positive videos only")
    upto = video.probs[: video.tau + 1]
    hits = np.nonzero(upto >= threshold)[0]
    if hits.size == 0:
        return 0.0
    return (video.tau - int(hits[0])) / video.fps


def default_threshold_grid(count: int = 99) -> list[float]:
    """Evenly spaced interior thresholds; count=99 gives 0.01, 0.02, ..., 0.99."""
    if count < 1:
        raise InputError("threshold grid needs at least one point")
    return [j / (count + 1) for j in range(1, count + 1)]


def mtta(videos: Sequence[ScoredVideo], grid: Sequence[float] | None = None) -> float:
    """Mean over the threshold grid of the mean per-video TTA at each threshold."""
    if len(videos) == 0:
        raise InputError("mtta needs at least one positive video")
    for v in videos:
        if v.label != 1:
            raise InputError("mtta is defined over positive videos only")
    if grid is None:
        grid = default_threshold_grid()
    if len(grid) == 0:
        raise InputError("mtta threshold grid must be nonempty")
    total = 0.0
    for thr in grid:
        at_thr = 0.0
        for v in videos:
            at_thr += tta(v, thr)
        total += at_thr / len(videos)
    return total / len(grid)


@dataclass
class EvalReport:
    """AP, mTTA, the per-threshold TTA table, and the sample counts behind them."""

    ap: float
    mtta: float
    per_threshold_tta: list[tuple[float, float]]
    counts: dict[str, int]
    video_ttas: list[list[float]]

    def to_json(self) -> str:
        doc = {
            "ap": self.ap,
            "mtta": self.mtta,
            "per_threshold_tta": [[t, v] for t, v in self.per_threshold_tta],
            "counts": dict(sorted(self.counts.items())),
            "video_ttas": self.video_ttas,
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def write(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        doc = json.loads(text)
        return cls(ap=doc["ap"], mtta=doc["mtta"],
                   per_threshold_tta=[(t, v) for t, v in doc["per_threshold_tta"]],
                   counts=doc["counts"], video_ttas=doc["video_ttas"])


def evaluate(videos: Sequence[ScoredVideo],
             grid: Sequence[float] | None = None) -> EvalReport:
    """Frame-pooled AP plus mTTA over the positive videos."""
    if grid is None:
        grid = default_threshold_grid()
    positives = [v for v in videos if v.label == 1]
    negatives = [v for v in videos if v.label == 0]
    if not positives or not negatives:
        raise InputError("evaluate needs at least one positive and one negative video")
    scores = np.concatenate([v.probs for v in videos])
    labels = np.concatenate([np.full(v.probs.size, v.label) for v in videos])
    ap = average_precision(scores, labels)
    video_ttas = [[tta(v, thr) for thr in grid] for v in positives]
    per_thr = [(float(thr),
                sum(video_ttas[i][k] for i in range(len(positives))) / len(positives))
               for k, thr in enumerate(grid)]
    counts = {
        "frames": int(scores.size),
        "positive_frames": int(np.sum(labels == 1)),
        "negative_frames": int(np.sum(labels == 0)),
        "videos": len(videos),
        "positive_videos": len(positives),
        "negative_videos": len(negatives),
    }
    return EvalReport(ap=ap, mtta=mtta(positives, grid),
                      per_threshold_tta=per_thr, counts=counts,
                      video_ttas=video_ttas)
