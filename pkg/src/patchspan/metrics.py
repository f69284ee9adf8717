"""Evaluation: ROC/AUC, detection metrics, threshold selection, benchmarking.

Scores are detector outputs in [0, 1]; a sample is predicted attacked when
its score >= threshold.  Accuracy can be restricted to effective or
non-effective attacks, but the detection rate is always the recall over all
attacked samples and the FPR is always over clean samples.
"""
from __future__ import annotations

import statistics
import time
from dataclasses import dataclass

import numpy as np

from .adnet import ADModel, forward
from .featurize import featurize_sample
from .fmap import FeatureMap
from .gridclust import ClusterParams

FILTERS = ("all", "effective_only", "noneffective_only")


@dataclass(frozen=True)
class ScoredSample:
    """A detector score plus the labeling needed to evaluate it."""

    score: float
    label: int
    effective: bool | None = None
    patch_count: int | None = None

    def __post_init__(self):
        if not (0.0 <= self.score <= 1.0):
            raise ValueError(f"score must lie in [0, 1], got {self.score}")
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label!r}")
        if self.effective is not None and self.label != 1:
            raise ValueError("effective only applies to attacked samples")


@dataclass(frozen=True)
class RocCurve:
    """Operating points swept from strictest to loosest threshold.

    points[i] = (fpr, tpr); thresholds[i] is the score cut that produced the
    point, with +inf for the initial (0, 0) corner.  Both coordinate arrays
    are non-decreasing and the curve always ends at (1, 1).
    """

    points: tuple[tuple[float, float], ...]
    thresholds: tuple[float, ...]
    auc: float


def roc_curve(samples) -> RocCurve:
    """Sweep distinct scores as thresholds; AUC by trapezoid rule."""
    samples = list(samples)
    labels = np.array([s.label for s in samples])
    scores = np.array([s.score for s in samples])
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("roc_curve needs both classes present")

    order = np.argsort(-scores, kind="stable")
    scores_d = scores[order]
    labels_d = labels[order]
    points = [(0.0, 0.0)]
    thresholds = [float("inf")]
    tp = fp = 0
    i = 0
    n = len(samples)
    while i < n:
        cut = scores_d[i]
        while i < n and scores_d[i] == cut:
            if labels_d[i] == 1:
                tp += 1
            else:
                fp += 1
            i += 1
        points.append((fp / n_neg, tp / n_pos))
        thresholds.append(float(cut))
    xs = np.array([p[0] for p in points])
    ys = np.array([p[1] for p in points])
    auc = float(np.trapezoid(ys, xs))
    return RocCurve(points=tuple(points), thresholds=tuple(thresholds), auc=auc)


@dataclass(frozen=True)
class DetectionMetrics:
    """Confusion summary at one threshold.

    accuracy counts clean samples plus the attacked samples admitted by the
    filter; detection_rate/fpr ignore the filter by definition.  When the
    filter removes every attacked sample, clean_only is set and accuracy
    degenerates to specificity.
    """

    threshold: float
    accuracy: float
    detection_rate: float
    fpr: float
    n_clean: int
    n_attacked: int
    n_filtered_attacked: int
    clean_only: bool = False


def detection_metrics(samples, threshold: float, filter: str = "all") -> DetectionMetrics:
    """Evaluate predictions score >= threshold under an attack filter."""
    if not (0.0 <= threshold <= 1.0):
        raise ValueError(f"threshold must lie in [0, 1], got {threshold}")
    if filter not in FILTERS:
        raise ValueError(f"filter must be one of {FILTERS}, got {filter!r}")
    samples = list(samples)
    if not samples:
        raise ValueError("no samples to evaluate")

    clean = [s for s in samples if s.label == 0]
    attacked = [s for s in samples if s.label == 1]
    if filter == "all":
        kept = attacked
    elif filter == "effective_only":
        kept = [s for s in attacked if s.effective is True]
    else:
        kept = [s for s in attacked if s.effective is False]

    pred = lambda s: s.score >= threshold
    correct = sum(not pred(s) for s in clean) + sum(pred(s) for s in kept)
    denom = len(clean) + len(kept)
    if denom == 0:
        raise ValueError("filter left no samples to evaluate")
    detection_rate = (
        sum(pred(s) for s in attacked) / len(attacked) if attacked else float("nan")
    )
    fpr = sum(pred(s) for s in clean) / len(clean) if clean else float("nan")
    return DetectionMetrics(
        threshold=threshold,
        accuracy=correct / denom,
        detection_rate=detection_rate,
        fpr=fpr,
        n_clean=len(clean),
        n_attacked=len(attacked),
        n_filtered_attacked=len(kept),
        clean_only=bool(attacked) and not kept,
    )


def best_threshold(
    samples, criterion: str = "max_accuracy", filter: str = "all"
) -> tuple[float, DetectionMetrics]:
    """Maximize accuracy over candidate thresholds; returns (threshold, metrics).

    Candidates are 0, 1, and the midpoints between consecutive distinct
    scores, so the chosen cut sits between score groups rather than on one.
    Ties prefer lower FPR, then the lower threshold.
    """
    if criterion != "max_accuracy":
        raise ValueError(f"unsupported criterion {criterion!r}")
    samples = list(samples)
    if not samples:
        raise ValueError("no samples to evaluate")
    if len({s.label for s in samples}) < 2:
        raise ValueError("best_threshold needs both classes present")
    distinct = sorted({s.score for s in samples})
    candidates = [0.0]
    candidates += [(a + b) / 2 for a, b in zip(distinct, distinct[1:])]
    candidates.append(1.0)
    best = None
    for cut in candidates:
        m = detection_metrics(samples, cut, filter)
        key = (-m.accuracy, m.fpr if not np.isnan(m.fpr) else 0.0, cut)
        if best is None or key < best[0]:
            best = (key, m)
    return best[1].threshold, best[1]


@dataclass(frozen=True)
class BenchResult:
    """Per-map wall times (seconds) for featurize+score, with group medians."""

    times: tuple[float, ...]
    median: float
    q1: float
    q3: float
    group_medians: dict[int | None, float]


def bench_pipeline(
    maps,
    thresholds,
    params: ClusterParams,
    model: ADModel,
    patch_counts=None,
    channels=None,
) -> BenchResult:
    """Time featurize+forward per map after one untimed warm-up pass."""
    maps = list(maps)
    if not maps:
        raise ValueError("no maps to benchmark")
    if patch_counts is not None and len(patch_counts) != len(maps):
        raise ValueError("patch_counts must align with maps")

    def run(fmap: FeatureMap) -> float:
        fc = featurize_sample(fmap, thresholds, params, channels=channels)
        return forward(model, fc)

    run(maps[0])  # warm-up: caches, allocator, BLAS threads
    times = []
    for fmap in maps:
        t0 = time.perf_counter()
        run(fmap)
        times.append(time.perf_counter() - t0)

    med = statistics.median(times)
    qs = statistics.quantiles(times, n=4) if len(times) >= 2 else [med, med, med]
    groups: dict[int | None, float] = {}
    if patch_counts is not None:
        for pc in sorted(set(patch_counts), key=lambda v: (v is None, v)):
            sel = [t for t, g in zip(times, patch_counts) if g == pc]
            groups[pc] = statistics.median(sel)
    return BenchResult(
        times=tuple(times), median=med, q1=qs[0], q3=qs[2], group_medians=groups
    )
