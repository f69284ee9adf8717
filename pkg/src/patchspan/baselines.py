"""Occlusion-probing baseline detectors against pluggable inference oracles.

Two detectors that need no pretrained artifacts:

* Window probing: binarize the feature map, slide an n_w x n_w window, and
  re-query the oracle with each sufficiently dense window occluded; any
  non-equivalent answer flags an attack.
* Half-masking consensus: compare detections under 2*(k_x + k_y) half-image
  masks against the unmasked boxes via intersection-over-area; the score is
  1 - alpha where alpha is the worst per-mask consistency.

Oracles abstract the victim model: `query(input_id, mask)` returns an
inference (a class label or a box list), `equivalent(reference, candidate)`
supplies the task's output-consistency rule.
"""
from __future__ import annotations

import json
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError
from .fmap import FeatureMap


@dataclass(frozen=True)
class Box:
    """Axis-aligned box in pixel units with positive area."""

    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise ValueError(f"box must have positive area, got {self}")

    @property
    def area(self) -> float:
        return (self.x1 - self.x0) * (self.y1 - self.y0)


def _intersection_area(a: Box, b: Box) -> float:
    w = min(a.x1, b.x1) - max(a.x0, b.x0)
    h = min(a.y1, b.y1) - max(a.y0, b.y0)
    return w * h if w > 0 and h > 0 else 0.0


def ioa(b: Box, r: Box) -> float:
    """Intersection area over the area of the first (masked-detection) box."""
    return _intersection_area(b, r) / b.area


def iou(a: Box, b: Box) -> float:
    inter = _intersection_area(a, b)
    return inter / (a.area + b.area - inter)


def labels_equivalent(reference, candidate) -> bool:
    """Classification outputs are consistent iff the labels are equal."""
    return reference == candidate


def boxes_equivalent(reference, candidate) -> bool:
    """Detection outputs are consistent iff every reference box is matched
    by some candidate box with IoU above 0.5."""
    return all(any(iou(ref, c) > 0.5 for c in candidate) for ref in reference)


class InferenceOracle(ABC):
    """Deterministic victim-model stand-in; mask=None means unmasked."""

    @abstractmethod
    def query(self, input_id: str, mask):
        ...

    @abstractmethod
    def equivalent(self, reference, candidate) -> bool:
        ...


class ClassificationOracle(InferenceOracle):
    """Outputs are class labels."""

    def equivalent(self, reference, candidate) -> bool:
        return labels_equivalent(reference, candidate)


class DetectionOracle(InferenceOracle):
    """Outputs are box lists."""

    def equivalent(self, reference, candidate) -> bool:
        return boxes_equivalent(reference, candidate)


def _mask_key(mask) -> str | None:
    if mask is None:
        return None
    if isinstance(mask, str):
        return mask
    return ",".join(str(int(v)) for v in mask)


class StubOracle(InferenceOracle):
    """In-memory stub mapping (input_id, mask key) -> recorded inference."""

    def __init__(self, table: dict, task: str = "classification"):
        if task not in ("classification", "detection"):
            raise ValueError(f"task must be classification or detection, got {task!r}")
        self._table = table
        self.task = task
        self.queries = 0

    def query(self, input_id: str, mask):
        self.queries += 1
        key = (input_id, _mask_key(mask))
        if key not in self._table:
            raise LookupError(f"stub oracle has no record for input={key[0]!r} mask={key[1]!r}")
        return self._table[key]

    def equivalent(self, reference, candidate) -> bool:
        if self.task == "detection":
            return boxes_equivalent(reference, candidate)
        return labels_equivalent(reference, candidate)


def load_stub_oracle(path: str | Path, task: str = "classification") -> StubOracle:
    """Line-record stub file: one JSON object per line.

    {"input_id": ..., "mask": null | "r,c,n", "label": int}          (classification)
    {"input_id": ..., "mask": ..., "boxes": [[x0,y0,x1,y1], ...]}    (detection)
    """
    table: dict = {}
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise FormatError(f"{path}: line {line_no}: invalid JSON: {e}") from e
            if "input_id" not in obj or "mask" not in obj:
                raise FormatError(f"{path}: line {line_no}: needs input_id and mask")
            if task == "classification":
                if "label" not in obj:
                    raise FormatError(f"{path}: line {line_no}: needs a label")
                value = obj["label"]
            else:
                if "boxes" not in obj:
                    raise FormatError(f"{path}: line {line_no}: needs boxes")
                value = [Box(*b) for b in obj["boxes"]]
            table[(obj["input_id"], obj["mask"])] = value
    return StubOracle(table, task=task)


@dataclass(frozen=True)
class ThemisParams:
    """Binarization level, window density threshold, and window side."""

    beta: float
    theta: float
    window: int

    def __post_init__(self):
        if not (0.0 <= self.beta <= 1.0):
            raise ValueError(f"beta must lie in [0, 1], got {self.beta}")
        if not (0.0 <= self.theta <= 1.0):
            raise ValueError(f"theta must lie in [0, 1], got {self.theta}")
        if self.window < 1:
            raise ValueError(f"window must be >= 1, got {self.window}")


def themis_candidates(fmap: FeatureMap, params: ThemisParams) -> list[tuple[int, int]]:
    """Window top-left positions whose ones-count >= theta * n_w^2, row-major."""
    n = params.window
    if n > min(fmap.rows, fmap.cols):
        raise ValueError(
            f"window {n} exceeds map dimensions {fmap.rows}x{fmap.cols}"
        )
    peak = float(fmap.values.max())
    # A silent map has no important cells; a relative cut at peak 0 would
    # mark everything.
    if peak > 0.0:
        bits = (fmap.values >= params.beta * peak).astype(np.int64)
    else:
        bits = np.zeros(fmap.values.shape, dtype=np.int64)
    sums = np.lib.stride_tricks.sliding_window_view(bits, (n, n)).sum(axis=(2, 3))
    need = params.theta * n * n
    rs, cs = np.nonzero(sums >= need)
    return [(int(r), int(c)) for r, c in zip(rs, cs)]  # nonzero is row-major


@dataclass(frozen=True)
class ThemisResult:
    verdict: str  # "attack" or "clean"
    trigger: tuple[int, int] | None  # window whose occlusion changed the output
    queries: int


def themis_detect(
    input_id: str, fmap: FeatureMap, params: ThemisParams, oracle: InferenceOracle
) -> ThemisResult:
    """Occlude each candidate window; attack iff some occlusion changes the output.

    With no candidates the verdict is clean without querying the oracle.
    """
    candidates = themis_candidates(fmap, params)
    if not candidates:
        return ThemisResult("clean", None, 0)
    reference = oracle.query(input_id, None)
    queries = 1
    for r, c in candidates:
        out = oracle.query(input_id, (r, c, params.window))
        queries += 1
        if not oracle.equivalent(reference, out):
            return ThemisResult("attack", (r, c), queries)
    return ThemisResult("clean", None, queries)


@dataclass(frozen=True)
class HalfMask:
    """One side of a splitting line; occludes rows (axis h) or cols (axis v)."""

    axis: str  # "h": horizontal line splitting rows; "v": vertical, cols
    line: int  # 1-based line index
    side: str  # "low": [0, offset) occluded; "high": [offset, extent)
    start: int
    stop: int

    @property
    def mask_id(self) -> str:
        return f"{self.axis}{self.line}:{self.side}"


def half_masks(width: int, height: int, k_x: int, k_y: int) -> list[HalfMask]:
    """2*(k_x+k_y) half-image masks; line i of k sits at round(i*extent/(k+1))."""
    if k_x < 0 or k_y < 0:
        raise ValueError("k_x and k_y must be >= 0")
    masks = []
    for i in range(1, k_x + 1):
        off = round(i * height / (k_x + 1))
        masks.append(HalfMask("h", i, "low", 0, off))
        masks.append(HalfMask("h", i, "high", off, height))
    for i in range(1, k_y + 1):
        off = round(i * width / (k_y + 1))
        masks.append(HalfMask("v", i, "low", 0, off))
        masks.append(HalfMask("v", i, "high", off, width))
    return masks


@dataclass(frozen=True)
class ObjectSeekerResult:
    """score = 1 - alpha; empty masked sets are skipped and listed."""

    score: float
    empty_masks: tuple[str, ...]
    no_originals: bool = False


def objectseeker_score(
    original_boxes, masked_detections, k_x: int, k_y: int
) -> ObjectSeekerResult:
    """Worst-case consistency of masked detections against the originals.

    masked_detections: list of (mask id, list of Box), one entry per half
    mask.  For each masked box the best IoA against any original is taken;
    alpha is the minimum over boxes and masked sets; the score is 1 - alpha.
    """
    masked_detections = list(masked_detections)
    expected = 2 * (k_x + k_y)
    if len(masked_detections) != expected:
        raise ValueError(
            f"expected {expected} masked detection sets for k_x={k_x}, k_y={k_y}, "
            f"got {len(masked_detections)}"
        )
    original_boxes = list(original_boxes)
    empty = tuple(str(mid) for mid, boxes in masked_detections if not list(boxes))
    if not original_boxes:
        return ObjectSeekerResult(score=0.0, empty_masks=empty, no_originals=True)
    alpha = 1.0
    for _, boxes in masked_detections:
        for q in boxes:
            alpha = min(alpha, max(ioa(q, r) for r in original_boxes))
    return ObjectSeekerResult(score=1.0 - alpha, empty_masks=empty)
