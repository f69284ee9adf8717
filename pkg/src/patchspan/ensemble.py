"""Threshold ensembles: binarize a map at a span of relative thresholds.

Each threshold beta keeps the cells whose value is >= beta * max(M).  Because
the cut level scales with the map's own maximum, binarization is invariant to
positive rescaling of the map, and maps for increasing beta are nested.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fmap import FeatureMap


@dataclass(frozen=True)
class ThresholdSet:
    """Strictly increasing thresholds in [0, 1]."""

    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.values) == 0:
            raise ValueError("threshold set must be non-empty")
        vals = tuple(float(v) for v in self.values)
        for v in vals:
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"thresholds must lie in [0, 1], got {v}")
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise ValueError("thresholds must be strictly increasing")
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return len(self.values)

    def __iter__(self):
        return iter(self.values)


@dataclass(frozen=True)
class BinaryMap:
    """Boolean activation mask, same shape as the source map."""

    bits: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.bits)
        if b.dtype != np.bool_ or b.ndim != 2:
            raise ValueError("bits must be a 2D boolean array")
        object.__setattr__(self, "bits", b)

    @property
    def rows(self) -> int:
        return self.bits.shape[0]

    @property
    def cols(self) -> int:
        return self.bits.shape[1]


def make_equidistant_thresholds(count: int) -> ThresholdSet:
    """The default span {b/count : b = 0..count-1}; count=20 gives 0,0.05,...,0.95."""
    if count < 1:
        raise ValueError(f"threshold count must be >= 1, got {count}")
    return ThresholdSet(tuple(b / count for b in range(count)))


def binarize(fmap: FeatureMap, beta: float) -> BinaryMap:
    """Cells with value >= beta * max(M).  beta=0 keeps every cell."""
    if not (0.0 <= beta <= 1.0):
        raise ValueError(f"beta must lie in [0, 1], got {beta}")
    cut = beta * float(fmap.values.max())
    return BinaryMap(fmap.values >= cut)


def binarize_ensemble(fmap: FeatureMap, thresholds: ThresholdSet) -> list[BinaryMap]:
    """One binary map per threshold, in threshold order (nested decreasing)."""
    peak = float(fmap.values.max())
    return [BinaryMap(fmap.values >= beta * peak) for beta in thresholds]
