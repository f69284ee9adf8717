"""Turn one feature map into the curve matrix the detector consumes.

For every threshold in the span, the binarized map is clustered and reduced
to four statistics; stacking them over thresholds yields a (4, B) matrix:

    row 0  n_clusters  cluster count
    row 1  d_mean      mean intra-cluster distance, averaged over clusters
    row 2  d_std       population std of per-cluster average distances
    row 3  n_imp       active-cell count

Rows are then min-max normalized to [-1, 1] independently (constant rows map
to 0), which removes the map's scale and size from the detector's view.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .ensemble import ThresholdSet, binarize_ensemble
from .fmap import FeatureMap
from .gridclust import ClusterParams, cluster_stats, dbscan

CHANNELS = ("n_clusters", "d_mean", "d_std", "n_imp")

# Compact channel aliases used in CSV headers and CLI flags.
SHORT_NAMES = {"n_clusters": "nclus", "d_mean": "avg", "d_std": "sd", "n_imp": "impneu"}
_BY_ALIAS = {alias: name for name, alias in SHORT_NAMES.items()}


@dataclass(frozen=True)
class FeatureCurves:
    """Per-threshold statistics matrix; one row per channel, one column per beta."""

    channels: np.ndarray
    thresholds: ThresholdSet
    channel_names: tuple[str, ...]
    preprocessed: bool = False

    def __post_init__(self):
        arr = np.asarray(self.channels, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError(f"curves must be 2D, got shape {arr.shape}")
        if arr.shape[0] != len(self.channel_names):
            raise ValueError(
                f"{arr.shape[0]} rows but {len(self.channel_names)} channel names"
            )
        if arr.shape[1] != len(self.thresholds):
            raise ValueError(
                f"{arr.shape[1]} columns but {len(self.thresholds)} thresholds"
            )
        if not np.isfinite(arr).all():
            raise ValueError("curves contain non-finite values")
        if self.preprocessed and (arr.min() < -1.0 or arr.max() > 1.0):
            raise ValueError("preprocessed curves must lie in [-1, 1]")
        object.__setattr__(self, "channels", arr)


def normalize_channel_names(names) -> tuple[str, ...]:
    """Resolve long or short channel names into canonical order."""
    resolved = []
    for raw in names:
        name = _BY_ALIAS.get(raw, raw)
        if name not in CHANNELS:
            raise ValueError(f"unknown channel {raw!r}; choose from {CHANNELS + tuple(_BY_ALIAS)}")
        if name in resolved:
            raise ValueError(f"duplicate channel {raw!r}")
        resolved.append(name)
    if not resolved:
        raise ValueError("channel mask must keep at least one channel")
    return tuple(sorted(resolved, key=CHANNELS.index))


def curves(
    fmap: FeatureMap,
    thresholds: ThresholdSet,
    params: ClusterParams = ClusterParams(),
) -> FeatureCurves:
    """Raw (4, B) statistics matrix over the threshold span."""
    cols = [cluster_stats(dbscan(bm, params)) for bm in binarize_ensemble(fmap, thresholds)]
    mat = np.array(
        [
            [s.n_clusters for s in cols],
            [s.d_mean for s in cols],
            [s.d_std for s in cols],
            [s.n_imp for s in cols],
        ],
        dtype=np.float64,
    )
    return FeatureCurves(mat, thresholds, CHANNELS, preprocessed=False)


def minmax_rows(mat: np.ndarray) -> np.ndarray:
    """Row-wise min-max to [-1, 1]; constant rows become all-zero."""
    mat = np.asarray(mat, dtype=np.float64)
    lo = mat.min(axis=1, keepdims=True)
    hi = mat.max(axis=1, keepdims=True)
    span = hi - lo
    out = np.zeros_like(mat)
    nz = span[:, 0] > 0
    out[nz] = 2.0 * (mat[nz] - lo[nz]) / span[nz] - 1.0
    return out


def preprocess(fc: FeatureCurves) -> FeatureCurves:
    """Min-max normalize each channel row independently."""
    return replace(fc, channels=minmax_rows(fc.channels), preprocessed=True)


def select_channels(fc: FeatureCurves, names) -> FeatureCurves:
    """Keep a subset of channels (canonical order), dropping the rest."""
    keep = normalize_channel_names(names)
    idx = [fc.channel_names.index(n) for n in keep]
    return replace(fc, channels=fc.channels[idx], channel_names=keep)


def featurize_sample(
    fmap: FeatureMap,
    thresholds: ThresholdSet,
    params: ClusterParams = ClusterParams(),
    channels: tuple[str, ...] | None = None,
) -> FeatureCurves:
    """curves -> optional channel mask -> preprocess, ready for the detector."""
    fc = curves(fmap, thresholds, params)
    if channels is not None:
        fc = select_channels(fc, channels)
    return preprocess(fc)
