"""Adversarial patch detection from shallow CNN feature maps.

Pipeline: binarize a channel-summed activation map at a span of relative
thresholds, cluster each binary map's active cells, summarize clusters into
per-threshold feature curves, and score the curves with a small 1D conv net.
"""

from .adnet import (
    ADConfig,
    ADModel,
    TrainConfig,
    forward,
    grad_check,
    init_model,
    load_model,
    save_model,
    train,
    train_occ,
)
from .ensemble import BinaryMap, ThresholdSet, binarize, binarize_ensemble, make_equidistant_thresholds
from .errors import ConfigError, FormatError, GenerationError, PatchSpanError
from .featurize import CHANNELS, FeatureCurves, curves, featurize_sample, preprocess, select_channels
from .fmap import FeatureMap, SampleRecord, load_feature_map, load_manifest, resolve_map_path, save_feature_map, save_manifest
from .gridclust import ClusterAssignment, ClusterParams, ClusterStats, cluster_stats, dbscan
from .metrics import (
    BenchResult,
    DetectionMetrics,
    RocCurve,
    ScoredSample,
    bench_pipeline,
    best_threshold,
    detection_metrics,
    roc_curve,
)
from .synthgen import SynthConfig, gen_corpus, gen_map

__version__ = "0.1.0"

__all__ = [
    "ADConfig",
    "ADModel",
    "BenchResult",
    "BinaryMap",
    "CHANNELS",
    "ClusterAssignment",
    "ClusterParams",
    "ClusterStats",
    "ConfigError",
    "DetectionMetrics",
    "FeatureCurves",
    "FeatureMap",
    "FormatError",
    "GenerationError",
    "PatchSpanError",
    "RocCurve",
    "SampleRecord",
    "ScoredSample",
    "SynthConfig",
    "ThresholdSet",
    "TrainConfig",
    "bench_pipeline",
    "best_threshold",
    "binarize",
    "binarize_ensemble",
    "cluster_stats",
    "curves",
    "dbscan",
    "detection_metrics",
    "featurize_sample",
    "forward",
    "gen_corpus",
    "gen_map",
    "grad_check",
    "init_model",
    "load_feature_map",
    "load_manifest",
    "load_model",
    "make_equidistant_thresholds",
    "preprocess",
    "resolve_map_path",
    "roc_curve",
    "save_feature_map",
    "save_manifest",
    "save_model",
    "select_channels",
    "train",
    "train_occ",
]
