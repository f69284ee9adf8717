"""Deterministic synthetic corpus: diffuse clean maps vs dense localized blobs.

Clean maps are smoothed uniform noise; attacked maps additionally carry k
square high-gain blobs (the activation signature a physical patch leaves in a
shallow layer).  Every map derives from an rng stream keyed by (seed, index),
so regeneration — in any order, at any parallelism — is byte-identical.

Attacked records are written with effective=true: effectiveness is a property
of a victim model's reaction, which this generator does not simulate, so the
flag is a documented convention rather than a measurement.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.ndimage import uniform_filter

from .errors import ConfigError, GenerationError
from .fmap import FeatureMap, SampleRecord, save_feature_map, save_manifest

_SPLIT_STREAM_TAG = 982451653  # keeps split shuffling out of the map streams
_PLACEMENT_TRIES = 1000


@dataclass(frozen=True)
class SynthConfig:
    """Corpus shape and blob geometry.

    smoothness counts 3x3 box-blur applications on the background field; the
    default of 1 keeps clean maps free of suprathreshold plateaus at high
    beta (heavier blur produces spurious clean clusters).
    """

    n_clean: int
    n_attacked: int
    rows: int = 64
    cols: int = 64
    patch_counts: tuple[int, ...] = (1, 2, 4)
    blob_side_fraction: float = 0.12
    blob_gain: float = 6.0
    smoothness: int = 1
    seed: int = 0

    def __post_init__(self):
        for name in ("n_clean", "n_attacked", "rows", "cols", "smoothness"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not self.patch_counts or any(k < 1 for k in self.patch_counts):
            raise ConfigError("patch_counts must be a non-empty list of positive integers")
        if not (0.0 < self.blob_side_fraction < 0.5):
            raise ConfigError(
                f"blob_side_fraction must lie in (0, 0.5), got {self.blob_side_fraction}"
            )
        if self.blob_gain <= 0:
            raise ConfigError(f"blob_gain must be positive, got {self.blob_gain}")
        object.__setattr__(self, "patch_counts", tuple(self.patch_counts))

    @property
    def blob_side(self) -> int:
        return math.floor(self.blob_side_fraction * min(self.rows, self.cols))


def _background(config: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    field = rng.random((config.rows, config.cols))
    for _ in range(config.smoothness):
        field = uniform_filter(field, size=3, mode="nearest")
    return np.maximum(field, 0.0)


def gen_map(
    config: SynthConfig, attacked: bool, k: int, rng: np.random.Generator
) -> tuple[FeatureMap, SampleRecord]:
    """One map plus its record (map_path/split left for the corpus writer).

    Blob top-left corners keep Chebyshev distance >= 2*side from each other,
    i.e. at least one blob side of clearance, so multi-blob maps cluster into
    k distinct components.
    """
    if attacked and k < 1:
        raise ValueError(f"attacked maps need k >= 1 blobs, got {k}")
    field = _background(config, rng)
    if attacked:
        side = config.blob_side
        if side < 1:
            raise ConfigError(
                "blob_side_fraction * min(rows, cols) is below one cell"
            )
        positions: list[tuple[int, int]] = []
        tries = 0
        while len(positions) < k:
            if tries >= _PLACEMENT_TRIES:
                raise GenerationError(
                    f"could not place {k} non-overlapping blobs in "
                    f"{_PLACEMENT_TRIES} tries on a {config.rows}x{config.cols} map"
                )
            tries += 1
            r = int(rng.integers(0, config.rows - side + 1))
            c = int(rng.integers(0, config.cols - side + 1))
            if all(max(abs(r - pr), abs(c - pc)) >= 2 * side for pr, pc in positions):
                positions.append((r, c))
        peak = float(field.max())
        for r, c in positions:
            jitter = rng.uniform(0.0, 0.05, size=(side, side))
            field[r : r + side, c : c + side] = config.blob_gain * peak * (1.0 + jitter)
    # Quantize so the in-memory map equals what load_feature_map returns.
    fmap = FeatureMap(field.astype(np.float32).astype(np.float64))
    record = SampleRecord(
        map_path="",
        label=1 if attacked else 0,
        split="train",
        effective=True if attacked else None,
        patch_count=k if attacked else None,
    )
    return fmap, record


def _split_assignment(n: int, rng: np.random.Generator) -> list[str]:
    """Shuffled 60/20/20 split labels for one class."""
    n_train = round(0.6 * n)
    n_val = round(0.2 * n)
    labels = ["train"] * n_train + ["val"] * n_val + ["test"] * (n - n_train - n_val)
    perm = rng.permutation(n)
    out = [""] * n
    for slot, idx in enumerate(perm):
        out[idx] = labels[slot]
    return out


def gen_corpus(config: SynthConfig, out_dir: str | Path) -> Path:
    """Write all maps and the manifest; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    total = config.n_clean + config.n_attacked
    records: list[SampleRecord] = []
    split_rng = np.random.default_rng([config.seed, _SPLIT_STREAM_TAG])
    clean_splits = _split_assignment(config.n_clean, split_rng)
    attacked_splits = _split_assignment(config.n_attacked, split_rng)
    for i in range(total):
        attacked = i >= config.n_clean
        if attacked:
            j = i - config.n_clean
            k = config.patch_counts[j % len(config.patch_counts)]
            split = attacked_splits[j]
            name = f"atk{k}_{i:05d}.npy"
        else:
            k = 0
            split = clean_splits[i]
            name = f"clean_{i:05d}.npy"
        rng = np.random.default_rng([config.seed, i])
        fmap, rec = gen_map(config, attacked, k, rng)
        save_feature_map(out / name, fmap)
        records.append(replace(rec, map_path=name, split=split))
    manifest = out / "manifest.jsonl"
    save_manifest(manifest, records)
    return manifest
