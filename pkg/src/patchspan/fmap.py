"""Feature-map values and the on-disk formats they travel in.

A feature map is the 2D channel-sum of a conv activation volume: non-negative,
finite, at least 1x1. On disk it is an NPY v1.0 file holding a little-endian
float32 C-order 2D array; datasets are described by a JSONL manifest whose
``map_path`` entries are resolved relative to the manifest file.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, ManifestError

SPLITS = ("train", "val", "test")

# Total negative values clamped to zero by load_feature_map since import.
_clamp_total = 0


def clamp_count() -> int:
    """Number of negative cells zeroed by load_feature_map in this process."""
    return _clamp_total


@dataclass(frozen=True)
class FeatureMap:
    """Validated 2D activation map; values float64, finite, >= 0."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError(f"feature map must be 2D, got shape {v.shape}")
        if v.shape[0] < 1 or v.shape[1] < 1:
            raise ValueError(f"feature map dimensions must be >= 1, got {v.shape}")
        if not np.isfinite(v).all():
            raise ValueError("feature map contains non-finite values")
        if (v < 0).any():
            raise ValueError("feature map contains negative values")
        object.__setattr__(self, "values", v)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class SampleRecord:
    """One manifest line: a map file plus its labeling metadata."""

    map_path: str
    label: int
    split: str
    effective: bool | None = None
    patch_count: int | None = None

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label!r}")
        if self.split not in SPLITS:
            raise ValueError(f"split must be one of {SPLITS}, got {self.split!r}")
        if self.effective is not None and self.label != 1:
            raise ValueError("effective is only meaningful for attacked samples (label=1)")
        if self.patch_count is not None:
            if self.label == 1 and self.patch_count < 1:
                raise ValueError("patch_count must be >= 1 for attacked samples")
            if self.label == 0 and self.patch_count != 0:
                raise ValueError("patch_count must be 0 or absent for clean samples")


def load_feature_map(path: str | Path) -> FeatureMap:
    """Read an NPY v1.0 feature-map file, clamping negatives to zero.

    Raises FormatError naming the first property that deviates from the
    format contract (magic, version, dtype, order, dimensionality, payload).
    """
    global _clamp_total
    path = Path(path)
    with open(path, "rb") as f:
        try:
            version = np.lib.format.read_magic(f)
        except ValueError as e:
            raise FormatError(f"{path}: not an NPY file (bad magic): {e}") from e
        if version != (1, 0):
            raise FormatError(f"{path}: unsupported NPY version {version}, expected (1, 0)")
        try:
            shape, fortran_order, dtype = np.lib.format.read_array_header_1_0(f)
        except ValueError as e:
            raise FormatError(f"{path}: malformed NPY header: {e}") from e
        if dtype != np.dtype("<f4"):
            raise FormatError(f"{path}: dtype must be little-endian float32, got {dtype}")
        if fortran_order:
            raise FormatError(f"{path}: array must be C-order, not Fortran-order")
        if len(shape) != 2:
            raise FormatError(f"{path}: array must be 2D, got shape {shape}")
        if shape[0] < 1 or shape[1] < 1:
            raise FormatError(f"{path}: both dimensions must be >= 1, got {shape}")
        count = shape[0] * shape[1]
        payload = f.read(4 * count)
        if len(payload) < 4 * count:
            raise FormatError(
                f"{path}: truncated payload, expected {4 * count} bytes, got {len(payload)}"
            )
        if f.read(1):
            raise FormatError(f"{path}: trailing bytes after array payload")
    raw = np.frombuffer(payload, dtype="<f4").reshape(shape).astype(np.float64)
    if not np.isfinite(raw).all():
        raise FormatError(f"{path}: payload contains non-finite values")
    negatives = int((raw < 0).sum())
    if negatives:
        _clamp_total += negatives
        warnings.warn(
            f"{path}: clamped {negatives} negative cells to zero", RuntimeWarning, stacklevel=2
        )
        raw = np.maximum(raw, 0.0)
    return FeatureMap(raw)


def save_feature_map(path: str | Path, fmap: FeatureMap) -> None:
    """Write the map as NPY v1.0, little-endian float32, C-order."""
    arr = np.ascontiguousarray(fmap.values, dtype="<f4")
    with open(path, "wb") as f:
        np.lib.format.write_array(f, arr, version=(1, 0))


_MANIFEST_KEYS = {"map_path", "label", "split", "effective", "patch_count"}


def load_manifest(path: str | Path) -> list[SampleRecord]:
    """Parse a JSONL manifest; errors carry the offending 1-based line number."""
    records = []
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise ManifestError(line_no, f"invalid JSON: {e}") from e
            if not isinstance(obj, dict):
                raise ManifestError(line_no, f"expected an object, got {type(obj).__name__}")
            unknown = set(obj) - _MANIFEST_KEYS
            if unknown:
                raise ManifestError(line_no, f"unknown keys {sorted(unknown)}")
            for key in ("map_path", "label", "split"):
                if key not in obj:
                    raise ManifestError(line_no, f"missing required key {key!r}")
            if not isinstance(obj["map_path"], str):
                raise ManifestError(line_no, "map_path must be a string")
            if not isinstance(obj["label"], int) or isinstance(obj["label"], bool):
                raise ManifestError(line_no, "label must be an integer")
            if "effective" in obj and not isinstance(obj["effective"], bool):
                raise ManifestError(line_no, "effective must be a boolean")
            if "patch_count" in obj and (
                not isinstance(obj["patch_count"], int) or isinstance(obj["patch_count"], bool)
            ):
                raise ManifestError(line_no, "patch_count must be an integer")
            try:
                records.append(
                    SampleRecord(
                        map_path=obj["map_path"],
                        label=obj["label"],
                        split=obj["split"] if isinstance(obj["split"], str) else obj["split"],
                        effective=obj.get("effective"),
                        patch_count=obj.get("patch_count"),
                    )
                )
            except ValueError as e:
                raise ManifestError(line_no, str(e)) from e
    return records


def save_manifest(path: str | Path, records: list[SampleRecord]) -> None:
    """Write records as JSONL, omitting unset optional fields."""
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            obj: dict = {"map_path": rec.map_path, "label": rec.label, "split": rec.split}
            if rec.effective is not None:
                obj["effective"] = rec.effective
            if rec.patch_count is not None:
                obj["patch_count"] = rec.patch_count
            f.write(json.dumps(obj) + "\n")


def resolve_map_path(manifest_path: str | Path, record: SampleRecord) -> Path:
    """map_path entries are relative to the manifest's directory."""
    p = Path(record.map_path)
    return p if p.is_absolute() else Path(manifest_path).parent / p
