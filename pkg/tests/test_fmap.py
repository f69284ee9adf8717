import json
import struct

import numpy as np
import pytest

from patchspan import fmap
from patchspan.errors import FormatError, ManifestError
from patchspan.fmap import (
    FeatureMap,
    SampleRecord,
    load_feature_map,
    load_manifest,
    resolve_map_path,
    save_feature_map,
    save_manifest,
)


def test_feature_map_validation():
    with pytest.raises(ValueError):
        FeatureMap(np.zeros(4))  # 1D
    with pytest.raises(ValueError):
        FeatureMap(np.zeros((0, 3)))
    with pytest.raises(ValueError):
        FeatureMap(np.array([[0.0, np.nan]]))
    with pytest.raises(ValueError):
        FeatureMap(np.array([[-1.0, 2.0]]))
    m = FeatureMap(np.array([[0, 2], [4, 4]], dtype=np.float32))
    assert m.values.dtype == np.float64
    assert (m.rows, m.cols) == (2, 2)


def test_npy_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    m = FeatureMap(rng.random((7, 5)).astype(np.float32))
    p = tmp_path / "m.npy"
    save_feature_map(p, m)
    back = load_feature_map(p)
    assert (back.values == m.values).all()
    # and the file itself is a loadable plain NPY
    ref = np.load(p)
    assert ref.dtype == np.dtype("<f4")
    assert (ref.astype(np.float64) == m.values).all()


def test_load_rejects_bad_magic(tmp_path):
    p = tmp_path / "bad.npy"
    p.write_bytes(b"NOTNPY\x01\x00" + b"\x00" * 64)
    with pytest.raises(FormatError, match="magic"):
        load_feature_map(p)


def test_load_rejects_wrong_version(tmp_path):
    p = tmp_path / "v2.npy"
    with open(p, "wb") as f:
        np.lib.format.write_array(f, np.zeros((2, 2), dtype="<f4"), version=(2, 0))
    with pytest.raises(FormatError, match="version"):
        load_feature_map(p)


def test_load_rejects_wrong_dtype(tmp_path):
    p = tmp_path / "f8.npy"
    np.save(p, np.zeros((2, 2), dtype="<f8"))
    with pytest.raises(FormatError, match="float32"):
        load_feature_map(p)


def test_load_rejects_fortran_order(tmp_path):
    p = tmp_path / "f.npy"
    np.save(p, np.asfortranarray(np.arange(6, dtype="<f4").reshape(2, 3)))
    with pytest.raises(FormatError, match="C-order"):
        load_feature_map(p)


def test_load_rejects_wrong_ndim(tmp_path):
    p = tmp_path / "d3.npy"
    np.save(p, np.zeros((2, 2, 2), dtype="<f4"))
    with pytest.raises(FormatError, match="2D"):
        load_feature_map(p)


def test_load_rejects_truncation_and_trailing(tmp_path):
    good = tmp_path / "good.npy"
    np.save(good, np.ones((4, 4), dtype="<f4"))
    blob = good.read_bytes()
    cut = tmp_path / "cut.npy"
    cut.write_bytes(blob[:-8])
    with pytest.raises(FormatError, match="truncated"):
        load_feature_map(cut)
    fat = tmp_path / "fat.npy"
    fat.write_bytes(blob + b"x")
    with pytest.raises(FormatError, match="trailing"):
        load_feature_map(fat)


def test_load_rejects_nan_payload(tmp_path):
    p = tmp_path / "nan.npy"
    arr = np.ones((2, 2), dtype="<f4")
    arr[0, 0] = np.nan
    with open(p, "wb") as f:
        np.lib.format.write_array(f, arr, version=(1, 0))
    with pytest.raises(FormatError, match="non-finite"):
        load_feature_map(p)


def test_load_clamps_negatives_and_counts(tmp_path):
    p = tmp_path / "neg.npy"
    arr = np.array([[1.0, -2.0], [-0.5, 3.0]], dtype="<f4")
    with open(p, "wb") as f:
        np.lib.format.write_array(f, arr, version=(1, 0))
    before = fmap.clamp_count()
    with pytest.warns(RuntimeWarning, match="clamped 2"):
        m = load_feature_map(p)
    assert fmap.clamp_count() == before + 2
    assert (m.values == np.array([[1.0, 0.0], [0.0, 3.0]])).all()


def test_sample_record_validation():
    SampleRecord("a.npy", 1, "train", effective=True, patch_count=2)
    SampleRecord("a.npy", 0, "test")
    with pytest.raises(ValueError):
        SampleRecord("a.npy", 2, "train")
    with pytest.raises(ValueError):
        SampleRecord("a.npy", 0, "dev")
    with pytest.raises(ValueError):
        SampleRecord("a.npy", 0, "train", effective=True)
    with pytest.raises(ValueError):
        SampleRecord("a.npy", 1, "train", patch_count=0)


def test_manifest_roundtrip(tmp_path):
    recs = [
        SampleRecord("maps/c0.npy", 0, "train"),
        SampleRecord("maps/a0.npy", 1, "test", effective=True, patch_count=2),
        SampleRecord("maps/a1.npy", 1, "val", effective=False),
    ]
    p = tmp_path / "manifest.jsonl"
    save_manifest(p, recs)
    assert load_manifest(p) == recs
    # optional keys are omitted, not null
    lines = [json.loads(l) for l in p.read_text().splitlines()]
    assert "effective" not in lines[0] and "patch_count" not in lines[0]


@pytest.mark.parametrize(
    "line,err",
    [
        ("not json", "invalid JSON"),
        ('["a"]', "expected an object"),
        ('{"label": 0, "split": "train"}', "map_path"),
        ('{"map_path": "m.npy", "label": 3, "split": "train"}', "label"),
        ('{"map_path": "m.npy", "label": 0, "split": "dev"}', "split"),
        ('{"map_path": "m.npy", "label": 0, "split": "train", "extra": 1}', "unknown keys"),
        ('{"map_path": "m.npy", "label": 0, "split": "train", "effective": true}', "effective"),
        ('{"map_path": "m.npy", "label": true, "split": "train"}', "label"),
    ],
)
def test_manifest_parse_errors_carry_line_number(tmp_path, line, err):
    p = tmp_path / "m.jsonl"
    p.write_text('{"map_path": "ok.npy", "label": 0, "split": "train"}\n' + line + "\n")
    with pytest.raises(ManifestError, match="line 2") as exc_info:
        load_manifest(p)
    assert err in str(exc_info.value)


def test_resolve_map_path(tmp_path):
    rec = SampleRecord("maps/x.npy", 0, "train")
    assert resolve_map_path(tmp_path / "m.jsonl", rec) == tmp_path / "maps" / "x.npy"
    abs_rec = SampleRecord("/abs/x.npy", 0, "train")
    assert str(resolve_map_path(tmp_path / "m.jsonl", abs_rec)) == "/abs/x.npy"
