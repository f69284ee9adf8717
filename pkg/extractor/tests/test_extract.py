"""Extractor tests.

The detector package is exercised only through its public surface: the NPY
map format, the JSONL manifest format, and the command line via subprocess.
"""
import filecmp
import json
import subprocess
import sys

import numpy as np
import pytest
from PIL import Image

from fmap_extractor import (
    ExtractError,
    ExtractSpec,
    UnknownLayerError,
    WeightsError,
    build_model,
    extract,
)

DETECTOR = [sys.executable, "-m", "patchspan.cli"]


def run(cmd, **kw):
    return subprocess.run(cmd, capture_output=True, text=True, **kw)


@pytest.fixture(scope="module")
def images(tmp_path_factory):
    d = tmp_path_factory.mktemp("imgs")
    rng = np.random.default_rng(1)
    paths = {}
    for name, (w, h) in {"a": (224, 224), "b": (224, 224), "wide": (300, 200)}.items():
        arr = rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8)
        p = d / f"{name}.png"
        Image.fromarray(arr).save(p)
        paths[name] = str(p)
    return paths


@pytest.fixture(scope="module")
def detector_model(tmp_path_factory):
    """A small trained detector, produced entirely through the CLI."""
    d = tmp_path_factory.mktemp("det")
    corpus = d / "corpus"
    r = run(DETECTOR + ["gen", "--out-dir", str(corpus), "--n-clean", "30",
                        "--n-attacked", "30", "--rows", "32", "--cols", "32",
                        "--patch-counts", "1", "--seed", "9"])
    assert r.returncode == 0, r.stderr
    model = d / "det.model"
    r = run(DETECTOR + ["train", "--manifest", str(corpus / "manifest.jsonl"),
                        "--B", "10", "--out", str(model), "--max-epochs", "6",
                        "--patience", "4", "--seed", "0"])
    assert r.returncode == 0, r.stderr
    return model


def test_resnet50_stem_geometry(images, tmp_path):
    spec = ExtractSpec(images=(images["a"],), out_dir=str(tmp_path),
                       weights="none", seed=0)
    written, fragment = extract(spec)
    assert len(written) == 1
    m = np.load(written[0])
    # 224 input through a stride-2 first conv
    assert m.shape == (112, 112)
    assert m.dtype == np.float32
    assert m.flags["C_CONTIGUOUS"]
    assert np.isfinite(m).all()
    assert (m >= 0.0).all()  # channel sum of post-activation outputs

    lines = fragment.read_text().splitlines()
    assert len(lines) == 1
    rec = json.loads(lines[0])
    assert rec == {"map_path": written[0].name, "label": 0, "split": "test"}


def test_acceptance_extracted_map_scores_end_to_end(images, tmp_path, detector_model):
    spec = ExtractSpec(images=(images["a"],), out_dir=str(tmp_path),
                       weights="none", seed=0)
    written, _ = extract(spec)
    r = run(DETECTOR + ["score", "--model", str(detector_model), str(written[0])])
    assert r.returncode == 0, r.stderr
    path, score = r.stdout.strip().rsplit(",", 1)
    assert path == str(written[0])
    assert 0.0 < float(score) < 1.0
    print(f"extracted 112x112 map scored end-to-end: {float(score):.4f}")


def test_manifest_fragment_feeds_detector_cli(images, tmp_path, detector_model):
    spec = ExtractSpec(images=(images["a"], images["b"]), out_dir=str(tmp_path),
                       weights="none", seed=0, split="test")
    _, fragment = extract(spec)
    out = tmp_path / "bench.csv"
    r = run(DETECTOR + ["bench", "--manifest", str(fragment), "--model",
                        str(detector_model), "--out", str(out)])
    assert r.returncode == 0, r.stderr
    assert out.exists()


def test_same_image_twice_identical_files(images, tmp_path):
    specs = [
        ExtractSpec(images=(images["a"], images["a"]), out_dir=str(tmp_path / "x"),
                    weights="none", seed=3),
        ExtractSpec(images=(images["a"],), out_dir=str(tmp_path / "y"),
                    weights="none", seed=3),
    ]
    (w1, w2), _ = extract(specs[0])
    assert filecmp.cmp(w1, w2, shallow=False)
    # and across separate runs with the same seed
    (w3,), _ = extract(specs[1])
    assert filecmp.cmp(w1, w3, shallow=False)


def test_weights_from_state_dict_file(images, tmp_path):
    import torch

    base = ExtractSpec(images=(images["a"],), out_dir=str(tmp_path / "seeded"),
                       weights="none", seed=11)
    model = build_model(base)
    sd = tmp_path / "weights.pt"
    torch.save(model.state_dict(), sd)

    (w_seeded,), _ = extract(base)
    (w_file,), _ = extract(ExtractSpec(images=(images["a"],),
                                       out_dir=str(tmp_path / "fromfile"),
                                       weights=str(sd)))
    assert filecmp.cmp(w_seeded, w_file, shallow=False)


def test_resize_policies(images, tmp_path):
    for policy in ("stretch", "center-crop"):
        (w,), _ = extract(ExtractSpec(images=(images["wide"],),
                                      out_dir=str(tmp_path / policy),
                                      weights="none", resize=policy))
        assert np.load(w).shape == (112, 112), policy
    # no resizing: stem halves each side (ceil division)
    (w,), _ = extract(ExtractSpec(images=(images["wide"],),
                                  out_dir=str(tmp_path / "none"),
                                  weights="none", resize="none"))
    assert np.load(w).shape == (100, 150)


def test_unknown_layer_and_model(images, tmp_path):
    with pytest.raises(UnknownLayerError, match="no layer"):
        extract(ExtractSpec(images=(images["a"],), out_dir=str(tmp_path),
                            weights="none", layer="florp"))
    with pytest.raises(ExtractError, match="unknown model"):
        extract(ExtractSpec(images=(images["a"],), out_dir=str(tmp_path),
                            weights="none", model="not-a-model"))


def test_bad_weights_file(images, tmp_path):
    junk = tmp_path / "junk.pt"
    junk.write_bytes(b"not a checkpoint")
    with pytest.raises(WeightsError):
        extract(ExtractSpec(images=(images["a"],), out_dir=str(tmp_path),
                            weights=str(junk)))


def test_cli_roundtrip_and_errors(images, tmp_path):
    cli = [sys.executable, "-m", "fmap_extractor.cli"]
    r = run(cli + [images["a"], "--out-dir", str(tmp_path / "ok"),
                   "--weights", "none", "--label", "1", "--split", "train"])
    assert r.returncode == 0, r.stderr
    echoed = json.loads(r.stderr.splitlines()[0])
    assert echoed["model"] == "resnet50" and echoed["label"] == 1
    out_lines = r.stdout.strip().splitlines()
    assert len(out_lines) == 2  # one map + the fragment
    rec = json.loads((tmp_path / "ok" / "extracted.jsonl").read_text())
    assert rec["label"] == 1 and rec["split"] == "train"

    r = run(cli + [images["a"], "--out-dir", str(tmp_path / "bad"),
                   "--weights", "none", "--layer", "florp"])
    assert r.returncode == 2
    assert "no layer" in r.stderr

    r = run(cli + [str(tmp_path / "missing.png"), "--out-dir", str(tmp_path / "bad2"),
                   "--weights", "none"])
    assert r.returncode == 2
