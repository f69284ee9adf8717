import json

import numpy as np
import pytest

from patchspan.baselines import (
    Box,
    HalfMask,
    ObjectSeekerResult,
    StubOracle,
    ThemisParams,
    half_masks,
    ioa,
    iou,
    load_stub_oracle,
    objectseeker_score,
    themis_candidates,
    themis_detect,
)
from patchspan.errors import FormatError
from patchspan.fmap import FeatureMap


def block_map(rows, cols, r0, c0, side, value=1.0):
    m = np.zeros((rows, cols))
    m[r0 : r0 + side, c0 : c0 + side] = value
    return FeatureMap(m)


# ---------------------------------------------------------------- candidates


def test_candidates_exact_block():
    # 4x4 map, 2x2 ones block: theta=1 admits only the fully dense window
    m = block_map(4, 4, 1, 2, 2)
    cands = themis_candidates(m, ThemisParams(beta=0.5, theta=1.0, window=2))
    assert cands == [(1, 2)]


def test_candidates_theta_zero_everything():
    m = block_map(5, 7, 0, 0, 2)
    cands = themis_candidates(m, ThemisParams(beta=0.5, theta=0.0, window=3))
    assert len(cands) == (5 - 3 + 1) * (7 - 3 + 1)


def test_candidates_all_zero_map():
    m = FeatureMap(np.zeros((6, 6)))
    assert themis_candidates(m, ThemisParams(beta=0.5, theta=0.1, window=2)) == []
    # theta=0 is vacuous even on a silent map
    assert len(themis_candidates(m, ThemisParams(beta=0.5, theta=0.0, window=2))) == 25


def test_candidates_window_too_large():
    m = FeatureMap(np.ones((4, 4)))
    with pytest.raises(ValueError):
        themis_candidates(m, ThemisParams(beta=0.5, theta=0.5, window=5))


def test_candidates_row_major_order():
    m = np.zeros((8, 8))
    m[5:7, 0:2] = 1.0
    m[1:3, 4:6] = 1.0
    cands = themis_candidates(FeatureMap(m), ThemisParams(beta=0.5, theta=1.0, window=2))
    assert cands == [(1, 4), (5, 0)]


def test_candidates_monotone_in_theta_and_beta():
    rng = np.random.default_rng(31)
    for _ in range(20):
        m = FeatureMap(rng.random((10, 12)))
        grid = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0]
        for beta in (0.1, 0.5, 0.9):
            counts = [
                len(themis_candidates(m, ThemisParams(beta=beta, theta=t, window=3)))
                for t in grid
            ]
            assert all(a >= b for a, b in zip(counts, counts[1:]))
        for theta in (0.2, 0.6, 1.0):
            counts = [
                len(themis_candidates(m, ThemisParams(beta=b, theta=theta, window=3)))
                for b in grid
            ]
            assert all(a >= b for a, b in zip(counts, counts[1:]))


def test_params_validation():
    for kw in ({"beta": -0.1}, {"beta": 1.1}, {"theta": -0.1}, {"theta": 2.0}, {"window": 0}):
        args = {"beta": 0.5, "theta": 0.5, "window": 2}
        args.update(kw)
        with pytest.raises(ValueError):
            ThemisParams(**args)


# -------------------------------------------------------------------- detect


def _constant_stub(input_id, candidates, window, label=3):
    table = {(input_id, None): label}
    for r, c in candidates:
        table[(input_id, f"{r},{c},{window}")] = label
    return StubOracle(table)


def test_detect_never_changing_oracle_is_clean():
    m = block_map(6, 6, 2, 2, 3)
    params = ThemisParams(beta=0.5, theta=0.5, window=2)
    cands = themis_candidates(m, params)
    assert cands
    oracle = _constant_stub("img0", cands, 2)
    res = themis_detect("img0", m, params, oracle)
    assert res.verdict == "clean"
    assert res.trigger is None
    assert res.queries == 1 + len(cands)


def test_detect_planted_window_is_recovered():
    # only occluding the planted block flips the label; every other candidate
    # window leaves the output alone
    m = np.zeros((9, 9))
    m[6:8, 1:3] = 1.0  # planted patch
    m[1:3, 5:7] = 1.0  # benign dense region, also a candidate
    fmap = FeatureMap(m)
    params = ThemisParams(beta=0.5, theta=1.0, window=2)
    cands = themis_candidates(fmap, params)
    assert (6, 1) in cands and (1, 5) in cands
    table = {("adv", None): 1}
    for r, c in cands:
        table[("adv", f"{r},{c},2")] = 7 if (r, c) == (6, 1) else 1
    res = themis_detect("adv", fmap, params, StubOracle(table))
    assert res.verdict == "attack"
    assert res.trigger == (6, 1)


def test_detect_no_candidates_no_queries():
    m = FeatureMap(np.zeros((5, 5)))
    oracle = StubOracle({})  # would raise on any query
    res = themis_detect("x", m, ThemisParams(beta=0.9, theta=0.9, window=2), oracle)
    assert res.verdict == "clean"
    assert res.queries == 0
    assert oracle.queries == 0


def test_detect_detection_task_equivalence():
    m = block_map(4, 4, 0, 0, 2)
    params = ThemisParams(beta=0.5, theta=1.0, window=2)
    ref = [Box(0, 0, 10, 10), Box(20, 20, 30, 30)]
    # masked answer keeps both boxes with IoU > 0.5 -> clean
    kept = [Box(0, 0, 10, 9), Box(20, 20, 30, 30)]
    oracle = StubOracle({("d", None): ref, ("d", "0,0,2"): kept}, task="detection")
    assert themis_detect("d", m, params, oracle).verdict == "clean"
    # masked answer loses one box entirely -> attack
    lost = [Box(0, 0, 10, 10)]
    oracle2 = StubOracle({("d", None): ref, ("d", "0,0,2"): lost}, task="detection")
    assert themis_detect("d", m, params, oracle2).verdict == "attack"


def test_stub_oracle_missing_record():
    oracle = StubOracle({("a", None): 0})
    with pytest.raises(LookupError):
        oracle.query("a", (1, 1, 2))
    with pytest.raises(ValueError):
        StubOracle({}, task="segmentation")


def test_stub_oracle_file_round_trip(tmp_path):
    p = tmp_path / "oracle.jsonl"
    rows = [
        {"input_id": "a", "mask": None, "label": 2},
        {"input_id": "a", "mask": "0,0,2", "label": 5},
    ]
    p.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
    oracle = load_stub_oracle(p)
    assert oracle.query("a", None) == 2
    assert oracle.query("a", (0, 0, 2)) == 5

    d = tmp_path / "det.jsonl"
    d.write_text(json.dumps({"input_id": "b", "mask": None, "boxes": [[0, 0, 4, 4]]}) + "\n")
    det = load_stub_oracle(d, task="detection")
    assert det.query("b", None) == [Box(0, 0, 4, 4)]


def test_stub_oracle_file_errors(tmp_path):
    bad = tmp_path / "bad.jsonl"
    bad.write_text("{not json\n")
    with pytest.raises(FormatError):
        load_stub_oracle(bad)
    missing = tmp_path / "missing.jsonl"
    missing.write_text(json.dumps({"input_id": "a", "mask": None}) + "\n")
    with pytest.raises(FormatError):
        load_stub_oracle(missing)
    with pytest.raises(FormatError):
        load_stub_oracle(missing, task="detection")


# ----------------------------------------------------------------- ioa / iou


def test_ioa_examples():
    assert ioa(Box(0, 0, 5, 10), Box(0, 0, 10, 10)) == 1.0
    assert ioa(Box(0, 0, 2, 2), Box(5, 5, 7, 7)) == 0.0
    assert ioa(Box(0, 0, 4, 4), Box(2, 2, 6, 6)) == pytest.approx(0.25)


def test_ioa_properties():
    rng = np.random.default_rng(47)
    for _ in range(50):
        x0, y0 = rng.uniform(-5, 5, size=2)
        b = Box(x0, y0, x0 + rng.uniform(0.1, 4), y0 + rng.uniform(0.1, 4))
        u0, v0 = rng.uniform(-5, 5, size=2)
        r = Box(u0, v0, u0 + rng.uniform(0.1, 4), v0 + rng.uniform(0.1, 4))
        v = ioa(b, r)
        assert 0.0 <= v <= 1.0
        assert ioa(b, b) == pytest.approx(1.0)
        dx, dy = rng.uniform(-3, 3, size=2)
        bt = Box(b.x0 + dx, b.y0 + dy, b.x1 + dx, b.y1 + dy)
        rt = Box(r.x0 + dx, r.y0 + dy, r.x1 + dx, r.y1 + dy)
        assert ioa(bt, rt) == pytest.approx(v)


def test_box_validation():
    with pytest.raises(ValueError):
        Box(0, 0, 0, 5)
    with pytest.raises(ValueError):
        Box(2, 0, 1, 5)
    assert iou(Box(0, 0, 2, 2), Box(0, 0, 2, 2)) == pytest.approx(1.0)
    assert iou(Box(0, 0, 2, 2), Box(1, 0, 3, 2)) == pytest.approx(1 / 3)


# ---------------------------------------------------------------- half masks


def test_half_masks_midline():
    masks = half_masks(100, 100, 1, 0)
    assert len(masks) == 2
    assert (masks[0].start, masks[0].stop) == (0, 50)
    assert (masks[1].start, masks[1].stop) == (50, 100)
    assert masks[0].axis == "h" and masks[1].axis == "h"


def test_half_masks_counts():
    assert half_masks(64, 64, 0, 0) == []
    assert len(half_masks(416, 416, 30, 30)) == 120
    with pytest.raises(ValueError):
        half_masks(10, 10, -1, 0)


def test_half_masks_offsets_and_ids():
    masks = half_masks(50, 100, 2, 1)
    # horizontal lines at round(100/3)=33 and round(200/3)=67; vertical at 25
    hs = [m for m in masks if m.axis == "h"]
    vs = [m for m in masks if m.axis == "v"]
    assert [(m.start, m.stop) for m in hs] == [(0, 33), (33, 100), (0, 67), (67, 100)]
    assert [(m.start, m.stop) for m in vs] == [(0, 25), (25, 50)]
    assert len({m.mask_id for m in masks}) == len(masks)
    assert isinstance(masks[0], HalfMask)


# ------------------------------------------------------------- objectseeker


def _sets(pairs, k_x, k_y):
    # pad with full-agreement sets so the count matches 2*(k_x+k_y)
    need = 2 * (k_x + k_y)
    out = list(pairs)
    while len(out) < need:
        out.append((f"pad{len(out)}", [Box(0, 0, 10, 10)]))
    return out


def test_objectseeker_identical_boxes_score_zero():
    orig = [Box(0, 0, 10, 10), Box(20, 0, 30, 10)]
    masked = [("m0", [orig[0]]), ("m1", [orig[1]])]
    res = objectseeker_score(orig, masked, k_x=1, k_y=0)
    assert res.score == pytest.approx(0.0)
    assert res.empty_masks == ()
    assert not res.no_originals


def test_objectseeker_disjoint_box_scores_one():
    orig = [Box(0, 0, 10, 10)]
    masked = [("m0", [Box(50, 50, 60, 60)]), ("m1", [orig[0]])]
    res = objectseeker_score(orig, masked, k_x=0, k_y=1)
    assert res.score == pytest.approx(1.0)


def test_objectseeker_quarter_overlap():
    orig = [Box(0, 0, 10, 10)]
    # masked box of area 16 overlapping the original by 4 -> ioa 0.25
    masked = [("m0", [Box(8, 8, 12, 12)]), ("m1", [orig[0]])]
    res = objectseeker_score(orig, masked, k_x=1, k_y=0)
    assert res.score == pytest.approx(0.75)


def test_objectseeker_empty_sets_skipped_and_flagged():
    orig = [Box(0, 0, 10, 10)]
    masked = [("gone", []), ("m1", [orig[0]])]
    res = objectseeker_score(orig, masked, k_x=1, k_y=0)
    assert res.score == pytest.approx(0.0)
    assert res.empty_masks == ("gone",)


def test_objectseeker_no_originals_flagged():
    res = objectseeker_score([], [("m0", [Box(0, 0, 1, 1)]), ("m1", [])], k_x=1, k_y=0)
    assert isinstance(res, ObjectSeekerResult)
    assert res.score == 0.0
    assert res.no_originals
    assert res.empty_masks == ("m1",)


def test_objectseeker_count_mismatch():
    with pytest.raises(ValueError):
        objectseeker_score([Box(0, 0, 1, 1)], [("m0", [])], k_x=1, k_y=1)


def test_objectseeker_containment_invariant():
    # shrunken-but-contained masked boxes always score 0
    rng = np.random.default_rng(59)
    for _ in range(25):
        origs = []
        for _ in range(rng.integers(1, 4)):
            x0, y0 = rng.uniform(0, 50, size=2)
            origs.append(Box(x0, y0, x0 + rng.uniform(2, 10), y0 + rng.uniform(2, 10)))
        masked = []
        for i in range(4):
            src = origs[int(rng.integers(0, len(origs)))]
            fx = rng.uniform(0.05, 0.45)
            fy = rng.uniform(0.05, 0.45)
            inner = Box(
                src.x0 + fx * (src.x1 - src.x0),
                src.y0 + fy * (src.y1 - src.y0),
                src.x1 - fx * (src.x1 - src.x0),
                src.y1 - fy * (src.y1 - src.y0),
            )
            masked.append((f"m{i}", [inner]))
        res = objectseeker_score(origs, masked, k_x=1, k_y=1)
        assert res.score == pytest.approx(0.0)


def test_objectseeker_score_bounded():
    rng = np.random.default_rng(61)
    for _ in range(25):
        origs = []
        for _ in range(rng.integers(1, 3)):
            x0, y0 = rng.uniform(0, 40, size=2)
            origs.append(Box(x0, y0, x0 + rng.uniform(1, 8), y0 + rng.uniform(1, 8)))
        masked = []
        for i in range(2):
            boxes = []
            for _ in range(rng.integers(0, 3)):
                x0, y0 = rng.uniform(0, 40, size=2)
                boxes.append(Box(x0, y0, x0 + rng.uniform(1, 8), y0 + rng.uniform(1, 8)))
            masked.append((f"m{i}", boxes))
        res = objectseeker_score(origs, masked, k_x=0, k_y=1)
        assert 0.0 <= res.score <= 1.0
