"""Occlusion-probing baselines against a recorded oracle.

Both baselines ask a model "does your answer change when I cover this
region?" -- here the model is a stub table, the same shape the CLI reads from
JSONL, so the demo runs without any model dependency.
"""
import numpy as np

from patchspan import FeatureMap
from patchspan.baselines import (
    Box,
    StubOracle,
    ThemisParams,
    half_masks,
    objectseeker_score,
    themis_candidates,
    themis_detect,
)


def main():
    # --- window-probing detector: find the patch by masking candidates
    rng = np.random.default_rng(1)
    values = rng.uniform(0.1, 0.6, size=(20, 20))
    values[12:16, 3:7] += 4.0  # the planted patch
    fmap = FeatureMap(values)
    params = ThemisParams(beta=0.6, theta=0.9, window=4)

    cands = themis_candidates(fmap, params)
    print(f"candidate windows at beta={params.beta}, theta={params.theta}: {cands}")

    # Record an oracle that flips its label only when the patch is covered.
    table = {("img0", None): 1}
    for r, c in cands:
        covered = 12 <= r <= 15 and 3 <= c <= 6
        table[("img0", f"{r},{c},{params.window}")] = 0 if covered else 1
    res = themis_detect("img0", fmap, params, StubOracle(table))
    print(f"verdict: {res.verdict}, trigger window {res.trigger}, "
          f"{res.queries} oracle queries\n")

    # --- detector-consistency score: mask half-planes, compare boxes
    k_x, k_y = 2, 2
    masks = half_masks(width=100, height=100, k_x=k_x, k_y=k_y)
    original = [Box(20, 20, 60, 60)]

    def boxes_under(mask):
        # Pretend the detector loses the object when the mask covers its
        # center (40, 40), else returns it unchanged.
        covered = mask.start <= 40 < mask.stop
        return (mask.mask_id, [] if covered else [original[0]])

    masked = [boxes_under(m) for m in masks]
    res = objectseeker_score(original, masked, k_x, k_y)
    print(f"consistency score with a stable detector: {res.score:.2f} "
          f"(empty sets under {len(res.empty_masks)} masks are skipped)")

    # A detector that hallucinates a shifted box under one mask scores high.
    masked[0] = (masked[0][0], [Box(70, 70, 90, 90)])
    res = objectseeker_score(original, masked, k_x, k_y)
    print(f"score after one inconsistent masked detection: {res.score:.2f}")


if __name__ == "__main__":
    main()
