"""How does scoring cost scale?

Two claims worth checking on your own hardware: cost grows roughly linearly
with the number of thresholds B, and barely at all with the number of patches
in the map (more blobs mean more clusters, but the grids are the same size).
"""
import numpy as np

from patchspan import (
    ADConfig,
    ClusterParams,
    SynthConfig,
    bench_pipeline,
    gen_map,
    init_model,
    make_equidistant_thresholds,
)


def main():
    rng = np.random.default_rng(0)
    cfg = SynthConfig(n_clean=1, n_attacked=1)
    params = ClusterParams()

    print("threshold-count scaling (30 attacked maps each):")
    maps = [gen_map(cfg, True, 1, rng)[0] for _ in range(30)]
    base = None
    for b in (10, 20, 40):
        res = bench_pipeline(
            maps, make_equidistant_thresholds(b), params,
            init_model(ADConfig(ensemble_size=b, seed=0)),
        )
        rel = "" if base is None else f"  ({res.median / base:.2f}x the B=10 median)"
        base = base or res.median
        print(f"  B={b:2d}: median {1e3 * res.median:7.2f} ms  "
              f"IQR [{1e3 * res.q1:.2f}, {1e3 * res.q3:.2f}]{rel}")

    print("\npatch-count scaling (B=20, 30 maps per count):")
    maps, counts = [], []
    for k in (1, 2, 4):
        maps += [gen_map(cfg, True, k, rng)[0] for _ in range(30)]
        counts += [k] * 30
    res = bench_pipeline(
        maps, make_equidistant_thresholds(20), params,
        init_model(ADConfig(ensemble_size=20, seed=0)), patch_counts=counts,
    )
    for k, med in sorted(res.group_medians.items()):
        print(f"  {k} patches: median {1e3 * med:7.2f} ms")
    spread = max(res.group_medians.values()) / min(res.group_medians.values())
    print(f"  max/min group median ratio: {spread:.3f}")


if __name__ == "__main__":
    main()
