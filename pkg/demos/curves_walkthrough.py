"""Walk one feature map through the pipeline, stage by stage.

Shows how a localized high-activation region turns into a recognizable
signature across threshold levels: cluster counts that stay put while the
active-cell count collapses.
"""
import numpy as np

from patchspan import (
    ClusterParams,
    FeatureMap,
    binarize,
    cluster_stats,
    dbscan,
    featurize_sample,
    make_equidistant_thresholds,
)


def render(bits):
    return "\n".join("".join("#" if c else "." for c in row) for row in bits)


def main():
    rng = np.random.default_rng(42)

    # A smooth benign background with one hot square "patch" burned in.
    values = rng.uniform(0.2, 1.0, size=(16, 16))
    values[3:7, 9:13] += 5.0
    fmap = FeatureMap(values)
    print("input map: 16x16, background in [0.2, 1.0], one 4x4 region boosted by +5\n")

    params = ClusterParams()
    for beta in (0.1, 0.5, 0.9):
        bmap = binarize(fmap, beta)
        assign = dbscan(bmap, params)
        stats = cluster_stats(assign)
        print(f"beta = {beta:.1f}  (cut = beta * max(M))")
        print(render(bmap.bits))
        print(
            f"  clusters={stats.n_clusters}  active cells={stats.n_imp}  "
            f"centroid distance mean={stats.d_mean:.2f} sd={stats.d_std:.2f}\n"
        )

    # The full ensemble sweep gives the 4 x B matrix the detector consumes.
    thresholds = make_equidistant_thresholds(10)
    fc = featurize_sample(fmap, thresholds, params)
    print("feature curves after per-row min-max normalization to [-1, 1]:")
    for name, row in zip(fc.channel_names, fc.channels):
        print(f"  {name:10s} " + " ".join(f"{v:+.2f}" for v in row))
    print(
        "\nOn an attacked map the active-cell row collapses quickly while the\n"
        "cluster count stays low and stable -- that joint shape is what the\n"
        "downstream conv net learns to recognize."
    )


if __name__ == "__main__":
    main()
