"""Generate a corpus, train the detector, and evaluate it.

Also trains the one-class variant (clean maps only) to show that attack
examples are not required to get a usable detector.
"""
import tempfile
from pathlib import Path

from patchspan import (
    ADConfig,
    ClusterParams,
    ScoredSample,
    SynthConfig,
    TrainConfig,
    best_threshold,
    featurize_sample,
    forward,
    gen_corpus,
    init_model,
    load_feature_map,
    load_manifest,
    make_equidistant_thresholds,
    resolve_map_path,
    roc_curve,
    train,
    train_occ,
)

B = 20


def main():
    out = Path(tempfile.mkdtemp(prefix="patchspan_demo_"))
    manifest = gen_corpus(
        SynthConfig(n_clean=80, n_attacked=80, patch_counts=(1, 2), seed=3), out
    )
    records = load_manifest(manifest)
    print(f"corpus: {len(records)} maps under {out}")

    thresholds = make_equidistant_thresholds(B)
    params = ClusterParams()
    curves = {
        r.map_path: featurize_sample(
            load_feature_map(resolve_map_path(manifest, r)), thresholds, params
        )
        for r in records
    }
    train_recs = [r for r in records if r.split == "train"]
    test_recs = [r for r in records if r.split == "test"]

    print(f"training supervised detector (B={B}) on {len(train_recs)} samples ...")
    result = train(
        init_model(ADConfig(ensemble_size=B, seed=0)),
        [(curves[r.map_path], r.label) for r in train_recs],
        TrainConfig(seed=0, patience=8, max_epochs=20),
    )
    print(
        f"  {len(result.history)} epochs, best epoch {result.best_epoch} "
        f"(val loss {result.best_val_loss:.4f})"
    )

    def evaluate(model, tag):
        samples = [
            ScoredSample(forward(model, curves[r.map_path]), r.label,
                         effective=True if r.label else None,
                         patch_count=r.patch_count)
            for r in test_recs
        ]
        auc = roc_curve(samples).auc
        t, m = best_threshold(samples)
        print(
            f"  {tag}: AUC={auc:.4f}  best threshold={t:.3f} -> "
            f"accuracy={m.accuracy:.3f} detection rate={m.detection_rate:.3f} fpr={m.fpr:.3f}"
        )

    print(f"evaluating on {len(test_recs)} held-out maps:")
    evaluate(result.model, "supervised")

    print("training one-class detector on clean maps only ...")
    occ = train_occ(
        init_model(ADConfig(ensemble_size=B, seed=1)),
        [curves[r.map_path] for r in train_recs if r.label == 0],
        TrainConfig(seed=1, patience=8, max_epochs=20),
    )
    evaluate(occ.model, "one-class ")


if __name__ == "__main__":
    main()
