"""Command-line driver tying the pipeline together.

Subcommands: gen, featurize, train, score, eval, roc, bench, shap,
baseline-themis, baseline-objseeker.  Every run first validates its options,
then echoes the fully materialized configuration as one JSON line on stderr
(so any result can be reproduced from its log), then does the work.

Exit codes: 0 success, 1 internal error, 2 usage or contract error.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .adnet import ADConfig, TrainConfig, forward, init_model, load_model, save_model, train, train_occ
from .baselines import ThemisParams, half_masks, load_stub_oracle, objectseeker_score, themis_detect
from .ensemble import make_equidistant_thresholds
from .errors import PatchSpanError
from .explain import exact_shapley, kernel_shap
from .featurize import CHANNELS, curves, featurize_sample, normalize_channel_names
from .fmap import load_feature_map, load_manifest, resolve_map_path
from .gridclust import ClusterParams
from .metrics import ScoredSample, bench_pipeline, best_threshold, detection_metrics, roc_curve
from .synthgen import SynthConfig, gen_corpus

SPLITS = ("train", "val", "test", "all")


@dataclass
class RunConfig:
    """Materialized options for one invocation; echoed verbatim to stderr."""

    subcommand: str
    manifest: str | None = None
    model: str | None = None
    out: str | None = None
    ensemble_size: int = 20
    eps: float = 1.0
    min_pts: int = 4
    channels: tuple[str, ...] = CHANNELS
    occ: bool = False
    seed: int = 0
    split: str = "test"
    jobs: int = 1
    # training loop
    lr: float = 1e-4
    patience: int = 200
    max_epochs: int | None = None
    val_fraction: float = 0.2
    history: str | None = None
    # corpus generation
    out_dir: str | None = None
    n_clean: int | None = None
    n_attacked: int | None = None
    rows: int = 64
    cols: int = 64
    patch_counts: tuple[int, ...] = (1, 2, 4)
    blob_side_fraction: float = 0.12
    blob_gain: float = 6.0
    smoothness: int = 1
    # scoring / evaluation
    maps: tuple[str, ...] = ()
    map: str | None = None
    threshold: float | None = None
    best_threshold: bool = False
    filter: str = "all"
    roc_out: str | None = None
    # attribution
    method: str = "kernel"
    n_samples: int = 500
    # occlusion baselines
    oracle: str | None = None
    input_id: str | None = None
    task: str = "classification"
    beta: float | None = None
    theta: float | None = None
    window: int | None = None
    k_x: int = 30
    k_y: int = 30
    width: int | None = None
    height: int | None = None

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "RunConfig":
        kwargs = {}
        for f in dataclasses.fields(cls):
            if hasattr(args, f.name):
                kwargs[f.name] = getattr(args, f.name)
        return cls(**kwargs)

    def echo(self) -> dict:
        return dataclasses.asdict(self)


def _require_files(*paths):
    for p in paths:
        if p is not None and not Path(p).exists():
            raise ValueError(f"no such file: {p}")


def validate(cfg: RunConfig) -> RunConfig:
    """Check the subcommand's contract before any work starts."""
    cfg.channels = normalize_channel_names(cfg.channels)
    if cfg.jobs < 1:
        raise ValueError(f"--jobs must be >= 1, got {cfg.jobs}")
    if cfg.split not in SPLITS:
        raise ValueError(f"--split must be one of {SPLITS}, got {cfg.split!r}")
    sub = cfg.subcommand
    if sub in ("train", "eval", "roc", "bench", "shap"):
        _require_files(cfg.manifest)
    if sub in ("score", "eval", "roc", "bench", "shap"):
        _require_files(cfg.model)
    if sub in ("featurize", "baseline-themis"):
        _require_files(cfg.map)
    if sub in ("baseline-themis", "baseline-objseeker"):
        _require_files(cfg.oracle)
    if sub == "score":
        _require_files(*cfg.maps)
    if sub == "eval":
        if cfg.threshold is not None and cfg.best_threshold:
            raise ValueError("--threshold and --best-threshold are mutually exclusive")
        if cfg.threshold is None:
            cfg.best_threshold = True
    if sub == "train" and cfg.max_epochs is not None and cfg.max_epochs < 1:
        raise ValueError(f"--max-epochs must be >= 1, got {cfg.max_epochs}")
    if sub == "shap" and len(cfg.channels) != len(CHANNELS):
        raise ValueError("shap explains the full 4-channel detector; drop --channels")
    return cfg


def _open_out(path: str | None):
    return open(path, "w", newline="") if path else sys.stdout


def _write_csv(path: str | None, header, rows):
    f = _open_out(path)
    try:
        w = csv.writer(f)
        w.writerow(header)
        w.writerows(rows)
    finally:
        if f is not sys.stdout:
            f.close()


def _records(cfg: RunConfig):
    recs = load_manifest(cfg.manifest)
    if cfg.split != "all":
        recs = [r for r in recs if r.split == cfg.split]
    if not recs:
        raise ValueError(f"manifest has no records in split {cfg.split!r}")
    return recs


def _fan_out(work, items, jobs: int):
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(work, items))
    return [work(x) for x in items]


def _featurize_paths(paths, thresholds, params, channels, jobs):
    names = None if len(channels) == len(CHANNELS) else channels
    work = lambda p: featurize_sample(load_feature_map(p), thresholds, params, channels=names)
    return _fan_out(work, paths, jobs)


def _model_setup(cfg: RunConfig):
    model = load_model(cfg.model, expect_in_channels=len(cfg.channels))
    thresholds = make_equidistant_thresholds(model.config.ensemble_size)
    params = ClusterParams(eps=cfg.eps, min_pts=cfg.min_pts)
    return model, thresholds, params


# ---------------------------------------------------------------- commands


def cmd_gen(cfg: RunConfig) -> int:
    sc = SynthConfig(
        n_clean=cfg.n_clean,
        n_attacked=cfg.n_attacked,
        rows=cfg.rows,
        cols=cfg.cols,
        patch_counts=cfg.patch_counts,
        blob_side_fraction=cfg.blob_side_fraction,
        blob_gain=cfg.blob_gain,
        smoothness=cfg.smoothness,
        seed=cfg.seed,
    )
    manifest = gen_corpus(sc, cfg.out_dir)
    print(manifest)
    return 0


def cmd_featurize(cfg: RunConfig) -> int:
    fmap = load_feature_map(cfg.map)
    thresholds = make_equidistant_thresholds(cfg.ensemble_size)
    fc = curves(fmap, thresholds, ClusterParams(eps=cfg.eps, min_pts=cfg.min_pts))
    rows = [
        (beta, *fc.channels[:, j]) for j, beta in enumerate(thresholds)
    ]
    _write_csv(cfg.out, ("beta",) + CHANNELS, rows)
    return 0


def cmd_train(cfg: RunConfig) -> int:
    recs = load_manifest(cfg.manifest)
    train_recs = [r for r in recs if r.split == "train"]
    if not train_recs:
        raise ValueError("manifest has no train-split records")
    if cfg.occ:
        train_recs = [r for r in train_recs if r.label == 0]
        if not train_recs:
            raise ValueError("one-class training needs clean train-split samples")
    elif len({r.label for r in train_recs}) < 2:
        raise ValueError(
            "single-class dataset: supervised training needs clean and attacked "
            "samples in the train split (use --occ for one-class training)"
        )
    thresholds = make_equidistant_thresholds(cfg.ensemble_size)
    params = ClusterParams(eps=cfg.eps, min_pts=cfg.min_pts)
    paths = [resolve_map_path(cfg.manifest, r) for r in train_recs]
    inputs = _featurize_paths(paths, thresholds, params, cfg.channels, cfg.jobs)

    model = init_model(ADConfig(ensemble_size=cfg.ensemble_size,
                                in_channels=len(cfg.channels), seed=cfg.seed))
    tc = TrainConfig(lr=cfg.lr, patience=cfg.patience, max_epochs=cfg.max_epochs,
                     val_fraction=cfg.val_fraction, seed=cfg.seed, occ_mode=cfg.occ)
    if cfg.occ:
        result = train_occ(model, inputs, tc)
    else:
        dataset = list(zip(inputs, [r.label for r in train_recs]))
        result = train(model, dataset, tc)
    save_model(cfg.out, result.model)
    history = cfg.history or cfg.out + ".history.csv"
    _write_csv(history, ("epoch", "train_loss", "val_loss"),
               [(ep.epoch, ep.train_loss, ep.val_loss) for ep in result.history])
    print(f"best_val_loss={result.best_val_loss:.6f}")
    return 0


def cmd_score(cfg: RunConfig) -> int:
    model, thresholds, params = _model_setup(cfg)
    inputs = _featurize_paths(cfg.maps, thresholds, params, cfg.channels, cfg.jobs)
    for path, fc in zip(cfg.maps, inputs):
        print(f"{path},{forward(model, fc)!r}")
    return 0


def _scored_samples(cfg: RunConfig, model, thresholds, params):
    recs = _records(cfg)
    paths = [resolve_map_path(cfg.manifest, r) for r in recs]
    inputs = _featurize_paths(paths, thresholds, params, cfg.channels, cfg.jobs)
    return [
        ScoredSample(score=forward(model, fc), label=r.label,
                     effective=r.effective, patch_count=r.patch_count)
        for fc, r in zip(inputs, recs)
    ], recs


def cmd_eval(cfg: RunConfig) -> int:
    model, thresholds, params = _model_setup(cfg)
    samples, _ = _scored_samples(cfg, model, thresholds, params)
    auc = roc_curve(samples).auc
    if cfg.best_threshold:
        t, _m = best_threshold(samples, "max_accuracy", cfg.filter)
    else:
        t = cfg.threshold
    m_sel = detection_metrics(samples, t, cfg.filter)

    def accuracy_under(filt):
        try:
            return detection_metrics(samples, t, filt).accuracy
        except ValueError:
            return float("nan")  # filter left nothing to grade

    rows = [
        ("threshold", t),
        ("filter", cfg.filter),
        ("accuracy", m_sel.accuracy),
        ("accuracy_all", accuracy_under("all")),
        ("accuracy_effective", accuracy_under("effective_only")),
        ("accuracy_non_effective", accuracy_under("non_effective_only")),
        ("detection_rate", m_sel.detection_rate),
        ("fpr", m_sel.fpr),
        ("auc", auc),
        ("n_clean", m_sel.n_clean),
        ("n_attacked", m_sel.n_attacked),
    ]
    _write_csv(cfg.out, ("metric", "value"), rows)
    if cfg.roc_out:
        rc = roc_curve(samples)
        _write_csv(cfg.roc_out, ("threshold", "fpr", "tpr"),
                   [(th, fpr, tpr) for th, (fpr, tpr) in zip(rc.thresholds, rc.points)])
    return 0


def cmd_roc(cfg: RunConfig) -> int:
    model, thresholds, params = _model_setup(cfg)
    samples, _ = _scored_samples(cfg, model, thresholds, params)
    rc = roc_curve(samples)
    _write_csv(cfg.out, ("threshold", "fpr", "tpr"),
               [(th, fpr, tpr) for th, (fpr, tpr) in zip(rc.thresholds, rc.points)])
    return 0


def cmd_bench(cfg: RunConfig) -> int:
    model, thresholds, params = _model_setup(cfg)
    recs = _records(cfg)
    maps = [load_feature_map(resolve_map_path(cfg.manifest, r)) for r in recs]
    names = None if len(cfg.channels) == len(CHANNELS) else cfg.channels
    res = bench_pipeline(maps, thresholds, params, model,
                         patch_counts=[r.patch_count for r in recs], channels=names)
    rows = [(i, r.patch_count if r.patch_count is not None else "", t)
            for i, (r, t) in enumerate(zip(recs, res.times))]
    rows.append(("median", "", res.median))
    rows.append(("q1", "", res.q1))
    rows.append(("q3", "", res.q3))
    for pc, med in res.group_medians.items():
        rows.append(("group_median", pc if pc is not None else "", med))
    _write_csv(cfg.out, ("index", "patch_count", "seconds"), rows)
    return 0


def cmd_shap(cfg: RunConfig) -> int:
    model, thresholds, params = _model_setup(cfg)
    recs = _records(cfg)
    paths = [resolve_map_path(cfg.manifest, r) for r in recs]
    inputs = _featurize_paths(paths, thresholds, params, cfg.channels, cfg.jobs)
    if cfg.method == "exact":
        attributions = _fan_out(lambda fc: exact_shapley(model, fc), inputs, cfg.jobs)
    else:
        attributions = _fan_out(
            lambda fc: kernel_shap(model, fc, n_samples=cfg.n_samples), inputs, cfg.jobs
        )
    rows = [
        (r.map_path, *attr.phi, attr.full_score, attr.baseline_score)
        for r, attr in zip(recs, attributions)
    ]
    _write_csv(cfg.out, ("sample", "phi_nclus", "phi_avg", "phi_sd", "phi_impneu",
                         "score", "baseline_score"), rows)
    return 0


def cmd_baseline_themis(cfg: RunConfig) -> int:
    fmap = load_feature_map(cfg.map)
    oracle = load_stub_oracle(cfg.oracle, task=cfg.task)
    res = themis_detect(cfg.input_id, fmap,
                        ThemisParams(beta=cfg.beta, theta=cfg.theta, window=cfg.window),
                        oracle)
    r, c = res.trigger if res.trigger is not None else ("", "")
    _write_csv(cfg.out, ("verdict", "trigger_row", "trigger_col", "queries"),
               [(res.verdict, r, c, res.queries)])
    return 0


def cmd_baseline_objseeker(cfg: RunConfig) -> int:
    oracle = load_stub_oracle(cfg.oracle, task="detection")
    originals = oracle.query(cfg.input_id, None)
    masked = [
        (m.mask_id, oracle.query(cfg.input_id, m.mask_id))
        for m in half_masks(cfg.width, cfg.height, cfg.k_x, cfg.k_y)
    ]
    res = objectseeker_score(originals, masked, cfg.k_x, cfg.k_y)
    _write_csv(cfg.out, ("score", "no_originals", "empty_masks"),
               [(res.score, res.no_originals, ";".join(res.empty_masks))])
    return 0


_DISPATCH = {
    "gen": cmd_gen,
    "featurize": cmd_featurize,
    "train": cmd_train,
    "score": cmd_score,
    "eval": cmd_eval,
    "roc": cmd_roc,
    "bench": cmd_bench,
    "shap": cmd_shap,
    "baseline-themis": cmd_baseline_themis,
    "baseline-objseeker": cmd_baseline_objseeker,
}


# ------------------------------------------------------------------ parser


def _csv_ints(s: str) -> tuple[int, ...]:
    return tuple(int(x) for x in s.split(","))


def _csv_names(s: str) -> tuple[str, ...]:
    return tuple(x.strip() for x in s.split(",") if x.strip())


def _add_cluster_flags(p):
    p.add_argument("--eps", type=float, default=1.0, help="clustering reach")
    p.add_argument("--min-pts", dest="min_pts", type=int, default=4,
                   help="core-point neighborhood size")


def _add_channel_flag(p):
    p.add_argument("--channels", type=_csv_names, default=CHANNELS,
                   help="comma-separated channel subset")


def _add_jobs_flag(p):
    p.add_argument("--jobs", type=int, default=1, help="featurization worker threads")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="patchspan",
                                 description="feature-map patch detection pipeline")
    sub = ap.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("gen", help="generate a synthetic feature-map corpus")
    p.add_argument("--out-dir", dest="out_dir", required=True)
    p.add_argument("--n-clean", dest="n_clean", type=int, required=True)
    p.add_argument("--n-attacked", dest="n_attacked", type=int, required=True)
    p.add_argument("--rows", type=int, default=64)
    p.add_argument("--cols", type=int, default=64)
    p.add_argument("--patch-counts", dest="patch_counts", type=_csv_ints, default=(1, 2, 4))
    p.add_argument("--blob-side-fraction", dest="blob_side_fraction", type=float, default=0.12)
    p.add_argument("--blob-gain", dest="blob_gain", type=float, default=6.0)
    p.add_argument("--smoothness", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("featurize", help="emit raw clustering curves for one map")
    p.add_argument("--map", required=True)
    p.add_argument("--B", dest="ensemble_size", type=int, default=20)
    p.add_argument("--out", default=None)
    _add_cluster_flags(p)

    p = sub.add_parser("train", help="train the detector on a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--B", dest="ensemble_size", type=int, default=20)
    p.add_argument("--occ", action="store_true", help="one-class training on clean maps")
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--patience", type=int, default=200)
    p.add_argument("--max-epochs", dest="max_epochs", type=int, default=None)
    p.add_argument("--val-fraction", dest="val_fraction", type=float, default=0.2)
    p.add_argument("--history", default=None, help="epoch loss CSV (default: <out>.history.csv)")
    p.add_argument("--seed", type=int, default=0)
    _add_cluster_flags(p)
    _add_channel_flag(p)
    _add_jobs_flag(p)

    p = sub.add_parser("score", help="score map files with a trained model")
    p.add_argument("maps", nargs="+")
    p.add_argument("--model", required=True)
    _add_cluster_flags(p)
    _add_channel_flag(p)
    _add_jobs_flag(p)

    for name, extra in (("eval", True), ("roc", False)):
        p = sub.add_parser(name, help=f"{name} a trained model on a manifest split")
        p.add_argument("--manifest", required=True)
        p.add_argument("--model", required=True)
        p.add_argument("--split", default="test", choices=SPLITS)
        p.add_argument("--out", default=None)
        if extra:
            p.add_argument("--threshold", type=float, default=None)
            p.add_argument("--best-threshold", dest="best_threshold", action="store_true")
            p.add_argument("--filter", default="all",
                           choices=("all", "effective_only", "non_effective_only"))
            p.add_argument("--roc-out", dest="roc_out", default=None)
        _add_cluster_flags(p)
        _add_channel_flag(p)
        _add_jobs_flag(p)

    p = sub.add_parser("bench", help="time the featurize+score path per map")
    p.add_argument("--manifest", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--split", default="test", choices=SPLITS)
    p.add_argument("--out", default=None)
    _add_cluster_flags(p)
    _add_channel_flag(p)

    p = sub.add_parser("shap", help="per-channel attribution CSV")
    p.add_argument("--manifest", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--split", default="test", choices=SPLITS)
    p.add_argument("--out", default=None)
    p.add_argument("--method", default="kernel", choices=("kernel", "exact"))
    p.add_argument("--n-samples", dest="n_samples", type=int, default=500)
    _add_cluster_flags(p)
    _add_channel_flag(p)
    _add_jobs_flag(p)

    p = sub.add_parser("baseline-themis", help="occlusion-window probe of a stub oracle")
    p.add_argument("--map", required=True)
    p.add_argument("--oracle", required=True, help="stub oracle line-record file")
    p.add_argument("--input-id", dest="input_id", required=True)
    p.add_argument("--task", default="classification", choices=("classification", "detection"))
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--theta", type=float, required=True)
    p.add_argument("--window", type=int, required=True)
    p.add_argument("--out", default=None)

    p = sub.add_parser("baseline-objseeker", help="half-masking consistency score")
    p.add_argument("--oracle", required=True, help="detection stub oracle file")
    p.add_argument("--input-id", dest="input_id", required=True)
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--k-x", dest="k_x", type=int, default=30)
    p.add_argument("--k-y", dest="k_y", type=int, default=30)
    p.add_argument("--out", default=None)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = RunConfig.from_args(args)
    try:
        cfg = validate(cfg)
        print(json.dumps(cfg.echo(), sort_keys=True), file=sys.stderr)
        return _DISPATCH[cfg.subcommand](cfg)
    except (PatchSpanError, ValueError, LookupError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
