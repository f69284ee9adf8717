"""The curve detector: a small 1D conv net trained per sample with Adam.

Architecture (temporal axis = threshold index, length B):

    conv1d(in_channels -> 12, k=2, s=1) -> avgpool(k=2, s=1) -> batchnorm -> relu
    conv1d(12 -> 12, k=2, s=1)          -> avgpool(k=2, s=1) -> batchnorm -> relu
    flatten -> fc(576) -> relu -> fc(576) -> relu -> fc(1) -> sigmoid

The flatten width follows structurally from B (12 * (B - 4) with the default
kernels); it is not a free constant.  For B = 4 the second pooling stage
would produce an empty sequence, so it is skipped and the fallback is
recorded in the config and the model file.  B < 4 is not runnable.

All arithmetic is float64.  Canonical parameter values are float32-
representable (quantized at init and on load), so a fresh or loaded model
round-trips through its file bit-exactly; a trained model is truncated to
float32 once on its first save.

Training: batch size 1, BCE loss, Adam, shuffle each epoch, 20% holdout
validation, early stop after `patience` epochs without val-loss improvement.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, FormatError, TrainingError
from .featurize import FeatureCurves, minmax_rows

_MAGIC = b"SPANNAD1"
_VERSION = 1
_BN_EPS = 1e-5
_BN_MOMENTUM = 0.1
_SCORE_CLAMP = 1e-12

PARAM_KEYS = (
    "conv1_w", "conv1_b", "bn1_gamma", "bn1_beta",
    "conv2_w", "conv2_b", "bn2_gamma", "bn2_beta",
    "fc1_w", "fc1_b", "fc2_w", "fc2_b", "out_w", "out_b",
)
RUNNING_KEYS = ("bn1_mean", "bn1_var", "bn2_mean", "bn2_var")

# On-disk block order: parameters and running stats interleaved per stage.
_FILE_BLOCKS = (
    "conv1_w", "conv1_b", "bn1_gamma", "bn1_beta", "bn1_mean", "bn1_var",
    "conv2_w", "conv2_b", "bn2_gamma", "bn2_beta", "bn2_mean", "bn2_var",
    "fc1_w", "fc1_b", "fc2_w", "fc2_b", "out_w", "out_b",
)


def _conv_len(length: int, kernel: int, stride: int) -> int:
    return (length - kernel) // stride + 1 if length >= kernel else 0


@dataclass(frozen=True)
class ADConfig:
    """Structural hyperparameters; everything downstream derives from these."""

    ensemble_size: int
    in_channels: int = 4
    conv_channels: int = 12
    kernel: int = 2
    stride: int = 1
    pool_kernel: int = 2
    pool_stride: int = 1
    fc_width: int = 576
    seed: int = 0

    def __post_init__(self):
        for name in ("ensemble_size", "in_channels", "conv_channels", "kernel",
                     "stride", "pool_kernel", "pool_stride", "fc_width"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        plan = self._plan()
        if plan is None:
            raise ConfigError(
                f"ensemble_size={self.ensemble_size} cannot feed the conv stack; "
                "minimum is 4 with the default kernels"
            )

    def _plan(self) -> tuple[int, int, int, int, bool] | None:
        """(len after conv1, pool1, conv2, last stage, single_pool) or None."""
        l1 = _conv_len(self.ensemble_size, self.kernel, self.stride)
        l1p = _conv_len(l1, self.pool_kernel, self.pool_stride)
        l2 = _conv_len(l1p, self.kernel, self.stride)
        if l2 < 1:
            return None
        l2p = _conv_len(l2, self.pool_kernel, self.pool_stride)
        if l2p >= 1:
            return l1, l1p, l2, l2p, False
        return l1, l1p, l2, l2, True  # pool2 skipped

    @property
    def single_pool(self) -> bool:
        return self._plan()[4]

    @property
    def flatten_len(self) -> int:
        return self.conv_channels * self._plan()[3]


@dataclass
class ADModel:
    """Parameter store plus mode flag; forward() is pure in either mode."""

    config: ADConfig
    params: dict[str, np.ndarray]
    running: dict[str, np.ndarray]
    mode: str = "eval"  # "train": batchnorm uses per-input stats

    def copy(self) -> "ADModel":
        return ADModel(
            config=self.config,
            params={k: v.copy() for k, v in self.params.items()},
            running={k: v.copy() for k, v in self.running.items()},
            mode=self.mode,
        )


def _param_shapes(cfg: ADConfig) -> dict[str, tuple[int, ...]]:
    cc = cfg.conv_channels
    return {
        "conv1_w": (cc, cfg.in_channels, cfg.kernel),
        "conv1_b": (cc,),
        "bn1_gamma": (cc,),
        "bn1_beta": (cc,),
        "conv2_w": (cc, cc, cfg.kernel),
        "conv2_b": (cc,),
        "bn2_gamma": (cc,),
        "bn2_beta": (cc,),
        "fc1_w": (cfg.fc_width, cfg.flatten_len),
        "fc1_b": (cfg.fc_width,),
        "fc2_w": (cfg.fc_width, cfg.fc_width),
        "fc2_b": (cfg.fc_width,),
        "out_w": (1, cfg.fc_width),
        "out_b": (1,),
        "bn1_mean": (cc,),
        "bn1_var": (cc,),
        "bn2_mean": (cc,),
        "bn2_var": (cc,),
    }


def _f32(arr: np.ndarray) -> np.ndarray:
    """Quantize to the nearest float32-representable float64 values."""
    return arr.astype(np.float32).astype(np.float64)


def init_model(config: ADConfig) -> ADModel:
    """Seeded init: weights/biases ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in))."""
    rng = np.random.default_rng(config.seed)
    shapes = _param_shapes(config)
    params: dict[str, np.ndarray] = {}
    for key in ("conv1", "conv2", "fc1", "fc2", "out"):
        w_shape = shapes[f"{key}_w"]
        fan_in = int(np.prod(w_shape[1:]))
        bound = 1.0 / math.sqrt(fan_in)
        params[f"{key}_w"] = _f32(rng.uniform(-bound, bound, size=w_shape))
        params[f"{key}_b"] = _f32(rng.uniform(-bound, bound, size=shapes[f"{key}_b"]))
    for stage in ("bn1", "bn2"):
        params[f"{stage}_gamma"] = np.ones(shapes[f"{stage}_gamma"])
        params[f"{stage}_beta"] = np.zeros(shapes[f"{stage}_beta"])
    params = {k: params[k] for k in PARAM_KEYS}
    running = {
        "bn1_mean": np.zeros(config.conv_channels),
        "bn1_var": np.ones(config.conv_channels),
        "bn2_mean": np.zeros(config.conv_channels),
        "bn2_var": np.ones(config.conv_channels),
    }
    return ADModel(config=config, params=params, running=running, mode="eval")


def as_input(x, config: ADConfig) -> np.ndarray:
    """Validate a detector input: preprocessed curves or a [-1,1] matrix."""
    if isinstance(x, FeatureCurves):
        if not x.preprocessed:
            raise ValueError("detector inputs must be preprocessed curves")
        arr = x.channels
    else:
        arr = np.asarray(x, dtype=np.float64)
        if arr.ndim != 2 or not np.isfinite(arr).all():
            raise ValueError("detector input must be a finite 2D matrix")
        if arr.min() < -1.0 or arr.max() > 1.0:
            raise ValueError("detector input must lie in [-1, 1]")
    want = (config.in_channels, config.ensemble_size)
    if arr.shape != want:
        raise ValueError(f"detector input shape {arr.shape}, model expects {want}")
    return arr


def _sigmoid(u: float) -> float:
    if u >= 0:
        return 1.0 / (1.0 + math.exp(-u))
    e = math.exp(u)
    return e / (1.0 + e)


def bce_loss(score: float, label: int) -> float:
    """Binary cross-entropy with scores clamped away from {0, 1}."""
    if label not in (0, 1):
        raise ValueError(f"label must be 0 or 1, got {label!r}")
    s = min(max(score, _SCORE_CLAMP), 1.0 - _SCORE_CLAMP)
    return -(label * math.log(s) + (1 - label) * math.log(1.0 - s))


def _conv1d(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int) -> np.ndarray:
    k = w.shape[2]
    win = np.lib.stride_tricks.sliding_window_view(x, k, axis=1)[:, ::stride]
    return np.einsum("cik,itk->ct", w, win, optimize=True) + b[:, None]


def _avgpool(x: np.ndarray, kernel: int, stride: int) -> np.ndarray:
    win = np.lib.stride_tricks.sliding_window_view(x, kernel, axis=1)[:, ::stride]
    return win.mean(axis=2)


def _forward_impl(model: ADModel, x: np.ndarray, train_mode: bool, update_running: bool):
    """Full forward pass; returns (score, cache of layer inputs/intermediates)."""
    cfg = model.config
    p = model.params
    cache: dict = {"x": x}

    def bn(name: str, inp: np.ndarray) -> np.ndarray:
        gamma, beta = p[f"{name}_gamma"], p[f"{name}_beta"]
        length = inp.shape[1]
        # A single temporal value cannot be batch-normalized (it would collapse
        # to exactly 0 and kill gradients); fall back to running stats.
        use_batch = train_mode and length > 1
        if use_batch:
            mu = inp.mean(axis=1)
            var = inp.var(axis=1)
            if update_running:
                unbiased = var * length / (length - 1)
                model.running[f"{name}_mean"] = (
                    (1 - _BN_MOMENTUM) * model.running[f"{name}_mean"] + _BN_MOMENTUM * mu
                )
                model.running[f"{name}_var"] = (
                    (1 - _BN_MOMENTUM) * model.running[f"{name}_var"] + _BN_MOMENTUM * unbiased
                )
        else:
            mu = model.running[f"{name}_mean"]
            var = model.running[f"{name}_var"]
        inv = 1.0 / np.sqrt(var + _BN_EPS)
        xhat = (inp - mu[:, None]) * inv[:, None]
        cache[f"{name}_xhat"] = xhat
        cache[f"{name}_inv"] = inv
        cache[f"{name}_batch"] = use_batch
        return gamma[:, None] * xhat + beta[:, None]

    z1 = _conv1d(x, p["conv1_w"], p["conv1_b"], cfg.stride)
    a1 = _avgpool(z1, cfg.pool_kernel, cfg.pool_stride)
    cache["z1"], cache["a1"] = z1, a1
    n1 = bn("bn1", a1)
    r1 = np.maximum(n1, 0.0)
    cache["n1"], cache["r1"] = n1, r1

    z2 = _conv1d(r1, p["conv2_w"], p["conv2_b"], cfg.stride)
    if cfg.single_pool:
        a2 = z2
    else:
        a2 = _avgpool(z2, cfg.pool_kernel, cfg.pool_stride)
    cache["z2"], cache["a2"] = z2, a2
    n2 = bn("bn2", a2)
    r2 = np.maximum(n2, 0.0)
    cache["n2"], cache["r2"] = n2, r2

    flat = r2.reshape(-1)
    h1 = p["fc1_w"] @ flat + p["fc1_b"]
    g1 = np.maximum(h1, 0.0)
    h2 = p["fc2_w"] @ g1 + p["fc2_b"]
    g2 = np.maximum(h2, 0.0)
    u = float((p["out_w"] @ g2 + p["out_b"])[0])
    cache.update(flat=flat, h1=h1, g1=g1, h2=h2, g2=g2, u=u)
    score = _sigmoid(u)
    cache["score"] = score
    return score, cache


def forward(model: ADModel, x) -> float:
    """Detector score in (0, 1).  Pure: never touches running statistics."""
    arr = as_input(x, model.config)
    score, _ = _forward_impl(model, arr, train_mode=(model.mode == "train"),
                             update_running=False)
    return score


def _conv1d_backward(dz: np.ndarray, x: np.ndarray, w: np.ndarray, stride: int):
    k = w.shape[2]
    win = np.lib.stride_tricks.sliding_window_view(x, k, axis=1)[:, ::stride]
    dw = np.einsum("ct,itk->cik", dz, win, optimize=True)
    db = dz.sum(axis=1)
    dx = np.zeros_like(x)
    l_out = dz.shape[1]
    for tau in range(k):
        # dx[i, t*stride + tau] += sum_c dz[c, t] * w[c, i, tau]
        contrib = np.einsum("ct,ci->it", dz, w[:, :, tau], optimize=True)
        dx[:, tau : tau + stride * l_out : stride] += contrib
    return dw, db, dx


def _avgpool_backward(dout: np.ndarray, in_len: int, kernel: int, stride: int) -> np.ndarray:
    dx = np.zeros((dout.shape[0], in_len))
    for j in range(kernel):
        dx[:, j : j + stride * dout.shape[1] : stride] += dout / kernel
    return dx


def _backward(model: ADModel, cache: dict, label: int) -> dict[str, np.ndarray]:
    """Gradients of BCE(score, label) w.r.t. every parameter block."""
    cfg = model.config
    p = model.params
    grads: dict[str, np.ndarray] = {}

    du = cache["score"] - label  # fused sigmoid+BCE
    grads["out_w"] = (du * cache["g2"])[None, :]
    grads["out_b"] = np.array([du])
    dg2 = du * p["out_w"][0]

    dh2 = dg2 * (cache["h2"] > 0)
    grads["fc2_w"] = np.outer(dh2, cache["g1"])
    grads["fc2_b"] = dh2
    dg1 = p["fc2_w"].T @ dh2

    dh1 = dg1 * (cache["h1"] > 0)
    grads["fc1_w"] = np.outer(dh1, cache["flat"])
    grads["fc1_b"] = dh1
    dflat = p["fc1_w"].T @ dh1

    dr2 = dflat.reshape(cache["r2"].shape)
    dn2 = dr2 * (cache["n2"] > 0)
    da2 = _bn_backward("bn2", model, cache, dn2, grads)
    if cfg.single_pool:
        dz2 = da2
    else:
        dz2 = _avgpool_backward(da2, cache["z2"].shape[1], cfg.pool_kernel, cfg.pool_stride)
    grads["conv2_w"], grads["conv2_b"], dr1 = _conv1d_backward(
        dz2, cache["r1"], p["conv2_w"], cfg.stride
    )

    dn1 = dr1 * (cache["n1"] > 0)
    da1 = _bn_backward("bn1", model, cache, dn1, grads)
    dz1 = _avgpool_backward(da1, cache["z1"].shape[1], cfg.pool_kernel, cfg.pool_stride)
    grads["conv1_w"], grads["conv1_b"], _ = _conv1d_backward(
        dz1, cache["x"], p["conv1_w"], cfg.stride
    )
    return {k: grads[k] for k in PARAM_KEYS}


def _bn_backward(name: str, model: ADModel, cache: dict, dy: np.ndarray, grads: dict):
    gamma = model.params[f"{name}_gamma"]
    xhat, inv = cache[f"{name}_xhat"], cache[f"{name}_inv"]
    grads[f"{name}_gamma"] = (dy * xhat).sum(axis=1)
    grads[f"{name}_beta"] = dy.sum(axis=1)
    if cache[f"{name}_batch"]:
        # batch-stat normalization: mean/var depend on the input
        m = dy.shape[1]
        dxhat = dy * gamma[:, None]
        dx = (inv[:, None] / m) * (
            m * dxhat
            - dxhat.sum(axis=1, keepdims=True)
            - xhat * (dxhat * xhat).sum(axis=1, keepdims=True)
        )
        return dx
    return dy * gamma[:, None] * inv[:, None]


@dataclass
class AdamState:
    """First/second moment accumulators, one pair per parameter block.

    Moments are float32: the optimizer state does not need the gradients'
    precision and halving its memory traffic roughly halves step cost.
    """

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]

    @classmethod
    def zeros(cls, model: ADModel) -> "AdamState":
        return cls(
            m={k: np.zeros(v.shape, dtype=np.float32) for k, v in model.params.items()},
            v={k: np.zeros(v.shape, dtype=np.float32) for k, v in model.params.items()},
        )


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer and loop settings; batch size is fixed at 1."""

    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    patience: int = 200
    val_fraction: float = 0.2
    max_epochs: int | None = None
    seed: int = 0
    occ_mode: bool = False

    def __post_init__(self):
        if self.lr < 0:
            raise ConfigError(f"lr must be >= 0, got {self.lr}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigError("adam betas must lie in [0, 1)")
        if self.patience < 1:
            raise ConfigError(f"patience must be >= 1, got {self.patience}")
        if not (0.0 < self.val_fraction < 1.0):
            raise ConfigError(f"val_fraction must lie in (0, 1), got {self.val_fraction}")


def adam_step(model: ADModel, grads: dict, state: AdamState, t: int,
              config: TrainConfig) -> None:
    """One Adam update (bias-corrected, eps outside the sqrt), in place."""
    if t < 1:
        raise ValueError(f"step index must be >= 1, got {t}")
    bc1 = 1.0 - config.beta1**t
    bc2 = 1.0 - config.beta2**t
    for key in PARAM_KEYS:
        g = grads[key]
        if not np.isfinite(g).all():
            raise TrainingError(f"non-finite gradient in parameter block {key!r}")
        m, v = state.m[key], state.v[key]
        g32 = g.astype(np.float32)
        m *= config.beta1
        m += (1.0 - config.beta1) * g32
        v *= config.beta2
        np.square(g32, out=g32)
        g32 *= 1.0 - config.beta2
        v += g32
        # g32 becomes the update: lr/bc1 * m / (sqrt(v/bc2) + eps)
        np.divide(v, bc2, out=g32, casting="unsafe")
        np.sqrt(g32, out=g32)
        g32 += config.adam_eps
        np.divide(m, g32, out=g32)
        g32 *= config.lr / bc1
        model.params[key] -= g32


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float


@dataclass
class TrainResult:
    model: ADModel
    history: list[EpochStats]
    best_epoch: int
    best_val_loss: float


def train(model: ADModel, dataset, config: TrainConfig = TrainConfig()) -> TrainResult:
    """Per-sample Adam training with holdout early stopping.

    dataset: sequence of (curves-or-matrix, label).  Returns the weights from
    the best validation epoch; `model` itself is left at its last state.
    """
    if len(dataset) < 2:
        raise ConfigError("training needs at least 2 samples (one goes to validation)")
    inputs = [as_input(x, model.config) for x, _ in dataset]
    labels = [y for _, y in dataset]
    if any(y not in (0, 1) for y in labels):
        raise ValueError("labels must be 0 or 1")
    if not config.occ_mode and len(set(labels)) < 2:
        raise ConfigError("supervised training needs both classes present")

    rng = np.random.default_rng(config.seed)
    n = len(dataset)
    n_val = max(1, round(n * config.val_fraction))
    if n_val >= n:
        raise ConfigError("val split leaves no training samples")
    perm = rng.permutation(n)
    val_idx, train_idx = perm[:n_val], perm[n_val:]

    work = model
    work.mode = "train"
    state = AdamState.zeros(work)
    step = 0
    history: list[EpochStats] = []
    best_val = math.inf
    best_epoch = 0
    best = work.copy()
    epoch = 0
    while True:
        epoch += 1
        order = rng.permutation(len(train_idx))
        train_losses = []
        for j in order:
            i = train_idx[j]
            score, cache = _forward_impl(work, inputs[i], train_mode=True,
                                         update_running=True)
            train_losses.append(bce_loss(score, labels[i]))
            grads = _backward(work, cache, labels[i])
            step += 1
            adam_step(work, grads, state, step, config)
        val_losses = [
            bce_loss(_forward_impl(work, inputs[i], False, False)[0], labels[i])
            for i in val_idx
        ]
        ep = EpochStats(epoch, float(np.mean(train_losses)), float(np.mean(val_losses)))
        history.append(ep)
        if ep.val_loss < best_val:
            best_val = ep.val_loss
            best_epoch = epoch
            best = work.copy()
        if epoch - best_epoch >= config.patience:
            break
        if config.max_epochs is not None and epoch >= config.max_epochs:
            break
    work.mode = "eval"
    best.mode = "eval"
    return TrainResult(model=best, history=history, best_epoch=best_epoch,
                       best_val_loss=best_val)


_OCC_NOISE_TAG = 7919


def occ_noise_input(rng: np.random.Generator, config: ADConfig) -> np.ndarray:
    """Standard-normal curves matrix, min-max normalized per row to [-1, 1]."""
    return minmax_rows(rng.standard_normal((config.in_channels, config.ensemble_size)))


def train_occ(model: ADModel, clean_inputs, config: TrainConfig = TrainConfig()) -> TrainResult:
    """One-class variant: clean samples are label 0, paired synthetic noise is 1."""
    if not clean_inputs:
        raise ConfigError("one-class training needs at least one clean sample")
    rng = np.random.default_rng([config.seed, _OCC_NOISE_TAG])
    dataset = []
    for x in clean_inputs:
        dataset.append((as_input(x, model.config), 0))
        dataset.append((occ_noise_input(rng, model.config), 1))
    cfg = TrainConfig(**{**config.__dict__, "occ_mode": True})
    return train(model, dataset, cfg)


@dataclass(frozen=True)
class GradCheckResult:
    max_rel_err: float
    n_checked: int
    worst_block: str


def grad_check(model: ADModel, x, label: int, h: float = 1e-5,
               n_coords: int = 200, seed: int = 0) -> GradCheckResult:
    """Central-difference audit of the analytic gradients.

    Uses the model's current mode (batch-stat normalization when "train")
    with running-stat updates disabled, so the loss is a pure function of the
    parameters.  Checks every block at least once and n_coords coordinates in
    total; relative error uses a 1e-6 floor to keep dead-path zeros honest.
    """
    arr = as_input(x, model.config)
    train_mode = model.mode == "train"

    def loss_fn() -> float:
        s, _ = _forward_impl(model, arr, train_mode, update_running=False)
        return bce_loss(s, label)

    score, cache = _forward_impl(model, arr, train_mode, update_running=False)
    grads = _backward(model, cache, label)

    sizes = {k: model.params[k].size for k in PARAM_KEYS}
    total = sum(sizes.values())
    rng = np.random.default_rng(seed)
    flat_choice = set(rng.choice(total, size=min(n_coords, total), replace=False).tolist())
    for block_start, key in zip(np.cumsum([0] + [sizes[k] for k in PARAM_KEYS]), PARAM_KEYS):
        flat_choice.add(int(block_start) + int(rng.integers(sizes[key])))

    bounds = np.cumsum([sizes[k] for k in PARAM_KEYS])
    worst = 0.0
    worst_block = PARAM_KEYS[0]
    for flat in sorted(flat_choice):
        bi = int(np.searchsorted(bounds, flat, side="right"))
        key = PARAM_KEYS[bi]
        idx = flat - (int(bounds[bi - 1]) if bi else 0)
        param = model.params[key]
        old = param.flat[idx]
        param.flat[idx] = old + h
        lp = loss_fn()
        param.flat[idx] = old - h
        lm = loss_fn()
        param.flat[idx] = old
        numeric = (lp - lm) / (2 * h)
        analytic = grads[key].flat[idx]
        rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-6)
        if rel > worst:
            worst = rel
            worst_block = key
    return GradCheckResult(max_rel_err=float(worst), n_checked=len(flat_choice),
                           worst_block=worst_block)


def save_model(path: str | Path, model: ADModel) -> None:
    """Write magic, config header (ADConfig declaration order), then float32
    parameter blocks in fixed order."""
    cfg = model.config
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", _VERSION))
        f.write(
            struct.pack(
                "<8I",
                cfg.ensemble_size, cfg.in_channels, cfg.conv_channels, cfg.kernel,
                cfg.stride, cfg.pool_kernel, cfg.pool_stride, cfg.fc_width,
            )
        )
        f.write(struct.pack("<q", cfg.seed))
        f.write(struct.pack("<B", 1 if cfg.single_pool else 0))
        store = {**model.params, **model.running}
        for key in _FILE_BLOCKS:
            f.write(np.ascontiguousarray(store[key], dtype="<f4").tobytes())


def load_model(path: str | Path, expect_in_channels: int | None = None) -> ADModel:
    """Read a model file; errors name the first malformed field."""
    path = Path(path)
    blob = path.read_bytes()
    if blob[:8] != _MAGIC:
        raise FormatError(f"{path}: bad magic, not a detector model file")
    off = 8
    (version,) = struct.unpack_from("<I", blob, off)
    off += 4
    if version != _VERSION:
        raise FormatError(f"{path}: unsupported model version {version}")
    fields = struct.unpack_from("<8I", blob, off)
    off += 32
    (seed,) = struct.unpack_from("<q", blob, off)
    off += 8
    (single_pool_byte,) = struct.unpack_from("<B", blob, off)
    off += 1
    if single_pool_byte not in (0, 1):
        raise FormatError(f"{path}: single_pool flag must be 0 or 1")
    try:
        cfg = ADConfig(
            ensemble_size=fields[0], in_channels=fields[1], conv_channels=fields[2],
            kernel=fields[3], stride=fields[4], pool_kernel=fields[5],
            pool_stride=fields[6], fc_width=fields[7], seed=seed,
        )
    except ConfigError as e:
        raise FormatError(f"{path}: header describes an invalid config: {e}") from e
    if bool(single_pool_byte) != cfg.single_pool:
        raise FormatError(f"{path}: single_pool flag inconsistent with dimensions")
    if expect_in_channels is not None and cfg.in_channels != expect_in_channels:
        raise ConfigError(
            f"{path}: model has {cfg.in_channels} input channels, "
            f"caller expects {expect_in_channels}"
        )
    shapes = _param_shapes(cfg)
    store: dict[str, np.ndarray] = {}
    for key in _FILE_BLOCKS:
        count = int(np.prod(shapes[key]))
        end = off + 4 * count
        if end > len(blob):
            raise FormatError(f"{path}: truncated in block {key!r}")
        store[key] = (
            np.frombuffer(blob[off:end], dtype="<f4").astype(np.float64).reshape(shapes[key])
        )
        off = end
    if off != len(blob):
        raise FormatError(f"{path}: {len(blob) - off} trailing bytes after last block")
    return ADModel(
        config=cfg,
        params={k: store[k] for k in PARAM_KEYS},
        running={k: store[k] for k in RUNNING_KEYS},
        mode="eval",
    )
