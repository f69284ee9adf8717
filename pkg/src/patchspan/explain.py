"""Per-channel attribution of detector scores with Shapley values.

Explains the gap between a reference score (by default the all-zero input,
which is also what any constant-channel sample preprocesses to) and the
score of a given input, as one additive contribution per clustering channel.
Exact enumeration is cheap because there are only four channels (16
coalitions); the kernel-weighted least-squares estimator is kept alongside
as a fidelity check and for parity with explainer tooling.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .adnet import ADModel, as_input, forward
from .featurize import FeatureCurves


@dataclass(frozen=True)
class Attribution:
    """One phi per channel; efficiency: sum(phi) = full - baseline score."""

    phi: tuple[float, ...]
    baseline_score: float
    full_score: float


def _resolve(model, input, baseline):
    """Normalize (scorer, input matrix, baseline matrix).

    `model` is either an ADModel or any callable mapping a channel matrix to
    a real score.  A missing baseline means the all-zero matrix.
    """
    if isinstance(model, ADModel):
        inp = as_input(input, model.config)
        if baseline is None:
            base = np.zeros_like(inp)
        else:
            base = as_input(baseline, model.config)
        return (lambda arr: forward(model, arr)), inp, base
    if callable(model):
        if isinstance(input, FeatureCurves):
            input = input.channels
        inp = np.asarray(input, dtype=np.float64)
        if inp.ndim != 2 or not np.isfinite(inp).all():
            raise ValueError("input must be a finite 2D channel matrix")
        if baseline is None:
            base = np.zeros_like(inp)
        else:
            if isinstance(baseline, FeatureCurves):
                baseline = baseline.channels
            base = np.asarray(baseline, dtype=np.float64)
            if base.shape != inp.shape:
                raise ValueError(
                    f"baseline shape {base.shape} does not match input {inp.shape}"
                )
            if not np.isfinite(base).all():
                raise ValueError("baseline must be finite")
        return model, inp, base
    raise TypeError(f"model must be an ADModel or a callable scorer, got {type(model)!r}")


def _coalition_scores(fn, inp: np.ndarray, base: np.ndarray) -> list[float]:
    """Score every coalition once; index = bitmask, bit i set = channel i live."""
    n = inp.shape[0]
    scores = []
    for mask in range(1 << n):
        rows = [inp[i] if mask >> i & 1 else base[i] for i in range(n)]
        scores.append(float(fn(np.stack(rows))))
    return scores


def exact_shapley(model, input, baseline=None) -> Attribution:
    """Shapley attribution by full coalition enumeration (2^n evaluations)."""
    fn, inp, base = _resolve(model, input, baseline)
    n = inp.shape[0]
    v = _coalition_scores(fn, inp, base)
    full = (1 << n) - 1
    fact = math.factorial
    phi = []
    for i in range(n):
        total = 0.0
        others = [j for j in range(n) if j != i]
        for r in range(n):
            weight = fact(r) * fact(n - 1 - r) / fact(n)
            for combo in itertools.combinations(others, r):
                s = sum(1 << j for j in combo)
                total += weight * (v[s | (1 << i)] - v[s])
        phi.append(total)
    return Attribution(phi=tuple(phi), baseline_score=v[0], full_score=v[full])


def _kernel_weight(n: int, size: int) -> float:
    """Shapley kernel for a proper coalition of the given size."""
    return (n - 1) / (math.comb(n, size) * size * (n - size))


def _solve_kernel_wls(zmat: np.ndarray, weights: np.ndarray, y: np.ndarray,
                      total: float) -> np.ndarray | None:
    """Constrained WLS for phi; None when the reduced design is degenerate.

    The empty and full coalitions are folded in as hard constraints: the
    intercept is the baseline score and the phis sum to `total`, so the last
    channel is eliminated before solving.
    """
    n = zmat.shape[1]
    x = zmat[:, : n - 1] - zmat[:, n - 1 : n]
    yr = y - zmat[:, n - 1] * total
    a = x.T @ (weights[:, None] * x)
    if np.linalg.matrix_rank(a) < n - 1:
        return None
    beta = np.linalg.solve(a, x.T @ (weights * yr))
    return np.append(beta, total - beta.sum())


def kernel_shap(model, input, baseline=None, n_samples: int = 500) -> Attribution:
    """Kernel-weighted least-squares Shapley estimate.

    With four channels any admissible budget (n_samples >= 16) covers all 14
    proper coalitions — the singletons and leave-one-outs among them — so the
    sampler collapses to deduplicated full enumeration, and the estimate
    matches exact_shapley up to solver arithmetic.
    """
    if n_samples < 16:
        raise ValueError(f"n_samples must be >= 16, got {n_samples}")
    fn, inp, base = _resolve(model, input, baseline)
    n = inp.shape[0]
    v = _coalition_scores(fn, inp, base)
    full = (1 << n) - 1
    total = v[full] - v[0]

    rows, weights, y = [], [], []
    for mask in range(1, full):
        z = np.array([(mask >> i) & 1 for i in range(n)], dtype=np.float64)
        rows.append(z)
        weights.append(_kernel_weight(n, int(z.sum())))
        y.append(v[mask] - v[0])
    phi = _solve_kernel_wls(np.stack(rows), np.asarray(weights), np.asarray(y), total)
    if phi is None:  # degenerate design: only 16 coalitions exist, enumerate
        return exact_shapley(model, input, baseline)
    return Attribution(phi=tuple(float(p) for p in phi),
                       baseline_score=v[0], full_score=v[full])
