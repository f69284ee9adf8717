import numpy as np
import pytest

from patchspan.adnet import ADConfig, forward, init_model
from patchspan.explain import (
    Attribution,
    _solve_kernel_wls,
    exact_shapley,
    kernel_shap,
)
from patchspan.featurize import CHANNELS

from oracles import shapley_permutation_oracle

B = 10


def make_model(seed=0):
    return init_model(ADConfig(ensemble_size=B, seed=seed))


def rand_input(seed):
    rng = np.random.default_rng(seed)
    return rng.uniform(-1.0, 1.0, size=(4, B))


def coalition_fn(fn, inp, base):
    def value(coalition):
        rows = [inp[i] if i in coalition else base[i] for i in range(inp.shape[0])]
        return fn(np.stack(rows))
    return value


def test_exact_matches_permutation_oracle():
    model = make_model(3)
    inp = rand_input(11)
    attr = exact_shapley(model, inp)
    oracle = shapley_permutation_oracle(
        coalition_fn(lambda a: forward(model, a), inp, np.zeros_like(inp)), 4
    )
    assert attr.phi == pytest.approx(oracle, abs=1e-12)


def test_exact_efficiency():
    for seed in range(6):
        model = make_model(seed)
        inp = rand_input(100 + seed)
        attr = exact_shapley(model, inp)
        assert sum(attr.phi) == pytest.approx(
            attr.full_score - attr.baseline_score, abs=1e-9
        )
        assert attr.baseline_score == pytest.approx(forward(model, np.zeros((4, B))))
        assert attr.full_score == pytest.approx(forward(model, inp))


def test_exact_input_equals_baseline_is_zero():
    model = make_model(5)
    inp = rand_input(7)
    attr = exact_shapley(model, inp, baseline=inp)
    assert attr.phi == pytest.approx((0.0, 0.0, 0.0, 0.0), abs=1e-12)
    assert attr.baseline_score == attr.full_score


def test_exact_additive_model():
    # additive scorer: each channel contributes its own row sum
    weights = np.array([2.0, -1.0, 0.5, 3.0])
    fn = lambda a: float((weights * a.sum(axis=1)).sum())
    inp = rand_input(13)
    attr = exact_shapley(fn, inp)
    singles = [fn(np.diag(np.eye(4)[i]) @ inp) - fn(np.zeros_like(inp)) for i in range(4)]
    assert attr.phi == pytest.approx(singles, abs=1e-12)


def test_exact_nonzero_baseline():
    model = make_model(9)
    inp = rand_input(21)
    base = rand_input(22) * 0.5
    attr = exact_shapley(model, inp, baseline=base)
    assert attr.baseline_score == pytest.approx(forward(model, base))
    assert sum(attr.phi) == pytest.approx(attr.full_score - attr.baseline_score, abs=1e-9)


def test_exact_symmetry_and_null_player():
    inp = np.ones((4, B))
    # channels 0 and 1 enter symmetrically; channel 3 never matters
    fn = lambda a: float((a[0].sum() + a[1].sum()) ** 2 + 3.0 * a[2].sum())
    attr = exact_shapley(fn, inp)
    assert attr.phi[0] == pytest.approx(attr.phi[1], abs=1e-12)
    assert attr.phi[3] == pytest.approx(0.0, abs=1e-12)


def test_exact_shape_mismatch_rejected():
    model = make_model(1)
    with pytest.raises(ValueError):
        exact_shapley(model, rand_input(1)[:, : B - 1])
    with pytest.raises(ValueError):
        exact_shapley(lambda a: 0.0, rand_input(1), baseline=np.zeros((4, B + 2)))
    with pytest.raises(TypeError):
        exact_shapley("not a model", rand_input(1))


def test_kernel_matches_exact():
    for seed in range(8):
        model = make_model(seed)
        inp = rand_input(200 + seed)
        ex = exact_shapley(model, inp)
        ks = kernel_shap(model, inp, n_samples=500)
        assert ks.phi == pytest.approx(ex.phi, abs=1e-6)
        assert sum(ks.phi) == pytest.approx(ks.full_score - ks.baseline_score, abs=1e-6)


def test_kernel_input_equals_baseline():
    model = make_model(2)
    inp = rand_input(31)
    ks = kernel_shap(model, inp, baseline=inp, n_samples=16)
    assert np.allclose(ks.phi, 0.0, atol=1e-9)


def test_kernel_additive_model():
    weights = np.array([1.0, 4.0, -2.0, 0.25])
    fn = lambda a: float((weights * a.sum(axis=1)).sum())
    inp = rand_input(17)
    ks = kernel_shap(fn, inp, n_samples=100)
    singles = [fn(np.diag(np.eye(4)[i]) @ inp) - fn(np.zeros_like(inp)) for i in range(4)]
    assert ks.phi == pytest.approx(singles, abs=1e-9)


def test_kernel_sample_budget_validated():
    model = make_model(0)
    with pytest.raises(ValueError):
        kernel_shap(model, rand_input(3), n_samples=15)


def test_kernel_wls_degenerate_design_returns_none():
    # duplicated single coalition row: reduced design cannot identify 3 phis
    z = np.array([[1.0, 0.0, 0.0, 0.0]] * 5)
    w = np.ones(5)
    y = np.ones(5)
    assert _solve_kernel_wls(z, w, y, total=1.0) is None


def test_attribution_is_channel_ordered():
    assert len(CHANNELS) == 4
    model = make_model(4)
    attr = exact_shapley(model, rand_input(41))
    assert isinstance(attr, Attribution)
    assert len(attr.phi) == 4
