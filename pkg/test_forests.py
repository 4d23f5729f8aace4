#!/usr/bin/env python3
"""Tests for honest trees, the nuisance regression forest and the causal forest."""
import sys

import numpy as np
import pytest
from pydantic import ValidationError

from causal_forest import (
    CausalForest,
    CenteredData,
    Fingerprint,
    center,
    fit_causal_forest,
    forest_weights,
    predict_ite,
    pseudo_outcomes,
    variable_importance,
)
from dataset import Dataset, OutcomeKind
from errors import CompatibilityError, FitError, OverlapError, SizingError
from regression_forest import (
    ForestConfig,
    RegressionForest,
    fit_regression_forest,
    nuisance_config,
    predict,
    predict_oob,
)
from synthetic import EffectSpec, SyntheticSpec, generate
from trees import GAIN_TOLERANCE, derive_seed

NUISANCE = nuisance_config(num_trees=100, seed=11)


def _oracle_config(p: int, seed: int = 0, min_node_size: int = 5) -> ForestConfig:
    """One exhaustive depth-1 tree on the full sample."""
    return ForestConfig(
        num_trees=1, subsample_fraction=1.0, honesty=False, mtry=p,
        max_depth=1, min_node_size=min_node_size, seed=seed,
    )


def _centered_from(X, y_resid, w_resid) -> CenteredData:
    X = np.asarray(X, dtype=float)
    return CenteredData(
        X=X, y_resid=np.asarray(y_resid, dtype=float), w_resid=np.asarray(w_resid, dtype=float),
        e_hat=np.full(X.shape[0], 0.5),
    )


def _brute_force_root(X, rho, min_node_size):
    """Exhaustive maximization of sum over children of (sum rho)^2 / size."""
    best, best_gain = None, -np.inf
    for var in range(X.shape[1]):
        levels = np.unique(X[:, var])
        for low, high in zip(levels[:-1], levels[1:]):
            threshold = (low + high) / 2.0
            left = X[:, var] <= threshold
            n_left, n_right = int(left.sum()), int((~left).sum())
            if n_left < min_node_size or n_right < min_node_size:
                continue
            gain = rho[left].sum() ** 2 / n_left + rho[~left].sum() ** 2 / n_right
            if gain > best_gain:
                best, best_gain = (var, float(threshold)), gain
    if best is None or best_gain <= GAIN_TOLERANCE * float(np.dot(rho, rho)):
        return None
    return best


def test_forest_config():
    print("🧪 Testing forest configuration...")
    cfg = ForestConfig()
    assert cfg.num_trees == 1500 and cfg.honesty and cfg.min_node_size == 5
    assert cfg.resolved_mtry(10) == 4
    assert cfg.resolved_mtry(1) == 1
    assert ForestConfig(mtry=20).resolved_mtry(3) == 3
    assert cfg.sample_sizes(1000) == (500, 250, 250)
    assert ForestConfig(honesty=False).sample_sizes(1000) == (500, 500, 500)
    assert nuisance_config().num_trees == 500

    with pytest.raises(SizingError):
        cfg.check_size(15)
    for bad in ({"num_trees": 0}, {"subsample_fraction": 0.0}, {"min_node_size": 0}, {"mtree": 3}):
        with pytest.raises(ValidationError):
            ForestConfig(**bad)
    assert derive_seed(5, 1) == derive_seed(5, 1) != derive_seed(5, 2)
    print("✓ Defaults, sample sizes and validation")


def test_split_rule_matches_brute_force():
    """The root split equals exhaustive search over every (variable, midpoint)."""
    print("\n🧪 Testing split rule against brute force...")
    for instance in range(25):
        rng = np.random.default_rng(1000 + instance)
        n = int(rng.integers(20, 201))
        p = int(rng.integers(1, 4))
        X = rng.normal(size=(n, p))
        if instance % 3 == 0:
            X = np.round(X, 1)
        W = rng.permutation(np.arange(n) % 2).astype(float)
        Y = rng.normal(size=n) + W * (X[:, 0] > 0)
        cd = _centered_from(X, Y - Y.mean(), W - W.mean())

        rho = pseudo_outcomes(cd.y_resid, cd.w_resid, np.arange(n))
        expected = _brute_force_root(X, rho, 5)
        tree = fit_causal_forest(cd, _oracle_config(p, seed=instance)).trees[0]
        if expected is None:
            assert tree.feature[0] == -1, f"instance {instance}: expected no split"
        else:
            assert (int(tree.feature[0]), float(tree.threshold[0])) == expected, f"instance {instance}"
    print("✓ 25 random instances agree")


def test_two_region_effect_splits_on_x1():
    rng = np.random.default_rng(7)
    n = 200
    X = rng.uniform(-1, 1, size=(n, 3))
    X[:, 0] = np.where(X[:, 0] > 0, X[:, 0] + 0.1, X[:, 0] - 0.1)
    W = rng.permutation(np.arange(n) % 2).astype(float)
    Y = np.where(X[:, 0] > 0, 1.0, -1.0) * W + 0.1 * rng.normal(size=n)
    cd = _centered_from(X, Y - Y.mean(), W - 0.5)
    tree = fit_causal_forest(cd, _oracle_config(3)).trees[0]
    assert tree.feature[0] == 0
    assert -0.1 <= tree.threshold[0] <= 0.1
    print("✓ Two-region effect split in the gap around 0")


def test_regression_forest_basics():
    print("\n🧪 Testing regression forest...")
    rng = np.random.default_rng(3)
    X = rng.uniform(-1, 1, size=(300, 3))
    constant = fit_regression_forest(X, np.full(300, 3.0), nuisance_config(num_trees=20))
    assert np.allclose(predict(constant, X), 3.0)
    assert np.allclose(predict_oob(constant), 3.0)

    tiny_cfg = ForestConfig(num_trees=5, subsample_fraction=1.0, honesty=False, min_node_size=5)
    y = np.array([1.0, 2.0, 4.0, 8.0, 5.0])
    tiny = fit_regression_forest(X[:5], y, tiny_cfg)
    assert all(t.num_nodes == 1 for t in tiny.trees)
    assert np.allclose(predict(tiny, X), y.mean())

    with pytest.raises(CompatibilityError):
        predict(constant, X[:, :2])
    with pytest.raises(CompatibilityError):
        fit_regression_forest(X, np.zeros(10), tiny_cfg)
    print("✓ Constant target, single-leaf trees and shape checks")


def test_regression_forest_accuracy_and_oob():
    rng = np.random.default_rng(5)
    X = rng.uniform(-1, 1, size=(2000, 3))
    y = X[:, 0]
    cfg = nuisance_config(num_trees=200, seed=2)
    forest = fit_regression_forest(X, y, cfg)

    oob = predict_oob(forest)
    rmse = float(np.sqrt(np.mean((oob - y) ** 2)))
    assert rmse < 0.15 * y.std(), f"OOB RMSE {rmse:.3f}"
    assert oob.min() >= y.min() and oob.max() <= y.max()

    X_new = rng.uniform(-1, 1, size=(500, 3))
    assert np.corrcoef(predict(forest, X_new), X_new[:, 0])[0, 1] > 0.95

    counts = forest.split_counts().sum(axis=1)
    assert int(np.argmax(counts)) == 0

    again = fit_regression_forest(X, y, cfg)
    assert np.array_equal(predict(again, X_new), predict(forest, X_new))
    print("✓ Accuracy, OOB, importance of x1 and determinism")


def test_single_tree_oob_fallback():
    rng = np.random.default_rng(8)
    X = rng.uniform(size=(100, 2))
    forest = fit_regression_forest(X, X[:, 0], nuisance_config(num_trees=1))
    values, fallbacks = predict_oob(forest, return_fallbacks=True)
    assert fallbacks == 50
    in_bag = forest.trees[0].subsample
    assert np.allclose(values[in_bag], predict(forest, X[in_bag]))

    restored = RegressionForest.from_dict(forest.to_dict())
    assert np.array_equal(predict(restored, X), predict(forest, X))
    with pytest.raises(CompatibilityError):
        predict_oob(restored)
    print("✓ In-bag units fall back to full-forest predictions")


def test_single_leaf_moment_ratio():
    """W~ = (+.5, -.5, +.5, -.5), Y~ = (1, 0, 1, 0): the effect is 1.0."""
    print("\n🧪 Testing causal forest prediction...")
    cd = _centered_from([[0.0], [1.0], [2.0], [3.0]], [1, 0, 1, 0], [0.5, -0.5, 0.5, -0.5])
    cfg = ForestConfig(num_trees=3, subsample_fraction=1.0, honesty=False, max_depth=0, min_node_size=1)
    forest = fit_causal_forest(cd, cfg)
    pred = predict_ite(forest, cd, np.array([[0.5], [10.0]]))
    assert np.allclose(pred.tau_hat, 1.0, atol=1e-12)
    assert pred.degenerate == 0
    assert np.allclose(forest_weights(forest, [1.5]), 0.25)
    assert np.allclose(variable_importance(forest), 0.0)
    print("✓ Moment ratio equals treated-minus-control mean")


def test_kernel_weights_sum_to_one():
    ds, _ = generate(SyntheticSpec(n=1000, p=4, effects=[EffectSpec(kind="step")], seed=3))
    cd = center(ds, NUISANCE)
    forest = fit_causal_forest(cd, ForestConfig(num_trees=50, seed=1))
    X_new = np.random.default_rng(0).uniform(-1, 1, size=(10, 4))
    for x in X_new:
        weights = forest_weights(forest, x)
        assert abs(weights.sum() - 1.0) < 1e-9
        assert np.all(weights >= 0)

    x = X_new[0]
    weights = forest_weights(forest, x)
    direct = weights @ (cd.w_resid * cd.y_resid) / (weights @ cd.w_resid ** 2)
    assert predict_ite(forest, cd, x[None, :]).tau_hat[0] == pytest.approx(direct, rel=1e-9)
    print("✓ Kernel weights sum to 1 and reproduce the prediction")


def test_zero_outcome_residuals():
    rng = np.random.default_rng(2)
    X = rng.uniform(size=(200, 2))
    cd = _centered_from(X, np.zeros(200), rng.permutation(np.arange(200) % 2) - 0.5)
    forest = fit_causal_forest(cd, ForestConfig(num_trees=10))
    assert all(t.num_nodes == 1 for t in forest.trees)
    assert np.all(predict_ite(forest, cd, X).tau_hat == 0.0)

    with pytest.raises(FitError):
        fit_causal_forest(_centered_from(X, rng.normal(size=200), np.zeros(200)), ForestConfig(num_trees=5))
    with pytest.raises(CompatibilityError):
        predict_ite(forest, cd, X[:, :1])
    print("✓ Zero residuals give zero effects; unidentified fits fail")


def test_variable_importance():
    fingerprint = Fingerprint(n=10, p=4, seed=0, outcome_kind=OutcomeKind.REVENUE, arm_label="a")
    only_x4 = np.zeros((4, 3), dtype=np.int64)
    only_x4[3] = [5, 8, 2]
    forest = CausalForest(trees=[], split_counts=only_x4, config=ForestConfig(), fingerprint=fingerprint)
    assert variable_importance(forest).tolist() == [0.0, 0.0, 0.0, 1.0]

    counts = np.array([[1, 0], [0, 2]])
    scores = variable_importance(CausalForest([], counts, ForestConfig(), fingerprint.model_copy(update={"p": 2})))
    assert scores == pytest.approx([0.8, 0.2])
    print("✓ Depth-weighted importance")


def test_centering():
    print("\n🧪 Testing local centering...")
    spec = SyntheticSpec(n=3000, p=3, arm_probs=[2 / 3, 1 / 3], seed=4)
    ds, _ = generate(spec)
    cd = center(ds, NUISANCE)
    assert abs(cd.e_hat.mean() - 1 / 3) < 0.02
    assert cd.clamped == 0

    silent = ds.replace(outcome=np.zeros(ds.n), extra_outcomes={})
    assert np.all(center(silent, NUISANCE).y_resid == 0.0)

    confounded = ds.replace(treatment=(ds.covariates[:, 0] > 0).astype(int), arm_names={0: "c", 1: "t"})
    with pytest.raises(OverlapError):
        center(confounded, NUISANCE)
    print("✓ Propensity, zero outcomes and overlap violations")


def test_outcome_shift_invariance():
    """Shifting outcomes and their fitted means by c leaves splits and effects unchanged."""
    spec = SyntheticSpec(n=1500, p=3, effects=[EffectSpec(kind="linear", value=1.0)], seed=6)
    ds, _ = generate(spec)
    cd = center(ds, NUISANCE)
    y_hat = ds.outcome - cd.y_resid
    c = 250.0
    shifted = CenteredData(
        X=cd.X, y_resid=(ds.outcome + c) - (y_hat + c), w_resid=cd.w_resid, e_hat=cd.e_hat,
    )
    assert np.allclose(shifted.y_resid, cd.y_resid, rtol=0.0, atol=1e-10)

    cfg = ForestConfig(num_trees=40, seed=8)
    base, moved = fit_causal_forest(cd, cfg), fit_causal_forest(shifted, cfg)
    assert np.array_equal(base.split_counts, moved.split_counts)
    assert all(np.array_equal(a.feature, b.feature) for a, b in zip(base.trees, moved.trees))
    tau = predict_ite(base, None, ds.covariates).tau_hat
    assert np.allclose(predict_ite(moved, None, ds.covariates).tau_hat, tau, rtol=0.0, atol=1e-8)

    # the residuals themselves are the only input: identical residuals give identical effects
    same = CenteredData(X=cd.X, y_resid=cd.y_resid.copy(), w_resid=cd.w_resid, e_hat=cd.e_hat)
    assert np.array_equal(predict_ite(fit_causal_forest(same, cfg), None, ds.covariates).tau_hat, tau)
    print("✓ Outcome shift leaves the forest unchanged")


def test_constant_effect_recovery():
    """tau = 1 everywhere: the mean test-set estimate stays within 20%."""
    print("\n🧪 Testing effect recovery (slow)...")
    spec = SyntheticSpec(n=4000, p=10, effects=[EffectSpec(value=1.0)], seed=21)
    ds, _ = generate(spec)
    test, _ = generate(spec.model_copy(update={"seed": 22}))
    forest = fit_causal_forest(center(ds, NUISANCE), ForestConfig(num_trees=200, seed=3))
    tau = predict_ite(forest, None, test.covariates).tau_hat
    assert 0.8 <= tau.mean() <= 1.2, f"mean tau {tau.mean():.3f}"
    print(f"✓ Constant effect: mean tau {tau.mean():.3f}")


def test_zero_effect_recovery():
    spec = SyntheticSpec(n=4000, p=10, effects=[EffectSpec(value=0.0)], seed=31)
    ds, _ = generate(spec)
    test, _ = generate(spec.model_copy(update={"seed": 32}))
    forest = fit_causal_forest(center(ds, NUISANCE), ForestConfig(num_trees=200, seed=3))
    tau = predict_ite(forest, None, test.covariates).tau_hat
    assert abs(tau.mean()) < 0.1, f"mean tau {tau.mean():.3f}"
    positive = float(np.mean(tau > 0))
    assert 0.4 <= positive <= 0.6, f"positive share {positive:.2f}"
    print(f"✓ Zero effect: mean tau {tau.mean():.3f}, positive share {positive:.2f}")


def test_step_effect_heterogeneity():
    spec = SyntheticSpec(n=8000, p=10, effects=[EffectSpec(kind="step", low=-1.0, high=1.0)], seed=41)
    ds, _ = generate(spec)
    test, truth = generate(spec.model_copy(update={"seed": 42}))
    forest = fit_causal_forest(center(ds, NUISANCE), ForestConfig(num_trees=200, seed=5))
    tau = predict_ite(forest, None, test.covariates).tau_hat
    agreement = float(np.mean(np.sign(tau) == np.sign(truth[:, 0])))
    assert agreement >= 0.85, f"sign agreement {agreement:.2f}"
    assert int(np.argmax(variable_importance(forest))) == 0

    again = fit_causal_forest(center(ds, NUISANCE), ForestConfig(num_trees=200, seed=5))
    assert np.array_equal(predict_ite(again, None, test.covariates).tau_hat, tau)
    print(f"✓ Step effect: sign agreement {agreement:.2f}, x1 most important, deterministic")


def main():
    """Run all tests."""
    print("=" * 60)
    print("🌲 forests Test Suite")
    print("=" * 60)
    try:
        test_forest_config()
        test_split_rule_matches_brute_force()
        test_two_region_effect_splits_on_x1()
        test_regression_forest_basics()
        test_regression_forest_accuracy_and_oob()
        test_single_tree_oob_fallback()
        test_single_leaf_moment_ratio()
        test_kernel_weights_sum_to_one()
        test_zero_outcome_residuals()
        test_variable_importance()
        test_centering()
        test_outcome_shift_invariance()
        test_constant_effect_recovery()
        test_zero_effect_recovery()
        test_step_effect_heterogeneity()

        print("\n" + "=" * 60)
        print("✅ All tests passed!")
        print("=" * 60)
        return 0
    except Exception as e:
        print(f"\n❌ Test failed: {e}")
        import traceback
        traceback.print_exc()
        return 1


if __name__ == "__main__":
    sys.exit(main())
