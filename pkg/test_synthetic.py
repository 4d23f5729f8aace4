#!/usr/bin/env python3
"""Tests for the synthetic campaign generator and its effect oracle."""
import sys

import numpy as np
import pytest
from pydantic import ValidationError

from dataset import OutcomeKind
from synthetic import BaselineSpec, EffectSpec, SyntheticSpec, generate, oracle_ite


def test_zero_spec():
    print("🧪 Testing synthetic generation...")
    ds, true_ite = generate(SyntheticSpec(n=500, p=3, noise_sd=0.0))
    assert np.all(ds.outcome == 0.0)
    assert np.all(true_ite == 0.0)
    assert ds.outcome_kind == OutcomeKind.REVENUE
    assert np.all(ds.extra_outcomes[OutcomeKind.CONVERSION] == 0.0)
    assert ds.covariate_names == ("x1", "x2", "x3")
    assert ds.arm_names == {0: "control", 1: "arm1"}
    print("✓ Zero baseline, effects and noise give all-zero outcomes")


def test_treated_share():
    ds, _ = generate(SyntheticSpec(n=71635, p=2, arm_probs=[0.25, 0.75], noise_sd=0.0, seed=4))
    assert np.mean(ds.treatment == 1) == pytest.approx(0.75, abs=0.01)
    assert ds.covariates.min() >= -1.0 and ds.covariates.max() <= 1.0
    print("✓ Treated share follows arm probabilities")


def test_constant_effect_difference():
    ds, true_ite = generate(SyntheticSpec(n=10000, p=2, effects=[EffectSpec(value=2.0)], noise_sd=0.0, seed=1))
    treated = ds.treatment == 1
    assert ds.outcome[treated].mean() - ds.outcome[~treated].mean() == pytest.approx(2.0, abs=1e-12)
    assert np.all(true_ite[:, 0] == 2.0)

    noisy, _ = generate(SyntheticSpec(n=10000, p=2, effects=[EffectSpec(value=2.0)], seed=1))
    treated = noisy.treatment == 1
    assert noisy.outcome[treated].mean() - noisy.outcome[~treated].mean() == pytest.approx(2.0, abs=0.1)
    print("✓ Difference in means recovers a constant effect")


def test_oracle_ite():
    spec = SyntheticSpec(
        p=2, arm_probs=[0.4, 0.2, 0.2, 0.2],
        effects=[EffectSpec(value=1.5), EffectSpec(kind="step"), EffectSpec(kind="linear", value=3.0)],
    )
    X = np.array([[-1.0, 0.3], [1.0, -0.2], [0.5, 0.9]])
    ite = oracle_ite(spec, X)
    assert ite.shape == (3, 3)
    assert ite[:, 0].tolist() == [1.5, 1.5, 1.5]
    assert ite[:2, 1].tolist() == [-1.0, 1.0]
    assert ite[2, 2] == pytest.approx(1.5)
    assert oracle_ite(spec, [0.5, 0.0]).shape == (1, 3)
    print("✓ Oracle evaluates constant, step and linear effects")


def test_baseline_and_sparsity():
    baseline = BaselineSpec(kind="linear", intercept=1.0, coef=2.0)
    ds, _ = generate(SyntheticSpec(n=2000, p=2, baseline=baseline, noise_sd=0.0, seed=5))
    assert np.allclose(ds.outcome, 1.0 + 2.0 * ds.covariates[:, 0])

    sparse_spec = SyntheticSpec(
        n=20000, p=2, baseline=BaselineSpec(kind="linear", intercept=5.0),
        noise_sd=0.0, purchase_sparsity=0.9, seed=5,
    )
    sparse, _ = generate(sparse_spec)
    for arm in (0, 1):
        zeroed = np.mean(sparse.outcome[sparse.treatment == arm] == 0.0)
        assert zeroed == pytest.approx(0.9, abs=0.02)
    assert np.array_equal(sparse.extra_outcomes[OutcomeKind.CONVERSION], (sparse.outcome > 0).astype(float))
    print("✓ Baseline surfaces and symmetric purchase sparsity")


def test_assignment_independent_of_covariates():
    spec = SyntheticSpec(n=30000, p=5, arm_probs=[0.5, 0.3, 0.2], effects=[EffectSpec(), EffectSpec()], seed=8)
    ds, _ = generate(spec)
    overall = ds.covariates.mean(axis=0)
    for arm, prob in enumerate(spec.arm_probs):
        arm_mean = ds.covariates[ds.treatment == arm].mean(axis=0)
        assert np.all(np.abs(arm_mean - overall) < 4 / np.sqrt(spec.n * prob))
    print("✓ Assignment independent of covariates")


def test_determinism():
    spec = SyntheticSpec(n=300, p=4, effects=[EffectSpec(kind="step")], seed=11)
    first, truth = generate(spec)
    second, truth_again = generate(spec)
    assert np.array_equal(first.covariates, second.covariates)
    assert np.array_equal(first.treatment, second.treatment)
    assert np.array_equal(first.outcome, second.outcome)
    assert np.array_equal(truth, truth_again)
    other, _ = generate(spec.model_copy(update={"seed": 12}))
    assert not np.array_equal(first.outcome, other.outcome)
    print("✓ Same seed, same draw")


def test_validation():
    with pytest.raises(ValidationError):
        SyntheticSpec(arm_probs=[0.5, 0.6])
    with pytest.raises(ValidationError):
        SyntheticSpec(arm_probs=[1.0, 0.0])
    with pytest.raises(ValidationError):
        SyntheticSpec(arm_probs=[0.4, 0.3, 0.3])
    with pytest.raises(ValidationError):
        SyntheticSpec(arm_labels=["control"])
    with pytest.raises(ValidationError):
        SyntheticSpec(purchase_sparsity=1.0)
    with pytest.raises(ValidationError):
        SyntheticSpec(colour="red")
    labelled, _ = generate(SyntheticSpec(n=20, arm_labels=["No E-Mail", "E-Mail"]))
    assert labelled.arm_names == {0: "No E-Mail", 1: "E-Mail"}
    print("✓ Invalid specs rejected")


def main():
    """Run all tests."""
    print("=" * 60)
    print("🎯 synthetic Test Suite")
    print("=" * 60)
    try:
        test_zero_spec()
        test_treated_share()
        test_constant_effect_difference()
        test_oracle_ite()
        test_baseline_and_sparsity()
        test_assignment_independent_of_covariates()
        test_determinism()
        test_validation()

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
