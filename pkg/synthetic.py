"""Randomized multi-arm campaign data with known effect surfaces.

Covariates are uniform on [-1, 1]^p, assignment is multinomial and
independent of X, and every arm's effect depends on x1 only.
"""
import logging
from typing import List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from dataset import Dataset, OutcomeKind

logger = logging.getLogger(__name__)


class BaselineSpec(BaseModel):
    """Outcome level without treatment: 0, intercept + coef*x1, or a step in x1."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Literal["zero", "linear", "step"] = "zero"
    intercept: float = 0.0
    coef: float = 0.0
    threshold: float = 0.0


class EffectSpec(BaseModel):
    """Per-arm effect: constant `value`, `offset + value*x1`, or `low`/`high` around a threshold."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Literal["constant", "linear", "step"] = "constant"
    value: float = 0.0
    offset: float = 0.0
    threshold: float = 0.0
    low: float = -1.0
    high: float = 1.0


class SyntheticSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    n: int = Field(default=4000, gt=0)
    p: int = Field(default=10, gt=0)
    arm_probs: List[float] = Field(default_factory=lambda: [0.5, 0.5], min_length=2)
    baseline: BaselineSpec = Field(default_factory=BaselineSpec)
    effects: List[EffectSpec] = Field(default_factory=lambda: [EffectSpec()])
    noise_sd: float = Field(default=1.0, ge=0.0)
    purchase_sparsity: float = Field(default=0.0, ge=0.0, lt=1.0)
    arm_labels: Optional[List[str]] = None
    seed: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def _check(self) -> "SyntheticSpec":
        if any(not 0.0 < prob < 1.0 for prob in self.arm_probs):
            raise ValueError("arm probabilities must lie strictly inside (0, 1)")
        if abs(sum(self.arm_probs) - 1.0) > 1e-12:
            raise ValueError(f"arm probabilities sum to {sum(self.arm_probs)}, not 1")
        if len(self.effects) != len(self.arm_probs) - 1:
            raise ValueError("need exactly one effect per non-control arm")
        if self.arm_labels is not None and len(self.arm_labels) != len(self.arm_probs):
            raise ValueError("arm_labels must name the control and every arm")
        return self

    @property
    def num_arms(self) -> int:
        return len(self.effects)


def _effect(effect: EffectSpec, x1: np.ndarray) -> np.ndarray:
    if effect.kind == "constant":
        return np.full_like(x1, effect.value)
    if effect.kind == "linear":
        return effect.offset + effect.value * x1
    return np.where(x1 > effect.threshold, effect.high, effect.low)


def _baseline(baseline: BaselineSpec, x1: np.ndarray) -> np.ndarray:
    if baseline.kind == "zero":
        return np.zeros_like(x1)
    if baseline.kind == "linear":
        return baseline.intercept + baseline.coef * x1
    return baseline.intercept + baseline.coef * (x1 > baseline.threshold)


def oracle_ite(spec: SyntheticSpec, X) -> np.ndarray:
    """True effect of every arm at every row of X (n x K).

    Purchase sparsity scales the expected effect by (1 - sparsity); the values
    here are the effects before zeroing.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    x1 = X[:, 0]
    return np.column_stack([_effect(effect, x1) for effect in spec.effects])


def generate(spec: SyntheticSpec) -> Tuple[Dataset, np.ndarray]:
    """Draw a dataset and its ground-truth per-arm effects.

    The outcome is revenue; a conversion column (outcome > 0) rides along
    as an extra outcome.
    """
    rng = np.random.default_rng(spec.seed)
    X = rng.uniform(-1.0, 1.0, size=(spec.n, spec.p))
    W = rng.choice(len(spec.arm_probs), size=spec.n, p=spec.arm_probs)
    noise = rng.normal(0.0, 1.0, size=spec.n)
    keep = rng.random(spec.n) >= spec.purchase_sparsity

    true_ite = oracle_ite(spec, X)
    treated = W > 0
    effect = np.zeros(spec.n)
    effect[treated] = true_ite[treated, W[treated] - 1]
    Y = (_baseline(spec.baseline, X[:, 0]) + effect + spec.noise_sd * noise) * keep

    labels = spec.arm_labels or ["control"] + [f"arm{k}" for k in range(1, spec.num_arms + 1)]
    ds = Dataset(
        unit_ids=np.arange(spec.n),
        covariates=X,
        covariate_names=tuple(f"x{j}" for j in range(1, spec.p + 1)),
        treatment=W,
        outcome=Y,
        outcome_kind=OutcomeKind.REVENUE,
        arm_names=dict(enumerate(labels)),
        extra_outcomes={OutcomeKind.CONVERSION: (Y > 0).astype(np.float64)},
        name="synthetic",
    )
    logger.info(f"Generated synthetic data: n={spec.n}, p={spec.p}, K={spec.num_arms}")
    return ds, true_ite
