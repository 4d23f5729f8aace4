"""Causal forest: local centering, gradient-based honest trees, kernel-weighted ITE.

Splits are chosen on pseudo-outcomes built from the parent's effect estimate
(tau_P = sum W~Y~ / sum W~^2); prediction weights every honest training unit
by how often it shares a leaf with the target point.
"""
import logging
from dataclasses import dataclass
from functools import partial
from typing import List, Optional

import numpy as np
from joblib import Parallel, delayed
from pydantic import BaseModel

from dataset import Dataset, OutcomeKind
from errors import CompatibilityError, CompositionError, FitError, OverlapError, PreconditionError
from regression_forest import fit_regression_forest, predict_oob
from trees import ForestConfig, Tree, derive_seed, draw_rows, grow_tree, split_counts

logger = logging.getLogger(__name__)

PROPENSITY_CLAMP = (0.01, 0.99)
MAX_CLAMPED_SHARE = 0.05

IMPORTANCE_MAX_DEPTH = 4
IMPORTANCE_DECAY_EXPONENT = 2.0

FORMAT_VERSION = 1


@dataclass(frozen=True)
class CenteredData:
    """Outcome and treatment residuals against out-of-bag nuisance estimates."""
    X: np.ndarray
    y_resid: np.ndarray
    w_resid: np.ndarray
    e_hat: np.ndarray
    clamped: int = 0
    oob_fallbacks: int = 0

    def __post_init__(self):
        n = self.X.shape[0]
        for name in ("y_resid", "w_resid", "e_hat"):
            if getattr(self, name).shape != (n,):
                raise CompatibilityError(f"{name} length does not match {n} covariate rows")
        if np.any(self.e_hat <= 0.0) or np.any(self.e_hat >= 1.0):
            raise OverlapError("propensity estimates must lie strictly inside (0, 1)")

    @property
    def n(self) -> int:
        return self.X.shape[0]


class Fingerprint(BaseModel):
    """Identifies the data a causal forest was trained on."""
    n: int
    p: int
    seed: int
    outcome_kind: OutcomeKind
    arm_label: str


@dataclass
class CausalForest:
    trees: List[Tree]
    split_counts: np.ndarray
    config: ForestConfig
    fingerprint: Fingerprint

    def to_dict(self) -> dict:
        return {
            "kind": "causal_forest",
            "version": FORMAT_VERSION,
            "config": self.config.model_dump(),
            "fingerprint": self.fingerprint.model_dump(mode="json"),
            "split_counts": self.split_counts.tolist(),
            "trees": [tree.to_dict() for tree in self.trees],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CausalForest":
        if data.get("kind") != "causal_forest" or data.get("version") != FORMAT_VERSION:
            raise CompatibilityError("not a causal forest document of a supported version")
        fingerprint = Fingerprint(**data["fingerprint"])
        counts = np.asarray(data["split_counts"], dtype=np.int64).reshape(fingerprint.p, -1)
        return cls(
            trees=[Tree.from_dict(t) for t in data["trees"]],
            split_counts=counts,
            config=ForestConfig(**data["config"]),
            fingerprint=fingerprint,
        )


@dataclass(frozen=True)
class ItePrediction:
    tau_hat: np.ndarray
    arm: int
    fingerprint: Fingerprint
    degenerate: int = 0


def center(ds: Dataset, nuisance_cfg: ForestConfig, n_jobs: int = 1) -> CenteredData:
    """Residualize outcome and treatment on out-of-bag regression forests.

    Propensities are clamped to [0.01, 0.99]; clamping more than 5% of the
    units means assignment is not randomized with overlap.
    """
    codes = set(np.unique(ds.treatment).tolist())
    if not codes <= {0, 1}:
        raise PreconditionError(f"{ds.name}: centering needs binary treatment codes, got {sorted(codes)}")
    if codes != {0, 1}:
        raise CompositionError(f"{ds.name}: centering needs both treated and control units")

    W = ds.treatment.astype(np.float64)
    y_cfg = nuisance_cfg.model_copy(update={"seed": derive_seed(nuisance_cfg.seed, 0)})
    w_cfg = nuisance_cfg.model_copy(update={"seed": derive_seed(nuisance_cfg.seed, 1)})
    y_hat, y_fallbacks = predict_oob(fit_regression_forest(ds.covariates, ds.outcome, y_cfg, n_jobs), True)
    e_raw, w_fallbacks = predict_oob(fit_regression_forest(ds.covariates, W, w_cfg, n_jobs), True)

    low, high = PROPENSITY_CLAMP
    clamped = int(np.sum((e_raw < low) | (e_raw > high)))
    if clamped > MAX_CLAMPED_SHARE * ds.n:
        raise OverlapError(
            f"{ds.name}: {clamped} of {ds.n} propensities outside [{low}, {high}]; "
            "treatment does not look randomized"
        )
    if clamped:
        logger.warning(f"⚠️ {ds.name}: clamped {clamped} propensity estimates")
    e_hat = np.clip(e_raw, low, high)

    y_resid = ds.outcome - y_hat
    w_resid = W - e_hat
    bound = 5.0 / np.sqrt(ds.n)
    for label, resid in (("outcome", y_resid), ("treatment", w_resid)):
        if abs(resid.mean()) >= bound:
            logger.warning(f"⚠️ {ds.name}: mean {label} residual {resid.mean():.4f} exceeds {bound:.4f}")

    return CenteredData(
        X=ds.covariates,
        y_resid=y_resid,
        w_resid=w_resid,
        e_hat=e_hat,
        clamped=clamped,
        oob_fallbacks=y_fallbacks + w_fallbacks,
    )


def pseudo_outcomes(y_resid: np.ndarray, w_resid: np.ndarray, rows: np.ndarray) -> Optional[np.ndarray]:
    """Gradient pseudo-outcomes of a parent node, or None if its effect is unidentified."""
    w = w_resid[rows]
    y = y_resid[rows]
    sww = float(np.dot(w, w))
    if sww <= 0.0:
        return None
    tau = float(np.dot(w, y)) / sww
    return w * (y - w * tau) / (sww / len(rows))


def _grow_causal_tree(cd: CenteredData, cfg: ForestConfig, tree_index: int) -> Tree:
    split_rows, honest_rows, _ = draw_rows(cd.n, cfg, tree_index)
    response = partial(pseudo_outcomes, cd.y_resid, cd.w_resid)
    tree = grow_tree(cd.X, split_rows, honest_rows, response, cfg, tree_index, num_values=2)
    wy = cd.w_resid * cd.y_resid
    ww = cd.w_resid ** 2
    for leaf, rows in tree.leaf_rows.items():
        # leaf moments: sum W~Y~ / |L| and sum W~^2 / |L|
        tree.value[leaf, 0] = wy[rows].sum() / len(rows)
        tree.value[leaf, 1] = ww[rows].sum() / len(rows)
    return tree


def fit_causal_forest(
    cd: CenteredData,
    cfg: ForestConfig,
    n_jobs: int = 1,
    outcome_kind: OutcomeKind = OutcomeKind.REVENUE,
    arm_label: str = "treated",
) -> CausalForest:
    """Grow honest causal trees on the centered data.

    Args:
        cd: Centered training data
        cfg: Forest hyperparameters
        n_jobs: joblib worker count for tree growing
        outcome_kind: Recorded in the fingerprint
        arm_label: Recorded in the fingerprint

    Returns:
        Fitted CausalForest
    """
    if float(np.dot(cd.w_resid, cd.w_resid)) <= 0.0:
        raise FitError("treatment residuals are all zero; no effect is identifiable")
    cfg.check_size(cd.n)
    trees = Parallel(n_jobs=n_jobs)(
        delayed(_grow_causal_tree)(cd, cfg, t) for t in range(cfg.num_trees)
    )
    p = cd.X.shape[1]
    forest = CausalForest(
        trees=trees,
        split_counts=split_counts(trees, p),
        config=cfg,
        fingerprint=Fingerprint(n=cd.n, p=p, seed=cfg.seed, outcome_kind=outcome_kind, arm_label=arm_label),
    )
    logger.info(
        f"Causal forest fitted for '{arm_label}': {cfg.num_trees} trees, "
        f"{int(forest.split_counts.sum())} splits, n={cd.n}"
    )
    return forest


def predict_ite(f: CausalForest, cd_train: Optional[CenteredData], Xnew) -> ItePrediction:
    """Forest-weighted effect estimate for every row of Xnew.

    tau(x) = sum_i a_i(x) W~_i Y~_i / sum_i a_i(x) W~_i^2, with a_i(x) the
    average over trees of 1{i in leaf(x)} / |leaf(x)|. The leaf moments are
    taken from the training data at fit time, so `cd_train` may be None for a
    loaded model. Points whose weighted W~^2 vanishes get 0.
    """
    Xnew = np.asarray(Xnew, dtype=np.float64)
    if Xnew.ndim != 2 or Xnew.shape[1] != f.fingerprint.p:
        raise CompatibilityError(f"expected a matrix with {f.fingerprint.p} columns, got shape {Xnew.shape}")
    if cd_train is not None and cd_train.n != f.fingerprint.n:
        raise CompatibilityError(f"forest was trained on {f.fingerprint.n} units, centered data has {cd_train.n}")

    numerator = np.zeros(Xnew.shape[0])
    denominator = np.zeros(Xnew.shape[0])
    for tree in f.trees:
        leaves = tree.apply(Xnew)
        numerator += tree.value[leaves, 0]
        denominator += tree.value[leaves, 1]

    degenerate = denominator <= 0.0
    tau = np.divide(numerator, denominator, out=np.zeros_like(numerator), where=~degenerate)
    if degenerate.any():
        logger.warning(f"⚠️ {int(degenerate.sum())} points fell only in leaves without treatment variation")
    return ItePrediction(tau_hat=tau, arm=1, fingerprint=f.fingerprint, degenerate=int(degenerate.sum()))


def forest_weights(f: CausalForest, x) -> np.ndarray:
    """Kernel weights a_i(x) over the training units for a single point."""
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    if x.shape[1] != f.fingerprint.p:
        raise CompatibilityError(f"expected {f.fingerprint.p} covariates, got {x.shape[1]}")
    if any(not tree.leaf_rows for tree in f.trees):
        raise CompatibilityError("leaf memberships are only available for forests fitted in this session")
    weights = np.zeros(f.fingerprint.n)
    for tree in f.trees:
        rows = tree.leaf_rows[int(tree.apply(x)[0])]
        weights[rows] += 1.0 / len(rows)
    return weights / len(f.trees)


def variable_importance(f: CausalForest) -> np.ndarray:
    """Depth-weighted share of splits per variable, normalized to sum to 1.

    score(v) = sum over depths d = 1..4 of d^-2 * (splits on v at d / splits at d).
    A forest without splits scores all zeros.
    """
    counts = f.split_counts[:, :IMPORTANCE_MAX_DEPTH].astype(np.float64)
    scores = np.zeros(counts.shape[0])
    for d in range(counts.shape[1]):
        total = counts[:, d].sum()
        if total > 0:
            scores += (d + 1) ** -IMPORTANCE_DECAY_EXPONENT * counts[:, d] / total
    if scores.sum() > 0:
        scores /= scores.sum()
    return scores
