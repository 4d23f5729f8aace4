"""Honest regression forest for the nuisance functions E[Y|X] and E[W|X].

Only used for local centering, so the interesting output is the out-of-bag
prediction: unit i is predicted by the trees whose subsample excludes it.
"""
import logging
from dataclasses import dataclass
from functools import partial
from typing import List, Optional, Tuple, Union

import numpy as np
from joblib import Parallel, delayed

from errors import CompatibilityError, SizingError
from trees import ForestConfig, Tree, draw_rows, grow_tree, nuisance_config, split_counts

logger = logging.getLogger(__name__)

__all__ = [
    "ForestConfig",
    "RegressionForest",
    "fit_regression_forest",
    "nuisance_config",
    "predict",
    "predict_oob",
]

FORMAT_VERSION = 1


@dataclass
class RegressionForest:
    trees: List[Tree]
    config: ForestConfig
    n_train: int
    p: int
    # training covariates, kept for out-of-bag routing
    X_train: Optional[np.ndarray] = None

    def split_counts(self) -> np.ndarray:
        return split_counts(self.trees, self.p)

    def to_dict(self) -> dict:
        return {
            "kind": "regression_forest",
            "version": FORMAT_VERSION,
            "config": self.config.model_dump(),
            "n_train": self.n_train,
            "p": self.p,
            "trees": [tree.to_dict() for tree in self.trees],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RegressionForest":
        if data.get("kind") != "regression_forest" or data.get("version") != FORMAT_VERSION:
            raise CompatibilityError("not a regression forest document of a supported version")
        return cls(
            trees=[Tree.from_dict(t) for t in data["trees"]],
            config=ForestConfig(**data["config"]),
            n_train=int(data["n_train"]),
            p=int(data["p"]),
        )


def _centered_outcome(y: np.ndarray, rows: np.ndarray) -> np.ndarray:
    values = y[rows]
    return values - values.mean()


def _grow_regression_tree(X: np.ndarray, y: np.ndarray, cfg: ForestConfig, tree_index: int) -> Tree:
    split_rows, honest_rows, subsample = draw_rows(X.shape[0], cfg, tree_index)
    tree = grow_tree(X, split_rows, honest_rows, partial(_centered_outcome, y), cfg, tree_index)
    for leaf, rows in tree.leaf_rows.items():
        tree.value[leaf, 0] = y[rows].mean()
    tree.subsample = subsample.astype(np.int32)
    return tree


def fit_regression_forest(X, y, cfg: ForestConfig, n_jobs: int = 1) -> RegressionForest:
    """Fit an honest regression forest on subsamples drawn without replacement.

    Args:
        X: n x p covariate matrix
        y: n targets
        cfg: Forest hyperparameters
        n_jobs: joblib worker count for tree growing

    Returns:
        Fitted forest; deterministic given (cfg.seed, input order)
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] < 1:
        raise CompatibilityError("X must be an n x p matrix with p >= 1")
    if y.shape != (X.shape[0],):
        raise CompatibilityError(f"y has shape {y.shape}, expected ({X.shape[0]},)")
    if X.shape[0] < 1:
        raise SizingError("cannot fit a forest on zero units")
    cfg.check_size(X.shape[0])

    trees = Parallel(n_jobs=n_jobs)(
        delayed(_grow_regression_tree)(X, y, cfg, t) for t in range(cfg.num_trees)
    )
    logger.debug(f"Regression forest fitted: {cfg.num_trees} trees on n={X.shape[0]}")
    return RegressionForest(trees=trees, config=cfg, n_train=X.shape[0], p=X.shape[1], X_train=X)


def predict(f: RegressionForest, Xnew) -> np.ndarray:
    """Mean of per-tree leaf means."""
    Xnew = np.asarray(Xnew, dtype=np.float64)
    if Xnew.ndim != 2 or Xnew.shape[1] != f.p:
        raise CompatibilityError(f"expected a matrix with {f.p} columns, got shape {Xnew.shape}")
    total = np.zeros(Xnew.shape[0])
    for tree in f.trees:
        total += tree.value[tree.apply(Xnew), 0]
    return total / len(f.trees)


def predict_oob(f: RegressionForest, return_fallbacks: bool = False) -> Union[np.ndarray, Tuple[np.ndarray, int]]:
    """Out-of-bag prediction for every training unit.

    A unit that is in-bag for every tree falls back to the full-forest
    prediction; the number of such units is logged and optionally returned.
    """
    if f.X_train is None or any(tree.subsample is None for tree in f.trees):
        raise CompatibilityError("out-of-bag prediction needs a forest fitted in this session")
    n = f.n_train
    sums = np.zeros(n)
    counts = np.zeros(n, dtype=np.int64)
    for tree in f.trees:
        out_of_bag = np.ones(n, dtype=bool)
        out_of_bag[tree.subsample] = False
        rows = np.flatnonzero(out_of_bag)
        if rows.size == 0:
            continue
        sums[rows] += tree.value[tree.apply(f.X_train[rows]), 0]
        counts[rows] += 1

    values = np.divide(sums, counts, out=np.zeros(n), where=counts > 0)
    missing = np.flatnonzero(counts == 0)
    if missing.size:
        logger.warning(f"⚠️ {missing.size} units are in-bag for every tree; using full-forest predictions")
        values[missing] = predict(f, f.X_train[missing])
    if return_fallbacks:
        return values, int(missing.size)
    return values
