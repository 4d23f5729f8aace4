"""Honest binary trees shared by the regression and causal forests.

A tree is stored as parallel node arrays (feature, threshold, children, depth,
per-node values). Growth is greedy: at every node a response vector is computed
for the split-half units and the (variable, threshold) maximizing
sum over children of (sum of response)^2 / child size is chosen. For the
regression forest the response is the centered outcome, which makes the
criterion equivalent to variance reduction; the causal forest passes its
pseudo-outcomes.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from errors import CompatibilityError, SizingError

logger = logging.getLogger(__name__)

# Relative gain below which a node is not split.
GAIN_TOLERANCE = 1e-12

# SeedSequence tags keeping per-tree and per-node streams apart.
_TREE_STREAM = 0
_NODE_STREAM = 1


class ForestConfig(BaseModel):
    """Hyperparameters shared by causal and nuisance forests.

    `max_depth=0` gives single-leaf trees; `honesty=False` lets the split half
    also populate the leaves.
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    num_trees: int = Field(default=1500, gt=0)
    subsample_fraction: float = Field(default=0.5, gt=0.0, le=1.0)
    honesty: bool = True
    honesty_fraction: float = Field(default=0.5, gt=0.0, lt=1.0)
    min_node_size: int = Field(default=5, gt=0)
    mtry: Optional[int] = Field(default=None, gt=0)
    seed: int = Field(default=0, ge=0)
    max_depth: Optional[int] = Field(default=None, ge=0)

    def resolved_mtry(self, p: int) -> int:
        return min(p, self.mtry or math.ceil(math.sqrt(p)))

    def sample_sizes(self, n: int) -> Tuple[int, int, int]:
        """(subsample, split half, honest half) sizes for n training units."""
        subsample = min(n, max(1, int(self.subsample_fraction * n)))
        if not self.honesty:
            return subsample, subsample, subsample
        honest = int(self.honesty_fraction * subsample)
        return subsample, subsample - honest, honest

    def check_size(self, n: int) -> None:
        _, split, honest = self.sample_sizes(n)
        if honest < self.min_node_size or split < 1:
            raise SizingError(
                f"{n} units leave {honest} honest units per tree, below min_node_size={self.min_node_size}"
            )


def nuisance_config(**overrides) -> ForestConfig:
    """Defaults for the outcome and propensity forests used in centering."""
    values = {"num_trees": 500}
    values.update(overrides)
    return ForestConfig(**values)


def derive_seed(seed: int, *keys: int) -> int:
    """Independent, reproducible child seed for (seed, keys)."""
    state = np.random.SeedSequence([seed, *keys]).generate_state(1, dtype=np.uint32)
    return int(state[0])


@dataclass
class Tree:
    """Node arrays of one fitted tree.

    `value` holds one row per node; only leaf rows are meaningful.
    `leaf_rows` and `subsample` index the training matrix and are kept in
    memory only (not serialized).
    """
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    depth: np.ndarray
    value: np.ndarray
    leaf_rows: Dict[int, np.ndarray] = field(default_factory=dict)
    subsample: Optional[np.ndarray] = None

    @property
    def num_nodes(self) -> int:
        return len(self.feature)

    def leaves(self) -> np.ndarray:
        return np.flatnonzero(self.feature < 0)

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf node id reached by every row of X."""
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = np.flatnonzero(self.feature[node] >= 0)
        while active.size:
            current = node[active]
            go_left = X[active, self.feature[current]] <= self.threshold[current]
            node[active] = np.where(go_left, self.left[current], self.right[current])
            active = active[self.feature[node[active]] >= 0]
        return node

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "depth": self.depth.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Tree":
        try:
            tree = cls(
                feature=np.asarray(data["feature"], dtype=np.int64),
                threshold=np.asarray(data["threshold"], dtype=np.float64),
                left=np.asarray(data["left"], dtype=np.int64),
                right=np.asarray(data["right"], dtype=np.int64),
                depth=np.asarray(data["depth"], dtype=np.int64),
                value=np.asarray(data["value"], dtype=np.float64),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise CompatibilityError(f"malformed tree record: {e}") from e
        n = tree.num_nodes
        if any(len(a) != n for a in (tree.threshold, tree.left, tree.right, tree.depth, tree.value)):
            raise CompatibilityError("malformed tree record: node arrays differ in length")
        return tree


def split_counts(trees: List[Tree], p: int) -> np.ndarray:
    """p x depth matrix; column d counts splits at depth d+1 (root is depth 1)."""
    max_depth = max((int(t.depth[t.feature >= 0].max()) + 1 for t in trees if np.any(t.feature >= 0)), default=0)
    counts = np.zeros((p, max_depth), dtype=np.int64)
    for tree in trees:
        internal = tree.feature >= 0
        np.add.at(counts, (tree.feature[internal], tree.depth[internal]), 1)
    return counts


def draw_rows(n: int, cfg: ForestConfig, tree_index: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Subsample without replacement and cut it into split and honest halves."""
    rng = np.random.default_rng([cfg.seed, tree_index, _TREE_STREAM])
    size, split_size, _ = cfg.sample_sizes(n)
    subsample = rng.choice(n, size=size, replace=False)
    if not cfg.honesty:
        rows = np.sort(subsample)
        return rows, rows, subsample
    split_rows = np.sort(subsample[:split_size])
    honest_rows = np.sort(subsample[split_size:])
    return split_rows, honest_rows, subsample


def best_split(
    X: np.ndarray,
    split_rows: np.ndarray,
    honest_rows: np.ndarray,
    response: np.ndarray,
    candidates: np.ndarray,
    min_node_size: int,
) -> Optional[Tuple[int, float]]:
    """Best (variable, threshold) over midpoints of consecutive unique values.

    A split is admissible only if both children keep at least `min_node_size`
    honest units. Ties go to the lower variable index, then the lower threshold.
    """
    total = float(np.dot(response, response))
    if total <= 0.0:
        return None
    n = len(split_rows)
    total_sum = response.sum()
    best_gain, best = -np.inf, None
    for var in candidates:
        values = X[split_rows, var]
        levels, inverse = np.unique(values, return_inverse=True)
        if len(levels) < 2:
            continue
        sums = np.bincount(inverse, weights=response, minlength=len(levels))
        counts = np.bincount(inverse, minlength=len(levels))
        left_sum = np.cumsum(sums)[:-1]
        left_n = np.cumsum(counts)[:-1]
        thresholds = (levels[:-1] + levels[1:]) / 2.0
        honest_values = np.sort(X[honest_rows, var])
        honest_left = np.searchsorted(honest_values, thresholds, side="right")
        valid = (honest_left >= min_node_size) & (len(honest_values) - honest_left >= min_node_size)
        if not np.any(valid):
            continue
        gain = left_sum ** 2 / left_n + (total_sum - left_sum) ** 2 / (n - left_n)
        gain = np.where(valid, gain, -np.inf)
        k = int(np.argmax(gain))
        if gain[k] > best_gain:
            best_gain, best = float(gain[k]), (int(var), float(thresholds[k]))
    if best is None or best_gain <= GAIN_TOLERANCE * total:
        return None
    return best


def grow_tree(
    X: np.ndarray,
    split_rows: np.ndarray,
    honest_rows: np.ndarray,
    response: Callable[[np.ndarray], Optional[np.ndarray]],
    cfg: ForestConfig,
    tree_index: int,
    num_values: int = 1,
) -> Tree:
    """Grow one tree greedily.

    Args:
        X: Training covariates
        split_rows: Units that choose splits
        honest_rows: Units that populate leaves (same array when honesty is off)
        response: Maps a node's split rows to the response vector, or None
            when the node must stay a leaf
        cfg: Forest hyperparameters
        tree_index: Position of the tree in the forest, part of every RNG key
        num_values: Width of the per-node value rows

    Returns:
        Tree with `leaf_rows` set and zero values (callers fill leaf values)
    """
    p = X.shape[1]
    mtry = cfg.resolved_mtry(p)
    feature: List[int] = []
    threshold: List[float] = []
    left: List[int] = []
    right: List[int] = []
    depth: List[int] = []
    leaf_rows: Dict[int, np.ndarray] = {}

    def new_node(d: int) -> int:
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        depth.append(d)
        return len(feature) - 1

    stack = [(new_node(0), split_rows, honest_rows)]
    while stack:
        node, s_rows, h_rows = stack.pop()
        split = None
        can_grow = (
            (cfg.max_depth is None or depth[node] < cfg.max_depth)
            and len(s_rows) >= 2
            and len(h_rows) >= 2 * cfg.min_node_size
        )
        if can_grow:
            target = response(s_rows)
            if target is not None:
                rng = np.random.default_rng([cfg.seed, tree_index, _NODE_STREAM, node])
                candidates = np.sort(rng.choice(p, size=mtry, replace=False))
                split = best_split(X, s_rows, h_rows, target, candidates, cfg.min_node_size)
        if split is None:
            leaf_rows[node] = h_rows
            continue

        var, thr = split
        feature[node] = var
        threshold[node] = thr
        left[node] = new_node(depth[node] + 1)
        right[node] = new_node(depth[node] + 1)
        s_left = X[s_rows, var] <= thr
        s_left_rows, s_right_rows = s_rows[s_left], s_rows[~s_left]
        if h_rows is s_rows:
            h_left_rows, h_right_rows = s_left_rows, s_right_rows
        else:
            h_left = X[h_rows, var] <= thr
            h_left_rows, h_right_rows = h_rows[h_left], h_rows[~h_left]
        # left child is popped first
        stack.append((right[node], s_right_rows, h_right_rows))
        stack.append((left[node], s_left_rows, h_left_rows))

    return Tree(
        feature=np.asarray(feature, dtype=np.int64),
        threshold=np.asarray(threshold, dtype=np.float64),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        depth=np.asarray(depth, dtype=np.int64),
        value=np.zeros((len(feature), num_values), dtype=np.float64),
        leaf_rows=leaf_rows,
    )
