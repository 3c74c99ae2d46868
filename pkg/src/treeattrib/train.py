"""Desk-scale training of CART trees, random forests, and gradient-boosted
trees, plus impurity-based global importance.

All randomness flows through numpy's PCG64 generator seeded from
``TrainConfig.seed`` via SeedSequence splitting: tree i of a forest uses the
i-th spawned child stream, so results are bit-identical for a given seed and
independent of how many worker threads run the tree fits.

Split search scans thresholds at midpoints between consecutive distinct
sorted feature values and keeps the candidate with the largest cover-weighted
impurity decrease; ties go to the lowest feature index, then the lowest
threshold.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .dataset import Dataset
from .errors import SplitError, TrainingError, UnsupportedModelError
from .model import (
    KIND_BOOSTED,
    KIND_FOREST,
    SPACE_PROBABILITY,
    Ensemble,
    Tree,
    sigmoid,
)

#: Impurity decreases at or below this are treated as zero.  Genuine binary
#: gini / unit-scale variance decreases are orders of magnitude larger; this
#: only absorbs float chatter on effectively constant columns.
MIN_DECREASE = 1e-12

GINI = "gini"
VARIANCE = "variance"


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters shared by the CART, forest, and boosting trainers.

    ``max_depth=None`` means unbounded depth.  ``max_features`` is "all",
    "sqrt", or an explicit count of candidate features drawn per node.
    ``learning_rate`` only affects boosting.
    """

    n_trees: int = 100
    max_depth: int | None = None
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    max_features: int | str = "all"
    learning_rate: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise TrainingError("n_trees must be >= 1")
        if self.max_depth is not None and self.max_depth < 1:
            raise TrainingError("max_depth must be >= 1 (or None)")
        if self.min_samples_leaf < 1:
            raise TrainingError("min_samples_leaf must be >= 1")
        if self.min_samples_split < 2:
            raise TrainingError("min_samples_split must be >= 2")
        if not 0.0 < self.learning_rate <= 1.0:
            raise TrainingError("learning_rate must be in (0, 1]")
        if isinstance(self.max_features, str):
            if self.max_features not in ("all", "sqrt"):
                raise TrainingError(f"unknown max_features {self.max_features!r}")
        elif self.max_features < 1:
            raise TrainingError("max_features count must be >= 1")


def forest_defaults(seed: int = 0) -> TrainConfig:
    """Defaults for random forests: 100 trees, sqrt feature sampling,
    depth bounded only by leaf size."""
    return TrainConfig(n_trees=100, max_depth=None, min_samples_leaf=1,
                       max_features="sqrt", seed=seed)


def boosted_defaults(seed: int = 0) -> TrainConfig:
    """Defaults for gradient boosting: 100 depth-3 trees, learning rate 0.1."""
    return TrainConfig(n_trees=100, max_depth=3, learning_rate=0.1,
                       max_features="all", seed=seed)


@dataclass(frozen=True)
class SplitCandidate:
    feature_index: int
    threshold: float
    impurity_decrease: float
    left_count: int
    right_count: int


def gini(labels) -> float:
    """Binary gini impurity 2*p*(1-p), p the class-1 fraction."""
    labels = np.asarray(labels)
    if labels.size == 0:
        raise ValueError("gini of an empty label set is undefined")
    p = float(np.mean(labels))
    return 2.0 * p * (1.0 - p)


def _n_candidate_features(d: int, max_features) -> int:
    if max_features == "all":
        return d
    if max_features == "sqrt":
        return max(1, int(math.sqrt(d)))
    return min(d, int(max_features))


def _impurity(y: np.ndarray, criterion: str) -> float:
    if criterion == GINI:
        p = float(np.mean(y))
        return 2.0 * p * (1.0 - p)
    v = float(np.mean(y * y) - np.mean(y) ** 2)
    return max(v, 0.0)


def best_split(X, y, candidate_features, config: TrainConfig,
               criterion: str = GINI) -> SplitCandidate | None:
    """Best threshold over the candidate features for the rows (X, y).

    Returns None when no candidate yields a positive impurity decrease while
    respecting ``min_samples_leaf`` on both children.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = y.shape[0]
    parent = _impurity(y, criterion)
    best: SplitCandidate | None = None
    min_leaf = config.min_samples_leaf

    for f in sorted(int(f) for f in candidate_features):
        xs = X[:, f]
        order = np.argsort(xs, kind="stable")
        xs_s = xs[order]
        ys = y[order]
        # split after position i (left gets i+1 rows) wherever the sorted
        # feature value strictly increases
        boundaries = np.nonzero(xs_s[:-1] != xs_s[1:])[0]
        if boundaries.size == 0:
            continue
        k = boundaries + 1
        ok = (k >= min_leaf) & (n - k >= min_leaf)
        if not ok.any():
            continue
        k = k[ok]
        boundaries = boundaries[ok]
        csum = np.cumsum(ys)
        left_sum = csum[boundaries]
        right_sum = csum[-1] - left_sum
        if criterion == GINI:
            pl = left_sum / k
            pr = right_sum / (n - k)
            child = (k * (2.0 * pl * (1.0 - pl)) + (n - k) * (2.0 * pr * (1.0 - pr))) / n
        else:
            csum2 = np.cumsum(ys * ys)
            left_sq = csum2[boundaries]
            right_sq = csum2[-1] - left_sq
            vl = np.maximum(left_sq / k - (left_sum / k) ** 2, 0.0)
            vr = np.maximum(right_sq / (n - k) - (right_sum / (n - k)) ** 2, 0.0)
            child = (k * vl + (n - k) * vr) / n
        decrease = parent - child
        pos = int(np.argmax(decrease))
        if decrease[pos] <= MIN_DECREASE:
            continue
        if best is None or decrease[pos] > best.impurity_decrease:
            b = boundaries[pos]
            thr = (xs_s[b] + xs_s[b + 1]) / 2.0
            best = SplitCandidate(feature_index=f, threshold=float(thr),
                                  impurity_decrease=float(decrease[pos]),
                                  left_count=int(k[pos]),
                                  right_count=int(n - k[pos]))
    return best


class _TreeBuilder:
    """Grows one tree via recursive greedy splitting, recording covers,
    node means, and split gains in preorder."""

    def __init__(self, X, y, config, criterion, rng):
        self.X = X
        self.y = y
        self.config = config
        self.criterion = criterion
        self.rng = rng
        self.d = X.shape[1]
        self.n_candidates = _n_candidate_features(self.d, config.max_features)
        self.feature = []
        self.threshold = []
        self.left = []
        self.right = []
        self.cover = []
        self.value = []
        self.gain = []
        self.leaf_of_row: np.ndarray | None = None

    def build(self, rows: np.ndarray, track_rows: bool = False) -> Tree:
        if track_rows:
            self.leaf_of_row = np.zeros(len(rows), dtype=np.int64)
        self._grow(rows, depth=0, row_pos=np.arange(len(rows)) if track_rows else None)
        return Tree(feature=np.array(self.feature, dtype=np.int64),
                    threshold=np.array(self.threshold),
                    left=np.array(self.left, dtype=np.int64),
                    right=np.array(self.right, dtype=np.int64),
                    cover=np.array(self.cover, dtype=np.int64),
                    value=np.array(self.value),
                    root=0,
                    gain=np.array(self.gain))

    def _new_node(self, rows) -> int:
        node = len(self.feature)
        self.feature.append(-1)
        self.threshold.append(np.nan)
        self.left.append(-1)
        self.right.append(-1)
        self.cover.append(len(rows))
        self.value.append(float(np.mean(self.y[rows])))
        self.gain.append(np.nan)
        return node

    def _grow(self, rows, depth, row_pos) -> int:
        node = self._new_node(rows)
        cfg = self.config
        y_rows = self.y[rows]
        stop = (
            (cfg.max_depth is not None and depth >= cfg.max_depth)
            or len(rows) < cfg.min_samples_split
            or np.all(y_rows == y_rows[0])
        )
        cand = None
        if not stop:
            if self.n_candidates >= self.d:
                features = range(self.d)
            else:
                features = self.rng.choice(self.d, size=self.n_candidates, replace=False)
            cand = best_split(self.X[rows], y_rows, features, cfg, self.criterion)
        if cand is None:
            if row_pos is not None:
                self.leaf_of_row[row_pos] = node
            return node
        go_left = self.X[rows, cand.feature_index] < cand.threshold
        self.feature[node] = cand.feature_index
        self.threshold[node] = cand.threshold
        self.gain[node] = cand.impurity_decrease
        self.left[node] = self._grow(rows[go_left], depth + 1,
                                     None if row_pos is None else row_pos[go_left])
        self.right[node] = self._grow(rows[~go_left], depth + 1,
                                      None if row_pos is None else row_pos[~go_left])
        return node


def _require_trainable(ds: Dataset) -> None:
    if ds.n < 2:
        raise TrainingError(f"dataset {ds.name!r} has {ds.n} rows; need at least 2")


def fit_cart(ds: Dataset, config: TrainConfig) -> Tree:
    """Grow a single gini CART classification tree on the full dataset."""
    _require_trainable(ds)
    rng = np.random.default_rng(np.random.SeedSequence(config.seed))
    builder = _TreeBuilder(ds.X, ds.y.astype(np.float64), config, GINI, rng)
    return builder.build(np.arange(ds.n))


def _fit_forest_tree(args):
    X, y, config, seed_seq, bootstrap = args
    rng = np.random.default_rng(seed_seq)
    n = X.shape[0]
    rows = rng.integers(0, n, size=n) if bootstrap else np.arange(n)
    builder = _TreeBuilder(X, y, config, GINI, rng)
    return builder.build(rows)


def fit_random_forest(ds: Dataset, config: TrainConfig, n_threads: int = 1,
                      bootstrap: bool = True) -> Ensemble:
    """Train a forest of gini CART trees on bootstrap samples.

    Candidate features are redrawn at every node.  Per-tree RNG streams are
    spawned from ``config.seed``, so the result is bit-identical for any
    ``n_threads``.  ``bootstrap=False`` is a test hook that grows every tree
    on the full sample; with ``max_features="all"`` and ``n_trees=1`` the
    result equals ``fit_cart`` exactly.
    """
    _require_trainable(ds)
    children = np.random.SeedSequence(config.seed).spawn(config.n_trees)
    y = ds.y.astype(np.float64)
    tasks = [(ds.X, y, config, child, bootstrap) for child in children]
    if n_threads > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            trees = tuple(pool.map(_fit_forest_tree, tasks))
    else:
        trees = tuple(_fit_forest_tree(t) for t in tasks)
    return Ensemble(kind=KIND_FOREST, base_score=0.0,
                    output_space=SPACE_PROBABILITY,
                    feature_names=ds.feature_names, trees=trees)


def _scale_tree_values(tree: Tree, factor: float) -> Tree:
    return Tree(feature=tree.feature, threshold=tree.threshold, left=tree.left,
                right=tree.right, cover=tree.cover,
                value=np.asarray(tree.value) * factor,
                root=tree.root, gain=tree.gain)


def fit_gbt(ds: Dataset, config: TrainConfig) -> Ensemble:
    """Gradient boosting for binary log loss.

    Starts from the log-odds of the class-1 prevalence, then each round fits
    a variance-criterion regression tree to the residuals
    ``y - sigmoid(margin)`` and adds its learning-rate-scaled leaf means to
    the margin.  Tree values therefore live in log-odds contribution space;
    the returned ensemble predicts probabilities.
    """
    _require_trainable(ds)
    p = float(np.mean(ds.y))
    if p in (0.0, 1.0):
        raise TrainingError(
            "gradient boosting needs both classes in the training data "
            "(single-class prevalence gives an infinite base log-odds)"
        )
    base = math.log(p / (1.0 - p))
    margin = np.full(ds.n, base)
    rounds = np.random.SeedSequence(config.seed).spawn(config.n_trees)
    trees = []
    for child in rounds:
        rng = np.random.default_rng(child)
        residual = ds.y - sigmoid(margin)
        builder = _TreeBuilder(ds.X, residual, config, VARIANCE, rng)
        tree = builder.build(np.arange(ds.n), track_rows=True)
        tree = _scale_tree_values(tree, config.learning_rate)
        margin = margin + np.asarray(tree.value)[builder.leaf_of_row]
        trees.append(tree)
    return Ensemble(kind=KIND_BOOSTED, base_score=base,
                    output_space=SPACE_PROBABILITY,
                    feature_names=ds.feature_names, trees=tuple(trees))


def mdi_importance(ens: Ensemble) -> np.ndarray:
    """Mean decrease in impurity per feature.

    Sums (node cover / root cover) * recorded impurity decrease over every
    node splitting on the feature, averaged over trees.  Requires the trees
    to carry training-time gains; models reloaded from disk do not.
    """
    d = ens.n_features
    total = np.zeros(d)
    for i, tree in enumerate(ens.trees):
        if tree.gain is None:
            raise UnsupportedModelError(
                f"tree {i} carries no training metadata; impurity importance "
                "is only available on freshly trained models"
            )
        root_cover = float(tree.cover[tree.root])
        for node in range(tree.n_nodes):
            if not tree.is_leaf(node):
                total[int(tree.feature[node])] += (
                    float(tree.cover[node]) / root_cover * float(tree.gain[node])
                )
    return total / len(ens.trees)


def train_test_split(ds: Dataset, test_fraction: float, seed: int):
    """Deterministic stratified partition into (train, test).

    The test size is round(n * test_fraction) (half away from zero),
    distributed over classes proportionally (largest fractional part first).
    Raises SplitError if any class would end up empty in either part.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must be in (0, 1)")
    n = ds.n
    n_test = int(math.floor(n * test_fraction + 0.5))
    if n_test < 1 or n_test >= n:
        raise SplitError(
            f"test fraction {test_fraction} leaves an empty part for {n} rows"
        )
    classes = sorted(set(ds.y.tolist()))
    counts = {c: int(np.sum(ds.y == c)) for c in classes}
    quotas = {c: counts[c] * n_test / n for c in classes}
    alloc = {c: int(math.floor(quotas[c])) for c in classes}
    remainder = n_test - sum(alloc.values())
    for c in sorted(classes, key=lambda c: (-(quotas[c] - alloc[c]), c)):
        if remainder == 0:
            break
        alloc[c] += 1
        remainder -= 1
    for c in classes:
        if alloc[c] < 1 or counts[c] - alloc[c] < 1:
            raise SplitError(
                f"class {c} would have an empty stratum "
                f"(test {alloc[c]} of {counts[c]} rows)"
            )
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    test_rows = []
    for c in classes:
        members = np.nonzero(ds.y == c)[0]
        perm = rng.permutation(members)
        test_rows.extend(perm[: alloc[c]].tolist())
    mask = np.zeros(n, dtype=bool)
    mask[test_rows] = True
    train = ds.take_rows(np.nonzero(~mask)[0], name=ds.name)
    test = ds.take_rows(np.nonzero(mask)[0], name=ds.name)
    return train, test


def clone_config(config: TrainConfig, **changes) -> TrainConfig:
    """dataclasses.replace wrapper so callers need not import dataclasses."""
    return replace(config, **changes)
