"""Tree and ensemble data model: prediction, validation, JSON serialization.

Trees are stored as parallel node arrays (one entry per node id).  Leaves are
marked with ``feature == -1``; their threshold and child slots are unused.
Routing is strict less-than everywhere: an instance goes left iff
``x[feature] < threshold``, so values equal to the threshold go right.

Ensembles and trees are immutable after construction (their arrays are marked
read-only) and safe to share across threads for concurrent prediction.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ModelValidationError

KIND_FOREST = "forest-average"
KIND_BOOSTED = "boosted-sum"
KINDS = (KIND_FOREST, KIND_BOOSTED)

SPACE_PROBABILITY = "probability"
SPACE_LOG_ODDS = "log-odds"
SPACES = (SPACE_PROBABILITY, SPACE_LOG_ODDS)

#: Sentinel child / feature id used at leaves.
LEAF = -1

#: Tolerance for the "internal value equals cover-weighted child mean" check.
VALUE_MEAN_TOL = 1e-9


def _frozen(arr: np.ndarray, dtype) -> np.ndarray:
    out = np.ascontiguousarray(arr, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Tree:
    """A binary decision tree.

    ``cover`` counts the training rows that passed through each node and
    ``value`` is the expected model output over those rows (class-1 fraction
    for probability-space trees, scaled residual mean for boosted trees).
    ``gain`` holds the impurity decrease recorded at each splitting node; it
    is training metadata, not part of the serialized model.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    cover: np.ndarray
    value: np.ndarray
    root: int = 0
    gain: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "feature", _frozen(self.feature, np.int64))
        object.__setattr__(self, "threshold", _frozen(self.threshold, np.float64))
        object.__setattr__(self, "left", _frozen(self.left, np.int64))
        object.__setattr__(self, "right", _frozen(self.right, np.int64))
        object.__setattr__(self, "cover", _frozen(self.cover, np.int64))
        object.__setattr__(self, "value", _frozen(self.value, np.float64))
        if self.gain is not None:
            object.__setattr__(self, "gain", _frozen(self.gain, np.float64))

    @property
    def n_nodes(self) -> int:
        return int(self.feature.shape[0])

    def is_leaf(self, node: int) -> bool:
        return self.left[node] < 0

    def leaf_for(self, x) -> int:
        """Return the id of the leaf reached by instance ``x``."""
        node = self.root
        feature = self.feature
        threshold = self.threshold
        left = self.left
        right = self.right
        n_values = len(x)
        while left[node] >= 0:
            f = feature[node]
            if f >= n_values:
                raise ValueError(
                    f"instance has {n_values} values but node {node} splits on "
                    f"feature {f}"
                )
            node = left[node] if x[f] < threshold[node] else right[node]
        return int(node)

    def active_features(self) -> list[int]:
        """Sorted list of feature indices used by at least one split."""
        mask = self.left >= 0
        return sorted(set(int(f) for f in self.feature[mask]))


@dataclass(frozen=True)
class Ensemble:
    """A collection of trees aggregated per ``kind``.

    forest-average ensembles predict the plain mean of tree outputs and keep
    ``base_score == 0``.  boosted-sum ensembles accumulate a log-odds margin
    ``base_score + sum(tree outputs)``; ``output_space`` says whether the
    public prediction is that raw margin or its sigmoid.
    """

    kind: str
    base_score: float
    output_space: str
    feature_names: tuple[str, ...]
    trees: tuple[Tree, ...]

    def __post_init__(self):
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "trees", tuple(self.trees))

    @property
    def n_features(self) -> int:
        return len(self.feature_names)


def sigmoid(z):
    """Numerically stable logistic function, scalar or ndarray."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return float(out) if out.ndim == 0 else out


def predict_tree(tree: Tree, x) -> float:
    """Value of the leaf reached by the decision path of ``x``."""
    return float(tree.value[tree.leaf_for(x)])


def _tree_predictions(tree: Tree, X: np.ndarray) -> np.ndarray:
    return np.array([tree.value[tree.leaf_for(row)] for row in X])


def raw_output(ens: Ensemble, X):
    """Model output before any link function.

    Mean of tree outputs for forests (a probability), ``base_score`` plus the
    sum of tree outputs for boosted ensembles (a log-odds margin).  Accepts a
    single instance vector or an ``(n, d)`` matrix.
    """
    if not ens.trees:
        raise ModelValidationError("ensemble has no trees")
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    Xm = X[None, :] if single else X
    acc = np.zeros(Xm.shape[0])
    for tree in ens.trees:
        acc += _tree_predictions(tree, Xm)
    if ens.kind == KIND_FOREST:
        out = acc / len(ens.trees)
    else:
        out = ens.base_score + acc
    return float(out[0]) if single else out


def predict_ensemble(ens: Ensemble, X):
    """Public prediction: forests return probabilities directly; boosted
    ensembles return sigmoid(margin) in probability space, the raw margin in
    log-odds space."""
    out = raw_output(ens, X)
    if ens.kind == KIND_BOOSTED and ens.output_space == SPACE_PROBABILITY:
        out = sigmoid(out)
    return out


def expected_value(ens: Ensemble) -> float:
    """Expected model output over the training distribution (the attribution
    base value): aggregation of the per-tree root values per ``kind``."""
    if not ens.trees:
        raise ModelValidationError("ensemble has no trees")
    roots = [float(t.value[t.root]) for t in ens.trees]
    if ens.kind == KIND_FOREST:
        return float(np.mean(roots))
    return float(ens.base_score + np.sum(roots))


def validate_tree(tree: Tree, name: str = "tree") -> None:
    """Check all structural tree invariants; raise ModelValidationError."""
    n = tree.n_nodes
    if n == 0:
        raise ModelValidationError(f"{name}: empty node array")
    if not 0 <= tree.root < n:
        raise ModelValidationError(f"{name}: root id {tree.root} out of range")
    referenced = np.zeros(n, dtype=np.int64)
    for node in range(n):
        lf, rt = int(tree.left[node]), int(tree.right[node])
        if (lf < 0) != (rt < 0):
            raise ModelValidationError(f"{name}: node {node} has exactly one child")
        if int(tree.cover[node]) < 1:
            raise ModelValidationError(f"{name}: node {node} has cover < 1")
        if lf < 0:
            continue
        if lf >= n or rt >= n:
            raise ModelValidationError(f"{name}: node {node} references a dangling child id")
        if int(tree.feature[node]) < 0:
            raise ModelValidationError(f"{name}: internal node {node} has no feature")
        if not math.isfinite(tree.threshold[node]):
            raise ModelValidationError(f"{name}: internal node {node} has a non-finite threshold")
        referenced[lf] += 1
        referenced[rt] += 1
        csum = int(tree.cover[lf]) + int(tree.cover[rt])
        if csum != int(tree.cover[node]):
            raise ModelValidationError(
                f"{name}: node {node} cover {int(tree.cover[node])} != "
                f"children sum {csum}"
            )
        mean = (tree.cover[lf] * tree.value[lf] + tree.cover[rt] * tree.value[rt]) / tree.cover[node]
        if abs(mean - tree.value[node]) > VALUE_MEAN_TOL:
            raise ModelValidationError(
                f"{name}: node {node} value {tree.value[node]!r} is not the "
                f"cover-weighted child mean {mean!r}"
            )
    if referenced[tree.root] != 0:
        raise ModelValidationError(f"{name}: root node {tree.root} is referenced as a child")
    for node in range(n):
        if node != tree.root and referenced[node] != 1:
            raise ModelValidationError(
                f"{name}: node {node} referenced {int(referenced[node])} times (expected 1)"
            )
    # Single parent per node plus a reachable root imply the graph is a tree;
    # reachability is still checked to reject disjoint cycles.
    seen = set()
    stack = [tree.root]
    while stack:
        node = stack.pop()
        if node in seen:
            raise ModelValidationError(f"{name}: cycle through node {node}")
        seen.add(node)
        if not tree.is_leaf(node):
            stack.append(int(tree.left[node]))
            stack.append(int(tree.right[node]))
    if len(seen) != n:
        raise ModelValidationError(f"{name}: {n - len(seen)} nodes unreachable from root")


def validate_ensemble(ens: Ensemble) -> None:
    """Check every ensemble invariant; raise ModelValidationError on failure."""
    if ens.kind not in KINDS:
        raise ModelValidationError(f"unknown kind {ens.kind!r}")
    if ens.output_space not in SPACES:
        raise ModelValidationError(f"unknown output_space {ens.output_space!r}")
    if not ens.trees:
        raise ModelValidationError("ensemble has no trees")
    if len(set(ens.feature_names)) != len(ens.feature_names):
        raise ModelValidationError("duplicate feature names")
    d = ens.n_features
    for i, tree in enumerate(ens.trees):
        name = f"tree {i}"
        validate_tree(tree, name)
        for node in range(tree.n_nodes):
            if not tree.is_leaf(node) and int(tree.feature[node]) >= d:
                raise ModelValidationError(
                    f"{name}: node {node} splits on feature "
                    f"{int(tree.feature[node])} but the model has {d} features"
                )


def _node_to_doc(tree: Tree, node: int) -> dict:
    leaf = tree.is_leaf(node)
    return {
        "id": node,
        "feature": None if leaf else int(tree.feature[node]),
        "threshold": None if leaf else float(tree.threshold[node]),
        "left": None if leaf else int(tree.left[node]),
        "right": None if leaf else int(tree.right[node]),
        "cover": int(tree.cover[node]),
        "value": float(tree.value[node]),
    }


def save_model(ens: Ensemble, path) -> None:
    """Write the ensemble as a UTF-8 JSON document.

    Floats round-trip exactly (shortest-repr serialization), so
    ``load_model(save_model(e))`` reproduces the node arrays bit for bit.
    Training-only metadata (split gains) is not stored.
    """
    validate_ensemble(ens)
    doc = {
        "kind": ens.kind,
        "base_score": float(ens.base_score),
        "output_space": ens.output_space,
        "feature_names": list(ens.feature_names),
        "trees": [
            {"root": t.root, "nodes": [_node_to_doc(t, i) for i in range(t.n_nodes)]}
            for t in ens.trees
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ModelValidationError(msg)


def _tree_from_doc(doc: dict, tree_name: str) -> Tree:
    _require(isinstance(doc, dict) and "nodes" in doc and "root" in doc,
             f"{tree_name}: malformed tree document")
    nodes = doc["nodes"]
    _require(isinstance(nodes, list) and nodes, f"{tree_name}: empty node list")
    ids = []
    for nd in nodes:
        _require(isinstance(nd, dict) and isinstance(nd.get("id"), int),
                 f"{tree_name}: node without integer id")
        ids.append(nd["id"])
    _require(len(set(ids)) == len(ids), f"{tree_name}: duplicate node ids")
    index = {i: k for k, i in enumerate(ids)}
    n = len(nodes)
    feature = np.full(n, LEAF, dtype=np.int64)
    threshold = np.full(n, np.nan)
    left = np.full(n, LEAF, dtype=np.int64)
    right = np.full(n, LEAF, dtype=np.int64)
    cover = np.zeros(n, dtype=np.int64)
    value = np.zeros(n)

    for nd in nodes:
        k = index[nd["id"]]
        node_name = f"{tree_name} node {nd['id']}"
        _require(isinstance(nd.get("cover"), int) and not isinstance(nd["cover"], bool),
                 f"{node_name}: cover must be an integer")
        _require(isinstance(nd.get("value"), (int, float)) and not isinstance(nd["value"], bool),
                 f"{node_name}: value must be a number")
        cover[k] = nd["cover"]
        value[k] = float(nd["value"])
        children = (nd.get("left"), nd.get("right"))
        if nd.get("feature") is None:
            _require(children == (None, None) and nd.get("threshold") is None,
                     f"{node_name}: leaf with children or threshold")
            continue
        _require(isinstance(nd["feature"], int) and nd["feature"] >= 0,
                 f"{node_name}: feature must be a nonnegative integer")
        _require(isinstance(nd.get("threshold"), (int, float)),
                 f"{node_name}: threshold must be a number")
        for side, child in zip(("left", "right"), children):
            _require(child in index,
                     f"{node_name}: {side} child id {child!r} is dangling")
        feature[k] = nd["feature"]
        threshold[k] = float(nd["threshold"])
        left[k] = index[children[0]]
        right[k] = index[children[1]]

    _require(doc["root"] in index, f"{tree_name}: root id {doc['root']!r} is dangling")
    return Tree(feature=feature, threshold=threshold, left=left, right=right,
                cover=cover, value=value, root=index[doc["root"]])


def load_model(path) -> Ensemble:
    """Parse and fully validate a model document; raise ModelValidationError
    naming the offending node on any inconsistency."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ModelValidationError(f"{path}: malformed JSON ({exc})") from exc
    _require(isinstance(doc, dict), f"{path}: top-level document must be an object")
    kind = doc.get("kind")
    _require(kind in KINDS, f"unknown kind {kind!r}")
    space = doc.get("output_space")
    _require(space in SPACES, f"unknown output_space {space!r}")
    _require(isinstance(doc.get("base_score"), (int, float)),
             "base_score must be a number")
    names = doc.get("feature_names")
    _require(isinstance(names, list) and all(isinstance(s, str) for s in names),
             "feature_names must be a list of strings")
    trees_doc = doc.get("trees")
    _require(isinstance(trees_doc, list) and trees_doc, "model has no trees")
    trees = tuple(_tree_from_doc(td, f"tree {i}") for i, td in enumerate(trees_doc))
    ens = Ensemble(kind=kind, base_score=float(doc["base_score"]),
                   output_space=space, feature_names=tuple(names), trees=trees)
    validate_ensemble(ens)
    return ens
