"""Per-instance feature attributions for tree ensembles.

Two methods share one conditioning rule.  Conditional feature contributions
(CFC) walk the instance's decision path and credit each split feature with
the change in expected node value across that edge.  Shapley values average
the change produced by introducing a feature into the conditional
expectation over all feature orderings; here they are computed exactly by a
polynomial-time per-leaf recursion, with a subset-enumeration oracle for
cross-checking.

Conditioning is path-dependent throughout: a feature outside the
conditioning set is averaged out with cover weights at every node that
splits on it.

Feature subsets are plain int bitmasks (bit i set means feature i is
conditioned on), so ``FeatureSubset`` is just ``int``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import OracleSizeError
from .model import KIND_FOREST, SPACE_LOG_ODDS, SPACE_PROBABILITY, Ensemble, Tree

FeatureSubset = int

#: Active-feature limit for the subset-enumeration oracle (2^12 subsets).
ORACLE_MAX_FEATURES = 12

CFC = "cfc"
SHAP = "shap"


@dataclass(frozen=True)
class AttributionResult:
    """Per-instance, per-feature contributions plus the shared base value.

    ``base_value + phi[i].sum()`` reproduces the model's raw output for
    instance i: the probability itself for forests, the log-odds margin for
    boosted ensembles (``output_space`` records which).
    """

    method: str
    base_value: float
    phi: np.ndarray
    output_space: str


def subset_from_indices(indices) -> FeatureSubset:
    mask = 0
    for i in indices:
        mask |= 1 << int(i)
    return mask


def validate_subset(subset: FeatureSubset, d: int) -> None:
    if subset < 0 or subset >> d:
        raise ValueError(f"subset {subset:#x} has bits beyond feature {d - 1}")


def decision_path(tree: Tree, x) -> list[tuple[int, int, int]]:
    """(node id, feature index, child id) triples from root to the leaf
    reached by ``x``; empty for a single-leaf tree."""
    path = []
    node = tree.root
    while not tree.is_leaf(node):
        f = int(tree.feature[node])
        child = int(tree.left[node]) if x[f] < tree.threshold[node] else int(tree.right[node])
        path.append((node, f, child))
        node = child
    return path


def cfc_tree(tree: Tree, x) -> tuple[float, np.ndarray]:
    """Conditional feature contributions of one tree for one instance.

    Credits each edge of the decision path to the parent's split feature:
    phi[f] accumulates child value minus parent value, so the contributions
    telescope to leaf value minus root value.
    """
    phi = np.zeros(len(x))
    for node, f, child in decision_path(tree, x):
        phi[f] += float(tree.value[child]) - float(tree.value[node])
    return float(tree.value[tree.root]), phi


def expvalue_conditional(tree: Tree, x, subset: FeatureSubset) -> float:
    """Expected tree output given only the features in ``subset``.

    Conditioned features route normally; unconditioned splits average both
    branches with cover weights.
    """

    def rec(node: int) -> float:
        if tree.is_leaf(node):
            return float(tree.value[node])
        f = int(tree.feature[node])
        lf, rt = int(tree.left[node]), int(tree.right[node])
        if (subset >> f) & 1:
            return rec(lf) if x[f] < tree.threshold[node] else rec(rt)
        wl = float(tree.cover[lf])
        wr = float(tree.cover[rt])
        return (wl * rec(lf) + wr * rec(rt)) / (wl + wr)

    return rec(tree.root)


def shap_bruteforce(tree: Tree, x) -> np.ndarray:
    """Exact Shapley values by explicit subset enumeration.

    Evaluates the conditional expectation once per subset of the tree's
    active features and applies the weighted marginal-contribution sum
    ``sum_S |S|! (M-1-|S|)! / M! * (v(S + i) - v(S))``.  Features the tree
    never splits on are dummies and get exactly 0.
    """
    feats = tree.active_features()
    m = len(feats)
    if m > ORACLE_MAX_FEATURES:
        raise OracleSizeError(
            f"tree uses {m} features; oracle enumerates at most "
            f"{ORACLE_MAX_FEATURES}"
        )
    phi = np.zeros(len(x))
    if m == 0:
        return phi
    # v over every subset of the active features, keyed by compact bitmask
    values = {}
    for mask in range(1 << m):
        subset = 0
        mm = mask
        while mm:
            k = (mm & -mm).bit_length() - 1
            subset |= 1 << feats[k]
            mm &= mm - 1
        values[mask] = expvalue_conditional(tree, x, subset)
    fact = [math.factorial(k) for k in range(m + 1)]
    for k, f in enumerate(feats):
        bit = 1 << k
        total = 0.0
        for mask in range(1 << m):
            if mask & bit:
                continue
            s = bin(mask).count("1")
            weight = fact[s] * fact[m - 1 - s] / fact[m]
            total += weight * (values[mask | bit] - values[mask])
        phi[f] = total
    return phi


def _ordering_weights(m: int) -> list[float]:
    # weight of a prefix of size s among m players: s!(m-1-s)!/m!
    return [1.0 / (m * math.comb(m - 1, s)) for s in range(m)]


def _extend(poly: list[float], p: float, q: float) -> list[float]:
    # multiply the path polynomial by (q + p*t)
    out = [0.0] * (len(poly) + 1)
    for k, c in enumerate(poly):
        out[k] += q * c
        out[k + 1] += p * c
    return out


def _unwind(poly: list[float], p: float, q: float) -> list[float]:
    # divide the path polynomial by (q + p*t); p is a 0/1 indicator product
    # and q > 0, so one of the two stable directions always applies
    m = len(poly) - 1
    out = [0.0] * m
    if p == 0.0:
        for k in range(m):
            out[k] = poly[k] / q
    else:
        out[m - 1] = poly[m] / p
        for k in range(m - 1, 0, -1):
            out[k - 1] = (poly[k] - q * out[k]) / p
    return out


def shap_tree(tree: Tree, x) -> np.ndarray:
    """Exact Shapley values in polynomial time.

    One depth-first pass maintains, per distinct path feature, the product of
    routing indicators (p) and of cover fractions (q), together with the
    polynomial ``prod_j (q_j + p_j t)`` whose coefficients are subset-size
    sums.  At each leaf, dividing out one feature's factor and combining with
    the ordering weights yields that feature's share of the leaf term.

    Single-feature trees delegate to the decision-path contributions, which
    equal the Shapley values exactly in that case (there is only one
    ordering); this keeps the two methods bitwise identical there.
    """
    if len(tree.active_features()) <= 1:
        return cfc_tree(tree, x)[1]

    phi = np.zeros(len(x))
    factors: dict[int, tuple[float, float]] = {}
    weights_cache: dict[int, list[float]] = {}

    def rec(node: int, poly: list[float]) -> None:
        if tree.is_leaf(node):
            leaf_value = float(tree.value[node])
            if leaf_value != 0.0 and factors:
                m = len(factors)
                weights = weights_cache.get(m)
                if weights is None:
                    weights = _ordering_weights(m)
                    weights_cache[m] = weights
                for f, (p, q) in factors.items():
                    reduced = _unwind(poly, p, q)
                    acc = 0.0
                    for s in range(m):
                        acc += reduced[s] * weights[s]
                    phi[f] += leaf_value * (p - q) * acc
            return
        f = int(tree.feature[node])
        lf, rt = int(tree.left[node]), int(tree.right[node])
        hot = lf if x[f] < tree.threshold[node] else rt
        cover = float(tree.cover[node])
        prev = factors.get(f)
        for child in (lf, rt):
            p_edge = 1.0 if child == hot else 0.0
            q_edge = float(tree.cover[child]) / cover
            if prev is None:
                factors[f] = (p_edge, q_edge)
                rec(child, _extend(poly, p_edge, q_edge))
            else:
                p_old, q_old = prev
                merged = (p_old * p_edge, q_old * q_edge)
                factors[f] = merged
                rec(child, _extend(_unwind(poly, p_old, q_old), *merged))
        if prev is None:
            del factors[f]
        else:
            factors[f] = prev

    rec(tree.root, [1.0])
    return phi


def _aggregate(ens: Ensemble, X, per_tree, method: str) -> AttributionResult:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != ens.n_features:
        raise ValueError(
            f"instances have {X.shape[1]} features, model has {ens.n_features}"
        )
    n = X.shape[0]
    phi = np.zeros((n, ens.n_features))
    base = 0.0
    for tree in ens.trees:
        base += float(tree.value[tree.root])
        for i in range(n):
            phi[i] += per_tree(tree, X[i])
    if ens.kind == KIND_FOREST:
        phi /= len(ens.trees)
        base /= len(ens.trees)
        space = SPACE_PROBABILITY
    else:
        base += ens.base_score
        space = SPACE_LOG_ODDS
    return AttributionResult(method=method, base_value=base, phi=phi,
                             output_space=space)


def cfc_ensemble(ens: Ensemble, X) -> AttributionResult:
    """Conditional feature contributions for every instance row.

    Forests average per-tree contributions; boosted ensembles sum them on
    top of ``base_score``.  Attributions live in the ensemble's raw output
    space: probabilities for forests, the log-odds margin for boosting.
    """
    return _aggregate(ens, X, lambda t, x: cfc_tree(t, x)[1], CFC)


def shap_ensemble(ens: Ensemble, X) -> AttributionResult:
    """Shapley values for every instance row; aggregation as cfc_ensemble."""
    return _aggregate(ens, X, shap_tree, SHAP)


def global_importance(result: AttributionResult) -> np.ndarray:
    """Per-feature mean absolute local attribution."""
    if result.phi.shape[0] == 0:
        raise ValueError("global importance of zero instances is undefined")
    return np.mean(np.abs(result.phi), axis=0)


def write_attribution_table(result: AttributionResult, feature_names, path) -> None:
    """Write one tab-separated row per instance, '#'-prefixed metadata first."""
    lines = [
        f"# method: {result.method}",
        f"# base_value: {result.base_value!r}",
        f"# output_space: {result.output_space}",
        "\t".join(feature_names),
    ]
    for row in result.phi:
        lines.append("\t".join(repr(float(v)) for v in row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
