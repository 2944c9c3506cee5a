"""From-scratch CART trees and a bagged random forest with soft voting.

Trees split on Gini impurity over midpoint thresholds, under three leaf
constraints: min_samples_split, min_samples_leaf, and
min_weight_fraction_leaf (uniform weights, fraction of the tree's bootstrap
sample). Each tree gets its own counter-based RNG stream derived from
(seed, tree index), so training is bit-reproducible at any parallelism.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, asdict

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError

from .errors import ModelFormatError
from .validation import (
    POSITIVE_LABEL,
    as_float_matrix,
    binary_to_labels,
    check_finite,
    labels_to_binary,
)

MODEL_FORMAT_VERSION = 1


@dataclass
class ForestParams:
    seed: int
    n_estimators: int = 56
    max_depth: int = 20000
    max_features: int = 15
    min_samples_split: int = 10
    min_samples_leaf: int = 20
    min_weight_fraction_leaf: float = 0.1

    def __post_init__(self):
        if self.n_estimators < 1:
            raise ValueError(f"n_estimators must be >= 1, got {self.n_estimators}")
        if self.max_depth < 1:
            raise ValueError(f"max_depth must be >= 1, got {self.max_depth}")
        if self.max_features < 1:
            raise ValueError(f"max_features must be >= 1, got {self.max_features}")
        if self.min_samples_split < 2:
            raise ValueError(f"min_samples_split must be >= 2, got {self.min_samples_split}")
        if self.min_samples_leaf < 1:
            raise ValueError(f"min_samples_leaf must be >= 1, got {self.min_samples_leaf}")
        if not 0.0 <= self.min_weight_fraction_leaf < 0.5:
            raise ValueError(
                f"min_weight_fraction_leaf must be in [0, 0.5), got {self.min_weight_fraction_leaf}"
            )


@dataclass
class DecisionTree:
    """Flat node arrays; feature == -1 marks a leaf. Root is index 0."""

    feature: np.ndarray  # int32
    threshold: np.ndarray  # float64
    left: np.ndarray  # int32
    right: np.ndarray  # int32
    p_nt: np.ndarray  # float64, leaf class fractions
    p_asd: np.ndarray
    count: np.ndarray  # int64, samples reaching the node
    root: int = 0

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    def leaf_ids(self) -> np.ndarray:
        return np.nonzero(self.feature < 0)[0]


@dataclass
class ForestModel:
    trees: list[DecisionTree]
    params: ForestParams
    schema: list[str]
    schema_version: int = 1
    positive_class: str = POSITIVE_LABEL


@dataclass
class Split:
    feature: int
    threshold: float
    gain: float  # weighted impurity decrease


def gini_impurity(counts) -> float:
    """1 - sum((n_c / n)^2) over class counts."""
    arr = np.asarray(counts, dtype=np.float64)
    if np.any(arr < 0):
        raise ValueError("class counts must be nonnegative")
    total = arr.sum()
    if total <= 0:
        raise ValueError("all-zero class counts")
    frac = arr / total
    return float(1.0 - np.dot(frac, frac))


def min_leaf_count(params: ForestParams, n_total: int) -> int:
    """Smallest admissible leaf size given both leaf constraints.

    The fraction constraint is relative to the tree's whole training
    weight; the tiny epsilon keeps e.g. 0.1 * 850 from rounding up to 86.
    """
    from_fraction = math.ceil(params.min_weight_fraction_leaf * n_total - 1e-9)
    return max(params.min_samples_leaf, from_fraction)


def best_split(X, y, feature_ids, params: ForestParams, n_total: int | None = None) -> Split | None:
    """Exhaustive midpoint scan over the candidate features.

    Returns the split maximizing weighted impurity decrease among splits
    where both children satisfy the leaf constraints; None when the node
    is pure or no legal split exists. Ties break toward the lower feature
    index, then the lower threshold.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n = y.size
    if n_total is None:
        n_total = n
    pos = int(y.sum())
    if pos == 0 or pos == n:
        return None
    min_leaf = min_leaf_count(params, n_total)
    if n < 2 * min_leaf:
        return None

    parent = gini_impurity([n - pos, pos])
    best: Split | None = None
    for f in sorted(int(f) for f in feature_ids):
        col = X[:, f]
        order = np.argsort(col, kind="stable")
        xs = col[order]
        ys = y[order]
        boundaries = np.nonzero(xs[:-1] < xs[1:])[0]
        if boundaries.size == 0:
            continue
        left_n = boundaries + 1
        legal = (left_n >= min_leaf) & ((n - left_n) >= min_leaf)
        if not legal.any():
            continue
        boundaries = boundaries[legal]
        left_n = left_n[legal].astype(np.float64)
        left_pos = np.cumsum(ys)[boundaries].astype(np.float64)
        right_n = n - left_n
        right_pos = pos - left_pos

        gini_left = 1.0 - ((left_pos / left_n) ** 2 + ((left_n - left_pos) / left_n) ** 2)
        gini_right = 1.0 - ((right_pos / right_n) ** 2 + ((right_n - right_pos) / right_n) ** 2)
        gain = parent - (left_n * gini_left + right_n * gini_right) / n

        j = int(np.argmax(gain))  # first max -> lowest threshold
        if best is not None and gain[j] <= best.gain:
            continue
        lo = xs[boundaries[j]]
        hi = xs[boundaries[j] + 1]
        threshold = (lo + hi) / 2.0
        if threshold >= hi:  # fp midpoint collapsed upward; keep the scanned partition
            threshold = lo
        best = Split(feature=f, threshold=float(threshold), gain=float(gain[j]))
    return best


def grow_tree(X, y, params: ForestParams, rng: np.random.Generator) -> DecisionTree:
    """Grow one CART tree on an already-bootstrapped sample.

    Iterative preorder construction (max_depth may be huge); at each split
    attempt a fresh candidate feature subset of size min(max_features, d)
    is drawn without replacement from rng.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n_total = y.size
    if n_total == 0:
        raise ValueError("empty training sample")
    d = X.shape[1]
    m = min(params.max_features, d)

    feature, threshold, left, right = [], [], [], []
    p_nt, p_asd, count = [], [], []

    def append_node():
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        p_nt.append(0.0)
        p_asd.append(0.0)
        count.append(0)
        return len(feature) - 1

    stack = [(np.arange(n_total), 0, -1, False)]
    while stack:
        idx, depth, parent, is_left = stack.pop()
        node = append_node()
        if parent >= 0:
            if is_left:
                left[parent] = node
            else:
                right[parent] = node

        ys = y[idx]
        n = idx.size
        pos = int(ys.sum())
        count[node] = n

        split = None
        if depth < params.max_depth and 0 < pos < n and n >= params.min_samples_split:
            candidates = rng.permutation(d)[:m]
            split = best_split(X[idx], ys, candidates, params, n_total=n_total)

        if split is None:
            p_nt[node] = (n - pos) / n
            p_asd[node] = pos / n
            continue

        feature[node] = split.feature
        threshold[node] = split.threshold
        go_left = X[idx, split.feature] <= split.threshold
        # push right first so the left child is built next (preorder)
        stack.append((idx[~go_left], depth + 1, node, False))
        stack.append((idx[go_left], depth + 1, node, True))

    return DecisionTree(
        feature=np.array(feature, dtype=np.int32),
        threshold=np.array(threshold, dtype=np.float64),
        left=np.array(left, dtype=np.int32),
        right=np.array(right, dtype=np.int32),
        p_nt=np.array(p_nt, dtype=np.float64),
        p_asd=np.array(p_asd, dtype=np.float64),
        count=np.array(count, dtype=np.int64),
    )


def tree_rng(seed: int, tree_index: int) -> np.random.Generator:
    """Counter-based stream for one tree, split from (seed, tree index)."""
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence(entropy=seed, spawn_key=(tree_index,)))
    )


def bootstrap_indices(rng: np.random.Generator, n: int) -> np.ndarray:
    """With-replacement resample of size n."""
    return rng.integers(0, n, size=n)


def train_forest(X, y, schema: list[str], params: ForestParams, jobs: int = 1) -> ForestModel:
    """Train n_estimators trees on bootstrap samples.

    y is binary (1 = positive class). The result is independent of jobs:
    each tree consumes only its own RNG stream and trees are gathered in
    index order.
    """
    X = check_finite(as_float_matrix(X), "X")
    y = np.asarray(y, dtype=np.int64).ravel()
    n, d = X.shape
    if n == 0:
        raise ValueError("empty training set")
    if y.size != n:
        raise ValueError(f"X has {n} rows but y has {y.size}")
    if d < params.max_features:
        raise ValueError(f"feature dimension {d} is smaller than max_features={params.max_features}")
    if len(schema) != d:
        raise ValueError(f"schema names {len(schema)} do not match feature dimension {d}")

    def build(i: int) -> DecisionTree:
        rng = tree_rng(params.seed, i)
        boot = bootstrap_indices(rng, n)
        return grow_tree(X[boot], y[boot], params, rng)

    if jobs <= 1:
        trees = [build(i) for i in range(params.n_estimators)]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            trees = list(pool.map(build, range(params.n_estimators)))
    return ForestModel(trees=trees, params=params, schema=list(schema))


def _tree_scores(tree: DecisionTree, X: np.ndarray) -> np.ndarray:
    node = np.full(X.shape[0], tree.root, dtype=np.int64)
    while True:
        feat = tree.feature[node]
        live = np.nonzero(feat >= 0)[0]
        if live.size == 0:
            break
        cur = node[live]
        go_left = X[live, feat[live]] <= tree.threshold[cur]
        node[live] = np.where(go_left, tree.left[cur], tree.right[cur])
    return tree.p_asd[node]


def predict_scores(model: ForestModel, X) -> np.ndarray:
    """Mean over trees of the reached leaf's positive-class fraction."""
    X = as_float_matrix(X)
    if X.shape[1] != len(model.schema):
        raise ValueError(
            f"feature dimension {X.shape[1]} does not match model schema ({len(model.schema)})"
        )
    check_finite(X, "X")
    total = np.zeros(X.shape[0])
    for tree in model.trees:
        total += _tree_scores(tree, X)
    return total / len(model.trees)


def predict_proba(model: ForestModel, vector) -> float:
    """Probability of the positive class for a single feature vector."""
    return float(predict_scores(model, np.atleast_2d(np.asarray(vector, dtype=np.float64)))[0])


def predict_labels(model: ForestModel, X) -> np.ndarray:
    """Threshold at 0.5; ties go to the positive class."""
    return binary_to_labels(predict_scores(model, X) >= 0.5)


def audit_leaf_constraints(model: ForestModel) -> list[str]:
    """Check every leaf of every tree against the leaf constraints.

    Returns violation descriptions (empty list means the model is clean).
    The fraction constraint is evaluated against each tree's own training
    total, recovered as the sum of its leaf counts.
    """
    problems = []
    for t, tree in enumerate(model.trees):
        leaves = tree.leaf_ids()
        n_total = int(tree.count[leaves].sum())
        if n_total <= 0:
            problems.append(f"tree {t}: no training rows recorded")
            continue
        floor = min_leaf_count(model.params, n_total)
        if tree.n_nodes == 1:
            continue  # a root leaf is not produced by a split
        for leaf in leaves:
            c = int(tree.count[leaf])
            if c < floor:
                problems.append(f"tree {t} leaf {int(leaf)}: {c} rows < required {floor}")
        for leaf in leaves:
            s = tree.p_nt[leaf] + tree.p_asd[leaf]
            if abs(s - 1.0) > 1e-9:
                problems.append(f"tree {t} leaf {int(leaf)}: class fractions sum to {s}")
    return problems


def tree_depth(tree: DecisionTree) -> int:
    depth = np.zeros(tree.n_nodes, dtype=np.int64)
    order = [tree.root]
    while order:
        node = order.pop()
        if tree.feature[node] >= 0:
            for child in (tree.left[node], tree.right[node]):
                depth[child] = depth[node] + 1
                order.append(int(child))
    return int(depth.max())


def _tree_to_nodes(tree: DecisionTree) -> list[dict]:
    nodes = []
    for i in range(tree.n_nodes):
        if tree.feature[i] >= 0:
            nodes.append(
                {
                    "feature": int(tree.feature[i]),
                    "threshold": float(tree.threshold[i]),
                    "left": int(tree.left[i]),
                    "right": int(tree.right[i]),
                }
            )
        else:
            nodes.append(
                {
                    "p_nt": float(tree.p_nt[i]),
                    "p_asd": float(tree.p_asd[i]),
                    "count": int(tree.count[i]),
                }
            )
    return nodes


def model_to_json(model: ForestModel) -> str:
    doc = {
        "version": MODEL_FORMAT_VERSION,
        "params": asdict(model.params),
        "schema": {
            "version": model.schema_version,
            "positive_class": model.positive_class,
            "names": list(model.schema),
        },
        "trees": [_tree_to_nodes(t) for t in model.trees],
    }
    return json.dumps(doc, indent=2) + "\n"


def _nodes_to_tree(nodes: list[dict], n_features: int, tree_no: int) -> DecisionTree:
    n = len(nodes)
    if n == 0:
        raise ModelFormatError(f"tree {tree_no}: empty node array")
    feature = np.full(n, -1, dtype=np.int32)
    threshold = np.zeros(n, dtype=np.float64)
    left = np.full(n, -1, dtype=np.int32)
    right = np.full(n, -1, dtype=np.int32)
    p_nt = np.zeros(n, dtype=np.float64)
    p_asd = np.zeros(n, dtype=np.float64)
    count = np.zeros(n, dtype=np.int64)

    for i, node in enumerate(nodes):
        if "feature" in node:
            f = int(node["feature"])
            if not 0 <= f < n_features:
                raise ModelFormatError(
                    f"tree {tree_no} node {i}: feature index {f} outside schema of {n_features}"
                )
            l, r = int(node["left"]), int(node["right"])
            if not (0 <= l < n and 0 <= r < n):
                raise ModelFormatError(f"tree {tree_no} node {i}: child index out of range")
            feature[i], threshold[i] = f, float(node["threshold"])
            left[i], right[i] = l, r
        elif "p_asd" in node and "p_nt" in node:
            p_nt[i], p_asd[i] = float(node["p_nt"]), float(node["p_asd"])
            count[i] = int(node.get("count", 0))
            if abs(p_nt[i] + p_asd[i] - 1.0) > 1e-9:
                raise ModelFormatError(f"tree {tree_no} node {i}: leaf fractions do not sum to 1")
        else:
            raise ModelFormatError(f"tree {tree_no} node {i}: neither internal node nor leaf")

    # reachability / acyclicity from the root
    seen = np.zeros(n, dtype=bool)
    todo = [0]
    while todo:
        i = todo.pop()
        if seen[i]:
            raise ModelFormatError(f"tree {tree_no}: node {i} reachable twice (cycle or shared child)")
        seen[i] = True
        if feature[i] >= 0:
            todo.extend((int(left[i]), int(right[i])))
    if not seen.all():
        raise ModelFormatError(f"tree {tree_no}: {int((~seen).sum())} unreachable nodes")

    return DecisionTree(feature, threshold, left, right, p_nt, p_asd, count)


def model_from_json(text: str) -> ForestModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ModelFormatError(f"truncated or invalid model document: {e}") from None
    if not isinstance(doc, dict):
        raise ModelFormatError("model document is not a JSON object")
    version = doc.get("version")
    if version != MODEL_FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model version {version!r}")

    try:
        params = ForestParams(**doc["params"])
        schema_block = doc["schema"]
        names = list(schema_block["names"])
        trees_doc = doc["trees"]
    except (KeyError, TypeError, ValueError) as e:
        raise ModelFormatError(f"model document inconsistent: {e}") from None

    if params.max_features > len(names):
        raise ModelFormatError(
            f"params/schema inconsistency: max_features={params.max_features} "
            f"exceeds schema width {len(names)}"
        )
    if len(trees_doc) != params.n_estimators:
        raise ModelFormatError(
            f"params/trees inconsistency: {len(trees_doc)} trees vs n_estimators={params.n_estimators}"
        )
    trees = [_nodes_to_tree(nodes, len(names), t) for t, nodes in enumerate(trees_doc)]
    return ForestModel(
        trees=trees,
        params=params,
        schema=names,
        schema_version=int(schema_block.get("version", 1)),
        positive_class=str(schema_block.get("positive_class", POSITIVE_LABEL)),
    )


def save_model(model: ForestModel, path) -> None:
    from pathlib import Path

    Path(path).write_text(model_to_json(model), encoding="ascii")


def load_model(path) -> ForestModel:
    from pathlib import Path

    return model_from_json(Path(path).read_text(encoding="ascii"))


class RandomForest(BaseEstimator, ClassifierMixin):
    """sklearn-style wrapper over the functional forest.

    fit takes an (n, d) matrix and ASD/NT string labels; predict applies
    the >= 0.5 threshold with ties to ASD. seed is mandatory at fit time
    so screening runs are reproducible by construction.
    """

    def __init__(
        self,
        n_estimators=56,
        max_depth=20000,
        max_features=15,
        min_samples_split=10,
        min_samples_leaf=20,
        min_weight_fraction_leaf=0.1,
        seed=None,
        n_jobs=1,
        feature_names=None,
    ):
        self.n_estimators = n_estimators
        self.max_depth = max_depth
        self.max_features = max_features
        self.min_samples_split = min_samples_split
        self.min_samples_leaf = min_samples_leaf
        self.min_weight_fraction_leaf = min_weight_fraction_leaf
        self.seed = seed
        self.n_jobs = n_jobs
        self.feature_names = feature_names

    def _params(self) -> ForestParams:
        if self.seed is None:
            raise ValueError("seed must be set before fitting (no implicit clock seeds)")
        return ForestParams(
            seed=int(self.seed),
            n_estimators=self.n_estimators,
            max_depth=self.max_depth,
            max_features=self.max_features,
            min_samples_split=self.min_samples_split,
            min_samples_leaf=self.min_samples_leaf,
            min_weight_fraction_leaf=self.min_weight_fraction_leaf,
        )

    def fit(self, X, y):
        X = as_float_matrix(X)
        y01 = labels_to_binary(y)
        names = list(self.feature_names) if self.feature_names is not None else [
            f"x{i:02d}" for i in range(X.shape[1])
        ]
        self.model_ = train_forest(X, y01, names, self._params(), jobs=self.n_jobs)
        self.classes_ = np.unique(np.asarray(y, dtype=object))
        return self

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise NotFittedError("this RandomForest instance is not fitted yet")

    def predict_proba(self, X) -> np.ndarray:
        self._check_fitted()
        scores = predict_scores(self.model_, X)
        columns = {POSITIVE_LABEL: scores, "NT": 1.0 - scores}
        return np.column_stack([columns[c] for c in self.classes_])

    def predict(self, X) -> np.ndarray:
        self._check_fitted()
        return predict_labels(self.model_, X)

    def save(self, path) -> None:
        self._check_fitted()
        save_model(self.model_, path)

    @classmethod
    def load(cls, path) -> "RandomForest":
        model = load_model(path)
        est = cls(
            n_estimators=model.params.n_estimators,
            max_depth=model.params.max_depth,
            max_features=model.params.max_features,
            min_samples_split=model.params.min_samples_split,
            min_samples_leaf=model.params.min_samples_leaf,
            min_weight_fraction_leaf=model.params.min_weight_fraction_leaf,
            seed=model.params.seed,
            feature_names=list(model.schema),
        )
        est.model_ = model
        est.classes_ = np.array(["ASD", "NT"], dtype=object)
        return est
