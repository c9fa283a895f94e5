"""Deterministic truth functions: trees, forests, closed-form rules, annotators.

Every function here is pure: the same input row always yields the same
output. Trees split on Gini impurity with axis-aligned thresholds placed at
midpoints between adjacent sorted values; all ties (gain, leaf votes, argmax)
break toward the lowest index so fitted models stay reproducible bit for bit.
"""

import dataclasses
import math

import numpy as np

from .errors import ConfigError, DataError, UnsupportedModelOperation
from .streams import derive_rng


@dataclasses.dataclass(frozen=True)
class TreeParams:
    """Settings for a single decision tree. max_depth=None grows until pure."""

    max_depth: int | None = None
    min_samples_leaf: int = 1


@dataclasses.dataclass(frozen=True)
class ForestParams:
    """Settings for a bagged forest. features_per_split=None means ceil(sqrt(d))."""

    tree_count: int = 100
    max_depth: int | None = 16
    min_samples_leaf: int = 1
    features_per_split: int | None = None
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.tree_count < 1:
            raise ConfigError("tree_count must be >= 1")


@dataclasses.dataclass(frozen=True)
class DecisionRule:
    """Discretization rule for soft labels.

    kind "argmax" picks the highest-probability class (ties go to the lowest
    class index, ignoring any rng); kind "sample" draws the label from the
    row's distribution and requires a generator.
    """

    kind: str = "argmax"

    def __post_init__(self):
        if self.kind not in ("argmax", "sample"):
            raise ConfigError(f"unknown decision rule kind {self.kind!r}")


def _validate_xy(X, y):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2:
        raise DataError("feature matrix must be 2-D")
    if X.shape[0] == 0:
        raise DataError("cannot fit on an empty dataset")
    if len(y) != X.shape[0]:
        raise DataError(f"feature rows ({X.shape[0]}) and labels ({len(y)}) disagree")
    y = y.astype(np.int64)
    if y.size and y.min() < 0:
        raise DataError("labels must be nonnegative class indices")
    return X, y


class _Tree:
    """Flat-array CART tree. feature[i] == -1 marks a leaf."""

    __slots__ = ("feature", "threshold", "left", "right", "leaf_counts", "raw_importances")

    def __init__(self, feature, threshold, left, right, leaf_counts, raw_importances):
        self.feature = feature
        self.threshold = threshold
        self.left = left
        self.right = right
        self.leaf_counts = leaf_counts
        self.raw_importances = raw_importances

    def leaf_of(self, X):
        node = np.zeros(X.shape[0], dtype=np.int64)
        while True:
            feat = self.feature[node]
            active = feat >= 0
            if not active.any():
                return node
            rows = np.nonzero(active)[0]
            cur = node[rows]
            go_left = X[rows, self.feature[cur]] <= self.threshold[cur]
            node[rows] = np.where(go_left, self.left[cur], self.right[cur])


def _best_split(Xsub, y, class_count, min_leaf):
    """Best (column, threshold, gain, left_mask) within the candidate columns, or None.

    Ties in gain break toward the lowest column, then the lowest threshold
    (argmax returns the first maximum and values are scanned in sorted order).
    """
    m, f = Xsub.shape
    if m < 2 * min_leaf or m < 2:
        return None
    order = np.argsort(Xsub, axis=0, kind="stable")
    xs = np.take_along_axis(Xsub, order, axis=0)
    ys = y[order]
    cum = np.cumsum(ys[:, :, None] == np.arange(class_count), axis=0, dtype=np.float64)
    total = cum[-1]
    parent = 1.0 - np.sum(np.square(total[0] / m))
    nl = np.arange(1, m, dtype=np.float64)[:, None]
    nr = m - nl
    sl = np.sum(np.square(cum[:-1]), axis=2)
    sr = np.sum(np.square(total[None, :, :] - cum[:-1]), axis=2)
    weighted_child = (nl - sl / nl) + (nr - sr / nr)
    gain = parent - weighted_child / m
    valid = xs[1:] > xs[:-1]
    if min_leaf > 1:
        sizes_ok = (nl >= min_leaf) & (nr >= min_leaf)
        valid = valid & sizes_ok
    gain = np.where(valid, gain, -np.inf)
    best_pos = np.argmax(gain, axis=0)
    col_idx = np.arange(f)
    best_gain = gain[best_pos, col_idx]
    col = int(np.argmax(best_gain))
    g = best_gain[col]
    if not np.isfinite(g) or g <= 0.0:
        return None
    pos = int(best_pos[col])
    xl, xr = xs[pos, col], xs[pos + 1, col]
    thr = xl + (xr - xl) / 2.0
    if thr >= xr:
        thr = xl
    return col, float(thr), float(g), Xsub[:, col] <= thr


def _grow_tree(X, y, class_count, max_depth, min_leaf, features_per_split, rng):
    n, d = X.shape
    feature, threshold, left, right, leaf_counts = [], [], [], [], []
    raw_importances = np.zeros(d)
    use_all = features_per_split is None or features_per_split >= d

    # Preorder construction: children of a split are built left subtree first,
    # so the per-node feature draws consume the stream in a fixed order.
    stack = [(np.arange(n), 0, -1, False)]
    while stack:
        idx, depth, parent, is_left = stack.pop()
        node_id = len(feature)
        if parent >= 0:
            (left if is_left else right)[parent] = node_id
        counts = np.bincount(y[idx], minlength=class_count)
        split = None
        pure = counts.max() == len(idx)
        depth_ok = max_depth is None or depth < max_depth
        if not pure and depth_ok and len(idx) >= 2 * min_leaf:
            if use_all:
                feats = np.arange(d)
            else:
                feats = np.sort(rng.choice(d, size=features_per_split, replace=False))
            split = _best_split(X[np.ix_(idx, feats)], y[idx], class_count, min_leaf)
            if split is not None:
                col, thr, gain, left_mask = split
                feat_global = int(feats[col])
        if split is None:
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            leaf_counts.append(counts)
        else:
            feature.append(feat_global)
            threshold.append(thr)
            left.append(-1)
            right.append(-1)
            leaf_counts.append(np.zeros(class_count, dtype=np.int64))
            raw_importances[feat_global] += (len(idx) / n) * gain
            stack.append((idx[~left_mask], depth + 1, node_id, False))
            stack.append((idx[left_mask], depth + 1, node_id, True))
    return _Tree(
        np.asarray(feature, dtype=np.int64),
        np.asarray(threshold, dtype=np.float64),
        np.asarray(left, dtype=np.int64),
        np.asarray(right, dtype=np.int64),
        np.asarray(leaf_counts, dtype=np.int64),
        raw_importances,
    )


class TruthFunction:
    """Common surface of all deterministic truth functions."""

    kind = "abstract"
    input_arity: int
    class_count: int

    @property
    def soft_capable(self) -> bool:
        return False

    def _check_arity(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.input_arity:
            raise DataError(
                f"expected {self.input_arity} feature columns, got "
                f"{X.shape[1] if X.ndim == 2 else 'non-2D input'}"
            )
        return X

    def predict_hard(self, X) -> np.ndarray:
        raise NotImplementedError

    def predict_soft(self, X) -> np.ndarray:
        raise UnsupportedModelOperation(f"{self.kind} functions produce hard labels only")

    def raw_feature_importances(self) -> np.ndarray:
        raise UnsupportedModelOperation(f"{self.kind} functions expose no feature importances")

    def to_config(self) -> dict:
        raise UnsupportedModelOperation(f"{self.kind} functions do not serialize")


def _tree_to_lists(tree: _Tree) -> dict:
    leaves = tree.feature < 0
    return {
        "feature": tree.feature.tolist(),
        "threshold": tree.threshold.tolist(),
        "left": tree.left.tolist(),
        "right": tree.right.tolist(),
        "leaf_counts": [
            row.tolist() if is_leaf else None
            for row, is_leaf in zip(tree.leaf_counts, leaves)
        ],
        "raw_importances": tree.raw_importances.tolist(),
    }


def _tree_from_lists(data: dict, class_count: int, d: int) -> _Tree:
    counts = np.zeros((len(data["feature"]), class_count), dtype=np.int64)
    for i, row in enumerate(data["leaf_counts"]):
        if row is not None:
            counts[i] = row
    return _Tree(
        np.asarray(data["feature"], dtype=np.int64),
        np.asarray(data["threshold"], dtype=np.float64),
        np.asarray(data["left"], dtype=np.int64),
        np.asarray(data["right"], dtype=np.int64),
        counts,
        np.asarray(data.get("raw_importances", np.zeros(d))),
    )


class DecisionTreeFunction(TruthFunction):
    kind = "decision_tree"

    def __init__(self, tree: _Tree, input_arity: int, class_count: int, params: TreeParams, seed: int):
        self._tree = tree
        self.input_arity = input_arity
        self.class_count = class_count
        self.params = params
        self.seed = seed

    @property
    def soft_capable(self):
        return True

    def predict_hard(self, X):
        X = self._check_arity(X)
        counts = self._tree.leaf_counts[self._tree.leaf_of(X)]
        return np.argmax(counts, axis=1).astype(np.int64)

    def predict_soft(self, X):
        X = self._check_arity(X)
        counts = self._tree.leaf_counts[self._tree.leaf_of(X)].astype(np.float64)
        return counts / counts.sum(axis=1, keepdims=True)

    def raw_feature_importances(self):
        return self._tree.raw_importances.copy()

    def to_config(self):
        return {
            "kind": self.kind,
            "input_arity": self.input_arity,
            "class_count": self.class_count,
            "params": dataclasses.asdict(self.params),
            "seed": self.seed,
            "tree": _tree_to_lists(self._tree),
        }


class RandomForestFunction(TruthFunction):
    kind = "random_forest"

    def __init__(self, trees: list, input_arity: int, class_count: int, params: ForestParams):
        self._trees = trees
        self.input_arity = input_arity
        self.class_count = class_count
        self.params = params

    @property
    def soft_capable(self):
        return True

    def predict_soft(self, X):
        X = self._check_arity(X)
        probs = np.zeros((X.shape[0], self.class_count))
        for tree in self._trees:
            counts = tree.leaf_counts[tree.leaf_of(X)].astype(np.float64)
            probs += counts / counts.sum(axis=1, keepdims=True)
        return probs / len(self._trees)

    def predict_hard(self, X):
        return np.argmax(self.predict_soft(X), axis=1).astype(np.int64)

    def raw_feature_importances(self):
        raw = np.zeros(self.input_arity)
        for tree in self._trees:
            raw += tree.raw_importances
        return raw

    def to_config(self):
        return {
            "kind": self.kind,
            "input_arity": self.input_arity,
            "class_count": self.class_count,
            "params": dataclasses.asdict(self.params),
            "trees": [_tree_to_lists(t) for t in self._trees],
        }


class ClosedFormFunction(TruthFunction):
    """Wraps a vectorized callable mapping an (n, d) matrix to class indices.

    The callable must itself be pure; optionally a second callable provides
    row-stochastic soft output.
    """

    kind = "closed_form"

    def __init__(self, fn, input_arity: int, class_count: int, soft_fn=None, name="closed_form"):
        self._fn = fn
        self._soft_fn = soft_fn
        self.input_arity = input_arity
        self.class_count = class_count
        self.name = name

    @property
    def soft_capable(self):
        return self._soft_fn is not None

    def predict_hard(self, X):
        X = self._check_arity(X)
        out = np.asarray(self._fn(X), dtype=np.int64)
        if out.shape != (X.shape[0],):
            raise DataError(f"closed-form function {self.name!r} returned shape {out.shape}")
        return out

    def predict_soft(self, X):
        if self._soft_fn is None:
            raise UnsupportedModelOperation("this closed-form function produces hard labels only")
        X = self._check_arity(X)
        return np.asarray(self._soft_fn(X), dtype=np.float64)


class ComposedArgmaxFunction(TruthFunction):
    """Deterministic hard function obtained by taking argmax of a soft model."""

    kind = "composed"

    def __init__(self, model: TruthFunction):
        if not model.soft_capable:
            raise UnsupportedModelOperation("can only compose the argmax rule over a soft-capable model")
        self.model = model
        self.input_arity = model.input_arity
        self.class_count = model.class_count

    def predict_hard(self, X):
        return np.argmax(self.model.predict_soft(X), axis=1).astype(np.int64)

    def raw_feature_importances(self):
        return self.model.raw_feature_importances()

    def to_config(self):
        return {"kind": self.kind, "model": self.model.to_config()}


def closed_form(fn, input_arity: int, class_count: int, soft_fn=None, name="closed_form"):
    return ClosedFormFunction(fn, input_arity, class_count, soft_fn=soft_fn, name=name)


def argmax_of(model: TruthFunction) -> ComposedArgmaxFunction:
    return ComposedArgmaxFunction(model)


def fit_decision_tree(X, y, params: TreeParams = TreeParams(), seed: int = 0,
                      class_count: int | None = None) -> DecisionTreeFunction:
    """Fit a single Gini CART tree on all features, no bootstrap."""
    X, y = _validate_xy(X, y)
    C = int(class_count) if class_count is not None else int(y.max()) + 1
    rng = derive_rng(seed, 0)
    tree = _grow_tree(X, y, C, params.max_depth, params.min_samples_leaf, None, rng)
    return DecisionTreeFunction(tree, X.shape[1], C, params, seed)


def fit_random_forest(X, y, params: ForestParams = ForestParams(),
                      class_count: int | None = None) -> RandomForestFunction:
    """Fit a bagged forest; tree t draws from the stream (params.seed, t)."""
    X, y = _validate_xy(X, y)
    n, d = X.shape
    C = int(class_count) if class_count is not None else int(y.max()) + 1
    k = params.features_per_split
    if k is None:
        k = math.ceil(math.sqrt(d))
    trees = []
    for t in range(params.tree_count):
        rng = derive_rng(params.seed, t)
        idx = rng.integers(0, n, size=n) if params.bootstrap else np.arange(n)
        trees.append(
            _grow_tree(X[idx], y[idx], C, params.max_depth, params.min_samples_leaf,
                       k if k < d else None, rng)
        )
    return RandomForestFunction(trees, d, C, params)


def function_from_config(config: dict) -> TruthFunction:
    kind = config.get("kind")
    if kind == "decision_tree":
        params = TreeParams(**config["params"])
        tree = _tree_from_lists(config["tree"], config["class_count"], config["input_arity"])
        return DecisionTreeFunction(tree, config["input_arity"], config["class_count"],
                                    params, config.get("seed", 0))
    if kind == "random_forest":
        params = ForestParams(**config["params"])
        trees = [_tree_from_lists(t, config["class_count"], config["input_arity"])
                 for t in config["trees"]]
        return RandomForestFunction(trees, config["input_arity"], config["class_count"], params)
    if kind == "composed":
        return ComposedArgmaxFunction(function_from_config(config["model"]))
    raise DataError(f"cannot restore truth function of kind {kind!r}")


def predict_hard(f: TruthFunction, X) -> np.ndarray:
    return f.predict_hard(X)


def predict_soft(f: TruthFunction, X) -> np.ndarray:
    return f.predict_soft(X)


def feature_importances(f: TruthFunction) -> np.ndarray:
    """Impurity-decrease importances, normalized to sum 1.

    A model that never splits (constant labels) has all-zero raw importances;
    that degenerates to the uniform vector so importance orderings stay defined.
    """
    raw = f.raw_feature_importances()
    total = raw.sum()
    if total <= 0.0:
        return np.full(len(raw), 1.0 / len(raw))
    return raw / total


def apply_decision_rule(soft, rule: DecisionRule, rng: np.random.Generator | None = None) -> np.ndarray:
    """Discretize row-stochastic soft labels into hard labels."""
    soft = np.asarray(soft, dtype=np.float64)
    if soft.ndim != 2:
        raise DataError("soft labels must be a 2-D row-stochastic matrix")
    if rule.kind == "argmax":
        return np.argmax(soft, axis=1).astype(np.int64)
    if rng is None:
        raise ConfigError("the sampling decision rule requires a random stream")
    cumulative = np.cumsum(soft, axis=1)
    u = rng.random(soft.shape[0])
    labels = (cumulative < u[:, None]).sum(axis=1)
    return np.minimum(labels, soft.shape[1] - 1).astype(np.int64)


@dataclasses.dataclass(frozen=True)
class AnnotatorSpec:
    """An annotator: a model plus the feature columns it gets to see.

    The model's arity must equal the number of visible columns; a visible set
    missing a feature the model needs is rejected here, at construction.
    """

    model: TruthFunction
    visible_features: tuple[int, ...]
    confidence_noise: dict | None = None

    def __post_init__(self):
        object.__setattr__(self, "visible_features", tuple(int(i) for i in self.visible_features))
        if len(self.visible_features) == 0:
            raise ConfigError("annotator must see at least one feature")
        if len(set(self.visible_features)) != len(self.visible_features):
            raise ConfigError("annotator visible features contain duplicates")
        if self.model.input_arity != len(self.visible_features):
            raise ConfigError(
                f"annotator model needs {self.model.input_arity} features but "
                f"{len(self.visible_features)} are visible"
            )
        if self.confidence_noise is not None:
            kind = self.confidence_noise.get("kind")
            if kind not in ("mix_uniform", "dirichlet"):
                raise ConfigError(f"unknown confidence noise kind {kind!r}")


def annotate(spec: AnnotatorSpec, X_full, rng: np.random.Generator | None = None) -> np.ndarray:
    """Evaluate the annotator on its visible projection of the full feature matrix."""
    X_full = np.asarray(X_full, dtype=np.float64)
    if X_full.ndim != 2:
        raise DataError("annotator input must be a 2-D feature matrix")
    if max(spec.visible_features) >= X_full.shape[1]:
        raise DataError("visible feature index outside the supplied matrix")
    proj = X_full[:, spec.visible_features]
    if spec.model.soft_capable:
        probs = spec.model.predict_soft(proj)
    else:
        hard = spec.model.predict_hard(proj)
        probs = np.zeros((len(hard), spec.model.class_count))
        probs[np.arange(len(hard)), hard] = 1.0
    if spec.confidence_noise is None:
        return probs
    kind = spec.confidence_noise["kind"]
    C = probs.shape[1]
    if kind == "mix_uniform":
        w = float(spec.confidence_noise.get("weight", 0.0))
        if not 0.0 <= w <= 1.0:
            raise ConfigError("mix_uniform weight must lie in [0, 1]")
        return (1.0 - w) * probs + w / C
    # dirichlet: random miscalibration around the clean distribution
    if rng is None:
        raise ConfigError("dirichlet confidence noise requires a random stream")
    precision = float(spec.confidence_noise.get("precision", 10.0))
    if precision <= 0.0:
        raise ConfigError("dirichlet precision must be positive")
    draws = rng.standard_gamma(precision * probs + 1e-9)
    sums = draws.sum(axis=1, keepdims=True)
    safe = sums > 0.0
    out = np.where(safe, draws / np.where(safe, sums, 1.0), 1.0 / C)
    return out
