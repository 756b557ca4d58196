# vim: set ts=4 sts=0 sw=4 si fenc=utf-8 et:
# vim: set fdm=marker fmr={{{,}}} fdl=0 foldcolumn=4:
# Authors:     BP
# =========================================
"""
histogram gradient boosting, squared-error loss, plain numpy.

    features --BinMapper--> uint8 bins (255 = missing)
    per iteration: residuals -> one leaf-wise tree -> F += eta * leaf value

trees keep the real-valued edge of every split, so predict works on the
raw feature matrix and never re-bins.
"""

# ---- dependencies {{{
import math
import struct
from dataclasses import dataclass, field
from functools import cached_property
from heapq import heappop, heappush

import numpy as np
from loguru import logger

from slotcast.errors import DimensionMismatch, NonFiniteTarget, TooFewSamples

# }}}

MISSING_BIN = 255
N_SLOTS = 256
GAIN_TOL = 1e-12
# below this many rows predict walks the trees in plain python
ROW_WALK_MAX = 8

FIT_KEYS = (
    "learning_rate",
    "iterations",
    "max_leaves",
    "min_samples_leaf",
    "l2",
    "bins",
    "binning_sample",
    "seed",
)
FIT_DEFAULTS = {
    "learning_rate": 0.07,
    "iterations": 300,
    "max_leaves": 31,
    "min_samples_leaf": 20,
    "l2": 0.0,
    "bins": 255,
    "binning_sample": 100000,
    "seed": 0,
}


def as_rows(features):
    rows = getattr(features, "rows", features)
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim == 1:
        rows = rows.reshape(-1, 1)
    return rows


# --- binning --- {{{
@dataclass
class BinMapper:
    edges: list  # one strictly increasing float array per feature

    @property
    def n_features(self):
        return len(self.edges)

    @classmethod
    def fit(cls, X, bins=255, sample=100000, seed=0):
        assert 2 <= bins <= 255, f"bins must be in [2, 255], got {bins}"
        X = as_rows(X)
        n = X.shape[0]
        rows = np.arange(n)
        if n > sample:
            rng = np.random.default_rng(seed)
            rows = np.sort(rng.choice(n, size=sample, replace=False))
        quantiles = np.linspace(0, 1, bins + 1)[1:-1]
        edges = []
        for j in range(X.shape[1]):
            col = X[:, j]
            distinct = np.unique(col[np.isfinite(col)])
            if distinct.size <= bins:
                edge = (distinct[:-1] + distinct[1:]) / 2.0
            else:
                sampled = X[rows, j]
                sampled = sampled[np.isfinite(sampled)]
                edge = np.quantile(sampled, quantiles)
            edges.append(np.unique(edge).astype(np.float64))
        return cls(edges=edges)

    def transform(self, X):
        """bin(x) <= b exactly when x <= edges[b]; non-finite -> MISSING_BIN"""
        X = as_rows(X)
        if X.shape[1] != self.n_features:
            raise DimensionMismatch(
                f"binning {X.shape[1]} columns with a {self.n_features}-column mapper"
            )
        out = np.full(X.shape, MISSING_BIN, dtype=np.uint8)
        for j, edge in enumerate(self.edges):
            col = X[:, j]
            finite = np.isfinite(col)
            out[finite, j] = np.searchsorted(edge, col[finite], side="left")
        return out


# }}}


# --- trees --- {{{
@dataclass
class Tree:
    feature: np.ndarray  # -1 marks a leaf
    bin: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self):
        return self.feature.size

    @property
    def n_leaves(self):
        return int(np.sum(self.feature < 0))

    def predict(self, X):
        X = as_rows(X)
        node = np.zeros(X.shape[0], dtype=np.int64)
        while True:
            feat = self.feature[node]
            rows = np.nonzero(feat >= 0)[0]
            if rows.size == 0:
                break
            at = node[rows]
            x = X[rows, feat[rows]]
            go_left = np.isfinite(x) & (x <= self.threshold[at])
            node[rows] = np.where(go_left, self.left[at], self.right[at])
        return self.value[node]

    @cached_property
    def nodes(self):
        return list(
            zip(
                self.feature.tolist(),
                self.threshold.tolist(),
                self.left.tolist(),
                self.right.tolist(),
                self.value.tolist(),
            )
        )

    def predict_row(self, x):
        """same routing as predict, for one row given as a list of floats"""
        nodes = self.nodes
        feature, threshold, left, right, value = nodes[0]
        while feature >= 0:
            v = x[feature]
            at = left if (math.isfinite(v) and v <= threshold) else right
            feature, threshold, left, right, value = nodes[at]
        return value

    def arrays(self):
        return {
            "feature": self.feature,
            "bin": self.bin,
            "threshold": self.threshold,
            "left": self.left,
            "right": self.right,
            "value": self.value,
        }


@dataclass
class Split:
    gain: float
    feature: int
    bin: int


@dataclass(eq=False)
class GrowingNode:
    idx: np.ndarray
    sums: np.ndarray  # (features, 256) residual sums per bin
    counts: np.ndarray  # (features, 256) row counts per bin
    total: float
    split: Split | None = None
    node_id: int = 0


def build_histograms(Xb, idx, residuals):
    d = Xb.shape[1]
    flat = (Xb[idx].astype(np.int64) + np.arange(d, dtype=np.int64) * N_SLOTS).ravel()
    sums = np.bincount(flat, weights=np.repeat(residuals[idx], d), minlength=d * N_SLOTS)
    counts = np.bincount(flat, minlength=d * N_SLOTS)
    return sums.reshape(d, N_SLOTS), counts.reshape(d, N_SLOTS)


def best_split(node, n_edges, min_samples_leaf, l2):
    """
    left = real bins <= b, right = the rest plus the missing bin.
    first argmax over (feature, bin) gives the lowest feature, then the
    lowest bin, among equal gains.
    """
    n_parent = node.idx.size
    if n_parent < 2 * min_samples_leaf:
        return None
    left_sums = np.cumsum(node.sums[:, :MISSING_BIN], axis=1)
    left_counts = np.cumsum(node.counts[:, :MISSING_BIN], axis=1)
    right_sums = node.total - left_sums
    right_counts = n_parent - left_counts
    candidate = np.arange(MISSING_BIN)[None, :] < n_edges[:, None]
    valid = (
        candidate
        & (left_counts >= min_samples_leaf)
        & (right_counts >= min_samples_leaf)
    )
    if not valid.any():
        return None
    left_den = np.where(valid, left_counts + l2, 1.0)
    right_den = np.where(valid, right_counts + l2, 1.0)
    gain = (
        left_sums**2 / left_den
        + right_sums**2 / right_den
        - node.total**2 / (n_parent + l2)
    )
    gain = np.where(valid, gain, -np.inf)
    flat = int(np.argmax(gain))
    feature, b = divmod(flat, MISSING_BIN)
    if not gain[feature, b] > GAIN_TOL:
        return None
    return Split(gain=float(gain[feature, b]), feature=feature, bin=b)


def grow_tree(Xb, residuals, mapper, max_leaves, min_samples_leaf, l2):
    """
    best-first: the open node with the largest gain splits next, until
    max_leaves leaves exist or no split has positive gain.
    returns the tree and (rows, value) for every leaf.
    """
    n_edges = np.array([e.size for e in mapper.edges], dtype=np.int64)
    blank = {"feature": -1, "bin": 0, "threshold": 0.0, "left": -1, "right": -1, "value": 0.0}
    nodes = {key: [] for key in blank}

    def new_node():
        for key, default in blank.items():
            nodes[key].append(default)
        return len(nodes["feature"]) - 1

    new_node()

    idx = np.arange(Xb.shape[0])
    sums, counts = build_histograms(Xb, idx, residuals)
    root = GrowingNode(idx=idx, sums=sums, counts=counts, total=float(residuals.sum()))
    root.split = best_split(root, n_edges, min_samples_leaf, l2)
    heap, leaves, tiebreak = [], [root], 0
    if root.split is not None:
        heappush(heap, (-root.split.gain, tiebreak, root))
    while heap and len(leaves) < max_leaves:
        _, _, parent = heappop(heap)
        split = parent.split
        go_left = Xb[parent.idx, split.feature] <= split.bin
        left_idx, right_idx = parent.idx[go_left], parent.idx[~go_left]
        small_idx, large_idx = (left_idx, right_idx) if left_idx.size <= right_idx.size else (right_idx, left_idx)
        small_sums, small_counts = build_histograms(Xb, small_idx, residuals)
        large_sums, large_counts = parent.sums - small_sums, parent.counts - small_counts
        small_total = float(residuals[small_idx].sum())
        small = GrowingNode(small_idx, small_sums, small_counts, small_total)
        large = GrowingNode(large_idx, large_sums, large_counts, parent.total - small_total)
        left, right = (small, large) if small_idx is left_idx else (large, small)

        at = parent.node_id
        left.node_id, right.node_id = new_node(), new_node()
        nodes["feature"][at] = split.feature
        nodes["bin"][at] = split.bin
        nodes["threshold"][at] = float(mapper.edges[split.feature][split.bin])
        nodes["left"][at] = left.node_id
        nodes["right"][at] = right.node_id
        parent.sums = parent.counts = None
        leaves.remove(parent)
        for child in (left, right):
            leaves.append(child)
            child.split = best_split(child, n_edges, min_samples_leaf, l2)
            if child.split is not None:
                tiebreak += 1
                heappush(heap, (-child.split.gain, tiebreak, child))

    assignments = []
    for leaf in leaves:
        value = float(residuals[leaf.idx].sum()) / (leaf.idx.size + l2)
        nodes["value"][leaf.node_id] = value
        assignments.append((leaf.idx, value))
    tree = Tree(
        feature=np.array(nodes["feature"], dtype=np.int32),
        bin=np.array(nodes["bin"], dtype=np.int32),
        threshold=np.array(nodes["threshold"], dtype=np.float64),
        left=np.array(nodes["left"], dtype=np.int32),
        right=np.array(nodes["right"], dtype=np.int32),
        value=np.array(nodes["value"], dtype=np.float64),
    )
    assert tree.n_leaves <= max_leaves
    return tree, assignments


# }}}


# --- the ensemble --- {{{
@dataclass
class Forest:
    trees: list
    learning_rate: float
    baseline: float
    n_features: int
    config: dict = field(default_factory=dict)
    loss_curve: list = field(default_factory=list)

    def predict(self, features):
        X = as_rows(features)
        if X.shape[1] != self.n_features:
            raise DimensionMismatch(
                f"forest expects {self.n_features} feature columns, got {X.shape[1]}"
            )
        out = np.full(X.shape[0], self.baseline, dtype=np.float64)
        if X.shape[0] <= ROW_WALK_MAX:
            rows = X.tolist()
            for tree in self.trees:
                out += self.learning_rate * np.array([tree.predict_row(x) for x in rows])
            return out
        for tree in self.trees:
            out += self.learning_rate * tree.predict(X)
        return out

    def to_bytes(self):
        """canonical byte image of the fitted model"""
        parts = [struct.pack("<ddqq", self.baseline, self.learning_rate, self.n_features, len(self.trees))]
        for tree in self.trees:
            parts.append(struct.pack("<q", tree.n_nodes))
            for arr in tree.arrays().values():
                parts.append(np.ascontiguousarray(arr).tobytes())
        return b"".join(parts)


def fit_config(config=None, **overrides):
    out = dict(FIT_DEFAULTS)
    for key in FIT_KEYS:
        if config is not None and key in config:
            out[key] = config[key]
    out.update({k: v for k, v in overrides.items() if v is not None})
    return out


def fit(features, targets, config=None, **overrides):
    cfg = fit_config(config, **overrides)
    X = as_rows(features)
    y = np.asarray(targets, dtype=np.float64).ravel()
    if X.shape[0] != y.size:
        raise DimensionMismatch(f"{X.shape[0]} feature rows but {y.size} targets")
    msl = int(cfg["min_samples_leaf"])
    assert msl >= 1, "min_samples_leaf must be positive"
    if y.size < 2 * msl:
        raise TooFewSamples(f"need at least {2 * msl} rows, got {y.size}")
    if not np.all(np.isfinite(y)):
        raise NonFiniteTarget("targets contain NaN or infinite values")

    mapper = BinMapper.fit(X, bins=int(cfg["bins"]), sample=int(cfg["binning_sample"]), seed=int(cfg["seed"]))
    Xb = mapper.transform(X)
    baseline = float(y[0]) if np.all(y == y[0]) else float(y.mean())
    eta = float(cfg["learning_rate"])
    F = np.full(y.size, baseline)
    trees, losses = [], []
    for _ in range(int(cfg["iterations"])):
        residuals = y - F
        tree, assignments = grow_tree(
            Xb, residuals, mapper, int(cfg["max_leaves"]), msl, float(cfg["l2"])
        )
        for rows, value in assignments:
            F[rows] += eta * value
        trees.append(tree)
        losses.append(float(np.mean((y - F) ** 2)))
    logger.info(
        f"fit {len(trees)} trees on {y.size} rows x {X.shape[1]} features, "
        f"training mse {losses[-1] if losses else float(np.mean((y - F) ** 2)):.6f}"
    )
    return Forest(
        trees=trees,
        learning_rate=eta,
        baseline=baseline,
        n_features=X.shape[1],
        config=cfg,
        loss_curve=losses,
    )


def predict(forest, features):
    return forest.predict(features)


# }}}

# done.
