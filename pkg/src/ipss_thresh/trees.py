"""Random forests and boosted stumps grown from scratch, with MDI importance.

Split search and tree growth run in numba kernels. Everything random is
driven by seeds drawn up front, so a fit is a pure function of
(data, config, seed).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import numpy as np
from numba import njit

from .dataio import Dataset

REGRESSION = "regression"
CLASSIFICATION = "classification"

# relative tolerance under which two split gains count as tied
TIE_RTOL = 1e-12
SIGMOID_EPS = 1e-12


@dataclass(frozen=True)
class TreeConfig:
    n_trees: int = 100
    max_depth: int | None = None  # None means unlimited
    feature_fraction: float = 1.0 / 3.0
    learning_rate: float = 0.3
    l2_leaf_reg: float = 1.0
    bootstrap: bool = True
    min_samples_leaf: int = 1
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.feature_fraction <= 1.0:
            raise ValueError("feature_fraction must lie in (0, 1]")
        if self.n_trees < 1:
            raise ValueError("n_trees must be at least 1")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be at least 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be nonnegative or None")

    def n_split_features(self, p: int) -> int:
        return max(1, int(self.feature_fraction * p))


FOREST_CONFIG = TreeConfig()
BOOSTING_CONFIG = TreeConfig(max_depth=1, bootstrap=False)


@dataclass(frozen=True)
class SplitNode:
    feature: int
    threshold: float
    impurity: float
    delta_impurity: float
    n_samples: int
    left: int
    right: int


@dataclass(frozen=True)
class Tree:
    """Flat array representation; ``feature[i] == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    impurity: np.ndarray
    delta: np.ndarray
    n_samples: np.ndarray

    @property
    def node_count(self) -> int:
        return self.feature.shape[0]

    @property
    def depth(self) -> int:
        depths = np.zeros(self.node_count, dtype=np.int64)
        for i in range(self.node_count):
            if self.feature[i] >= 0:
                depths[self.left[i]] = depths[i] + 1
                depths[self.right[i]] = depths[i] + 1
        return int(depths.max())

    def split_nodes(self) -> Iterator[SplitNode]:
        for i in np.flatnonzero(self.feature >= 0):
            yield SplitNode(int(self.feature[i]), float(self.threshold[i]), float(self.impurity[i]),
                            float(self.delta[i]), int(self.n_samples[i]), int(self.left[i]), int(self.right[i]))

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            rows = np.flatnonzero(active)
            cur = node[rows]
            go_left = X[rows, self.feature[cur]] <= self.threshold[cur]
            node[rows] = np.where(go_left, self.left[cur], self.right[cur])
            active = self.feature[node] >= 0
        return self.value[node]


@dataclass(frozen=True)
class Ensemble:
    trees: list[Tree]
    task: str
    kind: str  # "forest" or "boosting"
    n_features: int
    learning_rate: float = 1.0
    base_score: float = 0.0
    config: TreeConfig = field(default_factory=TreeConfig)

    def __post_init__(self):
        if not self.trees:
            raise ValueError("an ensemble needs at least one tree")

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Mean of tree outputs (forest) or probability / value (boosting)."""
        if self.kind == "forest":
            return np.mean([t.predict(X) for t in self.trees], axis=0)
        margin = self.base_score + np.sum([t.predict(X) for t in self.trees], axis=0)
        if self.task == CLASSIFICATION:
            return 1.0 / (1.0 + np.exp(-margin))
        return margin


# ---------------------------------------------------------------------------
# impurity
# ---------------------------------------------------------------------------

def impurity(values, task: str) -> float:
    """Squared-error impurity for regression, Gini index 2*p0*p1 for classification."""
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise ValueError("impurity of an empty node")
    if task == REGRESSION:
        return float(np.mean((v - v.mean()) ** 2))
    if task == CLASSIFICATION:
        if not np.isin(v, (0.0, 1.0)).all():
            raise ValueError("classification labels must be 0/1")
        p1 = v.mean()
        return float(2.0 * p1 * (1.0 - p1))
    raise ValueError(f"unknown task {task!r}")


def delta_impurity(parent, left, right, task: str) -> float:
    parent = np.asarray(parent, dtype=float).ravel()
    left = np.asarray(left, dtype=float).ravel()
    right = np.asarray(right, dtype=float).ravel()
    if left.size == 0 or right.size == 0:
        raise ValueError("both children must be nonempty")
    if left.size + right.size != parent.size:
        raise ValueError("children sizes must add up to the parent size")
    n = parent.size
    return (impurity(parent, task)
            - left.size / n * impurity(left, task)
            - right.size / n * impurity(right, task))


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------

@njit(cache=True)
def _is_better(gain, best):
    return gain > best + TIE_RTOL * abs(best)


@njit(cache=True)
def _node_split(XT, y, idx, start, end, feats, is_clf, min_leaf, parent_imp):
    """Best (feature, threshold, delta) over ``feats`` for samples idx[start:end].

    Ties go to the feature visited first in ``feats``, then the lowest
    threshold. Returns feature -1 when no split decreases the impurity by more
    than rounding error.
    """
    n = end - start
    best_f = -1
    best_thr = 0.0
    # gains within rounding of zero are not improvements
    best_gain = TIE_RTOL * parent_imp
    vals = np.empty(n)
    ys = np.empty(n)

    total = 0.0
    for i in range(n):
        total += y[idx[start + i]]
    mean = total / n
    for i in range(n):
        ys[i] = y[idx[start + i]] - mean
    s_all = 0.0
    sq_all = 0.0
    for i in range(n):
        s_all += ys[i]
        sq_all += ys[i] * ys[i]
    n1_all = total

    for fi in range(feats.shape[0]):
        f = feats[fi]
        for i in range(n):
            vals[i] = XT[f, idx[start + i]]
        order = np.argsort(vals)
        s_l = 0.0
        sq_l = 0.0
        n1_l = 0.0
        for i in range(n - 1):
            o = order[i]
            if is_clf:
                n1_l += y[idx[start + o]]
            else:
                s_l += ys[o]
                sq_l += ys[o] * ys[o]
            v_here = vals[o]
            v_next = vals[order[i + 1]]
            if v_here == v_next:
                continue
            n_l = i + 1
            n_r = n - n_l
            if n_l < min_leaf or n_r < min_leaf:
                continue
            if is_clf:
                n1_r = n1_all - n1_l
                imp_l = 2.0 * n1_l * (n_l - n1_l) / (n_l * n_l)
                imp_r = 2.0 * n1_r * (n_r - n1_r) / (n_r * n_r)
            else:
                s_r = s_all - s_l
                imp_l = (sq_l - s_l * s_l / n_l) / n_l
                imp_r = ((sq_all - sq_l) - s_r * s_r / n_r) / n_r
            gain = parent_imp - (n_l / n) * imp_l - (n_r / n) * imp_r
            if _is_better(gain, best_gain):
                thr = 0.5 * (v_here + v_next)
                if thr >= v_next:
                    thr = v_here
                best_gain = gain
                best_f = f
                best_thr = thr
    if best_f < 0:
        best_gain = 0.0
    return best_f, best_thr, best_gain


@njit(cache=True)
def _node_impurity(y, idx, start, end, is_clf):
    n = end - start
    total = 0.0
    for i in range(start, end):
        total += y[idx[i]]
    mean = total / n
    if is_clf:
        return mean, 2.0 * mean * (1.0 - mean)
    sq = 0.0
    for i in range(start, end):
        d = y[idx[i]] - mean
        sq += d * d
    return mean, sq / n


@njit(cache=True)
def _grow_tree(XT, y, sample_idx, is_clf, max_depth, n_feat, min_leaf, seed):
    np.random.seed(seed)
    p = XT.shape[0]
    m = sample_idx.shape[0]
    cap = 2 * m + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap)
    imp = np.zeros(cap)
    delta = np.zeros(cap)
    count = np.zeros(cap, dtype=np.int64)

    idx = sample_idx.copy()
    pool = np.arange(p)
    all_feats = np.arange(p)
    chosen = np.empty(n_feat, dtype=np.int64)

    # stack rows: node, start, end, depth
    stack = np.empty((cap, 4), dtype=np.int64)
    top = 0
    stack[0, 0] = 0
    stack[0, 1] = 0
    stack[0, 2] = m
    stack[0, 3] = 0
    top = 1
    n_nodes = 1
    while top > 0:
        top -= 1
        node = stack[top, 0]
        start = stack[top, 1]
        end = stack[top, 2]
        depth = stack[top, 3]
        n = end - start
        mean, phi = _node_impurity(y, idx, start, end, is_clf)
        value[node] = mean
        imp[node] = phi
        count[node] = n
        if n < 2 * min_leaf or (max_depth >= 0 and depth >= max_depth):
            continue
        # exact purity test; phi of a constant node can round to a tiny positive
        pure = True
        y0 = y[idx[start]]
        for i in range(start + 1, end):
            if y[idx[i]] != y0:
                pure = False
                break
        if pure:
            imp[node] = 0.0
            continue

        if n_feat == p:
            feats = all_feats
        else:
            # uniform k-subset in random visiting order (partial Fisher-Yates)
            for i in range(n_feat):
                j = np.random.randint(i, p)
                tmp = pool[i]
                pool[i] = pool[j]
                pool[j] = tmp
                chosen[i] = pool[i]
            feats = chosen

        f, thr, gain = _node_split(XT, y, idx, start, end, feats, is_clf, min_leaf, phi)
        if f < 0:
            continue

        # stable in-place partition of idx[start:end]
        buf = idx[start:end].copy()
        lo = start
        for i in range(n):
            if XT[f, buf[i]] <= thr:
                idx[lo] = buf[i]
                lo += 1
        mid = lo
        for i in range(n):
            if XT[f, buf[i]] > thr:
                idx[lo] = buf[i]
                lo += 1

        feature[node] = f
        threshold[node] = thr
        delta[node] = gain
        l_id = n_nodes
        r_id = n_nodes + 1
        n_nodes += 2
        left[node] = l_id
        right[node] = r_id
        # push right first so the left subtree is numbered first
        stack[top, 0] = r_id
        stack[top, 1] = mid
        stack[top, 2] = end
        stack[top, 3] = depth + 1
        top += 1
        stack[top, 0] = l_id
        stack[top, 1] = start
        stack[top, 2] = mid
        stack[top, 3] = depth + 1
        top += 1

    return (feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes],
            value[:n_nodes], imp[:n_nodes], delta[:n_nodes], count[:n_nodes])


@njit(cache=True)
def _best_stump(XT, order, g, h, feats, reg, min_leaf):
    n = g.shape[0]
    g_all = 0.0
    h_all = 0.0
    for i in range(n):
        g_all += g[i]
        h_all += h[i]
    parent = g_all * g_all / (h_all + reg)

    best_f = -1
    best_thr = 0.0
    best_gain = 0.0
    best_gl = 0.0
    best_hl = 0.0
    for fi in range(feats.shape[0]):
        f = feats[fi]
        g_l = 0.0
        h_l = 0.0
        for i in range(n - 1):
            o = order[f, i]
            g_l += g[o]
            h_l += h[o]
            v_here = XT[f, o]
            v_next = XT[f, order[f, i + 1]]
            if v_here == v_next:
                continue
            n_l = i + 1
            if n_l < min_leaf or n - n_l < min_leaf:
                continue
            g_r = g_all - g_l
            h_r = h_all - h_l
            gain = 0.5 * (g_l * g_l / (h_l + reg) + g_r * g_r / (h_r + reg) - parent)
            if _is_better(gain, best_gain):
                thr = 0.5 * (v_here + v_next)
                if thr >= v_next:
                    thr = v_here
                best_gain = gain
                best_f = f
                best_thr = thr
                best_gl = g_l
                best_hl = h_l
    return best_f, best_thr, best_gain, g_all, h_all, best_gl, best_hl


@njit(cache=True)
def _fit_stumps(XT, order, y, is_clf, base, feat_sets, lr, reg, min_leaf):
    n = y.shape[0]
    rounds = feat_sets.shape[0]
    feature = np.full(rounds, -1, dtype=np.int64)
    threshold = np.zeros(rounds)
    gain_out = np.zeros(rounds)
    root_val = np.zeros(rounds)
    left_val = np.zeros(rounds)
    right_val = np.zeros(rounds)
    n_left = np.zeros(rounds, dtype=np.int64)
    g_root = np.zeros(rounds)
    h_root = np.zeros(rounds)

    margin = np.full(n, base)
    g = np.empty(n)
    h = np.empty(n)
    for r in range(rounds):
        for i in range(n):
            if is_clf:
                s = 1.0 / (1.0 + np.exp(-margin[i]))
                if s < 1e-12:
                    s = 1e-12
                elif s > 1.0 - 1e-12:
                    s = 1.0 - 1e-12
                g[i] = s - y[i]
                h[i] = s * (1.0 - s)
            else:
                g[i] = margin[i] - y[i]
                h[i] = 1.0
        f, thr, gain, g_all, h_all, g_l, h_l = _best_stump(XT, order, g, h, feat_sets[r], reg, min_leaf)
        g_root[r] = g_all
        h_root[r] = h_all
        root_val[r] = -lr * g_all / (h_all + reg)
        if f < 0:
            for i in range(n):
                margin[i] += root_val[r]
            continue
        feature[r] = f
        threshold[r] = thr
        gain_out[r] = gain
        left_val[r] = -lr * g_l / (h_l + reg)
        right_val[r] = -lr * (g_all - g_l) / ((h_all - h_l) + reg)
        cnt = 0
        for i in range(n):
            if XT[f, i] <= thr:
                margin[i] += left_val[r]
                cnt += 1
            else:
                margin[i] += right_val[r]
        n_left[r] = cnt
    return feature, threshold, gain_out, root_val, left_val, right_val, n_left, g_root, h_root


# ---------------------------------------------------------------------------
# public fitting API
# ---------------------------------------------------------------------------

def _task_flag(task: str) -> bool:
    if task not in (REGRESSION, CLASSIFICATION):
        raise ValueError(f"unknown task {task!r}")
    return task == CLASSIFICATION


def fit_forest_arrays(X, y, task: str, cfg: TreeConfig = FOREST_CONFIG) -> Ensemble:
    X = np.asarray(X, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    n, p = X.shape
    XT = np.ascontiguousarray(X.T)
    is_clf = _task_flag(task)
    k = cfg.n_split_features(p)
    depth = -1 if cfg.max_depth is None else cfg.max_depth

    # per-tree seeds drawn first, so any tree can be regrown independently
    tree_seqs = np.random.SeedSequence(int(cfg.seed)).spawn(cfg.n_trees)
    trees = []
    for seq in tree_seqs:
        rng = np.random.default_rng(seq)
        if cfg.bootstrap:
            sample = rng.integers(0, n, size=n).astype(np.int64)
        else:
            sample = np.arange(n, dtype=np.int64)
        kernel_seed = int(rng.integers(0, 2 ** 32 - 1))
        arrays = _grow_tree(XT, y, sample, is_clf, depth, k, cfg.min_samples_leaf, kernel_seed)
        trees.append(Tree(*arrays))
    return Ensemble(trees, task, "forest", p, config=cfg)


def fit_forest(d: Dataset, cfg: TreeConfig = FOREST_CONFIG) -> Ensemble:
    return fit_forest_arrays(d.features, d.response, d.task, cfg)


def _base_score(y, is_clf) -> float:
    if not is_clf:
        return float(np.mean(y))
    rate = min(max(float(np.mean(y)), SIGMOID_EPS), 1.0 - SIGMOID_EPS)
    return float(np.log(rate / (1.0 - rate)))


def _stump(feature, threshold, gain, root_val, left_val, right_val, n_left, n, g_root, h_root, reg):
    root_imp = 0.5 * g_root * g_root / (h_root + reg)
    if feature < 0:
        return Tree(np.array([-1]), np.zeros(1), np.array([-1]), np.array([-1]),
                    np.array([root_val]), np.array([root_imp]), np.zeros(1), np.array([n]))
    return Tree(
        np.array([feature, -1, -1]),
        np.array([threshold, 0.0, 0.0]),
        np.array([1, -1, -1]),
        np.array([2, -1, -1]),
        np.array([root_val, left_val, right_val]),
        np.array([root_imp, 0.0, 0.0]),
        np.array([gain, 0.0, 0.0]),
        np.array([n, n_left, n - n_left]),
    )


def fit_boosting_arrays(X, y, task: str, cfg: TreeConfig = BOOSTING_CONFIG) -> Ensemble:
    """Second-order boosting of depth-1 trees.

    Each stump's split ``delta`` is the regularized objective gain, which is
    what ``mdi_importance`` sums for boosted ensembles.
    """
    X = np.asarray(X, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    n, p = X.shape
    XT = np.ascontiguousarray(X.T)
    order = np.argsort(XT, axis=1, kind="stable")
    is_clf = _task_flag(task)
    k = cfg.n_split_features(p)
    rng = np.random.default_rng(np.random.SeedSequence(int(cfg.seed)))
    if k == p:
        feat_sets = np.tile(np.arange(p, dtype=np.int64), (cfg.n_trees, 1))
    else:
        # random visiting order doubles as the tie-break order
        feat_sets = np.argsort(rng.random((cfg.n_trees, p)), axis=1)[:, :k]
    base = _base_score(y, is_clf)
    out = _fit_stumps(XT, order, y, is_clf, base, np.ascontiguousarray(feat_sets),
                      cfg.learning_rate, cfg.l2_leaf_reg, cfg.min_samples_leaf)
    trees = [_stump(*(a[r] for a in out[:7]), n, out[7][r], out[8][r], cfg.l2_leaf_reg)
             for r in range(cfg.n_trees)]
    return Ensemble(trees, task, "boosting", p, learning_rate=cfg.learning_rate, base_score=base, config=cfg)


def fit_boosting(d: Dataset, cfg: TreeConfig = BOOSTING_CONFIG) -> Ensemble:
    if cfg.max_depth != 1:
        cfg = TreeConfig(**{**cfg.__dict__, "max_depth": 1})
    return fit_boosting_arrays(d.features, d.response, d.task, cfg)


def mdi_importance(e: Ensemble, p: int | None = None) -> np.ndarray:
    """Per-feature sum of split decreases over all trees, divided by the tree count."""
    p = e.n_features if p is None else p
    total = np.zeros(p)
    for t in e.trees:
        split = t.feature >= 0
        total += np.bincount(t.feature[split], weights=t.delta[split], minlength=p)
    return total / len(e.trees)


def best_split(X, y, task: str, min_samples_leaf: int = 1):
    """Exhaustive best split of one node over all features.

    Returns ``(feature, threshold, delta)`` or ``(-1, 0.0, 0.0)`` when no
    split lowers the impurity.
    """
    X = np.asarray(X, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    is_clf = _task_flag(task)
    XT = np.ascontiguousarray(X.T)
    idx = np.arange(X.shape[0], dtype=np.int64)
    _, phi = _node_impurity(y, idx, 0, idx.size, is_clf)
    feats = np.arange(X.shape[1], dtype=np.int64)
    f, thr, gain = _node_split(XT, y, idx, 0, idx.size, feats, is_clf, min_samples_leaf, phi)
    return int(f), float(thr), float(gain)
