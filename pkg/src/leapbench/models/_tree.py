"""CART tree growing and evaluation, compiled with numba.

One builder serves every tree model in the zoo: Gini impurity on binary
targets (forests, AdaBoost stumps) or squared error on real targets
(gradient boosting), exhaustive or randomized thresholds, optional per-node
feature subsampling and sample weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

GINI = 0
SQUARED_ERROR = 1
LEAF = -1


@numba.njit(cache=True)
def _impurity(criterion, w, s, q):
    if w <= 0.0:
        return 0.0
    mean = s / w
    if criterion == GINI:
        return 2.0 * mean * (1.0 - mean)
    v = q / w - mean * mean
    return v if v > 0.0 else 0.0


@numba.njit(cache=True)
def _build(X, y, w, samples, criterion, max_depth, min_samples_leaf, min_samples_split,
           max_features, random_splits, seed):
    np.random.seed(seed)
    n_total = samples.shape[0]
    d = X.shape[1]
    cap = 2 * n_total + 1
    if max_depth < 30:
        cap = min(cap, 2 ** (max_depth + 1))
    feature = np.full(cap, LEAF, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, LEAF, dtype=np.int64)
    right = np.full(cap, LEAF, dtype=np.int64)
    value = np.zeros(cap)
    impurity = np.zeros(cap)
    n_node = np.zeros(cap, dtype=np.int64)
    w_node = np.zeros(cap)

    # stack entries: start, end, depth, node id
    st_start = np.empty(cap, dtype=np.int64)
    st_end = np.empty(cap, dtype=np.int64)
    st_depth = np.empty(cap, dtype=np.int64)
    st_node = np.empty(cap, dtype=np.int64)
    top = 0
    st_start[0] = 0
    st_end[0] = n_total
    st_depth[0] = 0
    st_node[0] = 0
    top = 1
    n_nodes = 1

    feats = np.arange(d)
    xs = np.empty(n_total)
    ys = np.empty(n_total)
    ws = np.empty(n_total)
    buf = np.empty(n_total, dtype=np.int64)

    while top > 0:
        top -= 1
        start = st_start[top]
        end = st_end[top]
        depth = st_depth[top]
        node = st_node[top]
        n = end - start

        W = 0.0
        S = 0.0
        Q = 0.0
        for i in range(start, end):
            k = samples[i]
            W += w[k]
            S += w[k] * y[k]
            Q += w[k] * y[k] * y[k]
        imp = _impurity(criterion, W, S, Q)
        n_node[node] = n
        w_node[node] = W
        impurity[node] = imp
        value[node] = S / W if W > 0.0 else 0.0

        if depth >= max_depth or n < min_samples_split or n < 2 * min_samples_leaf or imp <= 1e-12:
            continue

        # partial Fisher-Yates draw of candidate features
        for j in range(max_features):
            r = j + np.random.randint(0, d - j)
            tmp = feats[j]
            feats[j] = feats[r]
            feats[r] = tmp

        best_score = np.inf
        best_feat = -1
        best_thr = 0.0
        for jj in range(max_features):
            f = feats[jj]
            for i in range(n):
                xs[i] = X[samples[start + i], f]
            if random_splits:
                lo = xs[0]
                hi = xs[0]
                for i in range(1, n):
                    if xs[i] < lo:
                        lo = xs[i]
                    if xs[i] > hi:
                        hi = xs[i]
                if hi <= lo:
                    continue
                thr = lo + np.random.random() * (hi - lo)
                if thr >= hi:
                    thr = lo
                wl = 0.0
                sl = 0.0
                ql = 0.0
                nl = 0
                for i in range(n):
                    if xs[i] <= thr:
                        k = samples[start + i]
                        nl += 1
                        wl += w[k]
                        sl += w[k] * y[k]
                        ql += w[k] * y[k] * y[k]
                nr = n - nl
                if nl < min_samples_leaf or nr < min_samples_leaf:
                    continue
                score = wl * _impurity(criterion, wl, sl, ql) + (W - wl) * _impurity(
                    criterion, W - wl, S - sl, Q - ql)
                if score < best_score:
                    best_score = score
                    best_feat = f
                    best_thr = thr
            else:
                order = np.argsort(xs[:n], kind="mergesort")
                for i in range(n):
                    k = samples[start + order[i]]
                    ys[i] = y[k]
                    ws[i] = w[k]
                wl = 0.0
                sl = 0.0
                ql = 0.0
                for i in range(n - 1):
                    wl += ws[i]
                    sl += ws[i] * ys[i]
                    ql += ws[i] * ys[i] * ys[i]
                    nl = i + 1
                    if nl < min_samples_leaf:
                        continue
                    if n - nl < min_samples_leaf:
                        break
                    x_here = xs[order[i]]
                    x_next = xs[order[i + 1]]
                    if x_next <= x_here:
                        continue
                    score = wl * _impurity(criterion, wl, sl, ql) + (W - wl) * _impurity(
                        criterion, W - wl, S - sl, Q - ql)
                    if score < best_score:
                        best_score = score
                        best_feat = f
                        thr = 0.5 * (x_here + x_next)
                        if thr >= x_next or thr < x_here:
                            thr = x_here
                        best_thr = thr

        if best_feat < 0 or best_score >= W * imp - 1e-12 * W:
            continue

        # partition samples[start:end] so rows going left come first
        nl = 0
        nr = 0
        for i in range(start, end):
            k = samples[i]
            if X[k, best_feat] <= best_thr:
                samples[start + nl] = k
                nl += 1
            else:
                buf[nr] = k
                nr += 1
        for i in range(nr):
            samples[start + nl + i] = buf[i]

        lnode = n_nodes
        rnode = n_nodes + 1
        n_nodes += 2
        feature[node] = best_feat
        threshold[node] = best_thr
        left[node] = lnode
        right[node] = rnode

        st_start[top] = start + nl
        st_end[top] = end
        st_depth[top] = depth + 1
        st_node[top] = rnode
        top += 1
        st_start[top] = start
        st_end[top] = start + nl
        st_depth[top] = depth + 1
        st_node[top] = lnode
        top += 1

    return (feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes],
            value[:n_nodes], impurity[:n_nodes], n_node[:n_nodes], w_node[:n_nodes])


@numba.njit(cache=True)
def _apply(feature, threshold, left, right, X):
    out = np.empty(X.shape[0], dtype=np.int64)
    for i in range(X.shape[0]):
        node = 0
        while feature[node] != LEAF:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out


@dataclass
class Tree:
    """Flat-array binary tree. ``value`` holds the prediction of each node."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    impurity: np.ndarray
    n_node_samples: np.ndarray
    weighted_n_node_samples: np.ndarray

    ARRAYS = ("feature", "threshold", "left", "right", "value", "impurity",
              "n_node_samples", "weighted_n_node_samples")

    @property
    def node_count(self) -> int:
        return len(self.feature)

    @property
    def is_leaf(self) -> np.ndarray:
        return self.feature == LEAF

    def apply(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        return _apply(self.feature, self.threshold, self.left, self.right, X)

    def predict(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    def impurity_decrease(self, n_features: int) -> np.ndarray:
        """Unnormalized total weighted impurity decrease per feature."""
        out = np.zeros(n_features)
        for node in np.flatnonzero(~self.is_leaf):
            l, r = self.left[node], self.right[node]
            wn = self.weighted_n_node_samples
            out[self.feature[node]] += (
                wn[node] * self.impurity[node] - wn[l] * self.impurity[l] - wn[r] * self.impurity[r]
            )
        return np.maximum(out, 0.0)

    def state(self, prefix: str) -> dict:
        return {f"{prefix}{name}": getattr(self, name) for name in self.ARRAYS}

    @classmethod
    def from_state(cls, state: dict, prefix: str) -> Tree:
        return cls(**{name: np.asarray(state[f"{prefix}{name}"]) for name in cls.ARRAYS})


def grow_tree(X, y, *, sample_weight=None, samples=None, criterion=GINI, max_depth=16,
              min_samples_leaf=1, min_samples_split=2, max_features=None,
              random_splits=False, seed=0) -> Tree:
    """Grow one tree on rows ``samples`` of ``X`` (duplicates allowed)."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    n, d = X.shape
    w = np.ones(n) if sample_weight is None else np.ascontiguousarray(sample_weight, dtype=np.float64)
    samples = np.arange(n, dtype=np.int64) if samples is None else np.array(samples, dtype=np.int64)
    k = d if max_features is None else int(max(1, min(d, max_features)))
    arrays = _build(X, y, w, samples, int(criterion), int(max_depth), int(min_samples_leaf),
                    int(max(min_samples_split, 2)), k, bool(random_splits), int(seed) % (2**32))
    return Tree(*arrays)
