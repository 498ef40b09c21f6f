"""Tree ensembles: random forest, extremely randomized trees, gradient boosting, AdaBoost."""

from __future__ import annotations

import numpy as np

from ._tree import GINI, SQUARED_ERROR, Tree, grow_tree
from .linear import sigmoid


def _tree_seeds(seed, n):
    """Independent (bootstrap seed, split seed) pairs, one per tree index."""
    children = np.random.SeedSequence(seed).spawn(n)
    return [c.generate_state(2, dtype=np.uint32) for c in children]


def _normalized(v):
    total = v.sum()
    return v / total if total > 0 else np.zeros_like(v)


def _trees_state(trees):
    state = {"n_trees": np.array([len(trees)])}
    for i, tree in enumerate(trees):
        state.update(tree.state(f"tree{i}_"))
    return state


def _trees_from_state(state):
    n = int(np.asarray(state["n_trees"])[0])
    return [Tree.from_state(state, f"tree{i}_") for i in range(n)]


class RandomForest:
    """Bagged Gini trees. ``bootstrap=False, random_splits=True`` gives extra trees.

    The positive-class probability is the mean over trees of the positive
    fraction in the leaf each row lands in.
    """

    def __init__(self, n_estimators=300, max_depth=16, min_samples_leaf=2,
                 max_features="sqrt", bootstrap=True, random_splits=False, seed=0):
        self.n_estimators = n_estimators
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.max_features = max_features
        self.bootstrap = bootstrap
        self.random_splits = random_splits
        self.seed = seed

    def _n_features_per_split(self, d):
        if self.max_features == "sqrt":
            return max(1, int(np.sqrt(d)))
        if self.max_features is None:
            return d
        return int(self.max_features)

    def fit(self, X, y):
        X = np.ascontiguousarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        n, d = X.shape
        k = self._n_features_per_split(d)
        self.n_features_ = d
        self.trees_ = []
        for boot_seed, split_seed in _tree_seeds(self.seed, self.n_estimators):
            samples = None
            if self.bootstrap:
                samples = np.random.default_rng(boot_seed).integers(0, n, size=n)
            self.trees_.append(grow_tree(
                X, y, samples=samples, criterion=GINI, max_depth=self.max_depth,
                min_samples_leaf=self.min_samples_leaf, max_features=k,
                random_splits=self.random_splits, seed=split_seed,
            ))
        return self

    def predict_proba(self, X):
        X = np.ascontiguousarray(X, dtype=np.float64)
        total = np.zeros(X.shape[0])
        for tree in self.trees_:
            total += tree.predict(X)
        return total / len(self.trees_)

    def feature_importances(self):
        per_tree = [_normalized(t.impurity_decrease(self.n_features_)) for t in self.trees_]
        return _normalized(np.mean(per_tree, axis=0))

    def state(self):
        return {**_trees_state(self.trees_), "n_features": np.array([self.n_features_])}

    @classmethod
    def from_state(cls, state, **params):
        model = cls(**params)
        model.trees_ = _trees_from_state(state)
        model.n_features_ = int(np.asarray(state["n_features"])[0])
        return model


class GradientBoosting:
    """Binomial-deviance gradient boosting with regression trees.

    Each stage fits a squared-error tree to the residuals ``y - p`` and
    replaces its leaf values by one Newton step,
    ``sum(residual) / sum(p * (1 - p))`` over the leaf, scaled by the
    learning rate. The initial score is the log-odds of the training base
    rate.
    """

    def __init__(self, n_estimators=250, learning_rate=0.05, max_depth=3, min_samples_leaf=1, seed=0):
        self.n_estimators = n_estimators
        self.learning_rate = learning_rate
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.seed = seed

    def fit(self, X, y):
        X = np.ascontiguousarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        n, d = X.shape
        self.n_features_ = d
        base = np.clip(y.mean(), 1e-12, 1 - 1e-12)
        self.init_score_ = float(np.log(base / (1 - base)))
        F = np.full(n, self.init_score_)
        self.trees_ = []
        self.train_loss_ = [_log_loss(y, F)]
        for _, split_seed in _tree_seeds(self.seed, self.n_estimators):
            p = sigmoid(F)
            residual = y - p
            tree = grow_tree(X, residual, criterion=SQUARED_ERROR, max_depth=self.max_depth,
                             min_samples_leaf=self.min_samples_leaf, seed=split_seed)
            leaves = tree.apply(X)
            num = np.bincount(leaves, weights=residual, minlength=tree.node_count)
            den = np.bincount(leaves, weights=p * (1 - p), minlength=tree.node_count)
            step = np.zeros(tree.node_count)
            ok = den > 1e-150
            step[ok] = num[ok] / den[ok]
            tree.value = np.where(tree.is_leaf, step, 0.0)
            F += self.learning_rate * tree.value[leaves]
            self.trees_.append(tree)
            self.train_loss_.append(_log_loss(y, F))
        return self

    def decision_function(self, X):
        X = np.ascontiguousarray(X, dtype=np.float64)
        F = np.full(X.shape[0], self.init_score_)
        for tree in self.trees_:
            F += self.learning_rate * tree.predict(X)
        return F

    def predict_proba(self, X):
        return sigmoid(self.decision_function(X))

    def feature_importances(self):
        if not self.trees_:
            return np.zeros(self.n_features_)
        per_tree = [_normalized(t.impurity_decrease(self.n_features_)) for t in self.trees_]
        return _normalized(np.mean(per_tree, axis=0))

    def state(self):
        return {**_trees_state(self.trees_), "n_features": np.array([self.n_features_]),
                "init_score": np.array([self.init_score_])}

    @classmethod
    def from_state(cls, state, **params):
        model = cls(**params)
        model.trees_ = _trees_from_state(state)
        model.n_features_ = int(np.asarray(state["n_features"])[0])
        model.init_score_ = float(np.asarray(state["init_score"])[0])
        return model


def _log_loss(y, F):
    return float(np.mean(np.logaddexp(0.0, F) - y * F))


class AdaBoost:
    """Discrete AdaBoost over Gini stumps with shrunken vote weights.

    Stage weight ``alpha = learning_rate * log((1 - err) / err)``; misclassified
    rows are up-weighted by ``exp(alpha)``. The margin ``F = sum(alpha * h)``
    with ``h`` in {-1, +1} estimates the log-odds, so ``p = sigmoid(F)``.
    """

    def __init__(self, n_estimators=200, learning_rate=0.5, seed=0):
        self.n_estimators = n_estimators
        self.learning_rate = learning_rate
        self.seed = seed

    def fit(self, X, y):
        X = np.ascontiguousarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        n, d = X.shape
        self.n_features_ = d
        w = np.full(n, 1.0 / n)
        self.trees_ = []
        alphas = []
        for _, split_seed in _tree_seeds(self.seed, self.n_estimators):
            stump = grow_tree(X, y, sample_weight=w, criterion=GINI, max_depth=1,
                              min_samples_leaf=1, seed=split_seed)
            miss = _stump_sign(stump, X) != np.where(y > 0, 1.0, -1.0)
            err = w[miss].sum() / w.sum()
            if err >= 0.5:
                break
            err = max(err, 1e-10)
            alpha = self.learning_rate * np.log((1 - err) / err)
            self.trees_.append(stump)
            alphas.append(alpha)
            if err <= 1e-10:
                break
            w = w * np.exp(alpha * miss)
            w /= w.sum()
        self.alphas_ = np.array(alphas)
        return self

    def decision_function(self, X):
        X = np.ascontiguousarray(X, dtype=np.float64)
        F = np.zeros(X.shape[0])
        for alpha, stump in zip(self.alphas_, self.trees_):
            F += alpha * _stump_sign(stump, X)
        return F

    def predict_proba(self, X):
        return sigmoid(self.decision_function(X))

    def feature_importances(self):
        if not self.trees_:
            return np.zeros(self.n_features_)
        per_tree = np.array([_normalized(t.impurity_decrease(self.n_features_)) for t in self.trees_])
        return _normalized((self.alphas_[:, None] * per_tree).sum(axis=0))

    def state(self):
        return {**_trees_state(self.trees_), "n_features": np.array([self.n_features_]),
                "alphas": self.alphas_}

    @classmethod
    def from_state(cls, state, **params):
        model = cls(**params)
        model.trees_ = _trees_from_state(state)
        model.n_features_ = int(np.asarray(state["n_features"])[0])
        model.alphas_ = np.asarray(state["alphas"])
        return model


def _stump_sign(stump: Tree, X):
    return np.where(stump.predict(X) > 0.5, 1.0, -1.0)
