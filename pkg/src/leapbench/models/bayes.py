from __future__ import annotations

import numpy as np


class GaussianNB:
    """Gaussian naive Bayes for a binary target.

    Per-class variances are inflated by ``var_smoothing`` times the largest
    feature variance so constant columns stay usable.
    """

    def __init__(self, var_smoothing=1e-9):
        self.var_smoothing = var_smoothing

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y)
        eps = self.var_smoothing * max(X.var(axis=0).max(), 0.0)
        self.theta_ = np.vstack([X[y == c].mean(axis=0) for c in (0, 1)])
        self.var_ = np.vstack([X[y == c].var(axis=0) for c in (0, 1)]) + eps
        if eps == 0.0:
            self.var_ = np.where(self.var_ > 0, self.var_, 1e-12)
        counts = np.array([(y == 0).sum(), (y == 1).sum()], dtype=np.float64)
        self.class_prior_ = counts / counts.sum()
        return self

    def _joint_log_likelihood(self, X):
        X = np.asarray(X, dtype=np.float64)
        jll = np.empty((X.shape[0], 2))
        for c in (0, 1):
            ll = -0.5 * np.sum(np.log(2.0 * np.pi * self.var_[c]))
            ll = ll - 0.5 * np.sum((X - self.theta_[c]) ** 2 / self.var_[c], axis=1)
            jll[:, c] = np.log(self.class_prior_[c]) + ll
        return jll

    def predict_proba(self, X):
        jll = self._joint_log_likelihood(X)
        # P(y=1) = 1 / (1 + exp(jll0 - jll1)), stable for large gaps
        diff = jll[:, 1] - jll[:, 0]
        return np.where(diff >= 0, 1.0 / (1.0 + np.exp(-np.abs(diff))),
                        np.exp(-np.abs(diff)) / (1.0 + np.exp(-np.abs(diff))))

    def state(self):
        return {"theta": self.theta_, "var": self.var_, "class_prior": self.class_prior_}

    @classmethod
    def from_state(cls, state, **params):
        model = cls(**params)
        model.theta_ = np.asarray(state["theta"])
        model.var_ = np.asarray(state["var"])
        model.class_prior_ = np.asarray(state["class_prior"])
        return model
