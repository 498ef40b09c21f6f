from __future__ import annotations

import logging

import numpy as np

logger = logging.getLogger(__name__)


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class LogisticRegression:
    """L2-penalized logistic regression fit by full-batch gradient descent.

    Minimizes ``mean(log_loss) + ||w||^2 / (2 * C * n)`` (the intercept is
    not penalized), which has the same minimizer as the summed loss with
    penalty ``||w||^2 / (2 C)``. The step size is the inverse of a Lipschitz
    bound on the gradient, so every step decreases the objective.
    """

    def __init__(self, C=1.0, tol=1e-6, max_iter=5000):
        self.C = C
        self.tol = tol
        self.max_iter = max_iter

    def _objective_grad(self, X, y, w, b):
        n = X.shape[0]
        p = sigmoid(X @ w + b)
        r = p - y
        gw = X.T @ r / n + w / (self.C * n)
        gb = r.mean()
        return gw, gb

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        n, d = X.shape
        lipschitz = 0.25 * (np.linalg.norm(X, 2) ** 2 + n) / n + 1.0 / (self.C * n)
        step = 1.0 / lipschitz
        w = np.zeros(d)
        b = 0.0
        for it in range(self.max_iter):
            gw, gb = self._objective_grad(X, y, w, b)
            if np.sqrt(gw @ gw + gb * gb) < self.tol:
                break
            w -= step * gw
            b -= step * gb
        else:
            logger.debug("logistic regression stopped at max_iter=%d", self.max_iter)
        self.n_iter_ = it + 1
        self.coef_ = w
        self.intercept_ = b
        return self

    def decision_function(self, X):
        return np.asarray(X, dtype=np.float64) @ self.coef_ + self.intercept_

    def predict_proba(self, X):
        return sigmoid(self.decision_function(X))

    def state(self):
        return {"coef": self.coef_, "intercept": np.array([self.intercept_])}

    @classmethod
    def from_state(cls, state, **params):
        model = cls(**params)
        model.coef_ = np.asarray(state["coef"])
        model.intercept_ = float(np.asarray(state["intercept"])[0])
        return model
