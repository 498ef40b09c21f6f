from __future__ import annotations

import numpy as np

from .linear import sigmoid


def _softplus(z):
    return np.logaddexp(0.0, z)


class MLPClassifier:
    """Fully connected ReLU network with a logistic output unit.

    Trained on mean binary cross-entropy plus ``alpha / 2 * ||W||^2 / batch``
    with Adam over shuffled mini-batches for a fixed number of epochs (no
    early stopping).
    """

    def __init__(self, hidden_layer_sizes=(64, 32), epochs=300, batch_size=64,
                 learning_rate=1e-3, alpha=1e-4, beta1=0.9, beta2=0.999, eps=1e-8, seed=0):
        self.hidden_layer_sizes = tuple(hidden_layer_sizes)
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.alpha = alpha
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.seed = seed

    def init_params(self, n_features, rng):
        sizes = [n_features, *self.hidden_layer_sizes, 1]
        params = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            params.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            params.append(rng.uniform(-bound, bound, size=fan_out))
        return params

    def _forward(self, params, X):
        acts = [X]
        pre = []
        h = X
        n_layers = len(params) // 2
        for layer in range(n_layers):
            z = h @ params[2 * layer] + params[2 * layer + 1]
            pre.append(z)
            h = np.maximum(z, 0.0) if layer < n_layers - 1 else z
            acts.append(h)
        return pre, acts

    def loss_and_grad(self, params, X, y):
        """Penalized cross-entropy on a batch and its gradient for every parameter."""
        n = X.shape[0]
        pre, acts = self._forward(params, X)
        logits = pre[-1][:, 0]
        loss = np.mean(_softplus(logits) - y * logits)
        weights = params[0::2]
        loss += 0.5 * self.alpha * sum(np.sum(W * W) for W in weights) / n

        grads = [None] * len(params)
        delta = ((sigmoid(logits) - y) / n)[:, None]
        n_layers = len(params) // 2
        for layer in range(n_layers - 1, -1, -1):
            W = params[2 * layer]
            grads[2 * layer] = acts[layer].T @ delta + self.alpha * W / n
            grads[2 * layer + 1] = delta.sum(axis=0)
            if layer > 0:
                delta = (delta @ W.T) * (pre[layer - 1] > 0)
        return loss, grads

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        rng = np.random.default_rng(self.seed)
        params = self.init_params(X.shape[1], rng)
        m = [np.zeros_like(p) for p in params]
        v = [np.zeros_like(p) for p in params]
        step = 0
        n = X.shape[0]
        bs = min(self.batch_size, n)
        self.loss_curve_ = []
        for _ in range(self.epochs):
            order = rng.permutation(n)
            total = 0.0
            for start in range(0, n, bs):
                batch = order[start:start + bs]
                loss, grads = self.loss_and_grad(params, X[batch], y[batch])
                total += loss * len(batch)
                step += 1
                lr_t = self.learning_rate * np.sqrt(1 - self.beta2 ** step) / (1 - self.beta1 ** step)
                for p, g, mi, vi in zip(params, grads, m, v):
                    mi *= self.beta1
                    mi += (1 - self.beta1) * g
                    vi *= self.beta2
                    vi += (1 - self.beta2) * g * g
                    p -= lr_t * mi / (np.sqrt(vi) + self.eps)
            self.loss_curve_.append(total / n)
        self.params_ = params
        return self

    def decision_function(self, X):
        pre, _ = self._forward(self.params_, np.asarray(X, dtype=np.float64))
        return pre[-1][:, 0]

    def predict_proba(self, X):
        return sigmoid(self.decision_function(X))

    def state(self):
        return {f"param_{i}": p for i, p in enumerate(self.params_)}

    @classmethod
    def from_state(cls, state, **params):
        model = cls(**params)
        n = len([k for k in state if k.startswith("param_")])
        model.params_ = [np.asarray(state[f"param_{i}"]) for i in range(n)]
        return model
