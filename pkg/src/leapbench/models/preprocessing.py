from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Scaler:
    """Per-column standardization learned from training rows only."""

    mean: np.ndarray
    scale: np.ndarray

    def transform(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.mean.shape[0]:
            raise ValueError(f"expected {self.mean.shape[0]} columns, got {X.shape[-1]}")
        return (X - self.mean) / self.scale


def scaler_fit(train_matrix) -> Scaler:
    """Column means and population standard deviations; zero-variance columns get divisor 1."""
    X = np.asarray(train_matrix, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("cannot fit a scaler on an empty matrix")
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    scale = np.where(std > 0, std, 1.0)
    return Scaler(mean=mean, scale=scale)


def scaler_apply(scaler: Scaler, matrix) -> np.ndarray:
    return scaler.transform(matrix)
