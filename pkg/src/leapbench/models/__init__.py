"""The benchmark classifier zoo behind one train / predict / importance interface.

Hyperparameters are fixed per model name; there is no tuning. Models that
need standardized inputs carry their own :class:`Scaler`, fit on the
training rows they were given and applied inside :func:`predict_proba`.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping

import numpy as np

from ..features import FEATURE_NAMES
from .bayes import GaussianNB
from .ensemble import AdaBoost, GradientBoosting, RandomForest
from .linear import LogisticRegression
from .mlp import MLPClassifier
from .neighbors import KNeighborsClassifier
from .preprocessing import Scaler, scaler_apply, scaler_fit

__all__ = [
    "MODEL_NAMES", "ModelSpec", "FittedModel", "ImportanceReport", "Scaler",
    "UnsupportedModelError", "get_spec", "train_model", "predict_proba",
    "feature_importance", "save_model", "load_model", "scaler_fit", "scaler_apply",
]

FORMAT_NAME = "leapbench-model"
FORMAT_VERSION = 1


class UnsupportedModelError(ValueError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    name: str
    params: Mapping = field(default_factory=dict)
    needs_standardization: bool = False

    def __post_init__(self):
        object.__setattr__(self, "params", MappingProxyType(dict(self.params)))

    def __reduce__(self):
        return ModelSpec, (self.name, dict(self.params), self.needs_standardization)


_ESTIMATORS = {
    "LR": LogisticRegression,
    "RF": RandomForest,
    "ExtraTrees": RandomForest,
    "GBDT": GradientBoosting,
    "AdaBoost": AdaBoost,
    "kNN": KNeighborsClassifier,
    "NB": GaussianNB,
    "MLP": MLPClassifier,
}

ZOO = {
    "LR": ModelSpec("LR", {"C": 1.0, "tol": 1e-6, "max_iter": 5000}, True),
    "RF": ModelSpec("RF", {"n_estimators": 300, "max_depth": 16, "min_samples_leaf": 2,
                           "max_features": "sqrt", "bootstrap": True, "random_splits": False}),
    "ExtraTrees": ModelSpec("ExtraTrees", {"n_estimators": 300, "max_depth": 16,
                                           "min_samples_leaf": 2, "max_features": "sqrt",
                                           "bootstrap": False, "random_splits": True}),
    "GBDT": ModelSpec("GBDT", {"n_estimators": 250, "learning_rate": 0.05, "max_depth": 3}),
    "AdaBoost": ModelSpec("AdaBoost", {"n_estimators": 200, "learning_rate": 0.5}),
    "kNN": ModelSpec("kNN", {"n_neighbors": 15}, True),
    "NB": ModelSpec("NB", {"var_smoothing": 1e-9}),
    "MLP": ModelSpec("MLP", {"hidden_layer_sizes": (64, 32), "epochs": 300, "batch_size": 64,
                             "learning_rate": 1e-3, "alpha": 1e-4}, True),
}
MODEL_NAMES = tuple(ZOO)
_SEEDED = {"RF", "ExtraTrees", "GBDT", "AdaBoost", "MLP"}
_TREE_MODELS = {"RF", "ExtraTrees", "GBDT", "AdaBoost"}


def get_spec(name: str, **overrides) -> ModelSpec:
    """The fixed spec for ``name``; ``overrides`` exist for tests and fixtures only."""
    if name not in ZOO:
        raise KeyError(f"unknown model {name!r}; choose from {', '.join(MODEL_NAMES)}")
    base = ZOO[name]
    if not overrides:
        return base
    return ModelSpec(name, {**base.params, **overrides}, base.needs_standardization)


@dataclass(frozen=True, eq=False)
class FittedModel:
    spec: ModelSpec
    estimator: object
    scaler: Scaler | None
    seed: int
    n_train: int
    n_features: int
    base_rate: float

    def predict_proba(self, X) -> np.ndarray:
        return predict_proba(self, X)


def _make_estimator(spec: ModelSpec, seed: int):
    params = dict(spec.params)
    if spec.name in _SEEDED:
        params["seed"] = seed
    return _ESTIMATORS[spec.name](**params)


def _check_X(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"expected a 2-d feature matrix, got shape {X.shape}")
    if not np.isfinite(X).all():
        raise ValueError("feature matrix contains non-finite values")
    return X


def train_model(spec: ModelSpec | str, X, y, seed: int = 0) -> FittedModel:
    """Fit one cutoff-specific model. Identical inputs give identical parameters."""
    if isinstance(spec, str):
        spec = get_spec(spec)
    X = _check_X(X)
    y = np.asarray(y)
    if y.shape != (X.shape[0],):
        raise ValueError("labels and rows differ in length")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be binary 0/1")
    if len(np.unique(y)) < 2:
        raise ValueError("training labels contain a single class; refusing to fit")
    y = y.astype(np.int64)
    scaler = scaler_fit(X) if spec.needs_standardization else None
    Xt = scaler.transform(X) if scaler is not None else X
    estimator = _make_estimator(spec, seed).fit(Xt, y)
    return FittedModel(spec, estimator, scaler, int(seed), X.shape[0], X.shape[1], float(y.mean()))


def predict_proba(model: FittedModel, X) -> np.ndarray:
    """Positive-class probabilities, clipped into [0, 1]."""
    X = _check_X(X)
    if X.shape[1] != model.n_features:
        raise ValueError(f"model was trained on {model.n_features} features, got {X.shape[1]}")
    if model.scaler is not None:
        X = model.scaler.transform(X)
    return np.clip(model.estimator.predict_proba(X), 0.0, 1.0)


@dataclass(frozen=True)
class ImportanceReport:
    model: str
    cutoff: int | None
    ranking: tuple[tuple[str, float], ...]

    @property
    def top_feature(self) -> str:
        return self.ranking[0][0]

    def weight(self, feature: str) -> float:
        return dict(self.ranking)[feature]


def feature_importance(model: FittedModel, feature_names=FEATURE_NAMES, cutoff=None) -> ImportanceReport:
    """Rank features by normalized impurity decrease (trees) or |coefficient| (LR).

    LR coefficients are on standardized inputs. Ties keep feature order.
    """
    name = model.spec.name
    if name in _TREE_MODELS:
        weights = model.estimator.feature_importances()
    elif name == "LR":
        weights = np.abs(model.estimator.coef_)
    else:
        raise UnsupportedModelError(f"feature importance is not defined for {name}")
    names = list(feature_names)
    if len(names) != len(weights):
        names = [f"x{j}" for j in range(len(weights))]
    order = sorted(range(len(weights)), key=lambda j: (-weights[j], j))
    return ImportanceReport(name, cutoff, tuple((names[j], float(weights[j])) for j in order))


def _jsonable_params(params):
    return {k: list(v) if isinstance(v, tuple) else v for k, v in params.items()}


def save_model(model: FittedModel, path_or_file) -> None:
    """Write a versioned ``.npz`` blob: JSON header plus named parameter arrays."""
    header = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "model": model.spec.name,
        "params": _jsonable_params(model.spec.params),
        "needs_standardization": model.spec.needs_standardization,
        "seed": model.seed,
        "n_train": model.n_train,
        "n_features": model.n_features,
        "base_rate": model.base_rate,
    }
    arrays = {f"est_{k}": np.asarray(v) for k, v in model.estimator.state().items()}
    if model.scaler is not None:
        arrays["scaler_mean"] = model.scaler.mean
        arrays["scaler_scale"] = model.scaler.scale
    arrays["header"] = np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8)
    np.savez(path_or_file, **arrays)


def load_model(path_or_file) -> FittedModel:
    with np.load(path_or_file, allow_pickle=False) as data:
        header = json.loads(data["header"].tobytes().decode())
        if header.get("format") != FORMAT_NAME:
            raise ValueError("not a leapbench model file")
        if header["version"] != FORMAT_VERSION:
            raise ValueError(f"unsupported model format version {header['version']}")
        state = {k[4:]: data[k] for k in data.files if k.startswith("est_")}
        scaler = None
        if "scaler_mean" in data.files:
            scaler = Scaler(data["scaler_mean"], data["scaler_scale"])
    params = header["params"]
    if "hidden_layer_sizes" in params:
        params["hidden_layer_sizes"] = tuple(params["hidden_layer_sizes"])
    spec = ModelSpec(header["model"], params, header["needs_standardization"])
    est_params = dict(params)
    if spec.name in _SEEDED:
        est_params["seed"] = header["seed"]
    estimator = _ESTIMATORS[spec.name].from_state(state, **est_params)
    return FittedModel(spec, estimator, scaler, header["seed"], header["n_train"],
                       header["n_features"], header["base_rate"])


def dumps_model(model: FittedModel) -> bytes:
    buf = io.BytesIO()
    save_model(model, buf)
    return buf.getvalue()
