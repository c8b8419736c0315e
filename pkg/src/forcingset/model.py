"""Binary classifier losses, datasets and parameter containers.

The classifier is linear in an intercept-augmented feature vector
``[x; 1]``.  The training objective is the mean per-sample loss plus an L2
penalty ``alpha/2 * ||w||^2`` on the weights; the intercept (last entry of
``theta``) is never penalized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import kernels
from .errors import EmptyDatasetError, ShapeError


@dataclass(frozen=True)
class Instance:
    id: int
    features: np.ndarray
    label: int


class Dataset:
    """Feature matrix and binary labels with logical removal.

    Instances keep their ids for the lifetime of the dataset and of every
    dataset derived from it by :meth:`remove`.  Arrays are read-only.
    """

    def __init__(self, X, y, ids=None, active=None):
        X = np.array(X, dtype=np.float64, ndmin=2)
        if X.ndim != 2:
            raise ShapeError(f"features must be 2-D, got shape {X.shape}")
        y = np.asarray(y)
        n = X.shape[0]
        if y.shape != (n,):
            raise ShapeError(f"labels must have shape ({n},), got {y.shape}")
        if not np.all((y == 0) | (y == 1)):
            raise ValueError("labels must be 0 or 1")
        if not np.all(np.isfinite(X)):
            raise ValueError("features must be finite")
        ids = np.arange(n) if ids is None else np.asarray(ids, dtype=np.int64)
        if ids.shape != (n,) or len(np.unique(ids)) != n:
            raise ShapeError("ids must be unique and one per row")
        active = np.ones(n, dtype=bool) if active is None else np.asarray(active, dtype=bool)
        if active.shape != (n,):
            raise ShapeError("active mask has wrong length")

        self.X = X
        self.y = y.astype(np.int64)
        self.ids = ids
        self.active = active
        for a in (self.X, self.y, self.ids, self.active):
            a.setflags(write=False)
        self._row = {int(i): r for r, i in enumerate(ids)}

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def n_active(self) -> int:
        return int(self.active.sum())

    def __len__(self):
        return self.n_active

    def __repr__(self):
        return f"Dataset(n={self.n}, active={self.n_active}, dim={self.dim})"

    @cached_property
    def active_ids(self) -> np.ndarray:
        return self.ids[self.active]

    @cached_property
    def design(self) -> np.ndarray:
        """Active rows of ``[X, 1]`` as a C-contiguous array."""
        X = self.X[self.active]
        return np.ascontiguousarray(np.hstack([X, np.ones((X.shape[0], 1))]))

    @cached_property
    def targets(self) -> np.ndarray:
        return np.ascontiguousarray(self.y[self.active], dtype=np.float64)

    @property
    def instances(self) -> list[Instance]:
        return [self.instance(int(i)) for i in self.ids]

    def row_of(self, id_: int) -> int:
        try:
            return self._row[int(id_)]
        except KeyError:
            raise KeyError(f"unknown instance id {id_}") from None

    def instance(self, id_: int) -> Instance:
        r = self.row_of(id_)
        return Instance(int(self.ids[r]), self.X[r], int(self.y[r]))

    def is_active(self, id_: int) -> bool:
        return bool(self.active[self.row_of(id_)])

    def remove(self, ids) -> Dataset:
        active = self.active.copy()
        for i in np.atleast_1d(ids):
            active[self.row_of(i)] = False
        if not active.any():
            raise EmptyDatasetError("removal would leave an empty dataset")
        return Dataset(self.X, self.y, self.ids, active)

    def with_labels(self, y) -> Dataset:
        return Dataset(self.X, y, self.ids, self.active)

    def append(self, x, label) -> tuple[Dataset, int]:
        """Return a dataset with one extra active instance and its new id."""
        x = np.asarray(x, dtype=np.float64).reshape(1, -1)
        if x.shape[1] != self.dim:
            raise ShapeError(f"expected {self.dim} features, got {x.shape[1]}")
        new_id = int(self.ids.max()) + 1 if self.n else 0
        ds = Dataset(
            np.vstack([self.X, x]),
            np.append(self.y, int(label)),
            np.append(self.ids, new_id),
            np.append(self.active, True),
        )
        return ds, new_id

    def compact(self) -> Dataset:
        """Drop inactive rows, keeping ids."""
        return Dataset(self.X[self.active], self.y[self.active], self.ids[self.active])


@dataclass(frozen=True)
class ModelParams:
    theta: np.ndarray
    alpha: float = 0.0

    def __post_init__(self):
        theta = np.array(self.theta, dtype=np.float64).ravel()
        if not np.all(np.isfinite(theta)):
            raise ValueError("theta must be finite")
        if not self.alpha >= 0:
            raise ValueError("alpha must be nonnegative")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "alpha", float(self.alpha))

    @property
    def weights(self) -> np.ndarray:
        return self.theta[:-1]

    @property
    def intercept(self) -> float:
        return float(self.theta[-1])

    def replace(self, theta) -> ModelParams:
        return ModelParams(theta, self.alpha)

    @classmethod
    def zeros(cls, dim, alpha=0.0) -> ModelParams:
        return cls(np.zeros(dim + 1), alpha)


@dataclass(frozen=True)
class Claim:
    """The model prefers ``decided_class`` at ``x_star``.

    The counterfactual requires the log-odds toward the other class to reach
    ``epsilon``.
    """

    x_star: np.ndarray
    decided_class: int
    epsilon: float = 0.0

    def __post_init__(self):
        x = np.array(self.x_star, dtype=np.float64).ravel()
        x.setflags(write=False)
        object.__setattr__(self, "x_star", x)
        if self.decided_class not in (0, 1):
            raise ValueError("decided_class must be 0 or 1")
        if not self.epsilon >= 0:
            raise ValueError("epsilon must be nonnegative")
        object.__setattr__(self, "decided_class", int(self.decided_class))
        object.__setattr__(self, "epsilon", float(self.epsilon))

    @property
    def counter_class(self) -> int:
        return 1 - self.decided_class

    @classmethod
    def from_model(cls, x_star, params: ModelParams, epsilon=0.0) -> Claim:
        return cls(x_star, predict(x_star, params), epsilon)


# --------------------------------------------------------------------------
# losses


class LogisticLoss:
    """Binary cross-entropy on ``sigmoid(theta . [x; 1])``."""

    name = "logistic"

    def sample_losses(self, X1, y, theta):
        return kernels.sample_losses(X1, y, theta)

    def sample_grads(self, X1, y, theta):
        return kernels.sample_grads(X1, y, theta)

    def loss_grad(self, X1, y, theta):
        return kernels.loss_grad(X1, y, theta)

    def hessian(self, X1, y, theta):
        return kernels.hessian(X1, theta)


class SquaredLoss:
    """Half squared error ``(theta . [x; 1] - y)^2 / 2``.

    Only used as a closed-form test bed for leave-one-out updates; with zero
    features it reduces to mean estimation.
    """

    name = "squared"

    def sample_losses(self, X1, y, theta):
        return 0.5 * (X1 @ theta - y) ** 2

    def sample_grads(self, X1, y, theta):
        return (X1 @ theta - y)[:, None] * X1

    def loss_grad(self, X1, y, theta):
        r = X1 @ theta - y
        return float(0.5 * np.mean(r**2)), X1.T @ r / X1.shape[0]

    def hessian(self, X1, y, theta):
        return X1.T @ X1 / X1.shape[0]


LOGISTIC = LogisticLoss()
SQUARED = SquaredLoss()


def _check_dim(dataset_dim, params):
    if params.theta.shape[0] != dataset_dim + 1:
        raise ShapeError(
            f"theta has {params.theta.shape[0]} entries, expected {dataset_dim + 1}"
        )


def _check_nonempty(dataset):
    if dataset.n_active == 0:
        raise EmptyDatasetError("empty dataset")


def _reg_mask(p):
    m = np.ones(p)
    m[-1] = 0.0
    return m


def augment(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64).ravel()
    return np.append(x, 1.0)


def total_loss(dataset: Dataset, params: ModelParams, loss=LOGISTIC) -> float:
    _check_nonempty(dataset)
    _check_dim(dataset.dim, params)
    value, _ = loss.loss_grad(dataset.design, dataset.targets, params.theta)
    w = params.weights
    return float(value + 0.5 * params.alpha * np.dot(w, w))


def per_sample_loss(instance: Instance, params: ModelParams, loss=LOGISTIC) -> float:
    x = np.asarray(instance.features, dtype=np.float64)
    _check_dim(x.shape[0], params)
    X1 = augment(x)[None, :]
    return float(loss.sample_losses(X1, np.array([float(instance.label)]), params.theta)[0])


def sample_losses(dataset: Dataset, params: ModelParams, loss=LOGISTIC) -> np.ndarray:
    """Per-sample losses of the active instances, in ``active_ids`` order."""
    _check_dim(dataset.dim, params)
    return loss.sample_losses(dataset.design, dataset.targets, params.theta)


def sample_gradients(dataset: Dataset, params: ModelParams, loss=LOGISTIC) -> np.ndarray:
    _check_dim(dataset.dim, params)
    return loss.sample_grads(dataset.design, dataset.targets, params.theta)


def gradient(obj, params: ModelParams, loss=LOGISTIC) -> np.ndarray:
    """Gradient of the per-sample loss (``Instance``) or of the regularized
    mean loss (``Dataset``)."""
    if isinstance(obj, Instance):
        x = np.asarray(obj.features, dtype=np.float64)
        _check_dim(x.shape[0], params)
        X1 = augment(x)[None, :]
        return loss.sample_grads(X1, np.array([float(obj.label)]), params.theta)[0]
    _check_nonempty(obj)
    _check_dim(obj.dim, params)
    _, g = loss.loss_grad(obj.design, obj.targets, params.theta)
    return g + params.alpha * _reg_mask(g.shape[0]) * params.theta


def loss_and_gradient(dataset: Dataset, params: ModelParams, loss=LOGISTIC):
    _check_nonempty(dataset)
    _check_dim(dataset.dim, params)
    value, g = loss.loss_grad(dataset.design, dataset.targets, params.theta)
    w = params.weights
    value = float(value + 0.5 * params.alpha * np.dot(w, w))
    return value, g + params.alpha * _reg_mask(g.shape[0]) * params.theta


def hessian(dataset: Dataset, params: ModelParams, loss=LOGISTIC) -> np.ndarray:
    _check_nonempty(dataset)
    _check_dim(dataset.dim, params)
    H = loss.hessian(dataset.design, dataset.targets, params.theta)
    H[np.diag_indices_from(H)] += params.alpha * _reg_mask(H.shape[0])
    return H


def decision_value(x, params: ModelParams) -> float:
    """Log-odds of class 1 at ``x``."""
    x1 = augment(x)
    _check_dim(x1.shape[0] - 1, params)
    return float(np.dot(params.theta, x1))


def predict_proba(x, params: ModelParams) -> float:
    """Probability of class 1 at ``x``."""
    z = decision_value(x, params)
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def predict(x, params: ModelParams) -> int:
    return int(decision_value(x, params) > 0)


def class_probability(x, params: ModelParams, cls: int) -> float:
    p1 = predict_proba(x, params)
    return p1 if cls == 1 else 1.0 - p1


def log_odds(x_star, params: ModelParams, decided_class: int):
    """Log-odds toward the counter class ``1 - decided_class`` and its
    gradient in ``theta``.  The map is linear in ``theta``."""
    x1 = augment(x_star)
    _check_dim(x1.shape[0] - 1, params)
    sign = 1.0 if decided_class == 0 else -1.0
    a = sign * x1
    return float(np.dot(a, params.theta)), a


def accuracy(dataset: Dataset, params: ModelParams) -> float:
    z = kernels.logits(dataset.design, params.theta)
    return float(np.mean((z > 0).astype(np.int64) == dataset.y[dataset.active]))
