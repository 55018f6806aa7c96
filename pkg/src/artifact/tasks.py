"""Per-client learning tasks: quadratics with closed forms and ridge logistic regression.

Both task types expose the same batched surface used by the optimizer:
``all_grads(thetas)`` returns the gradient of every honest client's
empirical loss at every parameter row, shape ``(k, clients, dim)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np
from scipy.special import expit

from .numerics import RngLike, RngStream, as_vector, sample_dirichlet


@dataclass(frozen=True)
class SmoothnessConstants:
    L: float
    mu: float

    def __post_init__(self):
        if not (self.L >= self.mu > 0):
            raise ValueError(f"need L >= mu > 0, got L={self.L}, mu={self.mu}")


class QuadraticTask:
    """Client ``i`` minimizes ``0.5 * ||theta - c_i||^2``."""

    def __init__(self, centers):
        centers = np.array(centers, dtype=np.float64)
        if centers.ndim != 2 or centers.shape[0] == 0:
            raise ValueError("centers must be a nonempty (clients, d) array")
        if not np.all(np.isfinite(centers)):
            raise ValueError("centers must be finite")
        self.centers = centers
        self.centers.setflags(write=False)

    @property
    def clients(self) -> int:
        return self.centers.shape[0]

    @property
    def dim(self) -> int:
        return self.centers.shape[1]

    def _check(self, i):
        if not 0 <= i < self.clients:
            raise IndexError(f"unknown client {i}")

    def loss(self, i: int, theta) -> float:
        self._check(i)
        return 0.5 * float(np.sum((theta - self.centers[i]) ** 2))

    def grad(self, i: int, theta) -> np.ndarray:
        self._check(i)
        return np.asarray(theta, dtype=np.float64) - self.centers[i]

    def all_losses(self, thetas: np.ndarray) -> np.ndarray:
        diff = thetas[:, None, :] - self.centers[None, :, :]
        return 0.5 * np.sum(diff**2, axis=-1)

    def all_grads(self, thetas: np.ndarray) -> np.ndarray:
        return thetas[:, None, :] - self.centers[None, :, :]

    def all_losses_grads(self, thetas: np.ndarray):
        g = self.all_grads(thetas)
        return 0.5 * np.sum(g**2, axis=-1), g

    def interp_minimizer(self, i: int, lam: float) -> np.ndarray:
        """Exact minimizer of the lambda-interpolated loss of client ``i``."""
        return (1.0 - lam) * self.centers[i] + lam * self.centers.mean(axis=0)


class LogisticTask:
    """Ridge-regularized logistic regression, one train and one test set per client.

    ``X_train`` and ``X_test`` have shape ``(clients, m, dim)`` and already
    contain the intercept column when the task was built with one.
    """

    def __init__(self, X_train, y_train, X_test, y_test, ridge: float,
                 class_sep=None, alpha: float = math.inf, proportions=None):
        self.X_train = np.asarray(X_train, dtype=np.float64)
        self.y_train = np.asarray(y_train, dtype=np.float64)
        self.X_test = np.asarray(X_test, dtype=np.float64)
        self.y_test = np.asarray(y_test, dtype=np.float64)
        if self.X_train.ndim != 3 or self.y_train.shape != self.X_train.shape[:2]:
            raise ValueError("X_train must be (clients, m, dim) with matching y_train")
        if self.X_test.ndim != 3 or self.y_test.shape != self.X_test.shape[:2]:
            raise ValueError("X_test must be (clients, m_test, dim) with matching y_test")
        for y in (self.y_train, self.y_test):
            if not np.all((y == 0) | (y == 1)):
                raise ValueError("labels must be 0 or 1")
        if not (np.all(np.isfinite(self.X_train)) and np.all(np.isfinite(self.X_test))):
            raise ValueError("features must be finite")
        if not ridge > 0:
            raise ValueError("ridge must be positive")
        self.ridge = float(ridge)
        self.class_sep = None if class_sep is None else np.asarray(class_sep, dtype=np.float64)
        self.alpha = alpha
        self.proportions = None if proportions is None else np.asarray(proportions, dtype=np.float64)
        self._signs = 2.0 * self.y_train - 1.0

    @property
    def clients(self) -> int:
        return self.X_train.shape[0]

    @property
    def dim(self) -> int:
        return self.X_train.shape[2]

    @property
    def m(self) -> int:
        return self.X_train.shape[1]

    def _check(self, i):
        if not 0 <= i < self.clients:
            raise IndexError(f"unknown client {i}")

    def loss(self, i: int, theta) -> float:
        self._check(i)
        margins = self._signs[i] * (self.X_train[i] @ theta)
        return float(np.mean(np.logaddexp(0.0, -margins)) + 0.5 * self.ridge * theta @ theta)

    def grad(self, i: int, theta) -> np.ndarray:
        self._check(i)
        s = self._signs[i]
        w = -s * expit(-s * (self.X_train[i] @ theta))
        return self.X_train[i].T @ w / self.m + self.ridge * theta

    def _scores(self, thetas: np.ndarray) -> np.ndarray:
        """``x . theta`` for every client's training point and every theta row: ``(k, clients, m)``."""
        h, m, d = self.X_train.shape
        z = self.X_train.reshape(h * m, d) @ thetas.T
        return z.T.reshape(-1, h, m)

    def all_losses(self, thetas: np.ndarray) -> np.ndarray:
        return self.all_losses_grads(thetas)[0]

    def all_grads(self, thetas: np.ndarray) -> np.ndarray:
        return self.all_losses_grads(thetas)[1]

    def all_losses_grads(self, thetas: np.ndarray):
        s = self._signs[None]
        margins = s * self._scores(thetas)
        reg = 0.5 * self.ridge * np.sum(thetas**2, axis=-1)
        losses = np.mean(np.logaddexp(0.0, -margins), axis=-1) + reg[:, None]
        w = -s * expit(-margins)
        # (clients, k, m) @ (clients, m, d) -> (clients, k, d)
        g = np.matmul(w.transpose(1, 0, 2), self.X_train).transpose(1, 0, 2) / self.m
        return losses, g + self.ridge * thetas[:, None, :]

    def predict(self, i: int, theta, split: str = "test") -> np.ndarray:
        """Class-1 whenever sigmoid(theta . x) >= 0.5, i.e. theta . x >= 0."""
        X = self.X_test[i] if split == "test" else self.X_train[i]
        return (X @ theta >= 0.0).astype(np.float64)


Task = Union[QuadraticTask, LogisticTask]


def loss_and_grad(task: Task, client_index: int, theta) -> Tuple[float, np.ndarray]:
    theta = as_vector(theta, "theta")
    if theta.size != task.dim:
        raise ValueError(f"theta has dimension {theta.size}, task expects {task.dim}")
    return task.loss(client_index, theta), task.grad(client_index, theta)


def power_iteration(A: np.ndarray, tol: float = 1e-9, max_iter: int = 10_000) -> float:
    """Largest eigenvalue of a symmetric positive semidefinite matrix."""
    v = np.ones(A.shape[0]) / math.sqrt(A.shape[0])
    # a deterministic but generic start avoids orthogonality to the top eigenvector
    v += np.linspace(0.0, 1e-3, A.shape[0])
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(max_iter):
        w = A @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
        new = float(v @ A @ v)
        if abs(new - est) <= tol * max(1.0, abs(new)):
            return new
        est = new
    return est


def constants(task: Task) -> SmoothnessConstants:
    if isinstance(task, QuadraticTask):
        return SmoothnessConstants(1.0, 1.0)
    top = max(power_iteration(X.T @ X) for X in task.X_train)
    return SmoothnessConstants(task.ridge + top / (4.0 * task.m), task.ridge)


def _positives(p: float, m: int) -> int:
    return int(math.floor(p * m + 0.5))


def make_quadratic_task(clients: int, d: int, spread: float, rng: RngLike, center=None) -> QuadraticTask:
    """Centers ``c_i ~ N(center, spread^2 I)``."""
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    base = np.zeros(d) if center is None else as_vector(center)
    return QuadraticTask(base + spread * gen.standard_normal((clients, d)))


def make_logistic_task(
    n: int,
    f: int,
    m: int,
    d: int,
    alpha: float,
    class_sep_norm: float,
    ridge: float,
    rng: RngLike,
    fit_intercept: bool = True,
    m_test: Optional[int] = None,
    proportions=None,
) -> LogisticTask:
    """Synthetic binary data with Dirichlet class imbalance across the ``n - f`` honest clients.

    Client ``i`` draws class proportions ``p_i ~ Dir(alpha/2, alpha/2)``
    (exactly balanced when ``alpha`` is infinite) and
    ``round(p_i * m)`` positives for both train and test. Features are
    ``N(+u, I)`` for class 1 and ``N(-u, I)`` for class 0 with
    ``||u|| = class_sep_norm``. ``proportions`` overrides the Dirichlet
    draw with fixed class-1 fractions, one per honest client.
    """
    if m < 2:
        raise ValueError("m must be >= 2")
    if not ridge > 0:
        raise ValueError("ridge must be positive")
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    if not 2 * f < n:
        raise ValueError(f"require f < n/2, got n={n}, f={f}")
    m_test = m if m_test is None else m_test
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    honest = n - f
    direction = gen.standard_normal(d)
    u = class_sep_norm * direction / np.linalg.norm(direction)
    if proportions is not None:
        props = np.asarray(proportions, dtype=np.float64)
        if props.shape != (honest,) or np.any((props < 0) | (props > 1)):
            raise ValueError(f"proportions must be {honest} values in [0, 1]")
    else:
        props = np.empty(honest)
        for i in range(honest):
            props[i] = 0.5 if math.isinf(alpha) else sample_dirichlet(gen, [alpha / 2, alpha / 2])[0]

    def draw(size):
        X = np.empty((honest, size, d))
        y = np.zeros((honest, size))
        for i in range(honest):
            k = _positives(props[i], size)
            y[i, :k] = 1.0
            X[i] = (2.0 * y[i][:, None] - 1.0) * u + gen.standard_normal((size, d))
        return X, y

    X_train, y_train = draw(m)
    X_test, y_test = draw(m_test)
    if fit_intercept:
        X_train = np.concatenate([X_train, np.ones((honest, m, 1))], axis=-1)
        X_test = np.concatenate([X_test, np.ones((honest, m_test, 1))], axis=-1)
    return LogisticTask(X_train, y_train, X_test, y_test, ridge, u, alpha, props)


def evaluate(task: LogisticTask, client_index: int, theta) -> Tuple[float, float]:
    """Test log-loss (without the ridge term) and accuracy for one client.

    A score of exactly zero is classified as 1.
    """
    if not isinstance(task, LogisticTask):
        raise TypeError("evaluate needs a task with held-out data")
    task._check(client_index)
    X, y = task.X_test[client_index], task.y_test[client_index]
    if y.size == 0:
        raise ValueError("empty test set")
    theta = as_vector(theta, "theta")
    z = X @ theta
    s = 2.0 * y - 1.0
    loss = float(np.mean(np.logaddexp(0.0, -s * z)))
    acc = float(np.mean((z >= 0.0) == (y == 1.0)))
    return loss, acc


def zero_one_risk(task: LogisticTask, thetas: np.ndarray) -> np.ndarray:
    """Held-out 0-1 error of every client at every theta row, shape ``(k, clients)``."""
    z = np.einsum("jmd,kd->kjm", task.X_test, thetas)
    wrong = (z >= 0.0) != (task.y_test[None] == 1.0)
    return wrong.mean(axis=-1)


def dump_task_csv(task: LogisticTask, path) -> None:
    """One row per point: ``client_id, split, y, x_1 .. x_dim``."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["client_id", "split", "y"] + [f"x_{k + 1}" for k in range(task.dim)])
        for split, X, Y in (("train", task.X_train, task.y_train), ("test", task.X_test, task.y_test)):
            for i in range(task.clients):
                for x, y in zip(X[i], Y[i]):
                    w.writerow([i, split, int(y)] + [repr(float(v)) for v in x])


def load_task_csv(path, ridge: float) -> LogisticTask:
    rows = {"train": {}, "test": {}}
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:3] != ["client_id", "split", "y"]:
            raise ValueError(f"unexpected header {header[:3]}")
        for rec in reader:
            cid, split = int(rec[0]), rec[1]
            if split not in rows:
                raise ValueError(f"unknown split {split!r}")
            rows[split].setdefault(cid, []).append([float(v) for v in rec[2:]])

    def to_arrays(split):
        ids = sorted(rows[split])
        if ids != list(range(len(ids))):
            raise ValueError(f"{split} client ids must be 0..k-1")
        data = np.array([rows[split][i] for i in ids])
        return data[..., 1:], data[..., 0]

    X_tr, y_tr = to_arrays("train")
    X_te, y_te = to_arrays("test")
    return LogisticTask(X_tr, y_tr, X_te, y_te, ridge)
