"""Small convex losses used to validate the influence machinery.

These are deliberately simple models whose exact minimisers can be found by
Newton's method, so influence estimates can be compared with real
leave-one-out retraining.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .autodiff import ParamVector, tensor as T


@dataclass(frozen=True)
class Point:
    id: str
    x: np.ndarray = field(compare=False)
    y: float = 0.0


class QuadraticLoss:
    """``0.5 * theta' A theta`` for every item (data independent)."""

    def __init__(self, A):
        self.A = np.asarray(A, dtype=np.float64)

    def __call__(self, theta, batch: Sequence):
        q = 0.5 * T.tsum(theta * T.matmul(self.A, theta))
        return T.stack([q] * len(batch))

    def value_and_grad(self, values, batch):
        q = 0.5 * values @ self.A @ values
        return np.full(len(batch), q), 0.5 * (self.A + self.A.T) @ values


def _softplus(z):
    return np.logaddexp(0.0, z)


class LogisticLoss:
    """Binary logistic loss with labels in {0, 1} plus ``l2/2 * |theta|^2``.

    The ridge term is part of every per-example loss, so the mean objective
    is strictly convex whenever ``l2 > 0``.
    """

    def __init__(self, l2: float = 0.0):
        self.l2 = float(l2)

    @staticmethod
    def _design(batch: Sequence) -> tuple[np.ndarray, np.ndarray]:
        X = np.stack([np.asarray(p.x, dtype=np.float64) for p in batch])
        s = np.array([2.0 * p.y - 1.0 for p in batch])
        return X, s

    def __call__(self, theta, batch: Sequence):
        X, s = self._design(batch)
        margins = T.matmul(X, theta) * (-s)
        zeros = np.zeros(len(batch))
        nll = T.logsumexp(T.stack([T.Tensor(zeros), margins], axis=1), axis=1)
        if self.l2:
            nll = nll + 0.5 * self.l2 * T.tsum(theta * theta)
        return nll

    def value_and_grad(self, values, batch):
        X, s = self._design(batch)
        m = -s * (X @ values)
        losses = _softplus(m) + 0.5 * self.l2 * values @ values
        w = 0.5 * (1.0 + np.tanh(0.5 * m))  # sigmoid(m)
        g = X.T @ (-s * w) / len(batch) + self.l2 * values
        return losses, g

    def hessian(self, values, batch) -> np.ndarray:
        X, s = self._design(batch)
        m = -s * (X @ values)
        w = 0.5 * (1.0 + np.tanh(0.5 * m))
        return (X.T * (w * (1 - w))) @ X / len(batch) + self.l2 * np.eye(X.shape[1])

    def predictive_loss(self, values, point: Point) -> float:
        """Plain log loss at one point, without the ridge term."""
        s = 2.0 * point.y - 1.0
        return float(_softplus(-s * float(np.dot(point.x, values))))


def fit_logistic(
    loss: LogisticLoss,
    batch: Sequence[Point],
    init=None,
    tol: float = 1e-12,
    max_iter: int = 100,
) -> ParamVector:
    """Minimise the mean loss over ``batch`` with backtracking Newton steps."""
    dim = len(batch[0].x)
    theta = np.zeros(dim) if init is None else np.array(init, dtype=np.float64)

    def objective(t):
        return float(np.mean(loss.value_and_grad(t, batch)[0]))

    current = objective(theta)
    for _ in range(max_iter):
        _, g = loss.value_and_grad(theta, batch)
        if np.linalg.norm(g) < tol:
            break
        step = np.linalg.solve(loss.hessian(theta, batch), g)
        t = 1.0
        while t > 1e-10:
            candidate = theta - t * step
            value = objective(candidate)
            if value <= current:
                break
            t *= 0.5
        theta, current = candidate, value
    return ParamVector(theta)
