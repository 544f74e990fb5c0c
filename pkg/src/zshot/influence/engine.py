"""Influence of training points on test losses through a damped inverse Hessian."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..autodiff import (
    DEFAULT_DAMPING,
    HessianOperator,
    LossFn,
    ParamVector,
    SolverDiagnostics,
    grad,
    inverse_hvp,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class InfluenceScore:
    """``value = -grad(test)' (H + damping I)^-1 grad(subject)``.

    Negative values mean up-weighting the subject lowers the test loss.
    """

    subject: str
    test_ref: str
    value: float
    solver: SolverDiagnostics

    @property
    def converged(self) -> bool:
        return self.solver.converged

    def to_row(self) -> dict:
        return {
            "subject_id": self.subject,
            "test_id": self.test_ref,
            "value": repr(float(self.value)),
            "iterations": self.solver.iterations,
            "residual": repr(float(self.solver.residual)),
            "converged": int(self.solver.converged),
        }


class DenseHessian:
    """Hessian materialised column by column from an exact HVP operator.

    Worth it when the parameter block is small and many solves share one
    Hessian; every product afterwards is a single matrix-vector multiply.
    """

    def __init__(self, operator: HessianOperator):
        dim = operator.dim
        cols = np.empty((dim, dim))
        eye = np.eye(dim)
        for i in range(dim):
            cols[:, i] = operator.matvec(eye[i])
        self.matrix = 0.5 * (cols + cols.T)
        self.calls = 0

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def matvec(self, v) -> np.ndarray:
        self.calls += 1
        return self.matrix @ np.asarray(v, dtype=np.float64)


def _item_id(item) -> str:
    return str(getattr(item, "id", item))


def _ref(items: Sequence) -> str:
    if len(items) == 1:
        return _item_id(items[0])
    return "+".join(_item_id(it) for it in items)


class InfluenceEngine:
    """Influence scores of training points for one trained parameter vector.

    The Hessian of the mean training loss is recorded once; inverse-HVPs of
    test gradients are cached by test reference, so scoring many subjects
    against the same test point costs one solve plus one dot product each.

    Parameters
    ----------
    loss : LossFn
        Per-example loss; its mean over ``train`` is the training objective.
    params : ParamVector
        Trained (approximately stationary) parameters.
    train : sequence
        Training items defining the Hessian.
    damping, tol, max_iter :
        Settings of the conjugate-gradient solve of ``(H + damping I) x = v``.
    dense : bool
        Materialise the Hessian once (small parameter blocks only).
    """

    def __init__(
        self,
        loss: LossFn,
        params: ParamVector,
        train: Sequence,
        damping: float = DEFAULT_DAMPING,
        tol: float = 1e-6,
        max_iter: int = 1000,
        method: str = "exact",
        dense: bool = False,
        chunk_size: int | None = None,
    ):
        if len(train) == 0:
            raise ValueError("training set is empty")
        self.loss = loss
        self.params = params
        self.train = list(train)
        self.damping = float(damping)
        self.tol = tol
        self.max_iter = max_iter
        self.method = method
        self.dense = dense
        self.chunk_size = chunk_size
        self._operator = None
        self._cache: dict[str, tuple[np.ndarray, SolverDiagnostics]] = {}

    @property
    def operator(self):
        if self._operator is None and self.method == "exact":
            op = HessianOperator(self.loss, self.params, self.train, self.chunk_size)
            self._operator = DenseHessian(op) if self.dense else op
        return self._operator

    def gradient(self, items: Sequence) -> np.ndarray:
        """Gradient of the summed loss over ``items``."""
        items = list(items)
        return grad(self.loss, self.params, items).values * len(items)

    def per_example_gradients(self, items: Sequence) -> np.ndarray:
        fast = getattr(self.loss, "per_example_grads", None)
        if fast is not None:
            return np.asarray(fast(self.params.values, list(items)))
        return np.stack([self.gradient([it]) for it in items])

    def solve(self, v) -> tuple[np.ndarray, SolverDiagnostics]:
        res = inverse_hvp(
            self.loss,
            self.params,
            self.train,
            v,
            damping=self.damping,
            tol=self.tol,
            max_iter=self.max_iter,
            method=self.method,
            chunk_size=self.chunk_size,
            operator=self.operator,
        )
        return res.x.values, res.diagnostics

    def s_test(self, test: Sequence, test_ref: str | None = None) -> tuple[np.ndarray, SolverDiagnostics]:
        """Cached ``(H + damping I)^-1`` applied to the test gradient."""
        test = list(test)
        key = test_ref or _ref(test)
        hit = self._cache.get(key)
        if hit is None:
            hit = self.solve(self.gradient(test))
            self._cache[key] = hit
        return hit

    def influence(
        self,
        subjects: Sequence,
        test: Sequence,
        subject_ref: str | None = None,
        test_ref: str | None = None,
    ) -> InfluenceScore:
        """Influence of up-weighting the group ``subjects`` on the summed test loss."""
        subjects = list(subjects)
        test = list(test)
        if not subjects:
            raise ValueError("subject batch is empty")
        ref = test_ref or _ref(test)
        s, diag = self.s_test(test, ref)
        value = -float(s @ self.gradient(subjects))
        return InfluenceScore(subject_ref or _ref(subjects), ref, value, diag)

    def influence_many(self, subjects: Sequence, test: Sequence, test_ref: str | None = None) -> list[InfluenceScore]:
        """Per-subject influence on one test reference (one solve in total)."""
        test = list(test)
        ref = test_ref or _ref(test)
        s, diag = self.s_test(test, ref)
        G = self.per_example_gradients(subjects)
        return [InfluenceScore(_item_id(it), ref, -float(g @ s), diag) for it, g in zip(subjects, G)]

    def self_influence(self, items: Sequence) -> list[InfluenceScore]:
        """``-g' (H + damping I)^-1 g`` for each item, one solve per item."""
        G = self.per_example_gradients(items)
        out = []
        for it, g in zip(items, G):
            x, diag = self.solve(g)
            out.append(InfluenceScore(_item_id(it), _item_id(it), -float(g @ x), diag))
        failed = sum(not s.converged for s in out)
        if failed:
            logger.warning("%d of %d self-influence solves did not converge", failed, len(out))
        return out


def influence_example(engine: InfluenceEngine, z, z_test) -> InfluenceScore:
    tests = z_test if isinstance(z_test, (list, tuple)) else [z_test]
    return engine.influence([z], tests)


def influence_domain(engine: InfluenceEngine, batch, z_test, test_ref: str | None = None) -> InfluenceScore:
    """Influence of a whole domain batch, using the summed member gradients."""
    members = list(batch)
    tests = z_test if isinstance(z_test, (list, tuple)) else [z_test]
    return engine.influence(members, tests, subject_ref=getattr(batch, "domain", None), test_ref=test_ref)
