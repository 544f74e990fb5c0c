"""Gradients, Hessian-vector products and the damped inverse-HVP solver."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import Callable, Protocol, Sequence, runtime_checkable

import numpy as np

from ..errors import NumericOverflowError
from .tensor import Tensor, gradients, recording, tsum
from .vectors import GradVector, ParamVector

logger = logging.getLogger(__name__)

DEFAULT_DAMPING = 0.01


@runtime_checkable
class LossFn(Protocol):
    """Per-example loss evaluated on the tape.

    ``loss(theta, batch)`` must return a vector of shape ``(len(batch),)``
    holding one loss per item; the optimisation objective is its mean.
    Implementations may also offer ``value_and_grad(values, batch)``
    returning ``(per_example_losses, gradient_of_mean)`` as plain arrays, a
    fast path used by :func:`grad` when no tape is required.
    """

    def __call__(self, theta: Tensor, batch: Sequence) -> Tensor: ...


def _example_id(item, index: int) -> str:
    return str(getattr(item, "id", index))


def _check_losses(losses: np.ndarray, batch: Sequence) -> None:
    bad = np.flatnonzero(~np.isfinite(losses))
    if bad.size:
        i = int(bad[0])
        raise NumericOverflowError("non-finite loss", example_id=_example_id(batch[i], i))


def _chunks(batch: Sequence, chunk_size: int | None):
    if not chunk_size or chunk_size >= len(batch):
        yield batch
        return
    for start in range(0, len(batch), chunk_size):
        yield batch[start : start + chunk_size]


def evaluate(f: LossFn, params: ParamVector, batch: Sequence) -> np.ndarray:
    """Per-example losses as a plain array (no tape)."""
    with recording(False):
        losses = np.asarray(f(Tensor(params.values), batch).value, dtype=np.float64)
    _check_losses(losses, batch)
    return losses


def grad(
    f: LossFn,
    params: ParamVector,
    batch: Sequence,
    chunk_size: int | None = None,
    use_tape: bool = False,
) -> GradVector:
    """Gradient of the mean loss over ``batch`` at ``params``."""
    if len(batch) == 0:
        raise ValueError("grad needs a non-empty batch")
    if not np.all(np.isfinite(params.values)):
        raise ValueError("parameters contain non-finite entries")
    fast = getattr(f, "value_and_grad", None)
    if fast is not None and not use_tape:
        losses, g = fast(params.values, batch)
        _check_losses(np.asarray(losses), batch)
        total = np.asarray(g, dtype=np.float64)
    else:
        total = np.zeros(len(params))
        for chunk in _chunks(batch, chunk_size):
            theta = Tensor(params.values, requires_grad=True)
            losses = f(theta, chunk)
            _check_losses(losses.value, chunk)
            (g,) = gradients(tsum(losses), [theta])
            total += g.value
        total /= len(batch)
    if not np.all(np.isfinite(total)):
        raise NumericOverflowError("non-finite gradient")
    return GradVector.like(params, total)


class HessianOperator:
    """Exact Hessian of the mean batch loss, applied by double reverse sweeps.

    The first-order gradient graph is recorded once per chunk and reused for
    every product, so each :meth:`matvec` costs one extra reverse sweep.
    """

    def __init__(self, f: LossFn, params: ParamVector, batch: Sequence, chunk_size: int | None = None):
        if len(batch) == 0:
            raise ValueError("Hessian needs a non-empty batch")
        self.params = params
        self.n = len(batch)
        self._graphs: list[tuple[Tensor, Tensor]] = []
        for chunk in _chunks(batch, chunk_size):
            theta = Tensor(params.values, requires_grad=True)
            losses = f(theta, chunk)
            _check_losses(losses.value, chunk)
            (g,) = gradients(tsum(losses), [theta], create_graph=True)
            self._graphs.append((theta, g))
        self.calls = 0

    @property
    def dim(self) -> int:
        return len(self.params)

    def matvec(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (self.dim,):
            raise ValueError(f"direction has shape {v.shape}, expected ({self.dim},)")
        self.calls += 1
        out = np.zeros(self.dim)
        if not np.any(v):
            return out
        for theta, g in self._graphs:
            if not g.requires_grad:
                continue
            (hv,) = gradients(tsum(g * v), [theta])
            out += hv.value
        out /= self.n
        if not np.all(np.isfinite(out)):
            raise NumericOverflowError("non-finite Hessian-vector product")
        return out

    __call__ = matvec


def hvp_exact(
    f: LossFn,
    params: ParamVector,
    v,
    batch: Sequence,
    chunk_size: int | None = None,
) -> GradVector:
    """H(theta) v by differentiating <grad f, v> a second time."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (len(params),):
        raise ValueError("direction length does not match parameters")
    return GradVector.like(params, HessianOperator(f, params, batch, chunk_size).matvec(v))


def hvp_fd(
    f: LossFn,
    params: ParamVector,
    v,
    batch: Sequence,
    eps: float = 1e-5,
) -> GradVector:
    """Forward-difference product ``(g(theta + eps v) - g(theta)) / eps``."""
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    v = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise ValueError("direction contains non-finite entries")
    if not np.any(v):
        return GradVector.like(params, np.zeros(len(params)))
    g0 = grad(f, params, batch).values
    g1 = grad(f, params.with_values(params.values + eps * v), batch).values
    return GradVector.like(params, (g1 - g0) / eps)


@dataclass
class SolverDiagnostics:
    iterations: int
    residual: float
    converged: bool
    message: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class InverseHVPResult:
    x: GradVector
    diagnostics: SolverDiagnostics

    @property
    def converged(self) -> bool:
        return self.diagnostics.converged


def conjugate_gradient(
    matvec: Callable[[np.ndarray], np.ndarray],
    b: np.ndarray,
    damping: float = 0.0,
    tol: float = 1e-6,
    max_iter: int = 1000,
) -> tuple[np.ndarray, SolverDiagnostics]:
    """Solve ``(A + damping I) x = b`` for symmetric ``A`` given as a matvec.

    Stops when the relative residual drops to ``tol``. Negative curvature or
    running out of iterations returns the best iterate seen with
    ``converged=False`` rather than raising.
    """
    b = np.asarray(b, dtype=np.float64)
    bnorm = float(np.linalg.norm(b))
    x = np.zeros_like(b)
    if bnorm == 0.0:
        return x, SolverDiagnostics(0, 0.0, True)

    def op(p):
        return matvec(p) + damping * p

    r = b.copy()
    p = r.copy()
    rr = float(r @ r)
    best_x, best_res = x.copy(), 1.0
    message = "max_iter reached"
    it = 0
    for it in range(1, max_iter + 1):
        ap = op(p)
        curv = float(p @ ap)
        if curv <= 0.0:
            message = "non-positive curvature"
            it -= 1
            break
        alpha = rr / curv
        x = x + alpha * p
        r = r - alpha * ap
        rr_new = float(r @ r)
        res = np.sqrt(rr_new) / bnorm
        if res < best_res:
            best_x, best_res = x.copy(), res
        if res <= tol:
            message = "converged"
            break
        p = r + (rr_new / rr) * p
        rr = rr_new
    # recursive residuals drift; report the true one
    true_res = float(np.linalg.norm(op(best_x) - b)) / bnorm
    converged = true_res <= tol
    if not converged and message == "converged":
        message = "recursive residual converged but true residual did not"
    return best_x, SolverDiagnostics(it, true_res, converged, message)


def inverse_hvp(
    f: LossFn,
    params: ParamVector,
    train: Sequence,
    v,
    damping: float = DEFAULT_DAMPING,
    tol: float = 1e-6,
    max_iter: int = 1000,
    method: str = "exact",
    eps: float = 1e-5,
    chunk_size: int | None = None,
    operator: HessianOperator | None = None,
) -> InverseHVPResult:
    """Solve ``(H + damping I) x = v`` with conjugate gradients.

    ``H`` is the Hessian of the mean training loss at ``params``. Each
    product uses :func:`hvp_exact` (or :func:`hvp_fd` with ``method="fd"``).
    A prebuilt ``operator`` can be passed to share the recorded graph across
    several solves.
    """
    if damping < 0:
        raise ValueError("damping must be non-negative")
    if not tol > 0:
        raise ValueError("tol must be positive")
    v = np.asarray(v, dtype=np.float64)
    if not np.any(v):
        return InverseHVPResult(GradVector.like(params, np.zeros(len(params))), SolverDiagnostics(0, 0.0, True))
    if method == "exact":
        if operator is None:
            operator = HessianOperator(f, params, train, chunk_size)
        matvec = operator.matvec
    elif method == "fd":
        g0 = grad(f, params, train).values

        def matvec(p):
            g1 = grad(f, params.with_values(params.values + eps * p), train).values
            return (g1 - g0) / eps

    else:
        raise ValueError(f"unknown HVP method {method!r}")
    x, diag = conjugate_gradient(matvec, v, damping=damping, tol=tol, max_iter=max_iter)
    if not diag.converged:
        logger.debug("inverse-HVP did not converge: %s (residual %.3g)", diag.message, diag.residual)
    return InverseHVPResult(GradVector.like(params, x), diag)
