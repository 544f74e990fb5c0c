"""Reverse-mode differentiation, Hessian-vector products and inverse-HVP."""

from . import tensor
from .core import (
    DEFAULT_DAMPING,
    HessianOperator,
    InverseHVPResult,
    LossFn,
    SolverDiagnostics,
    conjugate_gradient,
    evaluate,
    grad,
    hvp_exact,
    hvp_fd,
    inverse_hvp,
)
from .tensor import Tensor, gradients, no_grad
from .vectors import GradVector, Layout, ParamVector, Segment

__all__ = [
    "DEFAULT_DAMPING",
    "GradVector",
    "HessianOperator",
    "InverseHVPResult",
    "Layout",
    "LossFn",
    "ParamVector",
    "Segment",
    "SolverDiagnostics",
    "Tensor",
    "conjugate_gradient",
    "evaluate",
    "grad",
    "gradients",
    "hvp_exact",
    "hvp_fd",
    "inverse_hvp",
    "no_grad",
    "tensor",
]
