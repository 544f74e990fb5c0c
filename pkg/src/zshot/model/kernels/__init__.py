"""Fused loss/gradient kernels.

The compiled extension ``_ckernel`` is used when it was built; otherwise the
numpy implementation in ``_pykernel`` is selected at import. Set
``ZSHOT_KERNEL=numpy`` to force the fallback.
"""

from __future__ import annotations

import os
from functools import lru_cache

from ._pykernel import PyKernel

try:
    from ._ckernel import CKernel
except ImportError:  # extension not built
    CKernel = None

BACKENDS = ("compiled", "numpy")


def default_backend() -> str:
    forced = os.environ.get("ZSHOT_KERNEL", "").strip().lower()
    if forced == "numpy" or CKernel is None:
        return "numpy"
    return "compiled"


class BoundKernel:
    """A kernel fixed to one layout and loss setting."""

    def __init__(self, impl, reg_weight: float, final_reg: bool):
        self.impl = impl
        self.reg_weight = float(reg_weight)
        self.final_reg = bool(final_reg)

    @property
    def backend(self) -> str:
        return self.impl.name

    def loss_and_grad(self, values, ex, grad_out) -> float:
        return self.impl.loss_and_grad(values, ex, grad_out, self.reg_weight, self.final_reg)


@lru_cache(maxsize=32)
def _impl(layout, backend: str):
    if backend == "compiled":
        if CKernel is None:
            raise RuntimeError("compiled kernel is not available; rebuild the package")
        return CKernel(layout)
    if backend == "numpy":
        return PyKernel(layout)
    raise ValueError(f"unknown kernel backend {backend!r}")


def get_kernel(config, backend: str | None = None) -> BoundKernel:
    from ..params import model_layout

    impl = _impl(model_layout(config), backend or default_backend())
    return BoundKernel(impl, config.reg_weight, config.decoder_reg == "final")
