import dataclasses
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from zshot.autodiff import grad
from zshot.model import SequenceLoss, encode_example, init_params, model_layout
from zshot.model.kernels import CKernel, default_backend, get_kernel

BACKENDS = ["numpy"] + (["compiled"] if CKernel is not None else [])


@pytest.mark.parametrize("backend", BACKENDS)
@pytest.mark.parametrize("decoder_reg", ["mean", "final"])
def test_kernel_matches_tape(tiny_config, tiny_examples, backend, decoder_reg):
    cfg = dataclasses.replace(tiny_config, decoder_reg=decoder_reg)
    params = init_params(cfg, seed=7)
    loss = SequenceLoss(cfg, model_layout(cfg))
    kernel = get_kernel(cfg, backend)
    g = np.empty(len(params))
    for ex in tiny_examples:
        value = kernel.loss_and_grad(params.values, encode_example(ex, cfg), g)
        ref = grad(loss, params, [ex], use_tape=True).values
        assert value == pytest.approx(float(loss(params.values, [ex])[0]), rel=1e-12)
        np.testing.assert_allclose(g, ref, rtol=1e-9, atol=1e-12)


@pytest.mark.skipif(CKernel is None, reason="compiled kernel not built")
@given(seed=st.integers(0, 10_000))
def test_backends_agree(tiny_config, tiny_examples, seed):
    params = init_params(tiny_config, seed=seed)
    a, b = np.empty(len(params)), np.empty(len(params))
    for ex in tiny_examples:
        enc = encode_example(ex, tiny_config)
        la = get_kernel(tiny_config, "numpy").loss_and_grad(params.values, enc, a)
        lb = get_kernel(tiny_config, "compiled").loss_and_grad(params.values, enc, b)
        assert la == pytest.approx(lb, rel=1e-12)
        np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-13)


def test_unknown_backend(tiny_config):
    with pytest.raises(ValueError):
        get_kernel(tiny_config, "fortran")


def test_env_var_forces_numpy():
    code = "from zshot.model.kernels import default_backend; print(default_backend())"
    out = subprocess.run([sys.executable, "-c", code], env={"ZSHOT_KERNEL": "numpy", "PATH": ""}, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"
    assert default_backend() in ("numpy", "compiled")
