"""Parameter layout and initialisation."""

from __future__ import annotations

import numpy as np

from ..autodiff import Layout, ParamVector
from .config import ModelConfig

BLOCKS = (
    "embed",
    "enc_fwd_Wx",
    "enc_fwd_Wh",
    "enc_fwd_b",
    "enc_bwd_Wx",
    "enc_bwd_Wh",
    "enc_bwd_b",
    "dec_init_W",
    "dec_Wx",
    "dec_Wh",
    "dec_b",
    "attn_W",
    "out_U",
    "domain_W",
)


def block_shapes(config: ModelConfig) -> list[tuple[str, tuple[int, ...]]]:
    d, E, V, K = config.hidden_dim, config.embed_dim, config.vocab_size, config.num_domains
    D = 2 * d
    shapes = {
        "embed": (V, E),
        "enc_fwd_Wx": (3 * d, E),
        "enc_fwd_Wh": (3 * d, d),
        "enc_fwd_b": (3 * d,),
        "enc_bwd_Wx": (3 * d, E),
        "enc_bwd_Wh": (3 * d, d),
        "enc_bwd_b": (3 * d,),
        "dec_init_W": (D, D),
        "dec_Wx": (3 * D, E),
        "dec_Wh": (3 * D, D),
        "dec_b": (3 * D,),
        "attn_W": (D, D),
        "out_U": (V, 2 * D),
        "domain_W": (K, 2 * D),
    }
    return [(name, shapes[name]) for name in BLOCKS]


def model_layout(config: ModelConfig) -> Layout:
    return Layout.from_shapes(block_shapes(config))


def init_params(config: ModelConfig, seed: int) -> ParamVector:
    """Every weight i.i.d. uniform on ``[-init_range, init_range]``."""
    layout = model_layout(config)
    rng = np.random.default_rng(seed)
    values = rng.uniform(-config.init_range, config.init_range, size=layout.size)
    return ParamVector(values, layout)
