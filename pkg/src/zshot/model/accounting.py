"""Closed-form trainable-parameter counts of five multi-domain designs.

Only ``zshot`` is implemented; the others are analytic counts built from
the same components (see ``docs/parameters.md``):

=========  =========================================================
o2o        one encoder, one decoder, one output matrix
e2d        o2o with a one-hot domain vector appended to encoder inputs
zshot      o2o plus the K x 4d domain matrix
o2m        one encoder, K decoders each with its own output matrix
m2m        K + 1 encoders, one decoder, K output matrices
=========  =========================================================
"""

from __future__ import annotations

from dataclasses import dataclass

ARCHITECTURES = ("o2o", "o2m", "m2m", "e2d", "zshot")


@dataclass(frozen=True)
class Components:
    embed: int
    encoder: int
    decoder: int  # LSTM + initial-state projection + attention
    output: int
    domain_head: int
    domain_input: int


def components(d: int, embed_dim: int, vocab_size: int, num_domains: int) -> Components:
    E, V, K = embed_dim, vocab_size, num_domains
    lstm_enc = 3 * d * E + 3 * d * d + 3 * d
    lstm_dec = 6 * d * E + 12 * d * d + 6 * d
    return Components(
        embed=V * E,
        encoder=2 * lstm_enc,
        decoder=lstm_dec + 4 * d * d + 4 * d * d,
        output=4 * d * V,
        domain_head=4 * d * K,
        domain_input=2 * 3 * d * K,
    )


def count_params(d: int, embed_dim: int, vocab_size: int, num_domains: int) -> dict[str, int]:
    c = components(d, embed_dim, vocab_size, num_domains)
    K = num_domains
    o2o = c.embed + c.encoder + c.decoder + c.output
    return {
        "o2o": o2o,
        "o2m": c.embed + c.encoder + K * (c.decoder + c.output),
        "m2m": c.embed + (K + 1) * c.encoder + c.decoder + K * c.output,
        "e2d": o2o + c.domain_input,
        "zshot": o2o + c.domain_head,
    }


def count_config(config) -> dict[str, int]:
    return count_params(config.hidden_dim, config.embed_dim, config.vocab_size, config.num_domains)
