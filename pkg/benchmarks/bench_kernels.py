"""Compare the compiled and numpy loss/gradient kernels.

Usage::

    python3 benchmarks/bench_kernels.py --hidden 16 --examples 100 --repeat 3
"""

from __future__ import annotations

import time

import click
import numpy as np

from zshot.data_io import build_vocab
from zshot.model import ModelConfig, encode_example, init_params
from zshot.model.kernels import CKernel, get_kernel
from zshot.synth import near_far_fixture


def _time_backend(kernel, values, encoded, repeat: int) -> float:
    g = np.empty_like(values)
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        for ex in encoded:
            kernel.loss_and_grad(values, ex, g)
        best = min(best, time.perf_counter() - start)
    return best


@click.command()
@click.option("--hidden", default=16, show_default=True, help="Encoder width d (embedding width too).")
@click.option("--examples", default=100, show_default=True, help="Examples per timed pass.")
@click.option("--repeat", default=3, show_default=True, help="Timed passes; the best is reported.")
@click.option("--seed", default=0, show_default=True)
def main(hidden: int, examples: int, repeat: int, seed: int) -> None:
    fx = near_far_fixture(seed=seed)
    data = fx.train[:examples]
    cfg = ModelConfig(
        vocab=build_vocab(fx.train),
        domains=("tgt", "near", "far"),
        hidden_dim=hidden,
        embed_dim=hidden,
        max_decode_len=30,
    )
    values = init_params(cfg, seed).values
    encoded = [encode_example(ex, cfg) for ex in data]
    backends = ["numpy"] + (["compiled"] if CKernel is not None else [])
    timings = {b: _time_backend(get_kernel(cfg, b), values, encoded, repeat) for b in backends}
    click.echo(f"d={hidden} examples={len(encoded)} params={len(values)}")
    for b, t in timings.items():
        click.echo(f"{b:9s} {t * 1e3:9.2f} ms/pass  {t / len(encoded) * 1e6:9.1f} us/example")
    if "compiled" in timings:
        click.echo(f"speedup   {timings['numpy'] / timings['compiled']:.1f}x")
    else:
        click.echo("compiled kernel not built; only the numpy fallback was timed")


if __name__ == "__main__":
    main()
