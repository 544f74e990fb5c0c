"""Sequence-, token- and denotation-level accuracy."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import Sequence

from ..data_io import EOS, Example
from ..model import ModelConfig, greedy_decode

logger = logging.getLogger(__name__)


def _strip(tokens: Sequence[str]) -> list[str]:
    return [t for t in tokens if t != EOS]


def _check_pairs(predictions, golds) -> None:
    if len(predictions) != len(golds):
        raise ValueError(f"{len(predictions)} predictions for {len(golds)} gold sequences")
    if not golds:
        raise ValueError("at least one pair is required")


def seq_accuracy(predictions: Sequence[Sequence[str]], golds: Sequence[Sequence[str]]) -> float:
    """Fraction of predictions equal to their gold sequence, EOS ignored."""
    _check_pairs(predictions, golds)
    hits = sum(_strip(p) == _strip(g) for p, g in zip(predictions, golds))
    return hits / len(golds)


def tok_accuracy(predictions: Sequence[Sequence[str]], golds: Sequence[Sequence[str]]) -> float:
    """Positional matches over the total gold length.

    Gold positions past the end of a prediction count as misses; extra
    predicted tokens are not penalised.
    """
    _check_pairs(predictions, golds)
    matches = total = 0
    for p, g in zip(predictions, golds):
        p, g = _strip(p), _strip(g)
        matches += sum(a == b for a, b in zip(p, g))
        total += len(g)
    return matches / total if total else 1.0


def den_accuracy(predictions, golds, executor) -> float:
    """Fraction of predictions whose executed answer equals the gold answer.

    An item the executor fails on counts as incorrect.
    """
    _check_pairs(predictions, golds)
    pred_ans = executor.run_many([" ".join(_strip(p)) for p in predictions])
    gold_ans = executor.run_many([" ".join(_strip(g)) for g in golds])
    hits = 0
    for i, (a, b) in enumerate(zip(pred_ans, gold_ans)):
        if a is None or b is None:
            logger.warning("executor failed on item %d", i)
            continue
        hits += a == b
    return hits / len(golds)


@dataclass(frozen=True)
class MetricsReport:
    seq_level: float
    tok_level: float
    den_level: float | None
    n_test: int

    def __post_init__(self):
        for v in (self.seq_level, self.tok_level, self.den_level):
            if v is not None and not 0.0 <= v <= 1.0:
                raise ValueError(f"accuracy {v} outside [0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)


def decode_all(params, config: ModelConfig, examples: Sequence[Example]) -> list[list[str]]:
    return [greedy_decode(params, config, ex.source) for ex in examples]


def evaluate(params, config: ModelConfig, examples: Sequence[Example], executor=None) -> MetricsReport:
    preds = decode_all(params, config, examples)
    golds = [list(ex.target) for ex in examples]
    den = den_accuracy(preds, golds, executor) if executor is not None else None
    return MetricsReport(seq_accuracy(preds, golds), tok_accuracy(preds, golds), den, len(examples))
