"""Suspect ranking for label-flip detection."""

from __future__ import annotations

import math
from typing import Sequence

from .engine import InfluenceEngine, InfluenceScore


def order_scores(scores: Sequence[InfluenceScore], descending: bool = False) -> list[InfluenceScore]:
    """Sort by value, ties by subject id; unconverged or non-finite scores go last."""

    def key(s: InfluenceScore):
        clean = s.converged and math.isfinite(s.value)
        v = s.value if math.isfinite(s.value) else 0.0
        return (not clean, -v if descending else v, s.subject)

    return sorted(scores, key=key)


def rank_flip_suspects(
    engine: InfluenceEngine,
    items: Sequence | None = None,
    validation: Sequence | None = None,
) -> list[str]:
    """Training ids ordered from most to least suspicious.

    By default each item is scored by its self-influence ``-g' H^-1 g``,
    which is never positive under a clean solve; the most negative score
    ranks first. Passing ``validation`` instead scores each item's influence
    on the summed loss of that clean batch, and items whose up-weighting
    raises it the most rank first.
    """
    items = engine.train if items is None else list(items)
    if validation is None:
        scores = order_scores(engine.self_influence(items))
    else:
        scores = order_scores(engine.influence_many(items, list(validation)), descending=True)
    return [s.subject for s in scores]


def detections(ranking: Sequence[str], flipped: set[str], budget: int) -> int:
    """Flipped ids among the first ``budget`` entries of ``ranking``."""
    return sum(1 for i in ranking[: max(budget, 0)] if i in flipped)


def random_expected(total: int, flips: int, budget: int) -> float:
    """Mean flips found by inspecting ``budget`` of ``total`` ids at random
    (the hypergeometric mean)."""
    if total <= 0:
        return 0.0
    budget = min(max(budget, 0), total)
    return budget * flips / total
