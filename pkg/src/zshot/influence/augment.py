"""Augmentation distributions built from repeated top-k suspect lists."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import ZShotError


@dataclass(frozen=True)
class Trial:
    fraction: float
    ranking: tuple[str, ...]
    top_k: int

    def __post_init__(self):
        object.__setattr__(self, "ranking", tuple(self.ranking))
        if not 0 <= self.top_k <= len(self.ranking):
            raise ZShotError(f"top_k={self.top_k} outside [0, {len(self.ranking)}]")

    @classmethod
    def from_fraction(cls, fraction: float, ranking: Sequence[str]) -> "Trial":
        return cls(fraction, tuple(ranking), top_k(fraction, len(ranking)))


def top_k(fraction: float, size: int) -> int:
    return min(size, math.ceil(fraction * size - 1e-9))


@dataclass(frozen=True)
class AugDistribution:
    support: tuple[str, ...]
    weights: np.ndarray
    trial_count: int
    counts: tuple[int, ...]

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if len(set(self.support)) != len(self.support):
            raise ZShotError("support ids must be distinct")
        if w.shape != (len(self.support),) or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ZShotError("weights must be a probability vector over the support")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    def complement(self) -> "AugDistribution":
        """Weights proportional to ``trial_count - count``, renormalised."""
        rest = np.array([self.trial_count - c for c in self.counts], dtype=np.float64)
        if rest.sum() <= 0:
            raise ZShotError("every support id appears in every trial; the complement is empty")
        return AugDistribution(self.support, rest / rest.sum(), self.trial_count, self.counts)

    def mass_on(self, ids: set[str]) -> float:
        return float(sum(w for i, w in zip(self.support, self.weights) if i in ids))


def build_aug_distribution(trials: Sequence[Trial], support: Sequence[str]) -> AugDistribution:
    """Weight of each support id proportional to the trials whose top-k list holds it."""
    if not trials:
        raise ZShotError("at least one trial is required")
    support = tuple(dict.fromkeys(support))
    hits: Counter = Counter()
    for t in trials:
        hits.update(set(t.ranking[: t.top_k]))
    counts = tuple(hits.get(i, 0) for i in support)
    total = sum(counts)
    if total == 0:
        raise ZShotError("no support id appears in any top-k list")
    w = np.array(counts, dtype=np.float64) / total
    return AugDistribution(support, w, len(trials), counts)


@dataclass(frozen=True)
class AugmentationSample:
    draws: tuple[str, ...]

    @property
    def unique(self) -> list[str]:
        """Distinct ids in first-draw order."""
        return list(dict.fromkeys(self.draws))

    @property
    def counts(self) -> dict[str, int]:
        c = Counter(self.draws)
        return {i: c[i] for i in self.unique}

    def resolve(self, pool) -> list:
        """Examples for the deduplicated ids, looked up in ``pool`` (a mapping or sequence)."""
        if not isinstance(pool, dict):
            pool = {ex.id: ex for ex in pool}
        return [pool[i] for i in self.unique]


def sample_augmentation(dist: AugDistribution, n: int = 100, seed: int = 0) -> AugmentationSample:
    """``n`` draws with replacement from ``dist``."""
    if n < 1:
        raise ZShotError("n must be >= 1")
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(dist.support), size=n, replace=True, p=dist.weights)
    return AugmentationSample(tuple(dist.support[i] for i in idx))
