"""Synthetic multi-domain question/logical-form corpora.

Every domain draws entities, attributes and values from its own lexicon and
renders them with one of two phrasing styles. Logical forms share a single
grammar across all domains, so structure and copying transfer while the
domain-specific words keep the domains separable. ``shared`` attributes
appear under identical words and predicates in several domains, which is
what makes one domain "near" another.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data_io import Example


@dataclass(frozen=True)
class DomainSpec:
    name: str
    entities: tuple[str, ...]
    attributes: tuple[str, ...]
    style: str = "plain"  # or "verbose"
    values: tuple[str, ...] = ()


def _lexicon(prefix: str, count: int) -> tuple[str, ...]:
    return tuple(f"{prefix}{i}" for i in range(count))


def make_domain(
    name: str,
    style: str = "plain",
    n_entities: int = 3,
    n_attributes: int = 4,
    shared_attributes: Sequence[str] = (),
    n_values: int = 12,
) -> DomainSpec:
    own = _lexicon(f"{name}_a", n_attributes - len(shared_attributes))
    return DomainSpec(
        name=name,
        entities=_lexicon(f"{name}_e", n_entities),
        attributes=tuple(shared_attributes) + own,
        style=style,
        values=_lexicon(f"{name}_v", n_values),
    )


# (source template, logical form template); slots: E entity, A/B attributes, X/Y values
_TEMPLATES = {
    "plain": (
        ("show E with A X", "( list E:t ( A:p X ) )"),
        ("show E with A X and B Y", "( list E:t ( and ( A:p X ) ( B:p Y ) ) )"),
        ("how many E have A X", "( count E:t ( A:p X ) )"),
        ("E with most A", "( argmax E:t A:p )"),
    ),
    "verbose": (
        ("find every E whose A equals X please", "( list E:t ( A:p X ) )"),
        ("find every E whose A equals X plus B equals Y", "( list E:t ( and ( A:p X ) ( B:p Y ) ) )"),
        ("count of E whose A equals X", "( count E:t ( A:p X ) )"),
        ("which E has largest A", "( argmax E:t A:p )"),
    ),
}


def _render(template: str, slots: dict[str, str]) -> tuple[str, ...]:
    out = []
    for tok in template.split():
        head, colon, tail = tok.partition(":")
        if head in slots:
            out.append(slots[head] + colon + tail)
        else:
            out.append(tok)
    return tuple(out)


def generate_domain(spec: DomainSpec, count: int, rng: np.random.Generator, prefix: str = "") -> list[Example]:
    """Draw ``count`` examples from ``spec`` with ids ``{prefix}{name}-{i}``."""
    templates = _TEMPLATES[spec.style]
    out = []
    for i in range(count):
        src_t, lf_t = templates[rng.integers(len(templates))]
        a, b = rng.choice(len(spec.attributes), size=2, replace=False)
        x, y = rng.choice(len(spec.values), size=2, replace=False)
        slots = {
            "E": spec.entities[rng.integers(len(spec.entities))],
            "A": spec.attributes[a],
            "B": spec.attributes[b],
            "X": spec.values[x],
            "Y": spec.values[y],
        }
        out.append(Example(f"{prefix}{spec.name}-{i}", _render(src_t, slots), _render(lf_t, slots), spec.name))
    return out


@dataclass(frozen=True)
class Fixture:
    """Training pool and held-out test set of a synthetic corpus."""

    train: list[Example]
    test: list[Example]
    specs: tuple[DomainSpec, ...] = field(default=())


def near_far_fixture(train_per_domain: int = 100, test_size: int = 100, seed: int = 0) -> Fixture:
    """Target ``tgt``, a ``near`` domain with the same phrasing and attribute
    words, and a ``far`` domain with its own words and the verbose phrasing."""
    rng = np.random.default_rng(seed)
    shared = ("date", "size", "color", "owner")
    specs = (
        make_domain("tgt", shared_attributes=shared),
        make_domain("near", shared_attributes=shared),
        make_domain("far", style="verbose"),
    )
    train = []
    for spec in specs:
        train.extend(generate_domain(spec, train_per_domain, rng))
    test = generate_domain(specs[0], test_size, rng, prefix="test-")
    return Fixture(train, test, specs)


def separable_fixture(train_per_domain: int = 50, test_size: int = 20, seed: int = 0) -> Fixture:
    """Two domains with disjoint lexicons and different phrasing."""
    rng = np.random.default_rng(seed)
    specs = (make_domain("alpha"), make_domain("beta", style="verbose"))
    train = []
    for spec in specs:
        train.extend(generate_domain(spec, train_per_domain, rng))
    test = []
    for spec in specs:
        test.extend(generate_domain(spec, test_size, rng, prefix="test-"))
    return Fixture(train, test, specs)


def copy_fixture(count: int = 40, length: int = 3, n_words: int = 6, seed: int = 0) -> list[Example]:
    """Identity task: the target repeats the source."""
    rng = np.random.default_rng(seed)
    words = _lexicon("w", n_words)
    out = []
    for i in range(count):
        toks = tuple(words[j] for j in rng.integers(n_words, size=length))
        out.append(Example(f"copy-{i}", toks, toks, "copy"))
    return out


# source phrasings and operator of each arithmetic domain
_ARITH = {
    "plus": (("add X and Y", "+"), ("X minus Y", "-")),
    "times": (("multiply X by Y", "*"), ("larger of X and Y", "max"), ("smaller of X and Y", "min")),
}


def _arith_domain(name: str, count: int, rng: np.random.Generator, prefix: str = "") -> list[Example]:
    out = []
    for i in range(count):
        phrase, op = _ARITH[name][rng.integers(len(_ARITH[name]))]
        x, y = (str(v) for v in rng.integers(10, size=2))
        source = tuple(x if t == "X" else y if t == "Y" else t for t in phrase.split())
        out.append(Example(f"{prefix}{name}-{i}", source, ("(", op, x, y, ")"), name))
    return out


def arithmetic_fixture(train_per_domain: int = 50, test_size: int = 20, seed: int = 0) -> Fixture:
    """Prefix arithmetic forms for the bundled toy executor; target is ``plus``."""
    rng = np.random.default_rng(seed)
    train = _arith_domain("plus", train_per_domain, rng) + _arith_domain("times", train_per_domain, rng)
    return Fixture(train, _arith_domain("plus", test_size, rng, prefix="test-"))
