"""Corpus records, vocabularies, domain registry and deterministic sampling.

Corpus files are UTF-8 JSON lines, one example per line::

    {"id": "cal-0001", "source": ["show", "meetings"], "target": ["(", "meeting", ")"], "domain": "calendar"}

Targets are stored without the end-of-sequence marker; it is appended on
load and stripped again on write, so canonical files round-trip byte for
byte.
"""

from __future__ import annotations

import json
import math
import zlib
from collections import Counter
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Mapping, NewType, Sequence

import numpy as np

from .errors import CorpusError, UnknownDomainError

PAD = "<pad>"
UNK = "<unk>"
EOS = "</s>"
RESERVED = (PAD, UNK, EOS)
PAD_ID, UNK_ID, EOS_ID = 0, 1, 2

TaskId = NewType("TaskId", int)


@dataclass(frozen=True)
class Example:
    """One (source, target, domain) triple. ``target`` always ends with EOS."""

    id: str
    source: tuple[str, ...]
    target: tuple[str, ...]
    domain: str

    def __post_init__(self):
        object.__setattr__(self, "source", tuple(self.source))
        target = tuple(self.target)
        if not target or target[-1] != EOS:
            target = target + (EOS,)
        object.__setattr__(self, "target", target)
        if not self.source:
            raise CorpusError(f"example {self.id!r} has an empty source")
        if len(target) < 2:
            raise CorpusError(f"example {self.id!r} has an empty target")
        if EOS in self.source:
            raise CorpusError(f"example {self.id!r} contains {EOS} in its source")

    def with_domain(self, domain: str) -> "Example":
        return replace(self, domain=domain)

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "source": list(self.source),
            "target": list(self.target[:-1]),
            "domain": self.domain,
        }


class DomainRegistry:
    """Bijection between domain names and task indices ``0..K-1``."""

    def __init__(self, names: Iterable[str] = (), frozen: bool = False):
        self._names: list[str] = []
        self._index: dict[str, int] = {}
        for name in names:
            self.register(name)
        self.frozen = frozen

    def register(self, name: str) -> TaskId:
        if name in self._index:
            return TaskId(self._index[name])
        if getattr(self, "frozen", False):
            raise UnknownDomainError(name)
        self._index[name] = len(self._names)
        self._names.append(name)
        return TaskId(self._index[name])

    def index(self, name: str) -> TaskId:
        try:
            return TaskId(self._index[name])
        except KeyError:
            raise UnknownDomainError(name) from None

    def name(self, task: int) -> str:
        return self._names[task]

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(self._names)

    def __len__(self) -> int:
        return len(self._names)

    def __contains__(self, name: str) -> bool:
        return name in self._index

    def __repr__(self) -> str:
        return f"DomainRegistry({self._names!r})"

    @classmethod
    def from_examples(cls, examples: Iterable[Example]) -> "DomainRegistry":
        reg = cls()
        for ex in examples:
            reg.register(ex.domain)
        return reg


@dataclass(frozen=True)
class DomainBatch:
    domain: str
    examples: tuple[Example, ...]

    def __post_init__(self):
        object.__setattr__(self, "examples", tuple(self.examples))
        for ex in self.examples:
            if ex.domain != self.domain:
                raise CorpusError(f"example {ex.id!r} is in {ex.domain!r}, not {self.domain!r}")

    def __len__(self) -> int:
        return len(self.examples)

    def __iter__(self):
        return iter(self.examples)


def group_by_domain(examples: Iterable[Example]) -> dict[str, DomainBatch]:
    groups: dict[str, list[Example]] = {}
    for ex in examples:
        groups.setdefault(ex.domain, []).append(ex)
    return {name: DomainBatch(name, exs) for name, exs in groups.items()}


# -- corpus files ---------------------------------------------------------------
def _parse_tokens(record: dict, key: str, lineno: int) -> list[str]:
    if key not in record:
        raise CorpusError(f"missing field {key!r}", line=lineno)
    tokens = record[key]
    if not isinstance(tokens, list) or not all(isinstance(t, str) for t in tokens):
        raise CorpusError(f"field {key!r} must be a list of strings", line=lineno)
    return tokens


def parse_record(line: str, lineno: int, registry: DomainRegistry | None = None) -> Example:
    try:
        record = json.loads(line)
    except json.JSONDecodeError as exc:
        raise CorpusError(f"invalid JSON: {exc.msg}", line=lineno) from None
    if not isinstance(record, dict):
        raise CorpusError("record must be a JSON object", line=lineno)
    for key in ("id", "domain"):
        if not isinstance(record.get(key), str):
            raise CorpusError(f"missing or non-string field {key!r}", line=lineno)
    source = _parse_tokens(record, "source", lineno)
    target = _parse_tokens(record, "target", lineno)
    domain = record["domain"]
    if registry is not None:
        if registry.frozen and domain not in registry:
            raise UnknownDomainError(domain, line=lineno)
        registry.register(domain)
    try:
        return Example(record["id"], tuple(source), tuple(target), domain)
    except CorpusError as exc:
        raise CorpusError(str(exc), line=lineno) from None


def load_corpus(path: str | Path, registry: DomainRegistry | None = None) -> list[Example]:
    """Read a JSONL corpus in file order.

    Domains are registered in order of first appearance when ``registry`` is
    given; a frozen registry rejects unseen domains.
    """
    examples: list[Example] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            ex = parse_record(line, lineno, registry)
            if ex.id in seen:
                raise CorpusError(f"duplicate id {ex.id!r}", line=lineno)
            seen.add(ex.id)
            examples.append(ex)
    return examples


def dumps_example(ex: Example) -> str:
    return json.dumps(ex.to_record(), ensure_ascii=False)


def write_corpus(examples: Iterable[Example], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for ex in examples:
            fh.write(dumps_example(ex) + "\n")


# -- vocabulary -----------------------------------------------------------------
class Vocab:
    """Token indices plus a block of copy-position indices after them.

    Indices ``0..V-1`` are vocabulary entries (the three reserved tokens
    first); ``V + i`` denotes "copy source position i" for
    ``i < max_source_len``.
    """

    def __init__(self, tokens: Sequence[str], max_source_len: int):
        tokens = list(tokens)
        if tuple(tokens[:3]) != RESERVED:
            tokens = list(RESERVED) + [t for t in tokens if t not in RESERVED]
        if len(set(tokens)) != len(tokens):
            raise ValueError("vocabulary tokens must be distinct")
        self.tokens: tuple[str, ...] = tuple(tokens)
        self._index = {t: i for i, t in enumerate(self.tokens)}
        self.max_source_len = int(max_source_len)

    @property
    def size(self) -> int:
        return len(self.tokens)

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def index(self, token: str) -> int:
        return self._index.get(token, UNK_ID)

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self.index(t) for t in tokens]

    def token(self, index: int) -> str:
        return self.tokens[index]

    def copy_index(self, position: int) -> int:
        if not 0 <= position < self.max_source_len:
            raise IndexError(f"copy position {position} outside [0, {self.max_source_len})")
        return self.size + position

    def is_copy(self, index: int) -> bool:
        return index >= self.size

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocab) and self.tokens == other.tokens and self.max_source_len == other.max_source_len

    def __repr__(self) -> str:
        return f"Vocab(size={self.size}, max_source_len={self.max_source_len})"

    def to_json(self) -> dict:
        return {"tokens": list(self.tokens), "max_source_len": self.max_source_len}

    @classmethod
    def from_json(cls, data: Mapping) -> "Vocab":
        return cls(data["tokens"], data["max_source_len"])


def build_vocab(examples: Iterable[Example], min_count: int = 1, max_source_len: int | None = None) -> Vocab:
    """Vocabulary over source and target tokens seen at least ``min_count`` times.

    Ordering is by descending count, ties broken lexicographically.
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts: Counter[str] = Counter()
    longest = 0
    for ex in examples:
        counts.update(ex.source)
        counts.update(t for t in ex.target if t not in RESERVED)
        longest = max(longest, len(ex.source))
    kept = sorted((t for t, c in counts.items() if c >= min_count and t not in RESERVED), key=lambda t: (-counts[t], t))
    return Vocab(list(RESERVED) + kept, max_source_len or max(longest, 1))


# -- sampling -------------------------------------------------------------------
def _domain_rng(seed: int, domain: str) -> np.random.Generator:
    return np.random.default_rng([int(seed), zlib.crc32(domain.encode("utf-8"))])


def sample_subsets(examples: Sequence[Example], sizes: Sequence[int], seed: int) -> dict[int, list[Example]]:
    """Nested per-domain samples: every domain contributes ``size`` examples.

    Each domain is shuffled once with a seed derived from ``seed`` and its
    name; the sample of size ``s`` is the first ``s`` of that shuffle, so
    larger samples always contain smaller ones. Results keep corpus order.
    """
    sizes = list(sizes)
    if sizes != sorted(sizes):
        raise ValueError("sizes must be sorted ascending")
    if any(s < 0 for s in sizes):
        raise ValueError("sizes must be non-negative")
    groups = group_by_domain(examples)
    order: dict[str, list[str]] = {}
    for name, batch in groups.items():
        if sizes and sizes[-1] > len(batch):
            raise CorpusError(f"domain {name!r} has {len(batch)} examples, {sizes[-1]} requested")
        perm = _domain_rng(seed, name).permutation(len(batch))
        order[name] = [batch.examples[i].id for i in perm]
    out: dict[int, list[Example]] = {}
    for size in sizes:
        chosen = {eid for ids in order.values() for eid in ids[:size]}
        out[size] = [ex for ex in examples if ex.id in chosen]
    return out


def flip_count(fraction: float, available: int) -> int:
    # guard against 0.1 * 30 = 3.0000000000000004 rounding up to 4
    return min(available, math.ceil(fraction * available - 1e-9))


def flip_labels(
    examples: Sequence[Example],
    source: str,
    target: str,
    fraction: float,
    seed: int,
) -> tuple[list[Example], set[str]]:
    """Relabel ``ceil(fraction * |source|)`` random ``source`` examples as ``target``.

    The flipped ids are a prefix of one seeded permutation, so for a fixed
    seed a smaller fraction flips a subset of what a larger one flips.
    """
    if not 0 < fraction <= 1:
        raise ValueError("fraction must be in (0, 1]")
    if source == target:
        raise ValueError("source and target domains must differ")
    pool = [ex.id for ex in examples if ex.domain == source]
    if not pool:
        raise CorpusError(f"no examples in domain {source!r}")
    k = flip_count(fraction, len(pool))
    rng = _domain_rng(seed, f"flip:{source}->{target}")
    flipped = {pool[i] for i in rng.permutation(len(pool))[:k]}
    out = [ex.with_domain(target) if ex.id in flipped else ex for ex in examples]
    return out, flipped


@dataclass(frozen=True)
class FlipRecord:
    id: str
    original_domain: str
    flipped_domain: str


def write_flip_manifest(records: Iterable[FlipRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            fh.write(json.dumps({"id": r.id, "original_domain": r.original_domain, "flipped_domain": r.flipped_domain}) + "\n")


def read_flip_manifest(path: str | Path) -> list[FlipRecord]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                out.append(FlipRecord(row["id"], row["original_domain"], row["flipped_domain"]))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise CorpusError(f"bad flip record: {exc}", line=lineno) from None
    return out


def flip_records(original: Sequence[Example], flipped_ids: set[str], target: str) -> list[FlipRecord]:
    return [FlipRecord(ex.id, ex.domain, target) for ex in original if ex.id in flipped_ids]
