import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from zshot.data_io import (
    EOS,
    DomainBatch,
    DomainRegistry,
    Example,
    FlipRecord,
    build_vocab,
    flip_count,
    flip_labels,
    flip_records,
    group_by_domain,
    load_corpus,
    read_flip_manifest,
    sample_subsets,
    write_corpus,
    write_flip_manifest,
)
from zshot.errors import CorpusError, UnknownDomainError


def _pool(per_domain=10, domains=("a", "b", "c")):
    return [Example(f"{d}{i}", (d, f"w{i}"), ("(", d, ")"), d) for d in domains for i in range(per_domain)]


def test_example_appends_eos_once():
    ex = Example("e", ("x",), ("y",), "d")
    assert ex.target == ("y", EOS)
    assert Example("e", ("x",), ("y", EOS), "d").target == ("y", EOS)
    assert ex.to_record()["target"] == ["y"]


@pytest.mark.parametrize(
    "source,target",
    [((), ("y",)), (("x",), ()), (("x", EOS), ("y",))],
)
def test_example_rejects_degenerate(source, target):
    with pytest.raises(CorpusError):
        Example("e", source, target, "d")


def test_corpus_round_trip_is_byte_exact(tmp_path):
    path = tmp_path / "c.jsonl"
    pool = _pool(3) + [Example("u", ("naïve",), ("é",), "a")]
    write_corpus(pool, path)
    loaded = load_corpus(path)
    assert loaded == pool
    again = tmp_path / "d.jsonl"
    write_corpus(loaded, again)
    assert again.read_bytes() == path.read_bytes()


@pytest.mark.parametrize(
    "line,fragment",
    [
        ("{not json", "invalid JSON"),
        ("[1, 2]", "JSON object"),
        ('{"id": "x", "source": ["a"], "target": ["b"]}', "domain"),
        ('{"id": 3, "source": ["a"], "target": ["b"], "domain": "d"}', "id"),
        ('{"id": "x", "source": "a b", "target": ["b"], "domain": "d"}', "source"),
        ('{"id": "x", "source": ["a"], "domain": "d"}', "target"),
        ('{"id": "x", "source": [], "target": ["b"], "domain": "d"}', "empty source"),
    ],
)
def test_malformed_records_report_line(tmp_path, line, fragment):
    path = tmp_path / "c.jsonl"
    good = json.dumps({"id": "ok", "source": ["a"], "target": ["b"], "domain": "d"})
    path.write_text(good + "\n\n" + line + "\n")
    with pytest.raises(CorpusError) as info:
        load_corpus(path)
    assert info.value.line == 3
    assert fragment in str(info.value)


def test_duplicate_ids_rejected(tmp_path):
    path = tmp_path / "c.jsonl"
    write_corpus([Example("x", ("a",), ("b",), "d")] * 2, path)
    with pytest.raises(CorpusError, match="duplicate"):
        load_corpus(path)


def test_registry_order_and_freezing(tmp_path):
    path = tmp_path / "c.jsonl"
    write_corpus(_pool(1, ("b", "a", "c")), path)
    reg = DomainRegistry()
    load_corpus(path, reg)
    assert reg.names == ("b", "a", "c")
    assert reg.index("c") == 2 and reg.name(1) == "a"
    frozen = DomainRegistry(["b"], frozen=True)
    with pytest.raises(UnknownDomainError) as info:
        load_corpus(path, frozen)
    assert info.value.line == 2
    with pytest.raises(UnknownDomainError):
        reg.index("zzz")


def test_domain_batch_rejects_foreign_examples():
    with pytest.raises(CorpusError):
        DomainBatch("a", _pool(1, ("b",)))
    groups = group_by_domain(_pool(2))
    assert list(groups) == ["a", "b", "c"] and len(groups["a"]) == 2


def test_vocab_ordering_and_counts():
    exs = [
        Example("1", ("b", "a"), ("a", "z"), "d"),
        Example("2", ("b", "c"), ("a",), "d"),
    ]
    vocab = build_vocab(exs)
    # a:3, b:2, then c and z tied at 1, lexicographic
    assert vocab.tokens == ("<pad>", "<unk>", "</s>", "a", "b", "c", "z")
    assert vocab.max_source_len == 2
    assert build_vocab(exs, min_count=2).tokens[3:] == ("a", "b")
    assert vocab.index("missing") == 1
    assert vocab.copy_index(1) == vocab.size + 1
    with pytest.raises(IndexError):
        vocab.copy_index(2)
    with pytest.raises(ValueError):
        build_vocab(exs, min_count=0)


@given(sizes=st.lists(st.integers(0, 10), min_size=1, max_size=4, unique=True).map(sorted), seed=st.integers(0, 99))
def test_subsets_are_nested_and_balanced(sizes, seed):
    pool = _pool(10)
    out = sample_subsets(pool, sizes, seed)
    prev: set[str] = set()
    for s in sizes:
        ids = {ex.id for ex in out[s]}
        assert prev <= ids
        assert all(sum(ex.domain == d for ex in out[s]) == s for d in "abc")
        # corpus order is preserved
        assert [ex.id for ex in out[s]] == [ex.id for ex in pool if ex.id in ids]
        prev = ids
    assert sample_subsets(pool, sizes, seed) == out


def test_subsets_reject_bad_sizes():
    with pytest.raises(ValueError):
        sample_subsets(_pool(), [5, 2], 0)
    with pytest.raises(CorpusError):
        sample_subsets(_pool(), [11], 0)


def test_subset_of_one_domain_is_independent_of_others():
    a = sample_subsets(_pool(10, ("a", "b")), [4], 3)[4]
    b = sample_subsets(_pool(10, ("a", "c")), [4], 3)[4]
    assert [ex.id for ex in a if ex.domain == "a"] == [ex.id for ex in b if ex.domain == "a"]


@given(fraction=st.sampled_from([0.05, 0.1, 0.15, 0.2, 0.25, 1.0]), seed=st.integers(0, 99))
def test_flip_counts_and_relabelling(fraction, seed):
    pool = _pool(30, ("s", "t"))
    out, flipped = flip_labels(pool, "s", "t", fraction, seed)
    assert len(flipped) == flip_count(fraction, 30)
    for before, after in zip(pool, out):
        assert after.domain == ("t" if before.id in flipped else before.domain)
        assert (after.source, after.target) == (before.source, before.target)


def test_flip_count_guards_rounding():
    assert flip_count(0.1, 30) == 3
    assert flip_count(0.15, 20) == 3
    assert flip_count(0.01, 5) == 1


@given(seed=st.integers(0, 500))
def test_flips_are_nested_across_fractions(seed):
    pool = _pool(40, ("s", "t"))
    prev: set[str] = set()
    for f in (0.05, 0.1, 0.15, 0.2, 0.25):
        _, flipped = flip_labels(pool, "s", "t", f, seed)
        assert prev <= flipped
        prev = flipped


def test_flip_rejects_bad_arguments():
    pool = _pool(5, ("s", "t"))
    with pytest.raises(ValueError):
        flip_labels(pool, "s", "t", 0.0, 0)
    with pytest.raises(ValueError):
        flip_labels(pool, "s", "s", 0.1, 0)
    with pytest.raises(CorpusError):
        flip_labels(pool, "nope", "t", 0.1, 0)


def test_flip_manifest_round_trip(tmp_path):
    pool = _pool(10, ("s", "t"))
    _, flipped = flip_labels(pool, "s", "t", 0.2, 1)
    records = flip_records(pool, flipped, "t")
    assert {r.id for r in records} == flipped
    assert all(r.original_domain == "s" and r.flipped_domain == "t" for r in records)
    path = tmp_path / "flips.jsonl"
    write_flip_manifest(records, path)
    for line in path.read_text().splitlines():
        assert set(json.loads(line)) == {"id", "original_domain", "flipped_domain"}
    assert read_flip_manifest(path) == records
    path.write_text('{"id": "x"}\n')
    with pytest.raises(CorpusError):
        read_flip_manifest(path)
    assert FlipRecord("a", "b", "c").flipped_domain == "c"
