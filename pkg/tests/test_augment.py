import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from zshot.errors import ZShotError
from zshot.influence import (
    AugDistribution,
    AugmentationSample,
    Trial,
    build_aug_distribution,
    sample_augmentation,
    top_k,
)
from zshot.influence.report import read_aug_manifest, write_aug_manifest

SUPPORT = ("a", "b", "c", "d")


def test_single_top2_trial_is_uniform_on_its_list():
    dist = build_aug_distribution([Trial(0.5, ("c", "a", "b", "d"), 2)], SUPPORT)
    np.testing.assert_allclose(dist.weights, [0.5, 0, 0.5, 0])
    assert dist.counts == (1, 0, 1, 0)


def test_id_in_every_list_only_is_a_point_mass():
    trials = [Trial(0.25, ("b", "a", "c", "d"), 1), Trial(0.25, ("b", "d", "c", "a"), 1)]
    dist = build_aug_distribution(trials, SUPPORT)
    np.testing.assert_array_equal(dist.weights, [0, 1, 0, 0])


def test_weights_follow_appearance_counts():
    trials = [
        Trial(0.5, ("a", "b", "c", "d"), 2),
        Trial(0.5, ("a", "c", "b", "d"), 2),
        Trial(0.25, ("a", "d", "b", "c"), 1),
    ]
    dist = build_aug_distribution(trials, SUPPORT)
    assert dist.counts == (3, 1, 1, 0)
    np.testing.assert_allclose(dist.weights, [0.6, 0.2, 0.2, 0.0])
    comp = dist.complement()
    # trial_count - count = (0, 2, 2, 3), renormalised
    np.testing.assert_allclose(comp.weights, [0, 2 / 7, 2 / 7, 3 / 7])
    assert dist.mass_on({"b", "c"}) == pytest.approx(0.4)


def test_ids_outside_support_are_ignored():
    dist = build_aug_distribution([Trial(0.5, ("zz", "a", "b", "c"), 2)], SUPPORT)
    np.testing.assert_array_equal(dist.weights, [1, 0, 0, 0])


def test_errors():
    with pytest.raises(ZShotError):
        build_aug_distribution([Trial(0.5, ("x", "y"), 1)], SUPPORT)
    with pytest.raises(ZShotError):
        build_aug_distribution([], SUPPORT)
    with pytest.raises(ZShotError):
        Trial(0.5, ("a",), 2)
    full = build_aug_distribution([Trial(1.0, SUPPORT, 4)], SUPPORT)
    with pytest.raises(ZShotError):
        full.complement()
    with pytest.raises(ZShotError):
        AugDistribution(("a", "b"), np.array([0.5, 0.6]), 1, (1, 1))
    with pytest.raises(ZShotError):
        sample_augmentation(full, n=0)


@given(f=st.floats(0.01, 1.0), size=st.integers(1, 500))
def test_top_k_is_ceiling(f, size):
    k = top_k(f, size)
    assert 1 <= k <= size
    assert k >= f * size - 1e-6
    assert top_k(0.1, 30) == 3


@given(seed=st.integers(0, 1000))
def test_sampling_is_seeded_and_deduplicated(seed):
    dist = build_aug_distribution([Trial(0.5, ("c", "a", "b", "d"), 3)], SUPPORT)
    s1 = sample_augmentation(dist, n=100, seed=seed)
    assert s1 == sample_augmentation(dist, n=100, seed=seed)
    assert len(s1.draws) == 100
    assert set(s1.unique) <= {"a", "b", "c"}
    assert len(s1.unique) == len(set(s1.draws))
    assert sum(s1.counts.values()) == 100


def test_resolve_and_manifest(tmp_path):
    sample = AugmentationSample(("b", "a", "b", "b"))
    assert sample.unique == ["b", "a"]
    assert sample.resolve({"a": 1, "b": 2}) == [2, 1]
    path = tmp_path / "aug.jsonl"
    write_aug_manifest(sample, path)
    assert path.read_text() == '{"id": "b", "draws": 3}\n{"id": "a", "draws": 1}\n'
    assert read_aug_manifest(path) == {"b": 3, "a": 1}
