"""Influence scores, flip-suspect ranking and augmentation distributions."""

from .augment import AugDistribution, AugmentationSample, Trial, build_aug_distribution, sample_augmentation, top_k
from .engine import DenseHessian, InfluenceEngine, InfluenceScore, influence_domain, influence_example
from .head import DomainHeadLoss, HeadFeatures, head_features, head_params, head_problem
from .ranking import detections, order_scores, random_expected, rank_flip_suspects
from .report import read_aug_manifest, read_influence_report, write_aug_manifest, write_influence_report

__all__ = [
    "AugDistribution",
    "AugmentationSample",
    "DenseHessian",
    "DomainHeadLoss",
    "HeadFeatures",
    "InfluenceEngine",
    "InfluenceScore",
    "Trial",
    "build_aug_distribution",
    "detections",
    "head_features",
    "head_params",
    "head_problem",
    "influence_domain",
    "influence_example",
    "order_scores",
    "random_expected",
    "rank_flip_suspects",
    "read_aug_manifest",
    "read_influence_report",
    "sample_augmentation",
    "top_k",
    "write_aug_manifest",
    "write_influence_report",
]
