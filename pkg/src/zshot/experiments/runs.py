"""Leave-one-out, learning-curve, flip-detection and augmentation runs.

Every run is a pure function of the config: subsets, flips, SGD order and
augmentation draws are all derived from the configured seeds. Trained
models are memoised per (training set, seed), so the "all" row of
leave-one-out and the aggregate learning-curve point at the same size and
seed come from one training call.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..autodiff import ParamVector
from ..data_io import (
    Example,
    build_vocab,
    flip_labels,
    flip_records,
    load_corpus,
    sample_subsets,
    write_flip_manifest,
)
from ..errors import ConfigError
from ..influence import (
    InfluenceEngine,
    Trial,
    build_aug_distribution,
    detections,
    head_problem,
    random_expected,
    rank_flip_suspects,
    sample_augmentation,
    write_aug_manifest,
)
from ..model import ModelConfig, init_params
from ..model.train import train
from .config import ExperimentConfig
from .executor import SubprocessExecutor, executor_from_env
from .log import JsonlLog
from .metrics import MetricsReport, evaluate

logger = logging.getLogger(__name__)

METRICS = ("seq_level", "tok_level", "den_level")


def _metric_fields(rep: MetricsReport) -> dict:
    return {"seq_level": rep.seq_level, "tok_level": rep.tok_level, "den_level": rep.den_level}


class Workspace:
    """Corpora, vocabulary and model config shared by all runs of one config."""

    def __init__(self, cfg: ExperimentConfig, log: JsonlLog | None = None, executor=None):
        self.cfg = cfg
        self.log = log or JsonlLog()
        pool = load_corpus(cfg.train_corpus)
        test = load_corpus(cfg.test_corpus)
        domains = cfg.domains or tuple(dict.fromkeys(ex.domain for ex in pool))
        self.pool = [ex for ex in pool if ex.domain in domains]
        if cfg.target not in domains:
            raise ConfigError(f"target domain {cfg.target!r} is not in the training corpus")
        self.test = [ex for ex in test if ex.domain == cfg.target]
        if not self.test:
            raise ConfigError(f"test corpus has no {cfg.target!r} examples")
        longest = max(len(ex.source) for ex in self.pool + self.test)
        vocab = build_vocab(self.pool, max_source_len=longest)
        self.model_config = ModelConfig(vocab=vocab, domains=tuple(domains), **dataclasses.asdict(cfg.model))
        if executor is None:
            executor = (
                SubprocessExecutor(cfg.executor, cfg.executor_timeout)
                if cfg.executor
                else executor_from_env(cfg.executor_timeout)
            )
        self.executor = executor
        self._models: dict[tuple, ParamVector] = {}
        self._scores: dict[tuple, MetricsReport] = {}

    @property
    def domains(self) -> tuple[str, ...]:
        return self.model_config.domains

    def by_domain(self, domain: str, examples: Sequence[Example] | None = None) -> list[Example]:
        return [ex for ex in (self.pool if examples is None else examples) if ex.domain == domain]

    @staticmethod
    def _key(examples: Sequence[Example], seed: int) -> tuple:
        return (tuple((ex.id, ex.domain) for ex in examples), seed)

    def train_cell(self, examples: Sequence[Example], seed: int) -> ParamVector:
        key = self._key(examples, seed)
        params = self._models.get(key)
        if params is None:
            result = train(init_params(self.model_config, seed), examples, self.model_config, self.cfg.train, seed)
            params = result.params
            self._models[key] = params
            self.log.event("train", seed=seed, examples=len(examples), final_loss=result.epoch_losses[-1] if result.epoch_losses else None)
        return params

    def score_cell(self, examples: Sequence[Example], seed: int) -> MetricsReport:
        key = self._key(examples, seed)
        rep = self._scores.get(key)
        if rep is None:
            rep = evaluate(self.train_cell(examples, seed), self.model_config, self.test, self.executor)
            self._scores[key] = rep
        return rep


# -- leave one out --------------------------------------------------------------------
def run_leave_one_out(ws: Workspace) -> tuple[list[dict], list[dict]]:
    """Per-seed rows and a per-removed-domain summary of accuracy drops.

    ``drop_*`` is the accuracy of the all-domain model minus that of the
    model trained without the removed domain; the ``single`` row trains on
    the target alone. The summary marks the removal with the largest mean
    token-level drop as ``closest``.
    """
    cfg = ws.cfg
    if len(ws.domains) < 2:
        raise ConfigError("leave-one-out needs at least two domains")
    n = cfg.loo_size
    rows = []
    for seed in cfg.seeds:
        subset = sample_subsets(ws.pool, [n], seed)[n]
        base = ws.score_cell(subset, seed)
        variants = [("none", subset)]
        variants += [(d, [ex for ex in subset if ex.domain != d]) for d in ws.domains if d != cfg.target]
        variants.append(("single", ws.by_domain(cfg.target, subset)))
        for removed, data in variants:
            rep = ws.score_cell(data, seed)
            row = {"seed": seed, "removed": removed, "n": n, "train_size": len(data), **_metric_fields(rep)}
            for m in METRICS:
                a, b = getattr(base, m), getattr(rep, m)
                row["drop_" + m.split("_")[0]] = None if a is None else a - b
            rows.append(row)
        ws.log.event("loo_seed", seed=seed, n=n)
    summary = []
    removals = [r for r in dict.fromkeys(row["removed"] for row in rows) if r not in ("none", "single")]
    for removed in dict.fromkeys(row["removed"] for row in rows):
        sel = [row for row in rows if row["removed"] == removed]
        out = {"removed": removed, "seeds": len(sel)}
        for key in ("drop_seq", "drop_tok", "drop_den"):
            vals = [r[key] for r in sel if r[key] is not None]
            out[key] = float(np.mean(vals)) if vals else None
        summary.append(out)
    if removals:
        closest = max(removals, key=lambda r: next(s["drop_tok"] for s in summary if s["removed"] == r))
        for s in summary:
            s["closest"] = int(s["removed"] == closest)
    return rows, summary


# -- learning curve -------------------------------------------------------------------
def run_learning_curve(ws: Workspace) -> list[dict]:
    cfg = ws.cfg
    rows = []
    for seed in cfg.seeds:
        subsets = sample_subsets(ws.pool, list(cfg.sizes), seed)
        for size in cfg.sizes:
            aggregate = subsets[size]
            for variant, data in (("single", ws.by_domain(cfg.target, aggregate)), ("aggregate", aggregate)):
                rep = ws.score_cell(data, seed)
                rows.append({"size": size, "seed": seed, "variant": variant, "train_size": len(data), **_metric_fields(rep)})
        ws.log.event("curve_seed", seed=seed)
    return rows


# -- flip detection -------------------------------------------------------------------
@dataclass(frozen=True)
class FlipTrial:
    seed: int
    fraction: float
    ranking: tuple[str, ...]
    flipped: frozenset
    base: tuple[Example, ...]


def _flip_pair(ws: Workspace) -> tuple[str, str]:
    source, victim = ws.cfg.flip.source, ws.cfg.target
    if source is None:
        raise ConfigError("flip.source must name the attacking domain")
    if source == victim or source not in ws.domains:
        raise ConfigError(f"flip.source {source!r} must be a training domain other than the target")
    return source, victim


def flip_base(ws: Workspace, seed: int) -> list[Example]:
    source, victim = _flip_pair(ws)
    pair = [ex for ex in ws.pool if ex.domain in (source, victim)]
    size = ws.cfg.flip.size
    if size is not None:
        pair = sample_subsets(pair, [size], seed)[size]
    return pair


def suspects(ws: Workspace, params: ParamVector, data: Sequence[Example]) -> list[str]:
    """Training ids ranked by ``W_T``-restricted influence."""
    loss, hp, feats = head_problem(params, ws.model_config, data)
    s = ws.cfg.solver
    engine = InfluenceEngine(loss, hp, feats, damping=s.damping, tol=s.tol, max_iter=s.max_iter, dense=True)
    validation = None
    if ws.cfg.flip.validation:
        _, _, validation = head_problem(params, ws.model_config, ws.test)
    return rank_flip_suspects(engine, validation=validation)


def flip_trials(ws: Workspace, seed: int) -> list[FlipTrial]:
    source, victim = _flip_pair(ws)
    base = flip_base(ws, seed)
    out = []
    for fraction in ws.cfg.flip.fractions:
        data, flipped = flip_labels(base, source, victim, fraction, seed)
        params = ws.train_cell(data, seed)
        ranking = suspects(ws, params, data)
        out.append(FlipTrial(seed, fraction, tuple(ranking), frozenset(flipped), tuple(base)))
        ws.log.event("flip_trial", seed=seed, fraction=fraction, flips=len(flipped), train=len(data))
    return out


def flip_budgets(total: int, flips: int) -> list[int]:
    grid = {int(np.ceil(b * total - 1e-9)) for b in np.arange(1, 21) / 20}
    return sorted(grid | {0, flips, total})


def run_flip_experiment(ws: Workspace, manifest_dir=None) -> tuple[list[dict], list[dict], dict[int, list[FlipTrial]]]:
    """Detection curves per (seed, fraction) and their mean over seeds."""
    source, victim = _flip_pair(ws)
    rows = []
    trials_by_seed = {}
    for seed in ws.cfg.seeds:
        trials = flip_trials(ws, seed)
        trials_by_seed[seed] = trials
        for t in trials:
            total, k = len(t.ranking), len(t.flipped)
            if manifest_dir is not None:
                path = manifest_dir / f"flips_seed{seed}_f{t.fraction:g}.jsonl"
                write_flip_manifest(flip_records(t.base, set(t.flipped), victim), path)
            for budget in flip_budgets(total, k):
                rows.append(
                    {
                        "seed": seed,
                        "fraction": t.fraction,
                        "budget": budget,
                        "flips": k,
                        "influence_detected": detections(t.ranking, set(t.flipped), budget),
                        "random_expected": random_expected(total, k, budget),
                    }
                )
    summary = []
    keys = list(dict.fromkeys((r["fraction"], r["budget"]) for r in rows))
    for fraction, budget in keys:
        sel = [r for r in rows if r["fraction"] == fraction and r["budget"] == budget]
        summary.append(
            {
                "fraction": fraction,
                "budget": budget,
                "seeds": len(sel),
                "flips": float(np.mean([r["flips"] for r in sel])),
                "influence_detected": float(np.mean([r["influence_detected"] for r in sel])),
                "random_expected": float(np.mean([r["random_expected"] for r in sel])),
            }
        )
    return rows, summary, trials_by_seed


# -- augmentation ---------------------------------------------------------------------
def augment_sets(ws: Workspace, trials: Sequence[FlipTrial], seed: int, manifest_dir=None):
    """Examples drawn from ``p`` and ``1 - p``, relabelled as the target domain."""
    source, victim = _flip_pair(ws)
    base = trials[0].base
    support = [ex.id for ex in base if ex.domain == source]
    p = build_aug_distribution([Trial.from_fraction(t.fraction, t.ranking) for t in trials], support)
    pool = {ex.id: ex for ex in base}
    out = {}
    for name, dist in (("p", p), ("1-p", p.complement())):
        sample = sample_augmentation(dist, ws.cfg.augment.draws, seed)
        if manifest_dir is not None:
            write_aug_manifest(sample, manifest_dir / f"augment_{name}_seed{seed}.jsonl")
        out[name] = [ex.with_domain(victim) for ex in sample.resolve(pool)]
        ws.log.event("augment_sample", seed=seed, dist=name, draws=len(sample.draws), unique=len(out[name]))
    return p, out


def run_augmentation(ws: Workspace, trials_by_seed=None, manifest_dir=None) -> list[dict]:
    """Target-only training at each size, without and with each augment set."""
    cfg = ws.cfg
    target_pool = ws.by_domain(cfg.target)
    rows = []
    for seed in cfg.seeds:
        trials = (trials_by_seed or {}).get(seed) or flip_trials(ws, seed)
        _, sets = augment_sets(ws, trials, seed, manifest_dir)
        subsets = sample_subsets(target_pool, list(cfg.augment.sizes), seed)
        for size in cfg.augment.sizes:
            for variant, extra in (("baseline", []), ("p", sets["p"]), ("1-p", sets["1-p"])):
                data = subsets[size] + extra
                rep = ws.score_cell(data, seed)
                rows.append(
                    {"size": size, "seed": seed, "variant": variant, "augment": len(extra), **_metric_fields(rep)}
                )
    return rows
