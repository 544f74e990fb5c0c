"""Command-line entry point.

Exit codes: 0 success, 2 configuration or corpus error, 3 numeric failure,
1 any other package error.
"""

from __future__ import annotations

import csv
import functools
import logging
import sys
from pathlib import Path

import click

from ..data_io import group_by_domain, sample_subsets, write_corpus
from ..errors import ConfigError, CorpusError, NumericOverflowError, ZShotError
from .config import ExperimentConfig, load_config
from .log import JsonlLog

EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def write_csv(rows: list[dict], path: Path, columns: list[str] | None = None) -> None:
    columns = columns or (list(rows[0]) if rows else [])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n", extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("" if row.get(k) is None else row[k]) for k in columns})


def _guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (ConfigError, CorpusError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_CONFIG)
        except NumericOverflowError as exc:
            click.echo(f"numeric failure: {exc}", err=True)
            sys.exit(EXIT_NUMERIC)
        except FileNotFoundError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_CONFIG)
        except ZShotError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(1)

    return wrapper


def _common(fn):
    fn = click.option("--out-dir", type=click.Path(file_okay=False, path_type=Path), help="Output directory.")(fn)
    fn = click.option("--seed", type=int, help="Run this single seed instead of the configured list.")(fn)
    fn = click.option(
        "--config",
        "config_path",
        required=True,
        type=click.Path(dir_okay=False, path_type=Path),
        help="Experiment config (.toml or .json).",
    )(fn)
    return fn


def _setup(command: str, config_path: Path, seed, out_dir) -> tuple[ExperimentConfig, JsonlLog]:
    cfg = load_config(config_path).with_overrides(seed=seed, out_dir=out_dir)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    log = JsonlLog(cfg.out_dir / "log.jsonl")
    log.event("start", command=command, config=cfg.to_json())
    return cfg, log


def _workspace(cfg, log):
    from .runs import Workspace

    return Workspace(cfg, log)


@click.group()
@click.option("-v", "--verbose", count=True, help="Repeat for more logging.")
def main(verbose: int) -> None:
    """Multi-domain semantic parsing with a shared encoder/decoder and influence tools."""
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


@main.command()
@_common
@click.option("--size", type=int, help="Examples per domain (default: whole pool).")
@click.option("--target-only", is_flag=True, help="Train on the target domain alone.")
@_guarded
def train(config_path, seed, out_dir, size, target_only):
    """Train one model and save a JSON checkpoint."""
    from ..model import init_params
    from ..model.checkpoint import save_checkpoint
    from ..model.train import train as run_train

    cfg, log = _setup("train", config_path, seed, out_dir)
    ws = _workspace(cfg, log)
    seed = cfg.seeds[0]
    data = ws.pool if size is None else sample_subsets(ws.pool, [size], seed)[size]
    if target_only:
        data = ws.by_domain(cfg.target, data)
    result = run_train(init_params(ws.model_config, seed), data, ws.model_config, cfg.train, seed)
    path = cfg.out_dir / "model.json"
    save_checkpoint(path, result.params, ws.model_config, {"seed": seed, "train_ids": [ex.id for ex in data]})
    write_csv([{"epoch": i, "loss": v} for i, v in enumerate(result.epoch_losses)], cfg.out_dir / "train_loss.csv")
    log.event("done", command="train", checkpoint=str(path), examples=len(data))
    click.echo(str(path))


@main.command(name="eval")
@_common
@click.option("--checkpoint", type=click.Path(dir_okay=False, path_type=Path), help="Default: OUT_DIR/model.json.")
@_guarded
def eval_cmd(config_path, seed, out_dir, checkpoint):
    """Evaluate a checkpoint on the target test set."""
    from ..model.checkpoint import load_checkpoint
    from .metrics import evaluate
    from .runs import Workspace

    cfg, log = _setup("eval", config_path, seed, out_dir)
    params, model_config, _ = load_checkpoint(checkpoint or cfg.out_dir / "model.json")
    ws = Workspace(cfg, log)
    rep = evaluate(params, model_config, ws.test, ws.executor)
    write_csv([rep.to_dict()], cfg.out_dir / "eval.csv", ["seq_level", "tok_level", "den_level", "n_test"])
    log.event("done", command="eval", **rep.to_dict())
    click.echo(f"seq {rep.seq_level:.4f} tok {rep.tok_level:.4f} den {rep.den_level}")


@main.command()
@_common
@_guarded
def loo(config_path, seed, out_dir):
    """Leave-one-domain-out accuracy drops."""
    from .runs import run_leave_one_out

    cfg, log = _setup("loo", config_path, seed, out_dir)
    rows, summary = run_leave_one_out(_workspace(cfg, log))
    write_csv(rows, cfg.out_dir / "loo.csv")
    write_csv(summary, cfg.out_dir / "loo_summary.csv")
    log.event("done", command="loo", rows=len(rows))


@main.command()
@_common
@_guarded
def curve(config_path, seed, out_dir):
    """Single-domain vs aggregate learning curves."""
    from .runs import run_learning_curve

    cfg, log = _setup("curve", config_path, seed, out_dir)
    rows = run_learning_curve(_workspace(cfg, log))
    write_csv(rows, cfg.out_dir / "curve.csv")
    log.event("done", command="curve", rows=len(rows))


@main.command()
@_common
@_guarded
def flip(config_path, seed, out_dir):
    """Flip-detection curves against the random-inspection baseline."""
    from .runs import run_flip_experiment

    cfg, log = _setup("flip", config_path, seed, out_dir)
    manifests = cfg.out_dir / "flips"
    manifests.mkdir(exist_ok=True)
    rows, summary, _ = run_flip_experiment(_workspace(cfg, log), manifest_dir=manifests)
    write_csv(rows, cfg.out_dir / "flip.csv")
    write_csv(summary, cfg.out_dir / "flip_summary.csv")
    log.event("done", command="flip", rows=len(rows))


@main.command()
@_common
@_guarded
def augment(config_path, seed, out_dir):
    """Target training with p and 1-p augmentation samples."""
    from .runs import run_augmentation

    cfg, log = _setup("augment", config_path, seed, out_dir)
    manifests = cfg.out_dir / "augment"
    manifests.mkdir(exist_ok=True)
    rows = run_augmentation(_workspace(cfg, log), manifest_dir=manifests)
    write_csv(rows, cfg.out_dir / "augment.csv")
    log.event("done", command="augment", rows=len(rows))


@main.command()
@_common
@click.option("--checkpoint", type=click.Path(dir_okay=False, path_type=Path), help="Default: OUT_DIR/model.json.")
@click.option(
    "--subjects",
    type=click.Choice(["example", "domain", "self"]),
    default="example",
    show_default=True,
    help="Score training examples, whole domains, or each example on itself.",
)
@click.option(
    "--block",
    type=click.Choice(["head", "output", "all"]),
    default="head",
    show_default=True,
    help="Differentiate w.r.t. the domain matrix, both output layers, or all weights.",
)
@click.option("--test-id", "test_ids", multiple=True, help="Test example id (repeatable; default: every test example).")
@_guarded
def influence(config_path, seed, out_dir, checkpoint, subjects, block, test_ids):
    """Influence report of training data on test examples."""
    from ..influence import InfluenceEngine, head_features, head_problem, influence_domain, write_influence_report
    from ..model import SequenceLoss, model_layout
    from ..model.checkpoint import load_checkpoint
    from .runs import Workspace

    cfg, log = _setup("influence", config_path, seed, out_dir)
    params, model_config, meta = load_checkpoint(checkpoint or cfg.out_dir / "model.json")
    ws = Workspace(cfg, log)
    by_id = {ex.id: ex for ex in ws.pool}
    train_ids = meta.get("train_ids") or list(by_id)
    missing = [i for i in train_ids if i not in by_id]
    if missing:
        raise ConfigError(f"{len(missing)} checkpoint training ids are not in the corpus, e.g. {missing[0]!r}")
    train_set = [by_id[i] for i in train_ids]
    tests = ws.test if not test_ids else [ex for ex in ws.test if ex.id in set(test_ids)]
    if not tests:
        raise ConfigError("no matching test examples")
    s = cfg.solver
    if block in ("head", "output"):
        loss, p, items = head_problem(params, model_config, train_set, block)
        test_items = [head_features(params, model_config, ex) for ex in tests]
        dense = block == "head"
    else:
        loss, p, items, test_items = SequenceLoss(model_config, model_layout(model_config)), params, train_set, tests
        dense = False
    engine = InfluenceEngine(loss, p, items, damping=s.damping, tol=s.tol, max_iter=s.max_iter, dense=dense)
    scores = []
    if subjects == "self":
        scores = engine.self_influence(items)
    elif subjects == "example":
        for t in test_items:
            scores.extend(engine.influence_many(items, [t]))
    else:
        groups: dict[str, list] = {}
        for ex, it in zip(train_set, items):
            groups.setdefault(ex.domain, []).append(it)
        for t in test_items:
            for name, members in groups.items():
                sc = influence_domain(engine, members, [t])
                scores.append(type(sc)(name, sc.test_ref, sc.value, sc.solver))
    path = cfg.out_dir / "influence.csv"
    write_influence_report(scores, path)
    log.event("done", command="influence", rows=len(scores), converged=sum(sc.converged for sc in scores))
    click.echo(str(path))


@main.command()
@click.option(
    "--kind",
    type=click.Choice(["near-far", "separable", "arithmetic"]),
    default="near-far",
    show_default=True,
)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out-dir", required=True, type=click.Path(file_okay=False, path_type=Path))
@_guarded
def synth(kind, seed, out_dir):
    """Write a synthetic train/test corpus pair."""
    from .. import synth as gen

    out_dir.mkdir(parents=True, exist_ok=True)
    fixture = {
        "near-far": gen.near_far_fixture,
        "separable": gen.separable_fixture,
        "arithmetic": gen.arithmetic_fixture,
    }[kind](seed=seed)
    write_corpus(fixture.train, out_dir / "train.jsonl")
    write_corpus(fixture.test, out_dir / "test.jsonl")
    sizes = {name: len(b) for name, b in group_by_domain(fixture.train).items()}
    click.echo(f"{out_dir}: {sizes}")


if __name__ == "__main__":
    main()
