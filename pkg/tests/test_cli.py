import csv
import json

import pytest
from click.testing import CliRunner

from zshot.data_io import write_corpus
from zshot.experiments.cli import main
from zshot.experiments.log import read_log
from zshot.synth import arithmetic_fixture, separable_fixture


@pytest.fixture
def project(tmp_path):
    fx = separable_fixture(12, 4)
    write_corpus(fx.train, tmp_path / "train.jsonl")
    write_corpus(fx.test, tmp_path / "test.jsonl")
    cfg = {
        "train_corpus": "train.jsonl",
        "test_corpus": "test.jsonl",
        "target": "alpha",
        "sizes": [4],
        "seeds": [0],
        "loo_size": 4,
        "model": {"hidden_dim": 3, "embed_dim": 3, "max_decode_len": 12},
        "train": {"epochs": 2},
        "flip": {"source": "beta", "fractions": [0.25]},
        "augment": {"sizes": [4], "draws": 5},
    }
    (tmp_path / "cfg.json").write_text(json.dumps(cfg))
    return tmp_path


def _run(args, **kw):
    return CliRunner().invoke(main, [str(a) for a in args], catch_exceptions=False, **kw)


def _header(path):
    with open(path, newline="") as fh:
        return next(csv.reader(fh))


def test_train_eval_influence(project):
    out = project / "out"
    res = _run(["train", "--config", project / "cfg.json", "--out-dir", out, "--size", 4])
    assert res.exit_code == 0, res.output
    assert _header(out / "train_loss.csv") == ["epoch", "loss"]
    assert _run(["eval", "--config", project / "cfg.json", "--out-dir", out]).exit_code == 0
    assert _header(out / "eval.csv") == ["seq_level", "tok_level", "den_level", "n_test"]
    for subjects in ("example", "domain", "self"):
        res = _run(["influence", "--config", project / "cfg.json", "--out-dir", out, "--subjects", subjects])
        assert res.exit_code == 0, res.output
        assert _header(out / "influence.csv") == ["subject_id", "test_id", "value", "iterations", "residual", "converged"]
    res = _run(["influence", "--config", project / "cfg.json", "--out-dir", out, "--block", "output", "--test-id", "test-alpha-0"])
    assert res.exit_code == 0
    events = [e["event"] for e in read_log(out / "log.jsonl")]
    assert events.count("start") == events.count("done") == 6


@pytest.mark.parametrize(
    "command,files",
    [
        ("curve", {"curve.csv": ["size", "seed", "variant", "train_size", "seq_level", "tok_level", "den_level"]}),
        ("loo", {"loo.csv": None, "loo_summary.csv": None}),
        ("flip", {"flip.csv": ["seed", "fraction", "budget", "flips", "influence_detected", "random_expected"], "flip_summary.csv": None}),
        ("augment", {"augment.csv": ["size", "seed", "variant", "augment", "seq_level", "tok_level", "den_level"]}),
    ],
)
def test_experiment_commands_write_csvs(project, command, files):
    out = project / command
    res = _run([command, "--config", project / "cfg.json", "--out-dir", out, "--seed", 1])
    assert res.exit_code == 0, res.output
    for name, header in files.items():
        assert (out / name).exists()
        if header is not None:
            assert _header(out / name) == header
    start = read_log(out / "log.jsonl")[0]
    assert start["config"]["seeds"] == [1]


def test_reruns_are_byte_identical(project):
    for name in ("a", "b"):
        assert _run(["curve", "--config", project / "cfg.json", "--out-dir", project / name]).exit_code == 0
    assert (project / "a" / "curve.csv").read_bytes() == (project / "b" / "curve.csv").read_bytes()


def test_flip_manifest_format(project):
    out = project / "f"
    assert _run(["flip", "--config", project / "cfg.json", "--out-dir", out]).exit_code == 0
    (manifest,) = (out / "flips").glob("*.jsonl")
    for line in manifest.read_text().splitlines():
        rec = json.loads(line)
        assert list(rec) == ["id", "original_domain", "flipped_domain"]
        assert rec["original_domain"] == "beta" and rec["flipped_domain"] == "alpha"


def test_config_errors_exit_2(project, monkeypatch):
    monkeypatch.chdir(project)
    assert _run(["curve", "--config", project / "missing.toml"]).exit_code == 2
    (project / "bad.json").write_text('{"target": "alpha"}')
    assert _run(["curve", "--config", project / "bad.json"]).exit_code == 2
    cfg = json.loads((project / "cfg.json").read_text())
    cfg["train_corpus"] = "nowhere.jsonl"
    (project / "gone.json").write_text(json.dumps(cfg))
    assert _run(["curve", "--config", project / "gone.json"]).exit_code == 2
    (project / "broken.jsonl").write_text("{oops\n")
    cfg["train_corpus"] = "broken.jsonl"
    (project / "corrupt.json").write_text(json.dumps(cfg))
    assert _run(["curve", "--config", project / "corrupt.json"]).exit_code == 2


def test_divergence_exits_3(project):
    cfg = json.loads((project / "cfg.json").read_text())
    cfg["train"] = {"epochs": 3, "lr0": 1e300, "clip_norm": None}
    cfg["model"]["init_range"] = 1e3
    (project / "diverge.json").write_text(json.dumps(cfg))
    res = _run(["train", "--config", project / "diverge.json", "--out-dir", project / "d"])
    assert res.exit_code == 3


def test_executor_env_enables_denotation(tmp_path, monkeypatch):
    from zshot.experiments.executor import toy_executor_command

    fx = arithmetic_fixture(10, 4)
    write_corpus(fx.train, tmp_path / "train.jsonl")
    write_corpus(fx.test, tmp_path / "test.jsonl")
    cfg = {"train_corpus": "train.jsonl", "test_corpus": "test.jsonl", "target": "plus", "sizes": [4], "model": {"hidden_dim": 3, "embed_dim": 3, "max_decode_len": 8}, "train": {"epochs": 1}}
    (tmp_path / "cfg.json").write_text(json.dumps(cfg))
    monkeypatch.setenv("ZSHOT_EXECUTOR", " ".join(toy_executor_command()))
    assert _run(["curve", "--config", tmp_path / "cfg.json", "--out-dir", tmp_path / "o"]).exit_code == 0
    with open(tmp_path / "o" / "curve.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert all(r["den_level"] != "" for r in rows)


def test_synth_command(tmp_path):
    res = _run(["synth", "--kind", "arithmetic", "--out-dir", tmp_path / "s"])
    assert res.exit_code == 0
    assert (tmp_path / "s" / "train.jsonl").exists() and (tmp_path / "s" / "test.jsonl").exists()
