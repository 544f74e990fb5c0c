import json
import sys

import pytest

from zshot.errors import ConfigError
from zshot.experiments import load_config
from zshot.experiments.config import config_from_mapping
from zshot.experiments.executor import SubprocessExecutor, executor_from_env, toy_executor_command
from zshot.experiments.log import JsonlLog, read_log
from zshot.experiments.metrics import MetricsReport, den_accuracy, seq_accuracy, tok_accuracy
from zshot.experiments.toy_executor import evaluate as toy_eval


def test_sequence_accuracy_ignores_eos():
    preds = [["a", "b"], ["a"], ["c", "</s>"]]
    golds = [["a", "b", "</s>"], ["a", "b", "</s>"], ["c"]]
    assert seq_accuracy(preds, golds) == pytest.approx(2 / 3)


def test_token_accuracy_is_positional():
    # gold lengths 3 and 2; matches 2 (a, c) + 0
    preds = [["a", "x", "c", "extra"], ["q"]]
    golds = [["a", "b", "c"], ["p", "r"]]
    assert tok_accuracy(preds, golds) == pytest.approx(2 / 5)
    assert tok_accuracy([[]], [["a"]]) == 0.0


def test_metrics_reject_mismatch():
    with pytest.raises(ValueError):
        seq_accuracy([["a"]], [])
    with pytest.raises(ValueError):
        tok_accuracy([], [])
    with pytest.raises(ValueError):
        MetricsReport(1.2, 0.5, None, 3)


class Const:
    def __init__(self, answers):
        self.answers = answers

    def run_many(self, forms):
        return [self.answers.get(f) for f in forms]


def test_denotation_accuracy_uses_answers():
    ex = Const({"( + 1 2 )": "3", "( + 2 1 )": "3", "( + 1 1 )": "2"})
    preds = [["(", "+", "2", "1", ")"], ["(", "+", "1", "1", ")"], ["junk"]]
    golds = [["(", "+", "1", "2", ")"]] * 3
    # order-different but equal answer counts; failure counts as wrong
    assert den_accuracy(preds, golds, ex) == pytest.approx(1 / 3)


@pytest.mark.parametrize(
    "form,answer",
    [("( + 2 ( * 3 4 ) )", "14"), ("( max 1 ( - 0 5 ) )", "1"), ("7", "7"), ("( + 1", "error"), ("( ^ 1 2 )", "error"), ("1 2", "error")],
)
def test_toy_executor(form, answer):
    assert toy_eval(form) == answer


def test_subprocess_executors():
    toy = SubprocessExecutor(toy_executor_command())
    assert toy.run_many(["( + 1 2 )", "bad ("]) == ["3", "error"]
    identity = SubprocessExecutor([sys.executable, "-c", "import sys; print(sys.stdin.read().strip())"])
    assert identity.run("x y") == "x y"
    constant = SubprocessExecutor([sys.executable, "-c", "print(42)"])
    assert constant.run("anything") == "42"


def test_executor_failures_return_none():
    assert SubprocessExecutor([sys.executable, "-c", "raise SystemExit(1)"]).run("x") is None
    assert SubprocessExecutor([sys.executable, "-c", "import time; time.sleep(5)"], timeout=0.3).run("x") is None
    assert SubprocessExecutor(["/nonexistent/binary"]).run("x") is None
    with pytest.raises(ValueError):
        SubprocessExecutor([])


def test_executor_from_env(monkeypatch):
    monkeypatch.delenv("ZSHOT_EXECUTOR", raising=False)
    assert executor_from_env() is None
    monkeypatch.setenv("ZSHOT_EXECUTOR", f"{sys.executable} -c 'print(1)'")
    assert executor_from_env().run("x") == "1"


def test_jsonl_log(tmp_path):
    log = JsonlLog(tmp_path / "sub" / "log.jsonl")
    log.event("start", b=2, a=1)
    log.event("done", path=tmp_path)
    rows = read_log(tmp_path / "sub" / "log.jsonl")
    assert rows[0] == {"event": "start", "a": 1, "b": 2}
    assert rows[1]["path"] == str(tmp_path)
    assert (tmp_path / "sub" / "log.jsonl").read_text().splitlines()[0] == '{"a": 1, "b": 2, "event": "start"}'


BASE = {"train_corpus": "train.jsonl", "test_corpus": "test.jsonl", "target": "t"}


def test_config_toml_and_json_agree(tmp_path):
    (tmp_path / "c.toml").write_text(
        'train_corpus = "train.jsonl"\ntest_corpus = "test.jsonl"\ntarget = "t"\nsizes = [5, 10]\n'
        "[model]\nhidden_dim = 4\n[train]\nepochs = 3\nclip_norm = 1.0\n[flip]\nsource = \"s\"\nfractions = [0.1]\n"
    )
    (tmp_path / "c.json").write_text(
        json.dumps({**BASE, "sizes": [5, 10], "model": {"hidden_dim": 4}, "train": {"epochs": 3, "clip_norm": 1.0}, "flip": {"source": "s", "fractions": [0.1]}})
    )
    a, b = load_config(tmp_path / "c.toml"), load_config(tmp_path / "c.json")
    assert a == b
    assert a.train_corpus == tmp_path / "train.jsonl"
    assert a.out_dir == tmp_path / "runs"
    assert a.model.hidden_dim == 4 and a.train.epochs == 3 and a.flip.fractions == (0.1,)
    assert a.with_overrides(seed=7, out_dir="x").seeds == (7,)
    json.dumps(a.to_json())


@pytest.mark.parametrize(
    "patch",
    [
        {"target": None},
        {"bogus": 1},
        {"model": {"hidden": 3}},
        {"sizes": [10, 5]},
        {"sizes": []},
        {"seeds": []},
        {"loo_size": 0},
        {"solver": {"damping": -1}},
        {"flip": {"fractions": [1.5]}},
        {"augment": {"draws": 0}},
        {"train": {"lr0": -1}},
        {"domains": ["a", "b"]},
        {"model": 3},
    ],
)
def test_config_errors(patch):
    data = {**BASE, **patch}
    data = {k: v for k, v in data.items() if v is not None}
    with pytest.raises(ConfigError):
        config_from_mapping(data)


def test_config_file_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.toml")
    (tmp_path / "c.yaml").write_text("a: 1")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "c.yaml")
    (tmp_path / "bad.toml").write_text("target = ")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "bad.toml")
