import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from zshot.data_io import Example, Vocab
from zshot.model import ModelConfig, init_params

settings.register_profile("default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# "zeta" is out of vocabulary: it is only reachable by copying
TINY_EXAMPLES = (
    Example("a0", ("show", "x", "zeta"), ("(", "list", "zeta", ")"), "a"),
    Example("a1", ("show", "x"), ("(", "list", "x", ")"), "a"),
    Example("b0", ("list", "x", "x"), ("(", "x", ")"), "b"),
)
TINY_VOCAB = Vocab(["<pad>", "<unk>", "</s>", "(", ")", "list", "show", "x"], max_source_len=4)


@pytest.fixture
def tiny_examples():
    return list(TINY_EXAMPLES)


@pytest.fixture
def tiny_config():
    """d=3, K=2, V=8."""
    return ModelConfig(vocab=TINY_VOCAB, domains=("a", "b"), hidden_dim=3, embed_dim=3, max_decode_len=8)


@pytest.fixture
def tiny_params(tiny_config):
    return init_params(tiny_config, seed=3)


def blocks_as_lists(params):
    return {k: np.asarray(v).tolist() for k, v in params.blocks().items()}


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for key in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[key])
