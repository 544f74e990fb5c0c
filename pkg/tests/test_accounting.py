import pytest

from zshot.data_io import Vocab
from zshot.model import ARCHITECTURES, ModelConfig, count_config, count_params, model_layout
from zshot.model.accounting import components


def test_hand_expanded_counts():
    # d=4, E=4, V=10, K=3
    embed = 10 * 4
    encoder = 2 * (3 * 4 * 4 + 3 * 4 * 4 + 3 * 4)  # two directions: Wx, Wh, b
    decoder = (3 * 8 * 4 + 3 * 8 * 8 + 3 * 8) + 8 * 8 + 8 * 8  # LSTM, attention, init projection
    output = 10 * 16
    assert (embed, encoder, decoder, output) == (40, 216, 440, 160)
    o2o = embed + encoder + decoder + output
    assert count_params(4, 4, 10, 3) == {
        "o2o": o2o,
        "o2m": embed + encoder + 3 * (decoder + output),
        "m2m": embed + 4 * encoder + decoder + 3 * output,
        "e2d": o2o + 2 * 3 * 4 * 3,
        "zshot": o2o + 3 * 16,
    }
    assert count_params(4, 4, 10, 3) == {"o2o": 856, "o2m": 2056, "m2m": 1824, "e2d": 928, "zshot": 904}


def test_zshot_count_equals_layout_segments():
    vocab = Vocab(["<pad>", "<unk>", "</s>", "a", "b"], max_source_len=3)
    cfg = ModelConfig(vocab=vocab, domains=("x", "y"), hidden_dim=2, embed_dim=3)
    layout = model_layout(cfg)
    sizes = {seg.name: seg.size for seg in layout.segments}
    c = components(2, 3, 5, 2)
    assert c.embed == sizes["embed"]
    assert c.encoder == sum(v for k, v in sizes.items() if k.startswith("enc_"))
    assert c.decoder == sum(v for k, v in sizes.items() if k.startswith(("dec_", "attn_")))
    assert c.output == sizes["out_U"]
    assert c.domain_head == sizes["domain_W"]
    assert count_config(cfg)["zshot"] == layout.size


def test_single_domain_collapses():
    c = count_params(5, 3, 20, 1)
    assert c["o2m"] == c["o2o"]
    assert c["m2m"] == c["o2o"] + components(5, 3, 20, 1).encoder


@pytest.mark.parametrize("arch", ARCHITECTURES)
def test_output_term_dominates_large_vocab_scaling(arch):
    d, E, K = 16, 16, 3
    small, big = count_params(d, E, 50_000, K)[arch], count_params(d, E, 100_000, K)[arch]
    base = count_params(d, E, 0, K)[arch]
    assert (big - base) / (small - base) == pytest.approx(2.0, rel=0.05)
