"""Forward computation of the shared encoder/decoder with the domain head.

All functions take a ``blocks`` mapping of weight arrays. When the arrays
are :class:`~zshot.autodiff.Tensor` slices of a taped parameter vector the
computation is recorded for differentiation; with plain ndarrays it is an
ordinary numpy forward pass.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from ..autodiff import Layout, ParamVector
from ..autodiff import tensor as T
from ..data_io import EOS_ID, PAD_ID, UNK_ID, Example, Vocab
from ..errors import ZShotError
from .config import ModelConfig

logger = logging.getLogger(__name__)


def split_blocks(layout: Layout, theta) -> dict:
    """Per-block views of a flat vector (ndarray or taped Tensor)."""
    return {seg.name: T.reshape(theta[seg.offset : seg.stop], seg.shape) for seg in layout.segments}


@dataclass(frozen=True)
class EncodedExample:
    """Index form of an example against a fixed vocabulary.

    ``gold`` lists, for every target position, the indices of the output
    distribution (vocabulary entries first, then ``V + i`` for copying
    source position ``i``) whose probabilities add up to the gold event.
    """

    id: str
    source: tuple[str, ...]
    src: np.ndarray
    dec_in: np.ndarray
    gold: tuple[np.ndarray, ...]
    domain: int
    uncovered: int = 0
    gold_flat: np.ndarray = field(init=False, repr=False, compare=False)
    gold_ptr: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        # CSR form for the compiled kernel
        sizes = [len(g) for g in self.gold]
        object.__setattr__(self, "gold_ptr", np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64))
        object.__setattr__(self, "gold_flat", np.concatenate(self.gold).astype(np.int64))

    @property
    def n(self) -> int:
        return len(self.src)

    @property
    def m(self) -> int:
        return len(self.dec_in)

    def gold_mask(self, vocab_size: int) -> np.ndarray:
        mask = np.zeros((self.m, vocab_size + self.n), dtype=np.uint8)
        for j, idx in enumerate(self.gold):
            mask[j, idx] = 1
        return mask


def gold_indices(token: str, source: Sequence[str], vocab: Vocab) -> tuple[np.ndarray, bool]:
    """Output indices for gold ``token``; second value False if it is uncovered."""
    V = vocab.size
    idx = [V + i for i, s in enumerate(source) if s == token]
    if token in vocab:
        idx.insert(0, vocab.index(token))
    if not idx:
        return np.array([UNK_ID]), False
    return np.array(idx, dtype=np.int64), True


def encode_example(example: Example, config: ModelConfig, domain: int | None = None) -> EncodedExample:
    vocab = config.vocab
    if len(example.source) > vocab.max_source_len:
        raise ZShotError(
            f"example {example.id!r}: source length {len(example.source)} exceeds {vocab.max_source_len}"
        )
    src = np.array(vocab.encode(example.source), dtype=np.int64)
    dec_in = np.array([EOS_ID] + vocab.encode(example.target[:-1]), dtype=np.int64)
    gold, missing = [], 0
    for token in example.target:
        idx, covered = gold_indices(token, example.source, vocab)
        gold.append(idx)
        missing += not covered
    if missing:
        logger.warning("example %s: %d target tokens not in vocabulary or source", example.id, missing)
    if domain is None:
        domain = config.domain_index(example.domain) if example.domain in config.domains else -1
    return EncodedExample(example.id, example.source, src, dec_in, tuple(gold), domain, missing)


# -- states ---------------------------------------------------------------------------
@dataclass
class EncoderStates:
    states: object  # (n, 2d): forward || backward per position
    final_forward: object  # (d,)
    final_backward: object  # (d,) backward state at position 0

    @property
    def n(self) -> int:
        return self.states.shape[0]

    @property
    def summary(self):
        """Concatenated final bidirectional state (the encoder-side 2d input)."""
        return T.concatenate([self.final_forward, self.final_backward])


@dataclass
class DomainScores:
    raw: object  # (K,)
    probs: object  # (K,)


@dataclass
class DecoderStep:
    state: object  # s_j, (2d,)
    cell: object  # decoder memory, (2d,)
    context: object = None  # c_j, (2d,)
    scores: object = None  # attention logits e_{j,i}, (n,)
    logits: object = None  # (V + n,)
    probs: object = None  # (V + n,)
    domain: DomainScores | None = None

    @property
    def features(self):
        return T.concatenate([self.state, self.context])


def lstm_step(Wx, Wh, b, x, h, c):
    """One step of the forget-gate-free LSTM; returns ``(h, c)``."""
    k = Wh.shape[1]
    a = T.matmul(Wx, x) + T.matmul(Wh, h) + b
    u = T.tanh(a[:k])
    i = T.sigmoid(a[k : 2 * k])
    o = T.sigmoid(a[2 * k :])
    c = c + i * u
    return o * T.tanh(c), c


def encode(blocks: Mapping, src: Sequence[int]) -> EncoderStates:
    n = len(src)
    if n < 1:
        raise ZShotError("source must contain at least one token")
    embed = blocks["embed"]
    xs = [embed[int(t)] for t in src]
    d = blocks["enc_fwd_Wh"].shape[1]
    h, c = np.zeros(d), np.zeros(d)
    fwd = []
    for x in xs:
        h, c = lstm_step(blocks["enc_fwd_Wx"], blocks["enc_fwd_Wh"], blocks["enc_fwd_b"], x, h, c)
        fwd.append(h)
    h, c = np.zeros(d), np.zeros(d)
    bwd = [None] * n
    for t in range(n - 1, -1, -1):
        h, c = lstm_step(blocks["enc_bwd_Wx"], blocks["enc_bwd_Wh"], blocks["enc_bwd_b"], xs[t], h, c)
        bwd[t] = h
    states = T.stack([T.concatenate([f, b]) for f, b in zip(fwd, bwd)])
    return EncoderStates(states, fwd[-1], bwd[0])


def init_decoder(blocks: Mapping, enc: EncoderStates) -> DecoderStep:
    s = T.tanh(T.matmul(blocks["dec_init_W"], enc.summary))
    return DecoderStep(state=s, cell=np.zeros(s.shape[0]))


def attend(blocks: Mapping, state, enc: EncoderStates):
    """Bilinear attention ``e_i = s' W_a h_i``; returns ``(scores, context)``."""
    key = T.matmul(T.transpose(blocks["attn_W"]), state)
    scores = T.matmul(enc.states, key)
    weights = T.softmax(scores)
    return scores, T.matmul(weights, enc.states)


def domain_scores(blocks: Mapping, features) -> DomainScores:
    raw = T.matmul(blocks["domain_W"], features)
    return DomainScores(raw, T.softmax(raw))


def decode_step(blocks: Mapping, prev: DecoderStep, prev_token: int, enc: EncoderStates) -> DecoderStep:
    x = blocks["embed"][int(prev_token)]
    s, cell = lstm_step(blocks["dec_Wx"], blocks["dec_Wh"], blocks["dec_b"], x, prev.state, prev.cell)
    scores, context = attend(blocks, s, enc)
    features = T.concatenate([s, context])
    logits = T.concatenate([T.matmul(blocks["out_U"], features), scores])
    probs = T.softmax(logits)
    return DecoderStep(s, cell, context, scores, logits, probs, domain_scores(blocks, features))


def encoder_domain_scores(blocks: Mapping, enc: EncoderStates, init: DecoderStep) -> DomainScores:
    """Domain scores from the encoder side: ``W_T [b_n, c_n]``.

    ``b_n`` is the final bidirectional encoder state and ``c_n`` the
    attention context read by the initial decoder state.
    """
    _, context = attend(blocks, init.state, enc)
    return domain_scores(blocks, T.concatenate([enc.summary, context]))


@dataclass
class LossTerms:
    nll: object
    decoder_reg: object
    encoder_reg: object

    @property
    def total(self):
        return self.nll + self.decoder_reg + self.encoder_reg


def loss_terms(blocks: Mapping, ex: EncodedExample, config: ModelConfig) -> LossTerms:
    """Teacher-forced NLL plus the two domain-misclassification penalties."""
    enc = encode(blocks, ex.src)
    init = step = init_decoder(blocks, enc)
    K = config.num_domains
    target = np.zeros(K)
    target[ex.domain] = 1.0
    nll = 0.0
    dom_probs = []
    for j in range(ex.m):
        step = decode_step(blocks, step, ex.dec_in[j], enc)
        lse_all = T.logsumexp(step.logits)
        lse_gold = T.logsumexp(step.logits[ex.gold[j]])
        nll = nll + (lse_all - lse_gold)
        dom_probs.append(step.domain.probs)
    if config.decoder_reg == "mean":
        q_dec = T.mean(T.stack(dom_probs), axis=0)
    else:
        q_dec = dom_probs[-1]
    q_enc = encoder_domain_scores(blocks, enc, init).probs
    w = config.reg_weight
    diff_dec = target - q_dec
    diff_enc = target - q_enc
    return LossTerms(nll, w * T.tsum(diff_dec * diff_dec), w * T.tsum(diff_enc * diff_enc))


def sequence_loss(blocks: Mapping, ex: EncodedExample, config: ModelConfig):
    return loss_terms(blocks, ex, config).total


def decoder_trace(blocks: Mapping, ex_src: Sequence[int], inputs: Sequence[int]) -> list[DecoderStep]:
    enc = encode(blocks, ex_src)
    step = init_decoder(blocks, enc)
    steps = []
    for tok in inputs:
        step = decode_step(blocks, step, tok, enc)
        steps.append(step)
    return steps


def greedy_steps(blocks: Mapping, src: Sequence[int], source: Sequence[str], vocab: Vocab, max_len: int):
    """Greedy decoding; returns ``(tokens, steps)`` with EOS excluded."""
    enc = encode(blocks, src)
    step = init_decoder(blocks, enc)
    prev = EOS_ID
    tokens: list[str] = []
    steps: list[DecoderStep] = []
    V = vocab.size
    for _ in range(max_len):
        step = decode_step(blocks, step, prev, enc)
        steps.append(step)
        probs = np.array(T.value_of(step.probs), copy=True)
        probs[PAD_ID] = -np.inf
        best = int(np.argmax(probs))
        if best == EOS_ID:
            break
        if best >= V:
            token = source[best - V]
            prev = vocab.index(token)
        else:
            token = vocab.token(best)
            prev = best
        tokens.append(token)
    return tokens, steps


def greedy_decode(params: ParamVector, config: ModelConfig, source: Sequence[str]) -> list[str]:
    if not source:
        raise ZShotError("source must be non-empty")
    src = config.vocab.encode(source)
    tokens, _ = greedy_steps(params.blocks(), src, source, config.vocab, config.max_decode_len)
    return tokens


def predict_task(params: ParamVector, config: ModelConfig, example: Example | Sequence[str]) -> int:
    """Domain index maximising the raw domain score summed over decoder steps.

    With a full :class:`Example` the steps are teacher-forced on its target;
    with a bare token list the greedy decoder's states are used.
    """
    blocks = params.blocks()
    if isinstance(example, Example):
        ex = encode_example(example, config, domain=0)
        steps = decoder_trace(blocks, ex.src, ex.dec_in)
    else:
        source = list(example)
        _, steps = greedy_steps(blocks, config.vocab.encode(source), source, config.vocab, config.max_decode_len)
    total = np.sum([np.asarray(s.domain.raw) for s in steps], axis=0)
    return int(np.argmax(total))


class SequenceLoss:
    """Per-example model loss as a :class:`~zshot.autodiff.LossFn`.

    Batch items are :class:`Example` objects. The tape path records the
    forward pass above; ``value_and_grad`` uses the fused kernel instead.
    """

    def __init__(self, config: ModelConfig, layout):
        self.config = config
        self.layout = layout
        self._cache: dict[tuple, EncodedExample] = {}

    def encoded(self, example: Example) -> EncodedExample:
        key = (example.id, example.domain, example.source, example.target)
        enc = self._cache.get(key)
        if enc is None:
            enc = encode_example(example, self.config)
            if enc.domain < 0:
                raise ZShotError(f"example {example.id!r} has unknown domain {example.domain!r}")
            self._cache[key] = enc
        return enc

    def __call__(self, theta, batch: Sequence[Example]):
        blocks = split_blocks(self.layout, theta)
        return T.stack([sequence_loss(blocks, self.encoded(ex), self.config) for ex in batch])

    def value_and_grad(self, values, batch: Sequence[Example]):
        from .kernels import get_kernel

        kernel = get_kernel(self.config)
        losses = np.empty(len(batch))
        total = np.zeros(self.layout.size)
        g = np.empty(self.layout.size)
        for i, ex in enumerate(batch):
            losses[i] = kernel.loss_and_grad(values, self.encoded(ex), g)
            total += g
        return losses, total / len(batch)
