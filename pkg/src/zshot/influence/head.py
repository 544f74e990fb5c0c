"""The model loss restricted to its output layers.

The decoder features ``[s_j, c_j]``, the copy logits ``e_j`` and the
encoder feature ``[b_n, c_n]`` do not depend on the output matrix ``U`` or
the domain matrix ``W_T``, so for fixed remaining weights they can be
computed once per example. :class:`DomainHeadLoss` differentiates with
respect to ``W_T`` alone and drops the token NLL, which is constant in
``W_T``; :class:`OutputLayerLoss` keeps the full loss as a function of
``(U, W_T)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..autodiff import Layout, ParamVector
from ..autodiff import tensor as T
from ..data_io import Example
from ..model.config import ModelConfig
from ..model.network import attend, decoder_trace, encode, encode_example, init_decoder


@dataclass(frozen=True)
class HeadFeatures:
    id: str
    steps: np.ndarray  # (m, 4d) decoder features, teacher-forced
    encoder: np.ndarray  # (4d,)
    domain: int
    copy_logits: np.ndarray | None = None  # (m, n) attention logits
    gold: tuple[np.ndarray, ...] | None = None


def head_features(params: ParamVector, config: ModelConfig, example: Example) -> HeadFeatures:
    ex = encode_example(example, config)
    blocks = params.blocks()
    steps = decoder_trace(blocks, ex.src, ex.dec_in)
    enc = encode(blocks, ex.src)
    _, ctx = attend(blocks, init_decoder(blocks, enc).state, enc)
    F = np.stack([np.asarray(s.features) for s in steps])
    E = np.stack([np.asarray(s.scores) for s in steps])
    f0 = np.concatenate([np.asarray(enc.summary), ctx])
    return HeadFeatures(ex.id, F, f0, ex.domain, E, ex.gold)


def head_params(params: ParamVector) -> ParamVector:
    W = params.block("domain_W")
    return ParamVector(W.reshape(-1), Layout.from_shapes([("domain_W", W.shape)]))


class DomainHeadLoss:
    """Per-example domain penalties as a function of ``W_T``.

    Batch items are :class:`HeadFeatures`. Decoder steps are padded to the
    longest item and masked by their averaging weights.
    """

    def __init__(self, num_domains: int, reg_weight: float = 0.5, decoder_reg: str = "mean"):
        self.K = num_domains
        self.reg_weight = reg_weight
        self.final = decoder_reg == "final"

    def _pack(self, batch: Sequence[HeadFeatures]):
        B = len(batch)
        M = max(len(h.steps) for h in batch)
        Fdim = batch[0].encoder.shape[0]
        F = np.zeros((B, M, Fdim))
        W = np.zeros((B, M))
        Y = np.zeros((B, self.K))
        F0 = np.stack([h.encoder for h in batch])
        for b, h in enumerate(batch):
            m = len(h.steps)
            F[b, :m] = h.steps
            if self.final:
                W[b, m - 1] = 1.0
            else:
                W[b, :m] = 1.0 / m
            Y[b, h.domain] = 1.0
        return F, W, Y, F0

    def __call__(self, theta, batch: Sequence[HeadFeatures]):
        F, W, Y, F0 = self._pack(batch)
        Wt = T.reshape(theta, (self.K, F.shape[-1]))
        q = T.softmax(T.matmul(F, T.transpose(Wt)), axis=-1)  # (B, M, K)
        qbar = T.tsum(q * W[:, :, None], axis=1)
        q0 = T.softmax(T.matmul(F0, T.transpose(Wt)), axis=-1)
        d1 = Y - qbar
        d0 = Y - q0
        return self.reg_weight * (T.tsum(d1 * d1, axis=1) + T.tsum(d0 * d0, axis=1))

    def _forward_backward(self, values, batch):
        F, W, Y, F0 = self._pack(batch)
        Wt = np.asarray(values).reshape(self.K, F.shape[-1])
        q = _softmax(F @ Wt.T)
        qbar = np.einsum("bmk,bm->bk", q, W)
        q0 = _softmax(F0 @ Wt.T)
        losses = self.reg_weight * (np.sum((Y - qbar) ** 2, axis=1) + np.sum((Y - q0) ** 2, axis=1))
        dq = 2.0 * self.reg_weight * (qbar - Y)[:, None, :] * W[:, :, None]
        draw = q * (dq - np.sum(q * dq, axis=-1, keepdims=True))
        dq0 = 2.0 * self.reg_weight * (q0 - Y)
        draw0 = q0 * (dq0 - np.sum(q0 * dq0, axis=-1, keepdims=True))
        G = np.einsum("bmk,bmf->bkf", draw, F) + np.einsum("bk,bf->bkf", draw0, F0)
        return losses, G.reshape(len(batch), -1)

    def value_and_grad(self, values, batch):
        losses, G = self._forward_backward(values, batch)
        return losses, G.mean(axis=0)

    def per_example_grads(self, values, batch) -> np.ndarray:
        return self._forward_backward(values, batch)[1]


def output_params(params: ParamVector) -> ParamVector:
    U, W = params.block("out_U"), params.block("domain_W")
    layout = Layout.from_shapes([("out_U", U.shape), ("domain_W", W.shape)])
    return ParamVector(np.concatenate([U.ravel(), W.ravel()]), layout)


class OutputLayerLoss:
    """Full per-example loss as a function of ``(U, W_T)`` with fixed features."""

    def __init__(self, vocab_size: int, num_domains: int, reg_weight: float = 0.5, decoder_reg: str = "mean"):
        self.V = vocab_size
        self.head = DomainHeadLoss(num_domains, reg_weight, decoder_reg)

    def __call__(self, theta, batch: Sequence[HeadFeatures]):
        B = len(batch)
        M = max(len(h.steps) for h in batch)
        N = max(h.copy_logits.shape[1] for h in batch)
        Fdim = batch[0].encoder.shape[0]
        F = np.zeros((B, M, Fdim))
        E = np.full((B, M, N), -1e30)
        gold_pen = np.full((B, M, self.V + N), -1e30)  # 0 on gold entries
        step_mask = np.zeros((B, M))
        for b, h in enumerate(batch):
            m, n = h.copy_logits.shape
            F[b, :m] = h.steps
            E[b, :m, :n] = h.copy_logits
            step_mask[b, :m] = 1.0
            for j, g in enumerate(h.gold):
                gold_pen[b, j, g] = 0.0
            gold_pen[b, m:, 0] = 0.0  # padded steps: any finite value
        size_u = self.V * Fdim
        U = T.reshape(theta[:size_u], (self.V, Fdim))
        logits = T.concatenate([T.matmul(F, T.transpose(U)), E], axis=-1)
        nll = T.logsumexp(logits, axis=-1) - T.logsumexp(logits + gold_pen, axis=-1)
        return T.tsum(nll * step_mask, axis=1) + self.head(theta[size_u:], batch)


def _softmax(x):
    z = np.exp(x - x.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


def head_problem(params: ParamVector, config: ModelConfig, examples: Sequence[Example], block: str = "head"):
    """``(loss, restricted parameters, features)`` for influence on the
    domain matrix (``block="head"``) or on both output layers (``"output"``)."""
    feats = [head_features(params, config, ex) for ex in examples]
    if block == "head":
        loss = DomainHeadLoss(config.num_domains, config.reg_weight, config.decoder_reg)
        return loss, head_params(params), feats
    if block == "output":
        loss = OutputLayerLoss(config.vocab_size, config.num_domains, config.reg_weight, config.decoder_reg)
        return loss, output_params(params), feats
    raise ValueError(f"unknown parameter block {block!r}")
