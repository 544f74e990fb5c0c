"""Shared encoder/decoder semantic parser with a K x 4d domain head."""

from .accounting import ARCHITECTURES, count_config, count_params
from .checkpoint import load_checkpoint, save_checkpoint
from .config import ModelConfig
from .network import (
    DecoderStep,
    DomainScores,
    EncodedExample,
    EncoderStates,
    SequenceLoss,
    decode_step,
    encode,
    encode_example,
    greedy_decode,
    init_decoder,
    loss_terms,
    predict_task,
    sequence_loss,
    split_blocks,
)
from .params import block_shapes, init_params, model_layout
from .train import TrainConfig, TrainResult, train

__all__ = [
    "ARCHITECTURES",
    "TrainConfig",
    "TrainResult",
    "count_config",
    "count_params",
    "load_checkpoint",
    "save_checkpoint",
    "train",
    "DecoderStep",
    "DomainScores",
    "EncodedExample",
    "EncoderStates",
    "ModelConfig",
    "SequenceLoss",
    "block_shapes",
    "decode_step",
    "encode",
    "encode_example",
    "greedy_decode",
    "init_decoder",
    "init_params",
    "loss_terms",
    "model_layout",
    "predict_task",
    "sequence_loss",
    "split_blocks",
]
