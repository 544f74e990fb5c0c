"""JSON checkpoints holding config, vocabulary, layout and weights.

Floats are written with :func:`repr`, which round-trips every finite
double exactly, so a load returns bit-identical parameters.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..autodiff import Layout, ParamVector
from ..errors import ZShotError
from .config import ModelConfig
from .params import model_layout

FORMAT = "zshot-checkpoint"
VERSION = 1


def save_checkpoint(path: str | Path, params: ParamVector, config: ModelConfig, meta: dict | None = None) -> None:
    if params.layout != model_layout(config):
        raise ZShotError("parameters do not match the model config")
    values = params.values
    if not np.all(np.isfinite(values)):
        raise ZShotError("refusing to save non-finite parameters")
    doc = {
        "format": FORMAT,
        "version": VERSION,
        "config": config.to_json(),
        "layout": params.layout.to_json(),
        "values": [float(v) for v in values],
        "meta": meta or {},
    }
    Path(path).write_text(json.dumps(doc, ensure_ascii=False), encoding="utf-8")


def load_checkpoint(path: str | Path) -> tuple[ParamVector, ModelConfig, dict]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ZShotError(f"cannot read checkpoint {path}: {exc}") from exc
    if doc.get("format") != FORMAT or doc.get("version") != VERSION:
        raise ZShotError(f"{path} is not a version {VERSION} checkpoint")
    config = ModelConfig.from_json(doc["config"])
    layout = Layout.from_json(doc["layout"])
    if layout != model_layout(config):
        raise ZShotError("checkpoint layout does not match its config")
    values = np.array(doc["values"], dtype=np.float64)
    if values.shape != (layout.size,):
        raise ZShotError("checkpoint holds the wrong number of values")
    return ParamVector(values, layout), config, doc.get("meta", {})
