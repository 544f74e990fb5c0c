"""Influence report CSV and augmentation manifest JSONL."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable

from .augment import AugmentationSample
from .engine import InfluenceScore

REPORT_COLUMNS = ("subject_id", "test_id", "value", "iterations", "residual", "converged")


def write_influence_report(scores: Iterable[InfluenceScore], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for s in scores:
            writer.writerow(s.to_row())


def read_influence_report(path: str | Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def write_aug_manifest(sample: AugmentationSample, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ex_id, count in sample.counts.items():
            fh.write(json.dumps({"id": ex_id, "draws": count}, ensure_ascii=False) + "\n")


def read_aug_manifest(path: str | Path) -> dict[str, int]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                out[rec["id"]] = int(rec["draws"])
    return out
