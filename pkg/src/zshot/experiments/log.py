"""Experiment event log, one JSON object per line."""

from __future__ import annotations

import json
from pathlib import Path


class JsonlLog:
    """Append-only JSONL event sink; ``path=None`` keeps events in memory only."""

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self.events: list[dict] = []
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)

    def event(self, name: str, **fields) -> None:
        record = {"event": name, **fields}
        self.events.append(record)
        if self.path is not None:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, ensure_ascii=False, sort_keys=True, default=str) + "\n")


def read_log(path: str | Path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]
