"""Shared trainer utilities: structured logging and batch iteration."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterator, List

import numpy as np
import torch

from ..data.datasets import DatasetHandle


class JsonlLogger:
    """Append-only one-record-per-line log used for test assertions."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)

    def write(self, **record) -> None:
        with open(self.path, "a") as f:
            f.write(json.dumps(record, sort_keys=True) + "\n")

    @staticmethod
    def read(path: str | Path) -> List[dict]:
        out = []
        with open(path) as f:
            for line in f:
                line = line.strip()
                if line:
                    out.append(json.loads(line))
        return out


def clip_batches(dataset: DatasetHandle, batch_size: int) -> Iterator[torch.Tensor]:
    """Endless batches of stacked clips; order is a pure function of the
    dataset seed and the epoch counter."""
    epoch = 0
    while True:
        order = dataset.epoch_order(epoch)
        for i in range(0, len(order) - batch_size + 1, batch_size):
            idx = order[i:i + batch_size]
            yield torch.stack([dataset.clip(int(j)).pixels for j in idx])
        epoch += 1


def stack_all_clips(dataset: DatasetHandle) -> torch.Tensor:
    return torch.stack([dataset.clip(i).pixels for i in range(len(dataset))])
