"""Shared model plumbing: forecast clamping and JSON snapshots."""

from __future__ import annotations

import json
from pathlib import Path

from ..errors import ValidationError


def clamp_forecast(pred: float, training_min_rv: float) -> float:
    """Replace a negative forecast with the training sample's minimum RV."""
    if training_min_rv < 0:
        raise ValidationError("training_min_rv must be >= 0")
    return pred if pred >= 0 else training_min_rv


def save_snapshot(snapshot: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(snapshot, indent=2, sort_keys=True))


def load_snapshot(path: str | Path) -> dict:
    return json.loads(Path(path).read_text())
