"""Exchangeable forecasters behind one fit/predict interface."""

from .boosting import BoostConfig, BoostedEnsemble, fit_boosted, predict_boosted
from .common import clamp_forecast, load_snapshot, save_snapshot
from .fnn import AdamParams, FitConfig, FnnModel, fit_fnn, predict_fnn
from .har import HarModel, fit_har

__all__ = [
    "AdamParams",
    "BoostConfig",
    "BoostedEnsemble",
    "FitConfig",
    "FnnModel",
    "HarModel",
    "clamp_forecast",
    "fit_boosted",
    "fit_fnn",
    "fit_har",
    "load_snapshot",
    "predict_boosted",
    "predict_fnn",
    "save_snapshot",
]


def model_from_snapshot(snap: dict):
    """Rebuild any serialized model from its JSON snapshot dict."""
    kind = snap.get("kind")
    if kind == "har":
        return HarModel.from_snapshot(snap)
    if kind == "fnn":
        return FnnModel.from_snapshot(snap)
    if kind == "boosted":
        return BoostedEnsemble.from_snapshot(snap)
    raise ValueError(f"unknown model snapshot kind {kind!r}")
