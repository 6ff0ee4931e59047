import numpy as np
import pandas as pd
import pytest

from rvtransfer.data import SupervisedDataSet


def make_dataset(
    n,
    kind="STD",
    asset_id="SRC",
    seed=0,
    start="2015-01-05",
    features=None,
    labels=None,
):
    """Small well-formed SupervisedDataSet on a business-day calendar."""
    rng = np.random.default_rng(seed)
    width = {"STD": 3, "EXT": 11, "STD-5": 2, "EXT-5": 8, "STD-1": 1, "EXT-1": 5}[kind]
    if features is None:
        features = rng.uniform(1e-5, 1e-3, size=(n, width))
    if labels is None:
        labels = rng.uniform(1e-5, 1e-3, size=n)
    days = pd.bdate_range(start, periods=n + 1)
    return SupervisedDataSet(
        features=np.asarray(features, dtype=float),
        labels=np.asarray(labels, dtype=float),
        dates=np.asarray(days[:n], dtype="datetime64[D]"),
        label_dates=np.asarray(days[1 : n + 1], dtype="datetime64[D]"),
        asset_tags=np.asarray([asset_id] * n, dtype=object),
        predictor_kind=kind,
    )


@pytest.fixture
def dataset_factory():
    return make_dataset
