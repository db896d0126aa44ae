import os

import numpy as np
import pytest

import vizgrad
from vizgrad.chart import ChartSpec
from vizgrad.dataset import Attribute, Dataset, QUANTITATIVE

FIXTURES = os.path.join(os.path.dirname(vizgrad.__file__), "fixtures")


def quant_dataset(**cols) -> Dataset:
    arrays = {k: np.asarray(v, dtype=np.float64) for k, v in cols.items()}
    attrs = tuple(
        Attribute(k, QUANTITATIVE, float(a.min()), float(a.max()))
        for k, a in arrays.items()
    )
    return Dataset(attrs, arrays)


@pytest.fixture
def tiny_dataset() -> Dataset:
    return quant_dataset(x=[0.1, 0.5, 0.9, 0.3], y=[0.2, 0.8, 0.4, 0.6])


@pytest.fixture
def tiny_spec() -> ChartSpec:
    return ChartSpec(x="x", y="y", size=2.0, opacity=0.8, canvas=(48, 48))


def fixture_path(name: str) -> str:
    return os.path.join(FIXTURES, name)
