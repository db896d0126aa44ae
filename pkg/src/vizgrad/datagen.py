"""Seeded synthetic dataset generators (Gaussian blobs, correlated pairs,
uniform noise) used by demos, tests, and the ``gen-data`` subcommand."""

from __future__ import annotations

import numpy as np

from .dataset import CATEGORICAL, QUANTITATIVE, Attribute, Dataset
from .errors import DataError
from .rng import StreamRng

__all__ = ["gaussian_blobs", "correlated_pairs", "uniform_noise", "generate"]


def _quant_dataset(cols: dict[str, np.ndarray], extra=None) -> Dataset:
    attrs = [
        Attribute(name, QUANTITATIVE, float(col.min()), float(col.max()))
        for name, col in cols.items()
    ]
    columns = dict(cols)
    if extra:
        name, levels, codes = extra
        attrs.append(Attribute(name, CATEGORICAL, levels=tuple(levels)))
        columns[name] = codes
    return Dataset(tuple(attrs), columns)


def gaussian_blobs(n: int, seed: int, blobs: int = 3, spread: float = 0.08) -> Dataset:
    """``n`` points drawn from ``blobs`` isotropic Gaussian clusters in the
    unit square, plus a categorical ``blob`` label column."""
    if n < 1 or blobs < 1:
        raise DataError("n and blobs must be >= 1")
    g = StreamRng(seed).generator("datagen", 0)
    centers = g.uniform(0.15, 0.85, size=(blobs, 2))
    labels = g.integers(0, blobs, size=n)
    pts = centers[labels] + g.normal(0.0, spread, size=(n, 2))
    levels = [f"b{k}" for k in range(blobs)]
    return _quant_dataset(
        {"x": pts[:, 0], "y": pts[:, 1]}, extra=("blob", levels, labels.astype(np.int64))
    )


def correlated_pairs(n: int, seed: int, rho: float = 0.8) -> Dataset:
    """``n`` samples from a standardized bivariate normal with correlation rho."""
    if not -1.0 < rho < 1.0:
        raise DataError("rho must lie in (-1, 1)")
    g = StreamRng(seed).generator("datagen", 0)
    z = g.normal(size=(n, 2))
    x = z[:, 0]
    y = rho * z[:, 0] + np.sqrt(1.0 - rho * rho) * z[:, 1]
    return _quant_dataset({"x": x, "y": y})


def uniform_noise(n: int, seed: int) -> Dataset:
    """``n`` points uniform on the unit square."""
    g = StreamRng(seed).generator("datagen", 0)
    pts = g.uniform(0.0, 1.0, size=(n, 2))
    return _quant_dataset({"x": pts[:, 0], "y": pts[:, 1]})


def generate(kind: str, n: int, seed: int, **kwargs) -> Dataset:
    """Dispatch by generator name: blobs | correlated | uniform."""
    if kind == "blobs":
        return gaussian_blobs(n, seed, **kwargs)
    if kind == "correlated":
        return correlated_pairs(n, seed, **kwargs)
    if kind == "uniform":
        return uniform_noise(n, seed)
    raise DataError(f"unknown generator kind {kind!r}")
