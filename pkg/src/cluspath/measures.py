"""Evaluation measures: MDvar, Tvar, ShaP and SPass (all minimized)."""
from __future__ import annotations

import math
from dataclasses import astuple, dataclass

import numpy as np

from .core import Dataset
from .metric import TAWeights, gamma, ta_matrix
from .objective import as_arrays

MEASURE_NAMES = ("mdvar", "tvar", "shap", "spass")


@dataclass(frozen=True)
class MeasureVector:
    mdvar: float
    tvar: float
    shap: float
    spass: float

    def __post_init__(self):
        for name, v in zip(MEASURE_NAMES, astuple(self)):
            if not (v >= 0):
                raise ValueError(f"{name} must be non-negative, got {v}")

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=float)

    def to_dict(self) -> dict:
        return dict(zip(MEASURE_NAMES, astuple(self)))

    @classmethod
    def worst(cls) -> "MeasureVector":
        return cls(math.inf, math.inf, math.inf, math.inf)


def mdvar(ds: Dataset, labels: np.ndarray, protos) -> float:
    """Mean squared descriptive distance to the assigned prototype."""
    mu_d, _ = as_arrays(protos)
    diff = ds.X - mu_d[labels]
    return float(np.mean(np.einsum("ij,ij->i", diff, diff)))


def tvar(ds: Dataset, labels: np.ndarray, protos) -> float:
    _, mu_t = as_arrays(protos)
    return float(np.mean((ds.times - mu_t[labels]) ** 2))


def _changes(series: np.ndarray) -> int:
    return int(np.count_nonzero(series[1:] != series[:-1]))


def shap_entity(series, k: int | None = None) -> float:
    """One entity's penalized entropy term."""
    series = np.asarray(series)
    n = len(series)
    if n < 2:
        return 0.0
    _, counts = np.unique(series, return_counts=True)
    p = counts / n
    entropy = float(-np.sum(p * np.log2(p)))
    n_ch = _changes(series)
    n_min = len(counts) - 1
    return entropy * (1.0 + (n_ch - n_min) / (n - 1))


def shap(ds: Dataset, labels: np.ndarray, k: int | None = None) -> float:
    total = 0.0
    for e in range(ds.n_entities):
        total += shap_entity(labels[ds.entity_slice(e)])
    return total / ds.n_entities


def spass(ds: Dataset, labels: np.ndarray, protos, w: TAWeights, diam: tuple[float, float]) -> float:
    """Sum over entities of the mean prototype dissimilarity across their phase changes."""
    mu_d, mu_t = as_arrays(protos)
    dis = ta_matrix(mu_d, mu_t, mu_d, mu_t, w, diam)
    total = 0.0
    for e in range(ds.n_entities):
        s = labels[ds.entity_slice(e)]
        moved = s[1:] != s[:-1]
        n_ch = int(np.count_nonzero(moved))
        if n_ch:
            total += float(np.sum(dis[s[:-1][moved], s[1:][moved]])) / n_ch
    return total


def evaluate(model, ds: Dataset) -> MeasureVector:
    protos = model.prototypes
    return MeasureVector(
        mdvar=mdvar(ds, model.labels, protos),
        tvar=tvar(ds, model.labels, protos),
        shap=shap(ds, model.labels, model.k),
        spass=spass(ds, model.labels, protos, gamma(model.params.alpha), ds.safe_diameters()),
    )
