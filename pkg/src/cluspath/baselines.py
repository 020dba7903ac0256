"""Lloyd K-Means reference and the parameter presets of the comparison study."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Dataset, HyperParams
from .solver import init_indices

# Each baseline is a parameterization of the ClusPath objective with lambda2 = lambda3 = 0.
PRESETS: dict[str, dict] = {
    "kmeans": dict(alpha=1.0, beta=0.0, delta=1.0),
    "tdkm": dict(alpha=0.0, beta=0.0, delta=1.0),
    "ckm": dict(alpha=1.0, beta=0.0005, delta=3.0),
    "tdck": dict(alpha=0.95, beta=0.0002, delta=3.0),
}


def preset_params(name: str, k: int) -> HyperParams:
    try:
        p = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return HyperParams(lambda1=1.0, lambda2=0.0, lambda3=0.0, k=k, **p)


@dataclass
class KMeansModel:
    centroids: np.ndarray
    labels: np.ndarray
    inertia: float
    history: list = field(default_factory=list)
    inertia_trace: list = field(default_factory=list)


def _inertia(X, centroids, labels):
    diff = X - centroids[labels]
    return float(np.sum(diff * diff))


def kmeans_fit(ds: Dataset, k: int, seed: int = 0, init: np.ndarray | None = None,
               max_iter: int = 200) -> KMeansModel:
    """Plain Lloyd iterations on the descriptors.

    Initial centroids are the same observations ``init_prototypes`` draws for
    the seed.  Ties go to the lowest cluster index and empty clusters keep
    their centroid.
    """
    X = ds.X
    if k > ds.n:
        raise ValueError(f"cannot form {k} clusters from {ds.n} observations")
    centroids = X[init_indices(ds.n, k, seed)].copy() if init is None else np.array(init, dtype=float)
    labels = None
    history, inertias = [], []
    for _ in range(max_iter):
        d2 = np.sum((X[:, None, :] - centroids[None, :, :]) ** 2, axis=2)
        new = np.argmin(d2, axis=1).astype(np.intp)
        history.append(new)
        for j in range(k):
            members = new == j
            if members.any():
                centroids[j] = X[members].mean(axis=0)
        inertias.append(_inertia(X, centroids, new))
        if labels is not None and np.array_equal(labels, new):
            labels = new
            break
        labels = new
    return KMeansModel(centroids, labels, _inertia(X, centroids, labels), history, inertias)
