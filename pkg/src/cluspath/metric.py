"""Temporal-aware dissimilarity and its alpha slider."""
from __future__ import annotations

from typing import NamedTuple

import numpy as np


class TAWeights(NamedTuple):
    gamma_d: float
    gamma_t: float


def gamma(alpha: float) -> TAWeights:
    """Map the slider ``alpha`` in [-1, 1] to descriptive/temporal weights.

    ``alpha = -1`` keeps only time, ``alpha = 1`` keeps only the descriptors.
    """
    if not -1.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [-1, 1], got {alpha}")
    if alpha <= 0:
        return TAWeights(1.0 + alpha, 1.0)
    return TAWeights(1.0, 1.0 - alpha)


def _combine(sq_d, sq_t, w: TAWeights, diam):
    dd, dt = diam
    rd = w.gamma_d * sq_d / (dd * dd)
    rt = w.gamma_t * sq_t / (dt * dt)
    # expanded form of 1 - (1 - rd)(1 - rt); no cancellation when one ratio is 0
    return rd + rt - rd * rt


def ta_dissim(xd_i, t_i: float, xd_j, t_j: float, w: TAWeights, diam: tuple[float, float]) -> float:
    xd_i = np.asarray(xd_i, dtype=float)
    xd_j = np.asarray(xd_j, dtype=float)
    if xd_i.shape != xd_j.shape:
        raise ValueError(f"descriptor dimensions differ: {xd_i.shape} vs {xd_j.shape}")
    diff = xd_i - xd_j
    return float(_combine(float(diff @ diff), (t_i - t_j) ** 2, w, diam))


def ta_matrix(Xa: np.ndarray, ta: np.ndarray, Xb: np.ndarray, tb: np.ndarray,
              w: TAWeights, diam: tuple[float, float]) -> np.ndarray:
    """All-pairs dissimilarity between rows of ``(Xa, ta)`` and ``(Xb, tb)``."""
    diff = Xa[:, None, :] - Xb[None, :, :]
    sq_d = np.einsum("ijk,ijk->ij", diff, diff)
    sq_t = (ta[:, None] - tb[None, :]) ** 2
    return _combine(sq_d, sq_t, w, diam)
