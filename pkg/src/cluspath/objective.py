"""Penalty, the three objective terms and the assembled objective J.

Throughout, an assignment is an integer array ``labels`` with one cluster
index per observation (canonical dataset order), prototypes are passed as
``(mu_d, mu_t)`` arrays or as a list of :class:`~cluspath.core.Prototype`,
and the adjacency matrix is a dense ``k x k`` array.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .core import Dataset, HyperParams, Prototype, prototypes_to_arrays
from .metric import TAWeights, gamma, ta_matrix


@dataclass(frozen=True)
class ObjectiveBreakdown:
    t1: float
    t2: float
    t3: float
    j: float


def as_arrays(protos) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(protos, tuple) and len(protos) == 2 and isinstance(protos[0], np.ndarray):
        return protos
    if protos and isinstance(protos[0], Prototype):
        return prototypes_to_arrays(protos)
    raise TypeError("prototypes must be a list of Prototype or a (mu_d, mu_t) pair")


def penalty_w(t_i: float, t_k: float, same_entity: bool, a_jl: float, beta: float, delta: float) -> float:
    """Time-decaying cost of a broken must-link between ``x_i`` and a later ``x_k``."""
    if not same_entity or not t_i < t_k:
        return 0.0
    return beta * math.exp(-0.5 * ((t_k - t_i) / delta) ** 2) * (1.0 - a_jl * a_jl)


@lru_cache(maxsize=16)
def same_entity_pairs(ds: Dataset) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Every ordered same-entity pair ``(i, k)`` with ``t_i < t_k``, plus the gap."""
    first, second = [], []
    for e in range(ds.n_entities):
        lo, hi = int(ds.offsets[e]), int(ds.offsets[e + 1])
        i, k = np.triu_indices(hi - lo, 1)
        first.append(i + lo)
        second.append(k + lo)
    I = np.concatenate(first).astype(np.intp)
    K = np.concatenate(second).astype(np.intp)
    return I, K, ds.times[K] - ds.times[I]


def pair_kernel(ds: Dataset, beta: float, delta: float):
    I, K, dt = same_entity_pairs(ds)
    return I, K, beta * np.exp(-0.5 * (dt / delta) ** 2)


def consecutive_pairs(ds: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """Indices of chronologically consecutive same-entity observation pairs."""
    idx = np.arange(ds.n - 1)
    last = np.zeros(ds.n, dtype=bool)
    last[ds.offsets[1:] - 1] = True
    keep = ~last[:-1]
    return idx[keep], idx[keep] + 1


def transition_entity_counts(ds: Dataset, labels: np.ndarray, k: int) -> np.ndarray:
    """``counts[p, q]`` = number of entities with at least one consecutive p -> q step."""
    a, b = consecutive_pairs(ds)
    la, lb = labels[a], labels[b]
    moved = la != lb
    ent = ds.entity_of[a][moved]
    triples = np.unique(np.stack([ent, la[moved], lb[moved]]), axis=1)
    counts = np.zeros((k, k), dtype=np.int64)
    np.add.at(counts, (triples[1], triples[2]), 1)
    return counts


def inter_phi_matrix(ds: Dataset, labels: np.ndarray, k: int) -> np.ndarray:
    """Intersection measure for all ordered pairs; the diagonal is set to 0."""
    m = 1.0 - transition_entity_counts(ds, labels, k) / ds.n_entities
    np.fill_diagonal(m, 0.0)
    return m


def inter_phi(ds: Dataset, labels: np.ndarray, p: int, q: int) -> float:
    if p == q:
        raise ValueError("inter_phi is defined for distinct clusters only")
    k = int(max(labels.max(), p, q)) + 1
    return float(inter_phi_matrix(ds, labels, k)[p, q])


def weights_and_diam(ds: Dataset, hp: HyperParams) -> tuple[TAWeights, tuple[float, float]]:
    return gamma(hp.alpha), ds.safe_diameters()


def term1(ds: Dataset, labels: np.ndarray, protos, adj: np.ndarray, hp: HyperParams) -> float:
    mu_d, mu_t = as_arrays(protos)
    w, diam = weights_and_diam(ds, hp)
    n = ds.n
    dis = _obs_to_proto(ds, mu_d, mu_t, w, diam)[np.arange(n), labels]
    return float(np.sum(dis)) + _penalty_sum(ds, labels, adj, hp)


def _obs_to_proto(ds, mu_d, mu_t, w, diam):
    return ta_matrix(ds.X, ds.times, mu_d, mu_t, w, diam)


def _penalty_sum(ds: Dataset, labels: np.ndarray, adj: np.ndarray, hp: HyperParams) -> float:
    if hp.beta == 0:
        return 0.0
    I, K, g = pair_kernel(ds, hp.beta, hp.delta)
    li, lk = labels[I], labels[K]
    split = li != lk
    return float(np.sum(g[split] * (1.0 - adj[li[split], lk[split]] ** 2)))


def term2(protos, adj: np.ndarray, w: TAWeights, diam: tuple[float, float]) -> float:
    mu_d, mu_t = as_arrays(protos)
    d = ta_matrix(mu_d, mu_t, mu_d, mu_t, w, diam)
    np.fill_diagonal(d, 0.0)
    return float(np.sum(adj ** 2 * d))


def term3(ds: Dataset, labels: np.ndarray, adj: np.ndarray) -> float:
    inter = inter_phi_matrix(ds, labels, adj.shape[0])
    return float(np.sum(adj ** 2 * inter ** 2))


def objective_j(ds: Dataset, labels: np.ndarray, protos, adj: np.ndarray, hp: HyperParams) -> ObjectiveBreakdown:
    w, diam = weights_and_diam(ds, hp)
    t1 = term1(ds, labels, protos, adj, hp)
    t2 = term2(protos, adj, w, diam)
    t3 = term3(ds, labels, adj)
    return ObjectiveBreakdown(t1, t2, t3, hp.lambda1 * t1 + hp.lambda2 * t2 + hp.lambda3 * t3)


def pen_transition_matrix(ds: Dataset, labels: np.ndarray, k: int, beta: float, delta: float) -> np.ndarray:
    """Adjacency-free penalty mass for every ordered cluster pair (diagonal 0)."""
    out = np.zeros((k, k))
    if beta == 0:
        return out
    I, K, g = pair_kernel(ds, beta, delta)
    np.add.at(out, (labels[I], labels[K]), g)
    np.fill_diagonal(out, 0.0)
    return out


def pen_transition(ds: Dataset, labels: np.ndarray, r: int, s: int, beta: float, delta: float) -> float:
    if r == s:
        raise ValueError("pen_transition is defined for distinct clusters only")
    k = int(max(labels.max(), r, s)) + 1
    return float(pen_transition_matrix(ds, labels, k, beta, delta)[r, s])
