"""Three-block coordinate descent: assignment, prototypes, adjacency."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import Dataset, HyperParams, Prototype, arrays_to_prototypes, prototypes_to_arrays
from .metric import ta_matrix
from .objective import (
    as_arrays,
    inter_phi_matrix,
    objective_j,
    pen_transition_matrix,
    weights_and_diam,
)

logger = logging.getLogger(__name__)

ADJ_FLOOR = 1e-9
DENOM_FLOOR = 1e-12


class SolverError(RuntimeError):
    """Raised when the objective becomes non-finite; ``state`` holds a dump."""

    def __init__(self, message: str, state: dict):
        super().__init__(message)
        self.state = state


@dataclass(frozen=True)
class SolverConfig:
    max_iterations: int = 200
    objective_tolerance: float = 1e-9
    seed: int = 0
    init_mode: str = "random-observations"
    assignment: str = "exact"
    prototype_sweep: str = "gauss-seidel"
    adjacency_prototypes: str = "current"
    adjacency_rule: str = "simplex"

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        if self.objective_tolerance < 0:
            raise ValueError("objective_tolerance must be >= 0")
        if self.assignment not in ASSIGNMENT_MODES:
            raise ValueError(f"unknown assignment mode {self.assignment!r}")
        if self.init_mode not in ("random-observations", "provided"):
            raise ValueError(f"unknown init_mode {self.init_mode!r}")
        if self.prototype_sweep not in ("jacobi", "gauss-seidel"):
            raise ValueError(f"unknown prototype_sweep {self.prototype_sweep!r}")
        if self.adjacency_prototypes not in ("previous", "current"):
            raise ValueError(f"unknown adjacency_prototypes {self.adjacency_prototypes!r}")
        if self.adjacency_rule not in ADJACENCY_RULES:
            raise ValueError(f"unknown adjacency_rule {self.adjacency_rule!r}")


@dataclass
class ClusPathModel:
    prototypes: list[Prototype]
    labels: np.ndarray
    adjacency: np.ndarray
    objective_trace: list[float]
    iterations: int
    params: HyperParams
    seed: int = 0
    converged: bool = False
    flags: dict = field(default_factory=dict)
    dataset_fingerprint: str | None = None

    @property
    def k(self) -> int:
        return self.params.k

    @property
    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return prototypes_to_arrays(self.prototypes)

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "seed": self.seed,
            "prototypes": [{"mu_t": p.mu_t, "mu_d": list(p.mu_d)} for p in self.prototypes],
            "assignment": [int(c) for c in self.labels],
            "adjacency": [[float(v) for v in row] for row in self.adjacency],
            "objective_trace": [float(v) for v in self.objective_trace],
            "iterations": self.iterations,
            "converged": self.converged,
            "flags": self.flags,
            "dataset_fingerprint": self.dataset_fingerprint,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ClusPathModel":
        return cls(
            prototypes=[Prototype(float(p["mu_t"]), tuple(float(v) for v in p["mu_d"])) for p in d["prototypes"]],
            labels=np.array(d["assignment"], dtype=np.intp),
            adjacency=np.array(d["adjacency"], dtype=float),
            objective_trace=list(d["objective_trace"]),
            iterations=int(d["iterations"]),
            params=HyperParams.from_dict(d["params"]),
            seed=int(d.get("seed", 0)),
            converged=bool(d.get("converged", False)),
            flags=dict(d.get("flags", {})),
            dataset_fingerprint=d.get("dataset_fingerprint"),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_json(cls, text: str) -> "ClusPathModel":
        return cls.from_dict(json.loads(text))


# initialisation -------------------------------------------------------------

def init_indices(n: int, k: int, seed: int) -> np.ndarray:
    if k > n:
        raise ValueError(f"cannot draw {k} prototypes from {n} observations")
    return np.random.default_rng(seed).choice(n, size=k, replace=False)


def init_prototypes(ds: Dataset, k: int, seed: int) -> list[Prototype]:
    """k distinct observations, drawn without replacement, become prototypes."""
    idx = init_indices(ds.n, k, seed)
    return arrays_to_prototypes(ds.X[idx], ds.times[idx])


# assignment ----------------------------------------------------------------

def _link_cost(adj: np.ndarray) -> np.ndarray:
    # B[p, q] = 1 - a_pq^2 for p != q, 0 on the diagonal (no penalty inside a cluster)
    b = 1.0 - adj ** 2
    np.fill_diagonal(b, 0.0)
    return b


def _gauss(dt: np.ndarray, hp: HyperParams) -> np.ndarray:
    return hp.beta * np.exp(-0.5 * (dt / hp.delta) ** 2)


ASSIGNMENT_MODES = ("forward", "symmetric", "exact")


def _entity_transitions(lab: np.ndarray, k: int) -> np.ndarray:
    """Multiplicity of each p -> q step (p != q) in one entity's label series."""
    m = np.zeros((k, k), dtype=np.int64)
    a, b = lab[:-1], lab[1:]
    ok = (a >= 0) & (b >= 0) & (a != b)
    np.add.at(m, (a[ok], b[ok]), 1)
    return m


class _AssignmentSweep:
    """Shared machinery for single-observation costs and full sweeps.

    ``forward`` charges only the must-links towards later observations (the
    original assignment rule); ``symmetric`` also charges links from
    earlier observations; ``exact`` additionally accounts for the change of
    the transition term, making every move a true best response for J.
    """

    def __init__(self, ds, labels, protos, adj, hp, mode):
        if mode not in ASSIGNMENT_MODES:
            raise ValueError(f"unknown assignment mode {mode!r}")
        self.ds, self.hp, self.mode = ds, hp, mode
        mu_d, mu_t = as_arrays(protos)
        w, diam = weights_and_diam(ds, hp)
        self.dis = ta_matrix(ds.X, ds.times, mu_d, mu_t, w, diam)
        self.k = mu_d.shape[0]
        self.labels = np.full(ds.n, -1, dtype=np.intp) if labels is None else np.array(labels, dtype=np.intp)
        self.B = _link_cost(adj)
        self.a2 = adj ** 2
        self.track_t3 = mode == "exact" and hp.lambda3 > 0 and np.any(adj > 0)
        if self.track_t3:
            self.per_entity = [
                _entity_transitions(self.labels[ds.entity_slice(e)], self.k) for e in range(ds.n_entities)
            ]
            self.present = sum((m > 0).astype(np.int64) for m in self.per_entity)

    def _gauss_rows(self, e):
        t = self.ds.times[self.ds.entity_slice(e)]
        return _gauss(t[None, :] - t[:, None], self.hp)

    def costs(self, i, e, G):
        lo, hi = int(self.ds.offsets[e]), int(self.ds.offsets[e + 1])
        a = i - lo
        lab = self.labels
        pen = np.zeros(self.k)
        if self.hp.beta > 0:
            later = lab[i + 1:hi]
            known = later >= 0
            if known.any():
                pen += self.B[:, later[known]] @ G[a, a + 1:][known]
            if self.mode != "forward" and a:
                earlier = lab[lo:i]
                known = earlier >= 0
                if known.any():
                    pen += self.B[earlier[known], :].T @ G[:a, a][known]
        if self.mode != "exact":
            return self.dis[i] + pen
        cost = self.hp.lambda1 * (self.dis[i] + pen)
        if self.track_t3:
            cost = cost + self.hp.lambda3 * self._t3_candidates(i, e, lo, hi)
        return cost

    def _t3_candidates(self, i, e, lo, hi):
        k, lab = self.k, self.labels
        own = self.per_entity[e].copy()
        prev = lab[i - 1] if i > lo else -1
        nxt = lab[i + 1] if i + 1 < hi else -1
        cur = lab[i]
        for a, b in ((prev, cur), (cur, nxt)):
            if a >= 0 and b >= 0 and a != b:
                own[a, b] -= 1
        others = self.present - (self.per_entity[e] > 0)
        cand = np.broadcast_to(own, (k, k, k)).copy()
        p = np.arange(k)
        if prev >= 0:
            ok = p != prev
            cand[p[ok], prev, p[ok]] += 1
        if nxt >= 0:
            ok = p != nxt
            cand[p[ok], p[ok], nxt] += 1
        cnt = others[None] + (cand > 0)
        inter = 1.0 - cnt / self.ds.n_entities
        return np.einsum("pq,cpq->c", self.a2, inter ** 2)

    def place(self, i, e, c):
        if self.track_t3 and self.labels[i] != c:
            old = self.per_entity[e]
            self.labels[i] = c
            new = _entity_transitions(self.labels[self.ds.entity_slice(e)], self.k)
            self.present += (new > 0).astype(np.int64) - (old > 0)
            self.per_entity[e] = new
        else:
            self.labels[i] = c

    def sweep(self):
        ds = self.ds
        if self.hp.beta == 0 and not self.track_t3 and (self.mode != "exact" or self.hp.lambda1 > 0):
            return np.argmin(self.dis, axis=1).astype(np.intp)
        for e in range(ds.n_entities):
            G = self._gauss_rows(e)
            for i in range(int(ds.offsets[e]), int(ds.offsets[e + 1])):
                self.place(i, e, int(np.argmin(self.costs(i, e, G))))
        return self.labels


def assignment_costs(i: int, ds: Dataset, labels: np.ndarray, protos, adj: np.ndarray,
                     hp: HyperParams, mode: str = "exact") -> np.ndarray:
    """Cost of placing observation ``i`` in each cluster, other labels fixed.

    Labels of ``-1`` mark observations not assigned yet; they carry no
    penalty and no transition.
    """
    sw = _AssignmentSweep(ds, labels, protos, adj, hp, mode)
    e = int(np.searchsorted(ds.offsets, i, side="right") - 1)
    return sw.costs(i, e, sw._gauss_rows(e))


def best_cluster(i: int, ds: Dataset, labels: np.ndarray, protos, adj: np.ndarray, hp: HyperParams,
                 mode: str = "exact") -> int:
    # np.argmin returns the first minimum: lowest index wins ties
    return int(np.argmin(assignment_costs(i, ds, labels, protos, adj, hp, mode)))


def assign_all(ds: Dataset, labels: np.ndarray | None, protos, adj: np.ndarray, hp: HyperParams,
               mode: str = "exact") -> np.ndarray:
    """Reassign every observation in canonical order (entities, then time)."""
    return _AssignmentSweep(ds, labels, protos, adj, hp, mode).sweep()


# prototypes ----------------------------------------------------------------

def _weighted_center(values, weights):
    den = float(np.sum(weights))
    if den <= DENOM_FLOOR:
        return None, den
    return np.tensordot(weights, values, axes=1) / den, den


def update_prototype(j: int, ds: Dataset, labels: np.ndarray, protos, adj: np.ndarray, hp: HyperParams,
                     max_rounds: int = 1000, tol: float = 1e-15) -> tuple[Prototype, bool]:
    """Recompute prototype ``j`` with all other prototypes held at ``protos``.

    Alternates the closed-form descriptive and temporal centers until they
    stop moving; each half-step is the exact minimizer of J in that
    component.  Returns the prototype and whether a vanishing denominator
    left (part of) it unchanged.
    """
    mu_d, mu_t = as_arrays(protos)
    gd, gt = weights_and_diam(ds, hp)[0]
    dd, dt = ds.safe_diameters()
    members = labels == j
    xd, xt = ds.X[members], ds.times[members]
    others = np.arange(len(mu_t)) != j
    link = hp.lambda2 * (adj[j, others] ** 2 + adj[others, j] ** 2)
    od, ot = mu_d[others], mu_t[others]
    cd, ct = mu_d[j].copy(), float(mu_t[j])
    stuck = False
    for _ in range(max_rounds):
        # descriptive center, weighted by temporal proximity to the current center
        wm = hp.lambda1 * (1.0 - gt * (xt - ct) ** 2 / dt ** 2)
        wo = link * (1.0 - gt * (ot - ct) ** 2 / dt ** 2)
        new_d, _ = _weighted_center(np.vstack([xd, od]), np.concatenate([wm, wo]))
        if new_d is None:
            stuck, new_d = True, cd
        # temporal center, weighted by descriptive proximity to the new descriptive center
        wm = hp.lambda1 * (1.0 - gd * np.sum((xd - new_d) ** 2, axis=1) / dd ** 2)
        wo = link * (1.0 - gd * np.sum((od - new_d) ** 2, axis=1) / dd ** 2)
        new_t, _ = _weighted_center(np.concatenate([xt, ot]), np.concatenate([wm, wo]))
        if new_t is None:
            stuck, new_t = True, ct
        new_t = float(new_t)
        shift = max(float(np.max(np.abs(new_d - cd))) / dd, abs(new_t - ct) / dt)
        cd, ct = new_d, new_t
        if shift <= tol or stuck:
            break
    return Prototype(ct, tuple(float(v) for v in cd)), stuck


def update_prototypes(ds: Dataset, labels: np.ndarray, protos, adj: np.ndarray, hp: HyperParams,
                      sweep: str = "gauss-seidel") -> tuple[list[Prototype], list[int]]:
    old = list(arrays_to_prototypes(*as_arrays(protos)))
    current = list(old)
    stuck = []
    for j in range(hp.k):
        base = old if sweep == "jacobi" else current
        p, flag = update_prototype(j, ds, labels, base, adj, hp)
        current[j] = p
        if flag:
            stuck.append(j)
    return current, stuck


# adjacency -----------------------------------------------------------------

@dataclass(frozen=True)
class AdjacencyUpdate:
    adjacency: np.ndarray
    K: np.ndarray
    floored: bool
    degenerate: bool


def adjacency_coefficients(ds: Dataset, labels: np.ndarray, protos, hp: HyperParams) -> np.ndarray:
    """Quadratic coefficients K[r, s] such that J = const + sum K[r, s] a[r, s]^2."""
    mu_d, mu_t = as_arrays(protos)
    w, diam = weights_and_diam(ds, hp)
    k = hp.k
    dis = ta_matrix(mu_d, mu_t, mu_d, mu_t, w, diam)
    K = (-hp.lambda1 * pen_transition_matrix(ds, labels, k, hp.beta, hp.delta)
         + hp.lambda2 * dis + hp.lambda3 * inter_phi_matrix(ds, labels, k) ** 2)
    np.fill_diagonal(K, np.inf)
    return K


ADJACENCY_RULES = ("simplex", "floor")


def solve_adjacency(K: np.ndarray, rule: str = "simplex") -> AdjacencyUpdate:
    """Minimize sum K a^2 over off-diagonal a >= 0 with unit 1-norm.

    With positive coefficients the Lagrange point ``a ~ 1/K`` is the answer.
    Otherwise ``simplex`` returns the true constrained minimizer, while
    ``floor`` raises every coefficient to ``ADJ_FLOOR`` before inverting.
    """
    if rule not in ADJACENCY_RULES:
        raise ValueError(f"unknown adjacency rule {rule!r}")
    k = K.shape[0]
    off = ~np.eye(k, dtype=bool)
    vals = K[off]
    A = np.zeros((k, k))
    if vals.min() > ADJ_FLOOR:
        inv = 1.0 / vals
        A[off] = inv / inv.sum()
        return AdjacencyUpdate(A, K, floored=False, degenerate=False)
    if rule == "floor":
        inv = 1.0 / np.maximum(vals, ADJ_FLOOR)
        A[off] = inv / inv.sum()
        return AdjacencyUpdate(A, K, floored=True, degenerate=bool(np.all(vals <= ADJ_FLOOR)))
    # non-positive coefficients: the Lagrange point is not a minimum; solve the
    # simplex-constrained problem directly
    lowest = vals.min()
    if lowest >= -ADJ_FLOOR:
        ties = vals <= ADJ_FLOOR
        flat = ties / ties.sum()
        degenerate = bool(ties.all())
    else:
        flat = np.zeros_like(vals)
        flat[int(np.argmin(vals))] = 1.0
        degenerate = False
    A[off] = flat
    return AdjacencyUpdate(A, K, floored=True, degenerate=degenerate)


def update_adjacency(ds: Dataset, labels: np.ndarray, protos, hp: HyperParams,
                     rule: str = "simplex") -> AdjacencyUpdate:
    return solve_adjacency(adjacency_coefficients(ds, labels, protos, hp), rule)


# driver -------------------------------------------------------------------

@dataclass
class IterationState:
    labels: np.ndarray | None
    prototypes: list[Prototype]
    adjacency: np.ndarray


def iterate(ds: Dataset, state: IterationState, hp: HyperParams, cfg: SolverConfig) -> tuple[IterationState, dict]:
    """One round: reassign observations, update prototypes, then the adjacency."""
    labels = assign_all(ds, state.labels, state.prototypes, state.adjacency, hp, cfg.assignment)
    protos, stuck = update_prototypes(ds, labels, state.prototypes, state.adjacency, hp, cfg.prototype_sweep)
    source = state.prototypes if cfg.adjacency_prototypes == "previous" else protos
    upd = update_adjacency(ds, labels, source, hp, cfg.adjacency_rule)
    info = {"stuck_prototypes": stuck, "adjacency_floored": upd.floored, "adjacency_degenerate": upd.degenerate}
    return IterationState(labels, protos, upd.adjacency), info


def fit(ds: Dataset, hp: HyperParams, cfg: SolverConfig | None = None,
        init: Sequence[Prototype] | None = None, callback=None) -> ClusPathModel:
    """Run the coordinate descent until the partition stops changing."""
    cfg = cfg or SolverConfig()
    if ds.n < hp.k:
        raise ValueError(f"k={hp.k} exceeds the number of observations ({ds.n})")
    if init is None:
        if cfg.init_mode == "provided":
            raise ValueError("init_mode 'provided' needs explicit initial prototypes")
        init = init_prototypes(ds, hp.k, cfg.seed)
    elif len(init) != hp.k:
        raise ValueError(f"expected {hp.k} initial prototypes, got {len(init)}")
    state = IterationState(None, list(init), np.zeros((hp.k, hp.k)))
    trace: list[float] = []
    flags = {"stuck_prototypes": 0, "adjacency_floored": 0, "adjacency_degenerate": 0}
    converged = False
    it = 0
    for it in range(1, cfg.max_iterations + 1):
        previous = state.labels
        state, info = iterate(ds, state, hp, cfg)
        flags["stuck_prototypes"] += len(info["stuck_prototypes"])
        flags["adjacency_floored"] += int(info["adjacency_floored"])
        flags["adjacency_degenerate"] += int(info["adjacency_degenerate"])
        j = objective_j(ds, state.labels, state.prototypes, state.adjacency, hp).j
        if not np.isfinite(j):
            raise SolverError(f"non-finite objective at iteration {it}", {
                "iteration": it,
                "labels": state.labels.tolist(),
                "prototypes": [(p.mu_t, list(p.mu_d)) for p in state.prototypes],
                "adjacency": state.adjacency.tolist(),
                "params": hp.to_dict(),
            })
        if trace and j > trace[-1] + cfg.objective_tolerance * max(1.0, abs(trace[-1])):
            logger.warning("objective rose from %r to %r at iteration %d", trace[-1], j, it)
        trace.append(float(j))
        if callback is not None:
            callback(it, state, info)
        if previous is not None and np.array_equal(previous, state.labels):
            converged = True
            break
    if not converged:
        logger.info("stopped after %d iterations without a stable partition", it)
    return ClusPathModel(
        prototypes=state.prototypes,
        labels=state.labels,
        adjacency=state.adjacency,
        objective_trace=trace,
        iterations=it,
        params=hp,
        seed=cfg.seed,
        converged=converged,
        flags=flags,
        dataset_fingerprint=None,
    )
