"""Transitions, evolution paths and the displayable phase graph."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np

from .core import Dataset
from .objective import as_arrays, consecutive_pairs


@dataclass(frozen=True)
class TransitionRecord:
    entity_id: Hashable
    from_cluster: int
    to_cluster: int
    time: float

    def __post_init__(self):
        if self.from_cluster == self.to_cluster:
            raise ValueError("a transition joins two distinct clusters")

    def to_dict(self) -> dict:
        return {"entity": self.entity_id, "from": self.from_cluster, "to": self.to_cluster, "time": self.time}


@dataclass
class EvolutionGraph:
    binary_adjacency: np.ndarray
    retained_threshold: float
    nodes: list[int]
    node_labels: dict[int, str] = field(default_factory=dict)
    degenerate: bool = False
    backward: set = field(default_factory=set)

    @property
    def arcs(self) -> list[tuple[int, int]]:
        return [(int(i), int(j)) for i, j in zip(*np.nonzero(self.binary_adjacency))]


def extract_transitions(ds: Dataset, labels: np.ndarray) -> list[TransitionRecord]:
    a, b = consecutive_pairs(ds)
    ent = ds.entity_of
    out = []
    for i, k in zip(a, b):
        if labels[i] != labels[k]:
            out.append(TransitionRecord(ds.entity_ids[ent[i]], int(labels[i]), int(labels[k]), float(ds.times[k])))
    return out


def transition_counts(transitions: Sequence[TransitionRecord], k: int, distinct_entities: bool = True) -> np.ndarray:
    """Per-arc counts of entities (or of raw transitions) following each arc."""
    counts = np.zeros((k, k), dtype=np.int64)
    seen = set()
    for tr in transitions:
        key = (tr.entity_id, tr.from_cluster, tr.to_cluster)
        if distinct_entities and key in seen:
            continue
        seen.add(key)
        counts[tr.from_cluster, tr.to_cluster] += 1
    return counts


def binarize(adj: np.ndarray, k: int | None = None, protos=None) -> EvolutionGraph:
    """Keep the arcs scoring at least the (k-1)-th largest distinct positive score.

    Every arc tied at the threshold survives, so more than k-1 arcs may be
    kept.  Nodes without any kept arc are dropped.
    """
    adj = np.asarray(adj, dtype=float)
    k = adj.shape[0] if k is None else k
    if adj.shape != (k, k):
        raise ValueError(f"adjacency of shape {adj.shape} does not match k={k}")
    off = ~np.eye(k, dtype=bool)
    scores = adj[off]
    degenerate = bool(np.all(scores == scores[0]))
    distinct = np.unique(scores[scores > 0])[::-1]
    if distinct.size == 0:
        keep = np.zeros((k, k), dtype=bool)
        lam = 0.0
    else:
        lam = float(distinct[min(k - 2, distinct.size - 1)])
        keep = (adj >= lam) & off
    touched = keep.any(axis=0) | keep.any(axis=1)
    nodes = [int(i) for i in np.nonzero(touched)[0]]
    g = EvolutionGraph(keep, lam, nodes, degenerate=degenerate)
    if protos is not None:
        _, mu_t = as_arrays(protos)
        g.node_labels = {i: f"C{i} t={mu_t[i]:.6g}" for i in nodes}
        g.backward = {(i, j) for i, j in g.arcs if mu_t[i] > mu_t[j]}
    return g


def entity_path(ds: Dataset, labels: np.ndarray, entity) -> list[int]:
    """Run-length-compressed cluster sequence of one entity."""
    e = ds.entity_position(entity)
    series = labels[ds.entity_slice(e)]
    path = [int(series[0])]
    for c in series[1:]:
        if c != path[-1]:
            path.append(int(c))
    return path


def all_paths(ds: Dataset, labels: np.ndarray) -> dict:
    return {ent: entity_path(ds, labels, ent) for ent in ds.entity_ids}


def _dot_id(text: str) -> str:
    escaped = str(text).replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n")
    return '"' + escaped + '"'


def export_dot(g: EvolutionGraph, protos=None, per_arc_entity_counts: np.ndarray | None = None,
               name: str = "evolution") -> str:
    lines = [f"digraph {name} {{"]
    mu_t = as_arrays(protos)[1] if protos is not None else None
    for i in g.nodes:
        label = f"C{i}" if mu_t is None else f"C{i}\nt={mu_t[i]:.6g}"
        lines.append(f"  C{i} [label={_dot_id(label)}];")
    for i, j in g.arcs:
        attrs = []
        if per_arc_entity_counts is not None:
            attrs.append(f"label={_dot_id(int(per_arc_entity_counts[i, j]))}")
        if (i, j) in g.backward:
            attrs.append("style=dashed")
        suffix = f" [{', '.join(attrs)}]" if attrs else ""
        lines.append(f"  C{i} -> C{j}{suffix};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def population_table(ds: Dataset, labels: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Number of observations in each cluster at each distinct timestamp."""
    times = np.unique(ds.times)
    table = np.zeros((len(times), k), dtype=np.int64)
    np.add.at(table, (np.searchsorted(times, ds.times), labels), 1)
    return times, table


def population_csv(ds: Dataset, labels: np.ndarray, k: int) -> str:
    times, table = population_table(ds, labels, k)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["time", *(f"C{j}" for j in range(k))])
    for t, row in zip(times, table):
        w.writerow([f"{t:.17g}", *row.tolist()])
    return buf.getvalue()
