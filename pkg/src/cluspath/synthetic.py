"""Planted evolution-path datasets with known phase labels."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Dataset, from_records

# Five phases on a 12-step timeline.  Phase 0 opens every path; phases 1/2
# share the middle period, 3/4 the late one.  Phases 0 and 3 look alike
# descriptively (closest pair, unit separation) and differ mostly in time.
DEFAULT_CENTERS = np.array([[0.0, 0.0], [2.0, 1.5], [2.0, -1.5], [0.0, 1.0], [4.0, 0.0]])
DEFAULT_WINDOWS = [(0, 4), (4, 8), (4, 8), (8, 12), (8, 12)]
DEFAULT_ROUTES = [(0, 1, 3), (0, 2, 4), (0, 1, 4), (0, 2, 3)]


@dataclass
class PlantedData:
    dataset: Dataset
    labels: np.ndarray
    paths: dict
    centers: np.ndarray
    windows: list

    def truth(self) -> dict:
        return {
            "assignment": [int(c) for c in self.labels],
            "paths": {str(k): v for k, v in self.paths.items()},
            "centers": self.centers.tolist(),
            "windows": [list(w) for w in self.windows],
        }


def planted_paths(n_entities: int = 12, noise: float = 0.1, seed: int = 0,
                  centers=None, windows=None, routes=None) -> PlantedData:
    """Entities walk along phase routes; each observation sits at its phase center plus noise.

    ``noise`` is a standard deviation expressed as a fraction of the smallest
    distance between phase centers.  Entity ``e`` follows ``routes[e % len(routes)]``.
    """
    centers = DEFAULT_CENTERS if centers is None else np.asarray(centers, dtype=float)
    windows = DEFAULT_WINDOWS if windows is None else list(windows)
    routes = DEFAULT_ROUTES if routes is None else list(routes)
    if n_entities < 1:
        raise ValueError("at least one entity is required")
    if not noise >= 0:
        raise ValueError("noise must be non-negative")
    if centers.ndim != 2 or len(centers) < 2:
        raise ValueError("at least two phase centers are required")
    if len(windows) != len(centers):
        raise ValueError("one time window per phase is required")
    for route in routes:
        if any(not 0 <= p < len(centers) for p in route):
            raise ValueError(f"route {route} names an unknown phase")
        for a, b in zip(route, route[1:]):
            if windows[a][1] != windows[b][0]:
                raise ValueError(f"route {route}: windows of phases {a} and {b} are not adjacent")
    diff = centers[:, None, :] - centers[None, :, :]
    dist = np.sqrt(np.sum(diff ** 2, axis=2))
    sep = dist[~np.eye(len(centers), dtype=bool)].min()
    rng = np.random.default_rng(seed)
    records, labels, paths = [], [], {}
    for e in range(n_entities):
        route = routes[e % len(routes)]
        name = f"e{e:02d}"
        paths[name] = list(route)
        for phase in route:
            lo, hi = windows[phase]
            for t in range(lo, hi):
                x = centers[phase] + noise * sep * rng.standard_normal(centers.shape[1])
                records.append((name, float(t), x.tolist()))
                labels.append(phase)
    ds = from_records(records)
    return PlantedData(ds, np.array(labels, dtype=np.intp), paths, centers, windows)
