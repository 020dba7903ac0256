"""Domain types, dataset container and preprocessing.

Observations are stored in canonical order: entities in order of first
appearance in the input, and within an entity by ascending timestamp.  Every
other module relies on that layout (an entity's observations occupy one
contiguous slice).
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Hashable, Sequence

import numpy as np

logger = logging.getLogger(__name__)


class DataError(ValueError):
    """Raised for malformed or inconsistent input data."""


class DegenerateDatasetError(DataError):
    pass


@dataclass(frozen=True)
class Observation:
    entity_id: Hashable
    timestamp: float
    descriptor: tuple[float, ...]


@dataclass(frozen=True)
class HyperParams:
    alpha: float
    beta: float
    delta: float
    lambda1: float
    lambda2: float
    lambda3: float
    k: int

    def __post_init__(self):
        if not -1.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [-1, 1], got {self.alpha}")
        if self.beta < 0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        if not self.delta > 0:
            raise ValueError(f"delta must be > 0, got {self.delta}")
        for name in ("lambda1", "lambda2", "lambda3"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")
        if int(self.k) != self.k or self.k < 2:
            raise ValueError(f"k must be an integer >= 2, got {self.k}")

    @property
    def lambdas(self) -> tuple[float, float, float]:
        return (self.lambda1, self.lambda2, self.lambda3)

    @property
    def genome(self) -> tuple[float, ...]:
        return (self.alpha, self.beta, self.delta, self.lambda1, self.lambda2, self.lambda3)

    @classmethod
    def from_genome(cls, genome: Sequence[float], k: int) -> "HyperParams":
        a, b, d, l1, l2, l3 = (float(g) for g in genome)
        return cls(alpha=a, beta=b, delta=d, lambda1=l1, lambda2=l2, lambda3=l3, k=int(k))

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "beta": self.beta,
            "delta": self.delta,
            "lambda1": self.lambda1,
            "lambda2": self.lambda2,
            "lambda3": self.lambda3,
            "k": self.k,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HyperParams":
        return cls(**{key: d[key] for key in ("alpha", "beta", "delta", "lambda1", "lambda2", "lambda3", "k")})


@dataclass(frozen=True)
class Prototype:
    mu_t: float
    mu_d: tuple[float, ...]

    def __post_init__(self):
        if not math.isfinite(self.mu_t) or not all(math.isfinite(v) for v in self.mu_d):
            raise ValueError("prototype components must be finite")


def prototypes_to_arrays(protos: Sequence[Prototype]) -> tuple[np.ndarray, np.ndarray]:
    """Stack prototypes into ``(mu_d[k, d], mu_t[k])`` arrays."""
    mu_d = np.array([p.mu_d for p in protos], dtype=float)
    mu_t = np.array([p.mu_t for p in protos], dtype=float)
    return mu_d, mu_t


def arrays_to_prototypes(mu_d: np.ndarray, mu_t: np.ndarray) -> list[Prototype]:
    return [Prototype(float(t), tuple(float(v) for v in row)) for row, t in zip(mu_d, mu_t)]


@dataclass(frozen=True, eq=False)
class Dataset:
    """Entity observation series in canonical order.

    ``X`` holds the descriptors (n x d), ``times`` the timestamps and
    ``entity_of`` the entity position of each observation.  ``offsets`` has
    one more entry than there are entities; entity ``e`` owns observations
    ``offsets[e]:offsets[e + 1]``.
    """

    entity_ids: tuple
    X: np.ndarray
    times: np.ndarray
    offsets: np.ndarray
    feature_names: tuple[str, ...] = ()
    diam_d: float = field(init=False)
    diam_t: float = field(init=False)

    def __post_init__(self):
        X = np.ascontiguousarray(self.X, dtype=float)
        times = np.ascontiguousarray(self.times, dtype=float)
        offsets = np.asarray(self.offsets, dtype=np.intp)
        if X.ndim != 2 or X.shape[1] < 1:
            raise DataError("descriptors must form a non-empty 2-D array")
        if times.shape != (X.shape[0],):
            raise DataError("one timestamp per observation is required")
        if offsets[0] != 0 or offsets[-1] != X.shape[0] or np.any(np.diff(offsets) < 1):
            raise DataError("entity offsets must partition the observations")
        if len(offsets) != len(self.entity_ids) + 1:
            raise DataError("offsets and entity_ids disagree")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(times))):
            raise DataError("timestamps and descriptors must be finite")
        for e in range(len(self.entity_ids)):
            if np.any(np.diff(times[offsets[e]:offsets[e + 1]]) <= 0):
                raise DataError(f"timestamps of entity {self.entity_ids[e]!r} are not strictly increasing")
        X.setflags(write=False)
        times.setflags(write=False)
        offsets.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "offsets", offsets)
        if not self.feature_names:
            object.__setattr__(self, "feature_names", tuple(f"f{j + 1}" for j in range(X.shape[1])))
        dd, dt = _pairwise_diameters(X, times)
        object.__setattr__(self, "diam_d", dd)
        object.__setattr__(self, "diam_t", dt)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    @property
    def n_entities(self) -> int:
        return len(self.entity_ids)

    @property
    def entity_of(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_entities), np.diff(self.offsets))

    @property
    def degenerate(self) -> bool:
        return self.diam_d == 0.0 or self.diam_t == 0.0

    @property
    def observations(self) -> list[Observation]:
        ent = self.entity_of
        return [
            Observation(self.entity_ids[ent[i]], float(self.times[i]), tuple(float(v) for v in self.X[i]))
            for i in range(self.n)
        ]

    def entity_slice(self, e: int) -> slice:
        return slice(int(self.offsets[e]), int(self.offsets[e + 1]))

    def entity_position(self, entity_id) -> int:
        try:
            return self.entity_ids.index(entity_id)
        except ValueError:
            raise KeyError(f"unknown entity {entity_id!r}") from None

    def with_descriptors(self, X: np.ndarray) -> "Dataset":
        return Dataset(self.entity_ids, X, self.times, self.offsets, self.feature_names)

    def safe_diameters(self) -> tuple[float, float]:
        """Diameters with zeros replaced by 1, for use inside dissimilarities."""
        dd, dt = self.diam_d, self.diam_t
        if dd == 0.0 or dt == 0.0:
            logger.warning("degenerate dataset diameter (d=%g, t=%g); using 1 in its place", dd, dt)
        return (dd if dd > 0 else 1.0, dt if dt > 0 else 1.0)

    # serialization ----------------------------------------------------

    def to_dict(self) -> dict:
        ent = self.entity_of
        return {
            "dim": self.dim,
            "features": list(self.feature_names),
            "entities": list(self.entity_ids),
            "observations": [
                {"entity": self.entity_ids[ent[i]], "time": float(self.times[i]),
                 "descriptor": [float(v) for v in self.X[i]]}
                for i in range(self.n)
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Dataset":
        obs = [(o["entity"], float(o["time"]), [float(v) for v in o["descriptor"]]) for o in d["observations"]]
        ds = from_records(obs, feature_names=d.get("features") or None, entity_order=d.get("entities"))
        if ds.dim != d["dim"]:
            raise DataError(f"declared dim {d['dim']} does not match descriptors ({ds.dim})")
        return ds

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Dataset":
        return cls.from_dict(json.loads(text))

    def fingerprint(self) -> str:
        """sha256 of the canonical serialization."""
        return hashlib.sha256(self.to_json().encode()).hexdigest()

    def equals(self, other: "Dataset") -> bool:
        return (
            self.entity_ids == other.entity_ids
            and self.feature_names == other.feature_names
            and np.array_equal(self.X, other.X)
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.offsets, other.offsets)
        )


def _pairwise_diameters(X: np.ndarray, times: np.ndarray) -> tuple[float, float]:
    n, d = X.shape
    if n < 2:
        return 0.0, 0.0
    # exhaustive scan, chunked to bound the (rows x n x d) difference tensor
    rows = max(1, 4_000_000 // (n * d))
    best = 0.0
    for lo in range(0, n, rows):
        diff = X[lo:lo + rows, None, :] - X[None, :, :]
        best = max(best, float(np.max(np.einsum("ijk,ijk->ij", diff, diff))))
    return math.sqrt(best), float(times.max() - times.min())


def diameters(ds: Dataset) -> tuple[float, float]:
    """Exact descriptive and temporal diameters of ``ds``."""
    if ds.n < 2:
        raise DegenerateDatasetError("diameters need at least two observations")
    if ds.diam_d == 0.0 or ds.diam_t == 0.0:
        logger.warning("degenerate diameter: d=%g t=%g", ds.diam_d, ds.diam_t)
    return ds.diam_d, ds.diam_t


def from_records(records, feature_names=None, entity_order=None) -> Dataset:
    """Build a Dataset from ``(entity, time, descriptor)`` triples in any order."""
    groups: dict = {}
    for ent, t, desc in records:
        groups.setdefault(ent, []).append((float(t), [float(v) for v in desc]))
    if not groups:
        raise DataError("no observations")
    order = list(entity_order) if entity_order is not None else list(groups)
    if set(order) != set(groups):
        raise DataError("entity list does not match observations")
    dim = len(next(iter(groups.values()))[0][1])
    X, times, offsets = [], [], [0]
    for ent in order:
        rows = sorted(groups[ent], key=lambda r: r[0])
        for (t0, _), (t1, _) in zip(rows, rows[1:]):
            if t0 == t1:
                raise DataError(f"duplicate timestamp {t0} for entity {ent!r}")
        for t, desc in rows:
            if len(desc) != dim:
                raise DataError(f"descriptor length {len(desc)} != {dim}")
            X.append(desc)
            times.append(t)
        offsets.append(len(times))
    return Dataset(tuple(order), np.array(X, dtype=float), np.array(times), np.array(offsets),
                   tuple(feature_names) if feature_names else ())


def load_long_csv(path, entity_col: str = "entity", time_col: str = "time",
                  feature_cols: Sequence[str] | None = None) -> Dataset:
    """Read a long-format CSV (one row per entity/time pair).

    Feature columns default to every column other than the entity and time
    columns.  Entity identifiers are kept as strings.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        for col in (entity_col, time_col):
            if col not in header:
                raise DataError(f"{path}: missing column {col!r}")
        if feature_cols is None:
            feature_cols = [h for h in header if h not in (entity_col, time_col)]
        missing = [c for c in feature_cols if c not in header]
        if missing:
            raise DataError(f"{path}: missing feature columns {missing}")
        if not feature_cols:
            raise DataError(f"{path}: no feature columns")
        ei, ti = header.index(entity_col), header.index(time_col)
        fi = [header.index(c) for c in feature_cols]
        seen: dict = {}
        records = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            ent = row[ei].strip()
            try:
                t = float(row[ti])
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric time {row[ti]!r}") from None
            try:
                desc = [float(row[j]) for j in fi]
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric feature value") from None
            if not math.isfinite(t) or not all(math.isfinite(v) for v in desc):
                raise DataError(f"{path}:{lineno}: non-finite value")
            if (ent, t) in seen:
                raise DataError(f"{path}:{lineno}: duplicate (entity, time) = ({ent}, {row[ti].strip()}); "
                                f"first seen on line {seen[(ent, t)]}")
            seen[(ent, t)] = lineno
            records.append((ent, t, desc))
    if not records:
        raise DataError(f"{path}: no data rows")
    return from_records(records, feature_names=feature_cols)


def write_long_csv(ds: Dataset, path) -> None:
    ent = ds.entity_of
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["entity", "time", *ds.feature_names])
        for i in range(ds.n):
            w.writerow([ds.entity_ids[ent[i]], f"{ds.times[i]:.17g}", *(f"{v:.17g}" for v in ds.X[i])])


def preprocess(ds: Dataset, remove_entity_mean: bool = True, normalize: bool = True) -> Dataset:
    """Subtract per-entity feature means, then z-score each feature."""
    X = np.array(ds.X, dtype=float)
    if remove_entity_mean:
        for e in range(ds.n_entities):
            sl = ds.entity_slice(e)
            X[sl] -= X[sl].mean(axis=0)
    if normalize:
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        for j in range(X.shape[1]):
            if std[j] <= 1e-12 * max(1.0, abs(mean[j])):
                logger.warning("feature %s has zero variance; set to 0", ds.feature_names[j])
                X[:, j] = 0.0
            else:
                X[:, j] = (X[:, j] - mean[j]) / std[j]
    return ds.with_descriptors(X)
