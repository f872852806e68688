"""Random-forest usage prediction and the predicted-availability filter.

One forest per resource dimension learns how much memory, processing and
disk a local training round consumes from the device's round features::

    (available mem, available pro, available dis, sample_count, client_param_count)

Trees are plain CART regressors grown greedily on squared error; the split
search lives in :mod:`crsfl.kernels`.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from . import rng as streams
from .resources import (ResourceVector, RoundAvailability, UsageObservation, expected_usage,
                        realize_usage, sample_availability)

DIMENSIONS = ("mem", "pro", "dis")
N_FEATURES = 5
PROFILING_STREAM = 1


@dataclass(frozen=True)
class RoundHistoryRecord:
    device_id: int
    round: int
    features: tuple[float, float, float, float, float]
    target: float
    dimension: str


def round_features(avail: RoundAvailability, client_param_count: int) -> tuple[float, ...]:
    a = avail.available
    return (a.mem, a.pro, a.dis, float(avail.sample_count), float(client_param_count))


class RegressionTree:
    """Array-backed binary tree; ``feature[i] == -1`` marks a leaf."""

    def __init__(self, max_depth: int | None = 6, min_leaf: int = 2):
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.feature: np.ndarray | None = None
        self.threshold: np.ndarray | None = None
        self.left: np.ndarray | None = None
        self.right: np.ndarray | None = None
        self.value: np.ndarray | None = None
        self.depth = 0

    def fit(self, X: np.ndarray, y: np.ndarray) -> "RegressionTree":
        X = np.ascontiguousarray(X, dtype=np.float64)
        y = np.ascontiguousarray(y, dtype=np.float64)
        feature, threshold, left, right, value = [], [], [], [], []

        def grow(idx: np.ndarray, depth: int) -> int:
            node = len(feature)
            feature.append(-1)
            threshold.append(np.nan)
            left.append(-1)
            right.append(-1)
            ys = y[idx]
            value.append(float(ys.sum() / len(ys)))
            self.depth = max(self.depth, depth)
            if (self.max_depth is not None and depth >= self.max_depth) \
                    or len(idx) < 2 * self.min_leaf or ys.min() == ys.max():
                return node
            f, thr, sse, parent = kernels.best_split(X[idx], ys, self.min_leaf)
            if f < 0 or not sse < parent:
                return node
            go_left = X[idx, f] <= thr
            feature[node] = f
            threshold[node] = thr
            left[node] = grow(idx[go_left], depth + 1)
            right[node] = grow(idx[~go_left], depth + 1)
            return node

        self.depth = 0
        grow(np.arange(len(y)), 0)
        self.feature = np.array(feature, dtype=np.int64)
        self.threshold = np.array(threshold, dtype=np.float64)
        self.left = np.array(left, dtype=np.int64)
        self.right = np.array(right, dtype=np.int64)
        self.value = np.array(value, dtype=np.float64)
        return self

    @property
    def fitted(self) -> bool:
        return self.value is not None

    def predict(self, X: np.ndarray) -> np.ndarray:
        if not self.fitted:
            raise RuntimeError("tree is not fitted")
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        node = np.zeros(len(X), dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            rows = np.nonzero(active)[0]
            n = node[rows]
            go_left = X[rows, self.feature[n]] <= self.threshold[n]
            node[rows] = np.where(go_left, self.left[n], self.right[n])
            active = self.feature[node] >= 0
        return self.value[node]

    def structure(self) -> tuple:
        """Hashable snapshot of the fitted tree; leaves carry no threshold."""
        thr = tuple(None if f < 0 else float(t) for f, t in zip(self.feature, self.threshold))
        return (tuple(int(f) for f in self.feature), thr, tuple(float(v) for v in self.value))


@dataclass
class Forest:
    trees: list[RegressionTree]
    dimension: str

    def predict(self, X: np.ndarray) -> np.ndarray:
        if not self.trees or not all(t.fitted for t in self.trees):
            raise RuntimeError(f"{self.dimension} forest is not fitted")
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        total = np.zeros(len(X))
        for tree in self.trees:
            total = total + tree.predict(X)
        return total / len(self.trees)


def fit_forest(history: Sequence[RoundHistoryRecord], n_trees: int = 20, seed: int = 0,
               max_depth: int | None = 6, min_leaf: int = 2, bootstrap: bool = True) -> Forest:
    if len(history) < 2:
        raise ValueError("fit_forest needs at least two history records")
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    dims = {r.dimension for r in history}
    if len(dims) != 1:
        raise ValueError(f"history mixes dimensions {sorted(dims)}")
    dim = dims.pop()
    X = np.array([r.features for r in history], dtype=np.float64)
    y = np.array([r.target for r in history], dtype=np.float64)
    n = len(y)
    trees = []
    for t in range(n_trees):
        if bootstrap:
            idx = streams.keyed_rng(seed, streams.FOREST, DIMENSIONS.index(dim), t).integers(0, n, n)
        else:
            idx = np.arange(n)
        trees.append(RegressionTree(max_depth, min_leaf).fit(X[idx], y[idx]))
    return Forest(trees, dim)


def fit_forests(history: Sequence[RoundHistoryRecord], n_trees: int = 20, seed: int = 0,
                max_depth: int | None = 6, min_leaf: int = 2) -> tuple[Forest, Forest, Forest]:
    by_dim = {d: [r for r in history if r.dimension == d] for d in DIMENSIONS}
    return tuple(fit_forest(by_dim[d], n_trees, seed, max_depth, min_leaf)  # type: ignore[return-value]
                 for d in DIMENSIONS)


def predict_usage(forests: Sequence[Forest], availability: RoundAvailability,
                  client_param_count: int) -> ResourceVector:
    x = np.array([round_features(availability, client_param_count)])
    return ResourceVector(*(float(f.predict(x)[0]) for f in forests))


def predict_many(forests: Sequence[Forest], availabilities: Sequence[RoundAvailability],
                 client_param_count: int) -> list[ResourceVector]:
    if not availabilities:
        return []
    X = np.array([round_features(a, client_param_count) for a in availabilities])
    cols = [f.predict(X) for f in forests]
    return [ResourceVector(float(cols[0][i]), float(cols[1][i]), float(cols[2][i]))
            for i in range(len(availabilities))]


def availability_filter(candidates: Sequence[RoundAvailability], forests: Sequence[Forest],
                        client_param_count: int) -> set[int]:
    """Ids whose predicted usage fits inside their reported availability."""
    preds = predict_many(forests, candidates, client_param_count)
    return {a.device_id for a, p in zip(candidates, preds) if p.fits_within(a.available)}


def observation_records(avail: RoundAvailability, used: ResourceVector,
                        client_param_count: int) -> list[RoundHistoryRecord]:
    feats = round_features(avail, client_param_count)
    return [RoundHistoryRecord(avail.device_id, avail.round, feats, float(v), d)
            for d, v in zip(DIMENSIONS, used)]


def bootstrap_history(devices: Iterable, rounds: int, seed: int, client_param_count: int,
                      resources_cfg, bytes_per_real: int = 8,
                      observations: list[UsageObservation] | None = None
                      ) -> list[RoundHistoryRecord]:
    """Profile every device for ``rounds`` rounds on a dedicated random stream.

    Records come back sorted by (device, round, dimension order).
    """
    if rounds < 2:
        raise ValueError("bootstrap_history needs rounds >= 2")
    records = []
    for d in sorted(devices, key=lambda d: d.id):
        for r in range(rounds):
            avail = sample_availability(d, r, seed, resources_cfg.avail_floor,
                                        stream=PROFILING_STREAM)
            mean = expected_usage(d.shard.n_train, client_param_count, resources_cfg,
                                  bytes_per_real)
            used = realize_usage(mean, r, d.id, seed, resources_cfg.noise_sd,
                                 stream=PROFILING_STREAM)
            records.extend(observation_records(avail, used, client_param_count))
            if observations is not None:
                observations.append(UsageObservation(d.id, r, used,
                                                     used.fits_within(avail.available)))
    return records


CSV_HEADER = ["device_id", "round", "feat1", "feat2", "feat3", "feat4", "feat5", "target",
              "dimension"]


def write_history_csv(records: Sequence[RoundHistoryRecord], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in records:
            w.writerow([r.device_id, r.round, *(repr(float(v)) for v in r.features),
                        repr(r.target), r.dimension])


def read_history_csv(path: str | Path) -> list[RoundHistoryRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [RoundHistoryRecord(int(row["device_id"]), int(row["round"]),
                                   tuple(float(row[f"feat{i}"]) for i in range(1, 6)),  # type: ignore[arg-type]
                                   float(row["target"]), row["dimension"])
                for row in csv.DictReader(fh)]
