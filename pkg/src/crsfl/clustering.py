"""k-means over device capacity vectors.

Capacities are min-max normalised per dimension before clustering so that
megabyte-scale memory does not swamp unit-scale processing.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import rng as streams
from .resources import ResourceVector


@dataclass(frozen=True)
class ClusterAssignment:
    k: int
    centroids: np.ndarray          # (k, 3), normalised space
    membership: dict[int, int]     # device id -> cluster index
    order: tuple[int, ...]         # cluster indices, most capable first
    lo: np.ndarray
    span: np.ndarray
    inertia_history: list[float] = field(default_factory=list)
    n_iter: int = 0

    def members(self, cluster: int) -> list[int]:
        return sorted(d for d, c in self.membership.items() if c == cluster)

    def normalise(self, vectors: np.ndarray) -> np.ndarray:
        return normalise(vectors, self.lo, self.span)


def normalise(X: np.ndarray, lo: np.ndarray, span: np.ndarray) -> np.ndarray:
    safe = np.where(span > 0, span, 1.0)
    return np.where(span > 0, (X - lo) / safe, 0.0)


def _assign(X: np.ndarray, C: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d2 = ((X[:, None, :] - C[None, :, :]) ** 2).sum(axis=2)
    labels = np.argmin(d2, axis=1)          # first minimum: lower cluster index wins ties
    return labels, d2[np.arange(len(X)), labels]


def _inertia(X: np.ndarray, C: np.ndarray, labels: np.ndarray) -> float:
    return float(((X - C[labels]) ** 2).sum())


def kmeans_fit(points: Sequence[tuple[int, ResourceVector]], k: int, seed: int,
               max_iter: int = 100, tol: float = 1e-6, n_init: int = 10) -> ClusterAssignment:
    """Lloyd's algorithm from ``n_init`` random starts; the lowest final SSE wins.

    Each start draws k distinct normalised points as centroids. Ties between
    starts keep the earlier one.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    if n_init < 1:
        raise ValueError("n_init must be >= 1")
    if k > len(points):
        raise ValueError(f"k={k} exceeds the number of points ({len(points)})")
    ids = [int(p[0]) for p in points]
    raw = np.array([tuple(p[1]) for p in points], dtype=np.float64).reshape(len(points), 3)
    lo = raw.min(axis=0)
    span = raw.max(axis=0) - lo
    X = normalise(raw, lo, span)

    distinct = np.unique(X, axis=0)
    if k > len(distinct):
        raise ValueError(f"k={k} exceeds the number of distinct points ({len(distinct)})")

    best = None
    for start in range(n_init):
        g = streams.keyed_rng(seed, streams.KMEANS, start)
        C0 = distinct[g.choice(len(distinct), size=k, replace=False)].copy()
        run = _lloyd(X, C0, k, max_iter, tol)
        if best is None or run[3] < best[3]:
            best = run
    C, labels, history, final_sse, n_iter = best

    membership = {d: int(c) for d, c in zip(ids, labels)}
    assignment = ClusterAssignment(k, C, membership, tuple(range(k)), lo, span, history, n_iter)
    order = order_clusters(assignment, X_by_id=dict(zip(ids, X)))
    return ClusterAssignment(k, C, membership, order, lo, span, history, n_iter)


def _lloyd(X, C, k, max_iter, tol):
    history: list[float] = []
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        labels, dist = _assign(X, C)
        labels = _repair_empty(X, C, labels, dist, k)
        new_C = np.array([X[labels == j].mean(axis=0) for j in range(k)])
        shift = float(np.abs(new_C - C).max())
        C = new_C
        history.append(_inertia(X, C, labels))
        if shift < tol:
            break
    labels, _ = _assign(X, C)
    return C, labels, history, _inertia(X, C, labels), n_iter


def _repair_empty(X, C, labels, dist, k):
    labels = labels.copy()
    dist = dist.copy()
    for j in range(k):
        if np.any(labels == j):
            continue
        # donor must not be left empty itself
        counts = np.bincount(labels, minlength=k)
        eligible = counts[labels] > 1
        cand = np.where(eligible, dist, -1.0)
        far = int(np.argmax(cand))
        labels[far] = j
        C[j] = X[far]
        dist[far] = 0.0
    return labels


def order_clusters(assignment: ClusterAssignment, devices=None, X_by_id=None) -> tuple[int, ...]:
    """Cluster indices sorted by descending mean normalised-capacity norm; ties keep index order."""
    if X_by_id is None:
        ids = sorted(assignment.membership)
        raw = np.array([tuple(_capacity_of(devices, d)) for d in ids], dtype=np.float64)
        X_by_id = dict(zip(ids, assignment.normalise(raw)))
    score = []
    for j in range(assignment.k):
        members = [d for d, c in sorted(assignment.membership.items()) if c == j]
        norms = [float(np.linalg.norm(X_by_id[d])) for d in members]
        score.append(sum(norms) / len(norms) if norms else -np.inf)
    return tuple(sorted(range(assignment.k), key=lambda j: (-score[j], j)))


def _capacity_of(devices, device_id):
    for d in devices:
        if d.id == device_id:
            return d.capacity
    raise KeyError(device_id)
