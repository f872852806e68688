"""Weighted multi-objective client selection.

A selection is a 0/1 mask over a cluster's candidate list. Its score is

    F = w1*n + w2*u + w3*s - w4*v + w5*h

with every term scaled against the full candidate set:

* n  selected count / candidate count
* u  distinct selected labels / distinct candidate labels
* s  selected sample sum / candidate sample sum
* v  variance of selected predicted processing use / candidate variance
* h  selected "passed over last time" flags / all such flags

The genetic search (:func:`ga_select`) is the production path;
:func:`brute_force_select` enumerates every mask and serves as its oracle.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from . import rng as streams

MAX_BRUTE_FORCE = 20


@dataclass(frozen=True)
class Candidate:
    device_id: int
    owner_label: int
    sample_count: int
    predicted_pro: float
    hist_flag: int = 0

    def __post_init__(self):
        if self.sample_count < 1:
            raise ValueError("sample_count must be >= 1")
        if self.predicted_pro < 0:
            raise ValueError("predicted_pro must be >= 0")
        if self.hist_flag not in (0, 1):
            raise ValueError("hist_flag must be 0 or 1")


@dataclass(frozen=True)
class ObjectiveWeights:
    w1: float = 0.2
    w2: float = 0.2
    w3: float = 0.2
    w4: float = 0.2
    w5: float = 0.2

    def __post_init__(self):
        ws = self.as_tuple()
        if any(w < 0 or w > 1 for w in ws) or abs(sum(ws) - 1.0) > 1e-9:
            raise ValueError(f"weights must lie in [0, 1] and sum to 1, got {ws}")

    def as_tuple(self) -> tuple[float, ...]:
        return (self.w1, self.w2, self.w3, self.w4, self.w5)


@dataclass(frozen=True)
class GAConfig:
    population: int = 50
    generations: int = 100
    mutation_p: float = 0.05
    patience: int = 20
    crossover_ratio: float = 0.5
    target_fitness: float | None = None

    @classmethod
    def from_selector(cls, sel) -> "GAConfig":
        return cls(sel.population, sel.generations, sel.mutation_p, sel.patience,
                   sel.crossover_ratio, sel.target_fitness)


@dataclass(frozen=True)
class GAResult:
    mask: np.ndarray
    fitness: float
    best_history: list[float]
    generations: int


class _Problem:
    """Candidate arrays and normalisers, computed once per instance."""

    def __init__(self, candidates: Sequence[Candidate], weights: ObjectiveWeights):
        self.n = len(candidates)
        self.samples = np.array([c.sample_count for c in candidates], dtype=np.float64)
        self.pro = np.array([c.predicted_pro for c in candidates], dtype=np.float64)
        self.hist = np.array([c.hist_flag for c in candidates], dtype=np.float64)
        _, codes = np.unique([c.owner_label for c in candidates], return_inverse=True)
        self.labels = np.ascontiguousarray(codes.reshape(-1), dtype=np.int64)
        self.n_labels = int(self.labels.max()) + 1 if self.n else 0
        self.total_samples = float(self.samples.sum())
        self.pro_var = _population_variance(self.pro)
        self.total_hist = float(self.hist.sum())
        self.weights = np.array(weights.as_tuple(), dtype=np.float64)

    def evaluate(self, masks: np.ndarray) -> np.ndarray:
        masks = np.ascontiguousarray(masks, dtype=np.uint8)
        return kernels.batch_fitness(masks, self.samples, self.pro, self.labels, self.hist,
                                     self.weights, self.n_labels, self.total_samples,
                                     self.pro_var, self.total_hist)


def _population_variance(x: np.ndarray) -> float:
    if len(x) < 2:
        return 0.0
    mean = x.sum() / len(x)
    return float(((x - mean) ** 2).sum() / len(x))


def fitness(mask: Sequence[int], candidates: Sequence[Candidate],
            weights: ObjectiveWeights) -> float:
    mask = np.asarray(mask, dtype=np.uint8)
    if mask.ndim != 1 or len(mask) != len(candidates):
        raise ValueError(f"mask length {mask.size} != candidate count {len(candidates)}")
    if len(candidates) == 0:
        return 0.0
    return float(_Problem(candidates, weights).evaluate(mask[None, :])[0])


def ga_search(candidates: Sequence[Candidate], weights: ObjectiveWeights,
              cfg: GAConfig | None = None, seed: int = 0) -> GAResult:
    cfg = cfg or GAConfig()
    if not candidates:
        raise ValueError("ga_select needs at least one candidate")
    prob = _Problem(candidates, weights)
    n, P = prob.n, max(cfg.population, 2)
    keep = P // 2
    n_children = P - keep

    g0 = streams.keyed_rng(seed, streams.GA, 0)
    pop = (g0.random((P, n)) < 0.5).astype(np.uint8)
    pop[0] = 1
    fit = prob.evaluate(pop)

    history = [float(fit.max())]
    stale = 0
    gen = 0
    for gen in range(1, cfg.generations + 1):
        order = np.argsort(-fit, kind="stable")
        parents, parent_fit = pop[order[:keep]], fit[order[:keep]]

        # one stream per generation, consumed in child-index order
        g = streams.keyed_rng(seed, streams.GA, gen)
        pa = g.integers(0, keep, n_children)
        pb = (pa + 1 + g.integers(0, max(keep - 1, 1), n_children)) % keep
        do_cross = g.random(n_children) > cfg.crossover_ratio
        cut = g.integers(1, max(n, 2), n_children)
        flips = g.random((n_children, n)) < cfg.mutation_p

        children = parents[pa].copy()
        if n >= 2:
            cols = np.arange(n)[None, :]
            tail = do_cross[:, None] & (cols >= cut[:, None])
            children = np.where(tail, parents[pb], children)
        children ^= flips.astype(np.uint8)

        pop = np.concatenate([parents, children])
        fit = np.concatenate([parent_fit, prob.evaluate(children)])
        best = float(fit.max())
        stale = stale + 1 if best <= history[-1] else 0
        history.append(max(best, history[-1]))
        if cfg.target_fitness is not None and best >= cfg.target_fitness:
            break
        if stale >= cfg.patience:
            break

    i = int(np.argmax(fit))
    return GAResult(pop[i].copy(), float(fit[i]), history, gen)


def ga_select(candidates: Sequence[Candidate], weights: ObjectiveWeights,
              cfg: GAConfig | None = None, seed: int = 0) -> np.ndarray:
    return ga_search(candidates, weights, cfg, seed).mask


def all_masks(n: int) -> np.ndarray:
    """Every 0/1 vector of length n, in lexicographic order."""
    codes = np.arange(1 << n, dtype=np.int64)
    shifts = np.arange(n - 1, -1, -1, dtype=np.int64)
    return ((codes[:, None] >> shifts[None, :]) & 1).astype(np.uint8)


def brute_force_select(candidates: Sequence[Candidate], weights: ObjectiveWeights
                       ) -> tuple[np.ndarray, float]:
    """Exact optimum by enumeration; ties go to the lexicographically smallest mask."""
    n = len(candidates)
    if n > MAX_BRUTE_FORCE:
        raise ValueError(f"refusing to enumerate 2^{n} masks (limit {MAX_BRUTE_FORCE})")
    if n == 0:
        raise ValueError("brute_force_select needs at least one candidate")
    masks = all_masks(n)
    fit = _Problem(candidates, weights).evaluate(masks)
    i = int(np.argmax(fit))
    return masks[i].copy(), float(fit[i])


@dataclass
class SelectionHistory:
    """Per-device flag: 1 if passed over at its most recent candidacy."""
    flags: dict[int, int] = field(default_factory=dict)

    def flag(self, device_id: int) -> int:
        return self.flags.get(device_id, 0)


def update_history(history: SelectionHistory, candidates: Sequence[Candidate],
                   chosen_mask: Sequence[int]) -> SelectionHistory:
    if len(chosen_mask) != len(candidates):
        raise ValueError("mask length does not match candidates")
    flags = dict(history.flags)
    for c, bit in zip(candidates, chosen_mask):
        flags[c.device_id] = 0 if bit else 1
    return SelectionHistory(flags)


def dump_instance(candidates: Sequence[Candidate], weights: ObjectiveWeights, seed: int,
                  path: str | Path | None = None) -> str:
    doc = {"candidates": [asdict(c) for c in candidates], "weights": list(weights.as_tuple()),
           "seed": seed}
    text = json.dumps(doc, indent=1, sort_keys=True) + "\n"
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def load_instance(source: str | Path) -> tuple[list[Candidate], ObjectiveWeights, int]:
    doc = json.loads(Path(source).read_text(encoding="utf-8"))
    return ([Candidate(**c) for c in doc["candidates"]], ObjectiveWeights(*doc["weights"]),
            int(doc["seed"]))
