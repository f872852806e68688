"""Self-checks behind ``crsfl verify``.

Each suite compares a production code path with an independent reference:

* gradients   analytic backprop vs central finite differences
* selector    GA selection vs exhaustive enumeration, plus the fitness
              kernel vs a plain-Python re-derivation on every mask
* splitequiv  three-call split training vs the monolithic network
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rng as streams
from .selector import (Candidate, GAConfig, ObjectiveWeights, all_masks, brute_force_select,
                       ga_search, _Problem)
from .splitnn import MonolithicNet, SplitModel, init_params, param_count, split_train_step

VERIFY_STREAM = 90


@dataclass
class SuiteReport:
    name: str
    passed: bool
    summary: str
    details: dict = field(default_factory=dict)

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.summary}"


# -------------------------------------------------------------------- gradients


def _random_net(g: np.random.Generator, max_width: int = 8):
    n_hidden = int(g.integers(1, 4))
    dims = [int(g.integers(2, max_width + 1))]
    dims += [int(g.integers(2, max_width + 1)) for _ in range(n_hidden)]
    dims.append(int(g.integers(2, 6)))
    return tuple(dims)


def finite_difference_grads(net: MonolithicNet, X: np.ndarray, y: np.ndarray,
                            eps: float = 1e-5) -> list[np.ndarray]:
    out = []
    for p in net.params:
        num = np.zeros_like(p)
        flat, nflat = p.reshape(-1), num.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + eps
            up = net.loss(X, y)
            flat[i] = keep - eps
            down = net.loss(X, y)
            flat[i] = keep
            nflat[i] = (up - down) / (2 * eps)
        out.append(num)
    return out


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    denom = np.linalg.norm(a) + np.linalg.norm(b)
    return 0.0 if denom == 0 else float(np.linalg.norm(a - b) / denom)


def check_gradients(trials: int = 20, seed: int = 0, tol: float = 1e-5) -> SuiteReport:
    worst = 0.0
    for t in range(trials):
        g = streams.keyed_rng(seed, VERIFY_STREAM, 1, t)
        dims = _random_net(g)
        params = init_params(dims, int(g.integers(0, 2**31)))
        # non-zero biases so every parameter gets exercised
        params = [p + (0.1 * g.standard_normal(p.shape) if p.ndim == 1 else 0.0) for p in params]
        net = MonolithicNet(dims, params)
        n = int(g.integers(3, 9))
        X = g.standard_normal((n, dims[0]))
        y = g.integers(0, dims[-1], n)
        _, analytic = net.gradients(X, y)
        numeric = finite_difference_grads(net, X, y)
        err = max(relative_error(a, b) for a, b in zip(analytic, numeric))
        worst = max(worst, err)
    ok = worst < tol
    return SuiteReport("gradients", ok, f"{trials} nets, max rel err {worst:.3e} (tol {tol:g})",
                       {"max_rel_err": worst})


# --------------------------------------------------------------------- selector


def reference_fitness(mask, candidates, weights) -> float:
    """Plain-Python restatement of the weighted objective, one mask at a time."""
    n = len(candidates)
    chosen = [c for c, b in zip(candidates, mask) if b]
    if not chosen:
        return 0.0
    w1, w2, w3, w4, w5 = weights.as_tuple()
    n_hat = len(chosen) / n
    u_hat = len({c.owner_label for c in chosen}) / len({c.owner_label for c in candidates})
    s_hat = sum(c.sample_count for c in chosen) / sum(c.sample_count for c in candidates)

    def pvar(xs):
        m = sum(xs) / len(xs)
        return sum((x - m) ** 2 for x in xs) / len(xs)

    all_var = pvar([c.predicted_pro for c in candidates]) if n > 1 else 0.0
    if len(chosen) > 1 and all_var > 0:
        v_hat = pvar([c.predicted_pro for c in chosen]) / all_var
    else:
        v_hat = 0.0
    total_h = sum(c.hist_flag for c in candidates)
    h_hat = sum(c.hist_flag for c in chosen) / total_h if total_h else 0.0
    return w1 * n_hat + w2 * u_hat + w3 * s_hat - w4 * v_hat + w5 * h_hat


def random_instance(g: np.random.Generator, n: int) -> tuple[list[Candidate], ObjectiveWeights]:
    n_labels = int(g.integers(1, n + 1))
    cands = [Candidate(device_id=i, owner_label=int(g.integers(0, n_labels)),
                       sample_count=int(g.integers(50, 200)),
                       predicted_pro=float(g.uniform(0.1, 3.0)),
                       hist_flag=int(g.integers(0, 2)))
             for i in range(n)]
    w = g.dirichlet(np.ones(5))
    w[-1] = 1.0 - w[:-1].sum()
    return cands, ObjectiveWeights(*(float(x) for x in w))


def check_selector(trials: int = 100, seed: int = 0, max_n: int = 15,
                   ratio: float = 0.95, need: int = 95,
                   ga_cfg: GAConfig | None = None) -> SuiteReport:
    ga_cfg = ga_cfg or GAConfig()
    gaps, hits, worst_fit = [], 0, 0.0
    for t in range(trials):
        g = streams.keyed_rng(seed, VERIFY_STREAM, 2, t)
        n = int(g.integers(1, max_n + 1))
        cands, weights = random_instance(g, n)
        masks = all_masks(n)
        kernel = _Problem(cands, weights).evaluate(masks)
        ref = np.array([reference_fitness(m, cands, weights) for m in masks])
        worst_fit = max(worst_fit, float(np.abs(kernel - ref).max()))
        best_mask, best = brute_force_select(cands, weights)
        if best != ref.max():
            worst_fit = max(worst_fit, abs(best - float(ref.max())))
        got = ga_search(cands, weights, ga_cfg, seed=t).fitness
        gap = (best - got) / abs(best) if best != 0 else 0.0
        gaps.append(gap)
        hits += gap <= 1.0 - ratio
    fitness_ok = worst_fit <= 1e-12
    ok = hits >= need and fitness_ok
    hist, edges = np.histogram(gaps, bins=[0.0, 1e-12, 0.01, 0.02, 0.05, 0.1, 1.0, np.inf])
    rows = [f"  gap [{lo:g}, {hi:g}): {c}" for lo, hi, c in zip(edges[:-1], edges[1:], hist)]
    summary = (f"{hits}/{trials} within {ratio:g} of optimum (need {need}); "
               f"max |kernel - reference| {worst_fit:.1e}")
    return SuiteReport("selector", ok, summary + "\n" + "\n".join(rows),
                       {"hits": hits, "gaps": gaps, "max_fitness_err": worst_fit})


# ------------------------------------------------------------------- splitequiv


def _max_rel_drift(a, b) -> float:
    worst = 0.0
    for x, y in zip(a, b):
        scale = np.maximum(np.abs(y), 1e-300)
        worst = max(worst, float((np.abs(x - y) / scale).max()))
    return worst


def check_split_equivalence(trials: int = 20, seed: int = 0, tol: float = 1e-12,
                            max_params: int = 5000) -> SuiteReport:
    worst, biggest = 0.0, 0
    for t in range(trials):
        g = streams.keyed_rng(seed, VERIFY_STREAM, 3, t)
        while True:
            dims = _random_net(g, max_width=32)
            params = init_params(dims, int(g.integers(0, 2**31)))
            if param_count(params) <= max_params:
                break
        biggest = max(biggest, param_count(params))
        cut = int(g.integers(1, len(dims) - 1))
        lr = float(g.uniform(0.001, 0.1))
        split = SplitModel.from_params(dims, cut, params, lr, 0.9)
        mono = MonolithicNet(dims, params, lr, 0.9)
        for _ in range(int(g.integers(1, 11))):
            bs = int(g.integers(1, 17))
            X = g.standard_normal((bs, dims[0]))
            y = g.integers(0, dims[-1], bs)
            split_train_step(split, X, y)
            mono.train_step(X, y)
        worst = max(worst, _max_rel_drift(split.all_params(), mono.params))
    ok = worst <= tol
    return SuiteReport("splitequiv", ok,
                       f"{trials} nets (<= {biggest} params), max rel drift {worst:.3e}",
                       {"max_drift": worst})


SUITES = {
    "gradients": check_gradients,
    "selector": check_selector,
    "splitequiv": check_split_equivalence,
}


def run_suites(names, seed: int = 0) -> list[SuiteReport]:
    return [SUITES[n](seed=seed) for n in names]
