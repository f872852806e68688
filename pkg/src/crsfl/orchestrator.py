"""Round loops for the four experiment arms and the cost model behind their metrics.

Arms
----
crsfl  capacity filter -> k-means clusters -> per round and cluster: forest
       availability filter, GA selection, parallel split training, dual FedAvg,
       hand the globals to the next cluster.
csfl   same cluster loop, random selection, no prediction.
sl     one client at a time under a per-round time budget.
cen    the whole network trained on the pooled data.

All arms of one config start from the same initial weights.
"""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import rng as streams
from .clustering import ClusterAssignment, kmeans_fit
from .config import ExperimentConfig
from .population import Device, pooled_dataset, generate_population
from .predictor import bootstrap_history, fit_forests, observation_records, predict_many
from .resources import (MB, UsageObservation, capacity_filter, expected_usage,
                        model_requirements, realize_usage, sample_availability)
from .selector import (Candidate, GAConfig, ObjectiveWeights, SelectionHistory, ga_select,
                       update_history)
from .splitnn import (MonolithicNet, Params, SplitModel, batches, evaluate, fedavg,
                      init_params, param_count, split_train_step)

CSV_HEADER = ("round", "arm", "accuracy", "loss", "dropped", "traffic_mb", "train_time_ms",
              "idle_time_ms", "selected")


class SimulationError(RuntimeError):
    pass


@dataclass
class RoundMetrics:
    round: int
    arm: str
    accuracy: float
    loss: float
    dropped: int
    traffic_mb: float
    train_time_ms: float
    idle_time_ms: float
    selected: int
    wall_clock_ms: float = 0.0

    def csv_row(self) -> list[str]:
        return [str(self.round), self.arm, repr(float(self.accuracy)), repr(float(self.loss)),
                str(self.dropped), repr(float(self.traffic_mb)), repr(float(self.train_time_ms)),
                repr(float(self.idle_time_ms)), str(self.selected)]


# ----------------------------------------------------------------------------- costs


@dataclass(frozen=True)
class ClientWork:
    device_id: int
    samples: int
    processing_units: float
    completed: bool = True


@dataclass(frozen=True)
class CostSummary:
    traffic_mb: float
    train_time_ms: float
    idle_time_ms: float
    wall_clock_ms: float


def client_train_time_ms(samples: int, client_params: int, processing_units: float, costs,
                         epochs: int = 1) -> float:
    return costs.ms_per_sample_param * samples * client_params / processing_units * epochs


def smashed_traffic_bytes(samples: int, cut_width: int, batch_size: int, costs,
                          epochs: int = 1) -> int:
    """Cut-layer activations up plus their gradients down, every batch."""
    n_batches = math.ceil(samples / batch_size)
    per_epoch = 2 * samples * cut_width * costs.bytes_per_real \
        + 2 * n_batches * costs.message_overhead_bytes
    return epochs * per_epoch


def weight_transfer_bytes(client_params: int, costs) -> int:
    return client_params * costs.bytes_per_real + costs.message_overhead_bytes


def account_costs(clients: Sequence[ClientWork], client_params: int, cut_width: int, costs,
                  batch_size: int = 32, epochs: int = 1) -> CostSummary:
    """Traffic, summed training time and summed idle time for one parallel cohort.

    Idle time of a client is the cohort wall-clock (its slowest member) minus
    its own training time. Completed clients upload their client-side weights
    once; dropped ones do not.
    """
    if not clients:
        raise ValueError("account_costs needs a non-empty selection")
    times = [client_train_time_ms(c.samples, client_params, c.processing_units, costs, epochs)
             for c in clients]
    wall = max(times)
    traffic = 0
    for c in clients:
        traffic += smashed_traffic_bytes(c.samples, cut_width, batch_size, costs, epochs)
        if c.completed:
            traffic += weight_transfer_bytes(client_params, costs)
    return CostSummary(traffic / MB, float(sum(times)), float(sum(wall - t for t in times)), wall)


# ------------------------------------------------------------------------ simulation


class Simulation:
    """Everything shared by the arms of one (config, seed): population, clusters,
    initial weights, pooled data, profiling history."""

    def __init__(self, cfg: ExperimentConfig, initial_params: Params | None = None):
        self.cfg = cfg
        self.seed = cfg.run.seed
        self.devices, self.users = generate_population(self.seed, cfg.population)
        m = cfg.model
        self.layer_dims = (cfg.population.feature_dim, *m.hidden, cfg.population.n_users)
        self.init = initial_params if initial_params is not None \
            else init_params(self.layer_dims, self.seed)
        if [p.shape for p in self.init] != [p.shape for p in init_params(self.layer_dims, 0)]:
            raise SimulationError("initial weights do not match the configured layer sizes")
        k2 = 2 * m.cut_index
        self.client_param_count = param_count(self.init[:k2])
        self.cut_width = self.layer_dims[m.cut_index]

        self.requirements = model_requirements(self.client_param_count, cfg.resources,
                                               cfg.costs.bytes_per_real)
        eligible_ids = capacity_filter(self.devices, self.requirements)
        if not eligible_ids:
            raise SimulationError(
                f"no device meets the model requirements {tuple(self.requirements)}; "
                "all clusters would be empty")
        self.eligible = [d for d in self.devices if d.id in eligible_ids]
        self.by_id = {d.id: d for d in self.eligible}
        self.pooled = pooled_dataset(self.eligible)

        n_distinct = len({tuple(d.capacity) for d in self.eligible})
        k = min(cfg.clustering.k, n_distinct)
        self.clusters: ClusterAssignment = kmeans_fit(
            [(d.id, d.capacity) for d in self.eligible], k, self.seed,
            cfg.clustering.max_iter, cfg.clustering.tol, cfg.clustering.n_init)
        self._profile = None

    @property
    def split_client(self) -> Params:
        return self.init[:2 * self.cfg.model.cut_index]

    @property
    def split_server(self) -> Params:
        return self.init[2 * self.cfg.model.cut_index:]

    def profiling(self):
        if self._profile is None:
            obs: list[UsageObservation] = []
            hist = bootstrap_history(self.eligible, self.cfg.predictor.profiling_rounds,
                                     self.seed, self.client_param_count, self.cfg.resources,
                                     self.cfg.costs.bytes_per_real, observations=obs)
            self._profile = (hist, obs)
        return self._profile

    def availability(self, device: Device, round: int):
        return sample_availability(device, round, self.seed, self.cfg.resources.avail_floor)

    def realized_usage(self, device: Device, round: int):
        mean = expected_usage(device.shard.n_train, self.client_param_count, self.cfg.resources,
                              self.cfg.costs.bytes_per_real)
        return realize_usage(mean, round, device.id, self.seed, self.cfg.resources.noise_sd)

    def train_time(self, device: Device, avail) -> float:
        return client_train_time_ms(device.shard.n_train, self.client_param_count,
                                    avail.available.pro, self.cfg.costs, self.cfg.model.epochs)

    def local_train(self, arm: str, round: int, cluster: int, device: Device,
                    client_w: Params, server_w: Params) -> tuple[Params, Params]:
        """One client's epochs of split training from the incoming globals, fresh momentum."""
        m = self.cfg.model
        model = SplitModel.from_halves(self.layer_dims, m.cut_index, client_w, server_w,
                                       m.lr, m.momentum)
        X, y = device.shard.train_set()
        g = streams.keyed_rng(self.seed, streams.SHUFFLE, streams.ARM_CODES[arm], round,
                              cluster, device.id)
        for _ in range(m.epochs):
            for idx in batches(len(y), m.batch_size, g):
                split_train_step(model, X[idx], y[idx])
        return model.client_params, model.server_params

    def evaluate(self, client_w: Params, server_w: Params) -> tuple[float, float]:
        return evaluate(client_w, server_w, self.pooled.X_test, self.pooled.y_test)


@dataclass
class _ClusterResult:
    client_w: Params
    server_w: Params
    selected: int
    dropped: int
    cost: CostSummary | None
    observations: list = field(default_factory=list)


def _parallel_map(fn, items, threads: int):
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _train_cohort(sim: Simulation, arm: str, round: int, cluster: int, selected: list[Device],
                  avails: dict, client_w: Params, server_w: Params) -> _ClusterResult:
    """Parallel split training of one cohort, drop check, dual FedAvg over completers."""
    cfg = sim.cfg
    work, completers, observations = [], [], []
    for d in selected:
        used = sim.realized_usage(d, round)
        ok = used.fits_within(avails[d.id].available)
        work.append(ClientWork(d.id, d.shard.n_train, avails[d.id].available.pro, ok))
        observations.append((avails[d.id], used))
        if ok:
            completers.append(d)

    def job(d):
        return d.id, sim.local_train(arm, round, cluster, d, client_w, server_w)

    results = dict(_parallel_map(job, completers, cfg.run.threads))
    new_client = fedavg({i: r[0] for i, r in results.items()})
    new_server = fedavg({i: r[1] for i, r in results.items()})
    cost = account_costs(work, sim.client_param_count, sim.cut_width, cfg.costs,
                         cfg.model.batch_size, cfg.model.epochs) if work else None
    return _ClusterResult(new_client if new_client is not None else client_w,
                          new_server if new_server is not None else server_w,
                          len(selected), len(selected) - len(completers), cost, observations)


def _round_metrics(sim: Simulation, arm: str, round: int, client_w: Params, server_w: Params,
                   parts: list[_ClusterResult]) -> RoundMetrics:
    acc, loss = sim.evaluate(client_w, server_w)
    costs = [p.cost for p in parts if p.cost is not None]
    return RoundMetrics(
        round, arm, acc, loss,
        dropped=sum(p.dropped for p in parts),
        traffic_mb=sum(c.traffic_mb for c in costs),
        train_time_ms=sum(c.train_time_ms for c in costs),
        idle_time_ms=sum(c.idle_time_ms for c in costs),
        selected=sum(p.selected for p in parts),
        wall_clock_ms=sum(c.wall_clock_ms for c in costs))


def processing_signal(predicted, avail, mode: str = "utilization") -> float:
    """Per-candidate input of the selector's variance term.

    ``utilization`` is the predicted processing use as a share of what the
    device has available this round, which tracks its training time.
    """
    use = max(predicted.pro, 0.0)
    if mode == "usage":
        return use
    return use / avail.available.pro


def _check_rounds(cfg: ExperimentConfig) -> None:
    if cfg.run.rounds < 1:
        raise ValueError("rounds must be >= 1")


def run_crsfl(cfg: ExperimentConfig, sim: Simulation | None = None) -> list[RoundMetrics]:
    _check_rounds(cfg)
    sim = sim or Simulation(cfg)
    pc = cfg.predictor
    history, _ = sim.profiling()
    history = list(history)
    forests = fit_forests(history, pc.n_trees, sim.seed, pc.max_depth, pc.min_leaf)
    weights = ObjectiveWeights(*cfg.selector.weights)
    ga_cfg = GAConfig.from_selector(cfg.selector)
    sel_hist = {z: SelectionHistory() for z in range(sim.clusters.k)}
    client_w, server_w = sim.split_client, sim.split_server
    arm_code = streams.ARM_CODES["crsfl"]

    out = []
    for k in range(cfg.run.rounds):
        if k > 0 and k % pc.refit_every == 0:
            forests = fit_forests(history, pc.n_trees, streams.derive_seed(sim.seed, k),
                                  pc.max_depth, pc.min_leaf)
        parts = []
        for z in sim.clusters.order:
            members = [sim.by_id[i] for i in sim.clusters.members(z)]
            avails = {d.id: sim.availability(d, k) for d in members}
            preds = predict_many(forests, [avails[d.id] for d in members], sim.client_param_count)
            pool = [(d, p) for d, p in zip(members, preds) if p.fits_within(avails[d.id].available)]
            if not pool:
                continue
            cands = [Candidate(d.id, d.owner_label, d.shard.n_train,
                               processing_signal(p, avails[d.id], cfg.selector.pro_signal),
                               sel_hist[z].flag(d.id)) for d, p in pool]
            mask = ga_select(cands, weights, ga_cfg,
                             streams.derive_seed(sim.seed, arm_code, k, z))
            sel_hist[z] = update_history(sel_hist[z], cands, mask)
            chosen = [d for (d, _), bit in zip(pool, mask) if bit]
            if not chosen:
                continue
            res = _train_cohort(sim, "crsfl", k, z, chosen, avails, client_w, server_w)
            client_w, server_w = res.client_w, res.server_w
            for avail, used in res.observations:
                history.extend(observation_records(avail, used, sim.client_param_count))
            parts.append(res)
        out.append(_round_metrics(sim, "crsfl", k, client_w, server_w, parts))
    return out


def run_csfl(cfg: ExperimentConfig, sim: Simulation | None = None) -> list[RoundMetrics]:
    _check_rounds(cfg)
    frac = cfg.selector.csfl_fraction
    if not 0.0 < frac <= 1.0:
        raise ValueError("csfl selection fraction must be in (0, 1]")
    sim = sim or Simulation(cfg)
    client_w, server_w = sim.split_client, sim.split_server
    arm_code = streams.ARM_CODES["csfl"]

    out = []
    for k in range(cfg.run.rounds):
        parts = []
        for z in sim.clusters.order:
            members = [sim.by_id[i] for i in sim.clusters.members(z)]
            size = max(1, int(round(frac * len(members))))
            g = streams.keyed_rng(sim.seed, streams.SELECTION, arm_code, k, z)
            pick = np.sort(g.choice(len(members), size=size, replace=False))
            chosen = [members[i] for i in pick]
            avails = {d.id: sim.availability(d, k) for d in chosen}
            res = _train_cohort(sim, "csfl", k, z, chosen, avails, client_w, server_w)
            client_w, server_w = res.client_w, res.server_w
            parts.append(res)
        out.append(_round_metrics(sim, "csfl", k, client_w, server_w, parts))
    return out


def sl_budget(crsfl_metrics: Sequence[RoundMetrics], mode: str = "total") -> float:
    """Per-round SL time budget matched to a CRSFL run.

    ``total`` uses CRSFL's mean summed client training time per round,
    ``wallclock`` its mean per-round wall-clock.
    """
    if mode == "total":
        vals = [m.train_time_ms for m in crsfl_metrics]
    elif mode == "wallclock":
        vals = [m.wall_clock_ms for m in crsfl_metrics]
    else:
        raise ValueError(f"unknown budget mode {mode!r}")
    return float(sum(vals) / len(vals))


def run_sl(cfg: ExperimentConfig, budget_ms: float | None = None,
           sim: Simulation | None = None) -> list[RoundMetrics]:
    _check_rounds(cfg)
    budget = budget_ms if budget_ms is not None else cfg.run.sl_budget_ms
    if budget is None:
        raise ValueError("split learning needs a per-round time budget")
    if budget <= 0:
        raise ValueError("budget must be positive")
    sim = sim or Simulation(cfg)
    costs, m = cfg.costs, cfg.model
    order = [sim.eligible[i] for i in
             streams.keyed_rng(sim.seed, streams.SL_ORDER).permutation(len(sim.eligible))]
    pointer = 0
    client_w, server_w = sim.split_client, sim.split_server
    w_bytes = weight_transfer_bytes(sim.client_param_count, costs)

    out = []
    for k in range(cfg.run.rounds):
        admitted, spent = [], 0.0
        while len(admitted) < len(order):
            d = order[pointer % len(order)]
            avail = sim.availability(d, k)
            t = sim.train_time(d, avail)
            if admitted and spent + t > budget:
                break
            admitted.append((d, avail, t))
            spent += t
            pointer += 1

        dropped, traffic = 0, 0
        for d, avail, t in admitted:
            # receive the previous client's weights through the server
            traffic += w_bytes + smashed_traffic_bytes(d.shard.n_train, sim.cut_width,
                                                       m.batch_size, costs, m.epochs)
            if not sim.realized_usage(d, k).fits_within(avail.available):
                dropped += 1
                continue
            client_w, server_w = sim.local_train("sl", k, 0, d, client_w, server_w)
            traffic += w_bytes
        acc, loss = sim.evaluate(client_w, server_w)
        times = [t for _, _, t in admitted]
        out.append(RoundMetrics(k, "sl", acc, loss, dropped, traffic / MB, float(sum(times)),
                                float(sum(max(budget - t, 0.0) for t in times)), len(admitted),
                                wall_clock_ms=float(sum(times))))
    return out


def run_centralized(cfg: ExperimentConfig, sim: Simulation | None = None) -> list[RoundMetrics]:
    _check_rounds(cfg)
    sim = sim or Simulation(cfg)
    m = cfg.model
    net = MonolithicNet(sim.layer_dims, sim.init, m.lr, m.momentum)
    X, y = sim.pooled.X_train, sim.pooled.y_train
    total_params = param_count(sim.init)
    arm_code = streams.ARM_CODES["cen"]
    out = []
    for k in range(cfg.run.rounds):
        g = streams.keyed_rng(sim.seed, streams.SHUFFLE, arm_code, k)
        for _ in range(m.epochs):
            for idx in batches(len(y), m.batch_size, g):
                net.train_step(X[idx], y[idx])
        cut = 2 * m.cut_index
        acc, loss = sim.evaluate(net.params[:cut], net.params[cut:])
        t = cfg.costs.ms_per_sample_param * len(y) * total_params * m.epochs
        out.append(RoundMetrics(k, "cen", acc, loss, 0, 0.0, t, 0.0, 0, wall_clock_ms=t))
    return out


def run_arms(cfg: ExperimentConfig, arms: Sequence[str],
             sim: Simulation | None = None) -> dict[str, list[RoundMetrics]]:
    """Run several arms on one shared simulation; SL gets its budget from CRSFL if needed."""
    sim = sim or Simulation(cfg)
    out: dict[str, list[RoundMetrics]] = {}
    need_ref = "sl" in arms and cfg.run.sl_budget_ms is None
    for arm in ("crsfl", "csfl", "cen", "sl"):
        if arm not in arms and not (arm == "crsfl" and need_ref):
            continue
        if arm == "crsfl":
            out[arm] = run_crsfl(cfg, sim)
        elif arm == "csfl":
            out[arm] = run_csfl(cfg, sim)
        elif arm == "cen":
            out[arm] = run_centralized(cfg, sim)
        else:
            budget = cfg.run.sl_budget_ms
            if budget is None:
                budget = sl_budget(out["crsfl"], cfg.run.sl_budget_mode)
            out[arm] = run_sl(cfg, budget, sim)
    return {a: out[a] for a in arms}


def metrics_csv(rows: Sequence[RoundMetrics]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n", quoting=csv.QUOTE_NONE)
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow(r.csv_row())
    return buf.getvalue()


def write_metrics_csv(rows: Sequence[RoundMetrics], path: str | Path) -> None:
    Path(path).write_text(metrics_csv(rows), encoding="utf-8", newline="")


def read_metrics_csv(path: str | Path) -> list[RoundMetrics]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [RoundMetrics(int(r["round"]), r["arm"], float(r["accuracy"]), float(r["loss"]),
                             int(r["dropped"]), float(r["traffic_mb"]), float(r["train_time_ms"]),
                             float(r["idle_time_ms"]), int(r["selected"]))
                for r in csv.DictReader(fh)]
