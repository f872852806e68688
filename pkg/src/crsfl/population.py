"""Seeded synthetic user/device population with one label per user.

Each user owns several devices; every device holds a shard of samples drawn
from that user's Gaussian blob. Features are never stored on disk: a shard is
fully determined by (seed, label, device id, sample count).
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import rng as streams
from .config import ConfigError, PopulationConfig
from .resources import ResourceVector


@dataclass(frozen=True)
class DataShard:
    features: np.ndarray
    label: int
    train_indices: np.ndarray
    test_indices: np.ndarray

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_train(self) -> int:
        return len(self.train_indices)

    def train_set(self) -> tuple[np.ndarray, np.ndarray]:
        X = self.features[self.train_indices]
        return X, np.full(len(X), self.label, dtype=np.int64)

    def test_set(self) -> tuple[np.ndarray, np.ndarray]:
        X = self.features[self.test_indices]
        return X, np.full(len(X), self.label, dtype=np.int64)


@dataclass(frozen=True)
class Device:
    id: int
    owner_label: int
    capacity: ResourceVector
    shard: DataShard


@dataclass(frozen=True)
class User:
    label: int
    device_ids: tuple[int, ...]


@dataclass(frozen=True)
class PooledData:
    X_train: np.ndarray
    y_train: np.ndarray
    X_test: np.ndarray
    y_test: np.ndarray


def split_counts(n: int, train_fraction: float = 0.8) -> tuple[int, int]:
    n_train = int(np.floor(n * train_fraction + 0.5))
    return n_train, n - n_train


def user_mean(seed: int, label: int, dim: int) -> np.ndarray:
    return streams.keyed_rng(seed, streams.FEATURES, 0, label).uniform(-1.0, 1.0, size=dim)


def make_shard(seed: int, label: int, device_id: int, n_samples: int,
               cfg: PopulationConfig) -> DataShard:
    mean = user_mean(seed, label, cfg.feature_dim)
    g = streams.keyed_rng(seed, streams.FEATURES, 1, device_id)
    X = mean + cfg.feature_std * g.standard_normal((n_samples, cfg.feature_dim))
    perm = g.permutation(n_samples)
    n_train, _ = split_counts(n_samples, cfg.train_fraction)
    return DataShard(X, label, np.sort(perm[:n_train]), np.sort(perm[n_train:]))


def generate_population(seed: int, cfg: PopulationConfig | None = None
                        ) -> tuple[list[Device], list[User]]:
    cfg = cfg or PopulationConfig()
    problems = []
    if cfg.n_users < 1:
        problems.append("population.n_users: must be >= 1")
    if cfg.min_devices > cfg.max_devices or cfg.min_devices < 1:
        problems.append("population.min_devices > max_devices")
    if cfg.min_samples > cfg.max_samples or cfg.min_samples < 1:
        problems.append("population.min_samples > max_samples")
    if cfg.feature_dim < 1:
        problems.append("population.feature_dim: must be >= 1")
    if problems:
        raise ConfigError(problems)

    g = streams.keyed_rng(seed, streams.POPULATION)
    devices: list[Device] = []
    users: list[User] = []
    next_id = 0
    for label in range(cfg.n_users):
        n_dev = int(g.integers(cfg.min_devices, cfg.max_devices + 1))
        ids = []
        for _ in range(n_dev):
            n_samples = int(g.integers(cfg.min_samples, cfg.max_samples + 1))
            pro = float(g.choice(cfg.pro_tiers))
            mem = cfg.mem_mb * (1.0 + float(g.uniform(-cfg.mem_jitter, cfg.mem_jitter)))
            dis = float(g.choice(cfg.disk_tiers_mb))
            shard = make_shard(seed, label, next_id, n_samples, cfg)
            devices.append(Device(next_id, label, ResourceVector(mem, pro, dis), shard))
            ids.append(next_id)
            next_id += 1
        users.append(User(label, tuple(ids)))
    return devices, users


def pooled_dataset(devices: Sequence[Device]) -> PooledData:
    """Concatenate all train shards and all test shards in device-id order."""
    if not devices:
        raise ValueError("pooled_dataset needs at least one device")
    ordered = sorted(devices, key=lambda d: d.id)
    train = [d.shard.train_set() for d in ordered]
    test = [d.shard.test_set() for d in ordered]
    return PooledData(np.concatenate([t[0] for t in train]), np.concatenate([t[1] for t in train]),
                      np.concatenate([t[0] for t in test]), np.concatenate([t[1] for t in test]))


def dump_population(devices: Sequence[Device], seed: int, cfg: PopulationConfig,
                    path: str | Path | None = None) -> str:
    doc = {
        "seed": seed,
        "feature_dim": cfg.feature_dim,
        "feature_std": cfg.feature_std,
        "train_fraction": cfg.train_fraction,
        "devices": [
            {"id": d.id, "owner_label": d.owner_label,
             "capacity": [d.capacity.mem, d.capacity.pro, d.capacity.dis],
             "samples": d.shard.n_samples}
            for d in sorted(devices, key=lambda d: d.id)
        ],
    }
    text = json.dumps(doc, indent=1, sort_keys=True) + "\n"
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def load_population(source: str | Path) -> tuple[list[Device], list[User]]:
    """Rebuild devices (features included) from a dump produced by :func:`dump_population`."""
    path = Path(source)
    doc = json.loads(path.read_text(encoding="utf-8"))
    cfg = PopulationConfig(feature_dim=doc["feature_dim"], feature_std=doc["feature_std"],
                           train_fraction=doc["train_fraction"])
    seed = doc["seed"]
    devices = []
    by_label: dict[int, list[int]] = {}
    for rec in doc["devices"]:
        shard = make_shard(seed, rec["owner_label"], rec["id"], rec["samples"], cfg)
        devices.append(Device(rec["id"], rec["owner_label"], ResourceVector(*rec["capacity"]), shard))
        by_label.setdefault(rec["owner_label"], []).append(rec["id"])
    users = [User(label, tuple(ids)) for label, ids in sorted(by_label.items())]
    return devices, users
