"""Device resource model: capacities, per-round availability, noisy usage.

All quantities share the (memory MB, processing units, disk MB) layout of
:class:`ResourceVector`.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, NamedTuple, Sequence

import numpy as np

from . import rng as streams

if TYPE_CHECKING:
    from .population import Device

MB = float(1 << 20)


class ResourceVector(NamedTuple):
    mem: float
    pro: float
    dis: float

    def fits_within(self, other: "ResourceVector") -> bool:
        """True when every component is <= the matching one in ``other``."""
        return self.mem <= other.mem and self.pro <= other.pro and self.dis <= other.dis

    def scaled(self, factors) -> "ResourceVector":
        return ResourceVector(self.mem * factors[0], self.pro * factors[1], self.dis * factors[2])

    def as_array(self) -> np.ndarray:
        return np.array(self, dtype=np.float64)


ZERO = ResourceVector(0.0, 0.0, 0.0)


@dataclass(frozen=True)
class RoundAvailability:
    device_id: int
    round: int
    available: ResourceVector
    sample_count: int


@dataclass(frozen=True)
class UsageObservation:
    device_id: int
    round: int
    used: ResourceVector
    completed: bool


def capacity_filter(devices: Iterable["Device"], requirements: ResourceVector) -> set[int]:
    """Ids of devices whose static capacity covers ``requirements`` in every dimension."""
    if min(requirements) < 0:
        raise ValueError("requirements must be componentwise >= 0")
    return {d.id for d in devices if requirements.fits_within(d.capacity)}


def model_requirements(client_param_count: int, cfg, bytes_per_real: int = 8) -> ResourceVector:
    """Hosting requirements of the client-side model.

    Memory holds weights, gradients and momentum buffers; disk holds two
    serialized copies.
    """
    size_mb = client_param_count * bytes_per_real / MB
    return ResourceVector(size_mb * cfg.mem_multiplier, cfg.pro_requirement,
                          size_mb * cfg.disk_multiplier)


def sample_availability(device: "Device", round: int, seed: int, floor: float = 0.6,
                        stream: int = 0) -> RoundAvailability:
    if round < 0:
        raise ValueError("round must be >= 0")
    g = streams.keyed_rng(seed, streams.AVAILABILITY, stream, device.id, round)
    u = g.uniform(floor, 1.0, size=3)
    cap = device.capacity
    # min() guards the (floor == 1.0) edge against a uniform draw of exactly 1.0 overshooting
    available = ResourceVector(min(cap.mem * u[0], cap.mem), min(cap.pro * u[1], cap.pro),
                               min(cap.dis * u[2], cap.dis))
    return RoundAvailability(device.id, round, available, device.shard.n_train)


def expected_usage(sample_count: int, client_param_count: int, cfg,
                   bytes_per_real: int = 8) -> ResourceVector:
    """Ground-truth mean usage of one local training round."""
    mem = cfg.base_mem_mb + cfg.mem_per_sample_mb * sample_count
    pro = cfg.pro_per_megawork * sample_count * client_param_count / 1e6
    dis = client_param_count * bytes_per_real / MB
    return ResourceVector(mem, pro, dis)


def realize_usage(predicted: ResourceVector, round: int, device_id: int, seed: int,
                  noise_sd: float = 0.1, stream: int = 0) -> ResourceVector:
    """Multiply each component by ``max(0, 1 + eps)``, eps ~ N(0, noise_sd)."""
    if noise_sd < 0:
        raise ValueError("noise_sd must be >= 0")
    if noise_sd == 0:
        return ResourceVector(*predicted)
    g = streams.keyed_rng(seed, streams.USAGE, stream, device_id, round)
    eps = g.normal(0.0, noise_sd, size=3)
    f = np.maximum(0.0, 1.0 + eps)
    return ResourceVector(predicted.mem * f[0], predicted.pro * f[1], predicted.dis * f[2])


def write_usage_csv(observations: Sequence[UsageObservation], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["device_id", "round", "mem", "pro", "dis", "completed"])
        for o in sorted(observations, key=lambda o: (o.device_id, o.round)):
            w.writerow([o.device_id, o.round, repr(o.used.mem), repr(o.used.pro),
                        repr(o.used.dis), int(o.completed)])


def read_usage_csv(path: str | Path) -> list[UsageObservation]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [UsageObservation(int(r["device_id"]), int(r["round"]),
                                 ResourceVector(float(r["mem"]), float(r["pro"]), float(r["dis"])),
                                 bool(int(r["completed"])))
                for r in csv.DictReader(fh)]
