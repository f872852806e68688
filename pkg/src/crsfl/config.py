"""Experiment configuration: one dataclass per JSON section.

A config document is a JSON object with the sections ``population``,
``resources``, ``clustering``, ``predictor``, ``selector``, ``model``,
``costs`` and ``run``. Missing keys take the defaults below; unknown keys
and ill-typed values are collected into a single :class:`ConfigError`.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

ARMS = ("cen", "sl", "csfl", "crsfl")


class ConfigError(ValueError):
    """Invalid configuration; ``problems`` lists one message per bad field."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass(frozen=True)
class PopulationConfig:
    n_users: int = 42
    min_devices: int = 2
    max_devices: int = 6
    min_samples: int = 100
    max_samples: int = 150
    feature_dim: int = 32
    feature_std: float = 0.3
    train_fraction: float = 0.8
    pro_tiers: tuple[float, ...] = (1.5, 2.0, 2.5)
    mem_mb: float = 2048.0
    mem_jitter: float = 0.25
    disk_tiers_mb: tuple[float, ...] = (4096.0, 8192.0, 16384.0)


@dataclass(frozen=True)
class ResourcesConfig:
    avail_floor: float = 0.6
    noise_sd: float = 0.05
    # ground-truth usage law learned by the forests
    base_mem_mb: float = 1100.0
    mem_per_sample_mb: float = 5.0
    pro_per_megawork: float = 0.2
    # requirement multipliers applied to the client-side model size
    mem_multiplier: float = 3.0
    pro_requirement: float = 1.0
    disk_multiplier: float = 2.0


@dataclass(frozen=True)
class ClusteringConfig:
    k: int = 3
    max_iter: int = 100
    tol: float = 1e-6
    n_init: int = 10


@dataclass(frozen=True)
class PredictorConfig:
    n_trees: int = 20
    max_depth: int = 6
    min_leaf: int = 2
    profiling_rounds: int = 3
    refit_every: int = 10


@dataclass(frozen=True)
class SelectorConfig:
    weights: tuple[float, ...] = (0.2, 0.2, 0.2, 0.2, 0.2)
    population: int = 50
    generations: int = 100
    mutation_p: float = 0.05
    patience: int = 20
    crossover_ratio: float = 0.5
    target_fitness: float | None = None
    csfl_fraction: float = 0.5
    # what the variance term sees: predicted processing use divided by the
    # round's available processing ("utilization") or the raw prediction ("usage")
    pro_signal: str = "utilization"


@dataclass(frozen=True)
class ModelConfig:
    hidden: tuple[int, ...] = (128, 128, 128)
    cut_index: int = 2
    lr: float = 0.01
    momentum: float = 0.9
    batch_size: int = 32
    epochs: int = 1


@dataclass(frozen=True)
class CostConfig:
    bytes_per_real: int = 8
    ms_per_sample_param: float = 2e-7
    message_overhead_bytes: int = 0


@dataclass(frozen=True)
class RunConfig:
    arm: str = "crsfl"
    rounds: int = 50
    seed: int = 0
    threads: int = 1
    sl_budget_ms: float | None = None
    sl_budget_mode: str = "total"


@dataclass(frozen=True)
class ExperimentConfig:
    population: PopulationConfig = field(default_factory=PopulationConfig)
    resources: ResourcesConfig = field(default_factory=ResourcesConfig)
    clustering: ClusteringConfig = field(default_factory=ClusteringConfig)
    predictor: PredictorConfig = field(default_factory=PredictorConfig)
    selector: SelectorConfig = field(default_factory=SelectorConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    costs: CostConfig = field(default_factory=CostConfig)
    run: RunConfig = field(default_factory=RunConfig)

    def to_dict(self) -> dict[str, Any]:
        out = asdict(self)
        for section in out.values():
            for key, value in section.items():
                if isinstance(value, tuple):
                    section[key] = list(value)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "ExperimentConfig":
        problems: list[str] = []
        if not isinstance(doc, dict):
            raise ConfigError(["config root must be a JSON object"])
        sections = {f.name: f for f in fields(cls)}
        built = {}
        for name in doc:
            if name not in sections:
                problems.append(f"{name}: unknown section")
        for name, sec_field in sections.items():
            sec_cls = sec_field.default_factory  # type: ignore[misc]
            raw = doc.get(name, {})
            if not isinstance(raw, dict):
                problems.append(f"{name}: section must be an object")
                continue
            built[name] = _build_section(name, sec_cls, raw, problems)
        if problems:
            raise ConfigError(problems)
        cfg = cls(**built)
        cfg.validate()
        return cfg

    def with_overrides(self, overrides: dict[str, Any]) -> "ExperimentConfig":
        """Apply ``{"section.key": value}`` leaf overrides."""
        doc = self.to_dict()
        problems = []
        for dotted, value in overrides.items():
            section, _, key = dotted.partition(".")
            if section not in doc or not key:
                problems.append(f"{dotted}: unknown section")
                continue
            if key not in doc[section]:
                problems.append(f"{dotted}: unknown key")
                continue
            doc[section][key] = value
        if problems:
            raise ConfigError(problems)
        return ExperimentConfig.from_dict(doc)

    def replace_run(self, **changes) -> "ExperimentConfig":
        return replace(self, run=replace(self.run, **changes))

    def validate(self) -> None:
        p = []
        pop = self.population
        if pop.n_users < 1:
            p.append("population.n_users: must be >= 1")
        if pop.min_devices < 1 or pop.min_devices > pop.max_devices:
            p.append("population.min_devices/max_devices: need 1 <= min <= max")
        if pop.min_samples < 1 or pop.min_samples > pop.max_samples:
            p.append("population.min_samples/max_samples: need 1 <= min <= max")
        if pop.feature_dim < 1:
            p.append("population.feature_dim: must be >= 1")
        if not 0.0 < pop.train_fraction < 1.0:
            p.append("population.train_fraction: must be in (0, 1)")
        if not pop.pro_tiers or min(pop.pro_tiers) <= 0:
            p.append("population.pro_tiers: need positive values")
        if not pop.disk_tiers_mb or min(pop.disk_tiers_mb) <= 0:
            p.append("population.disk_tiers_mb: need positive values")
        if not 0.0 <= pop.mem_jitter < 1.0:
            p.append("population.mem_jitter: must be in [0, 1)")
        res = self.resources
        if not 0.0 < res.avail_floor <= 1.0:
            p.append("resources.avail_floor: must be in (0, 1]")
        if res.noise_sd < 0:
            p.append("resources.noise_sd: must be >= 0")
        if self.clustering.k < 1:
            p.append("clustering.k: must be >= 1")
        if self.clustering.max_iter < 1:
            p.append("clustering.max_iter: must be >= 1")
        if self.clustering.n_init < 1:
            p.append("clustering.n_init: must be >= 1")
        pr = self.predictor
        if pr.n_trees < 1:
            p.append("predictor.n_trees: must be >= 1")
        if pr.min_leaf < 1:
            p.append("predictor.min_leaf: must be >= 1")
        if pr.profiling_rounds < 2:
            p.append("predictor.profiling_rounds: must be >= 2")
        if pr.refit_every < 1:
            p.append("predictor.refit_every: must be >= 1")
        sel = self.selector
        if len(sel.weights) != 5 or any(w < 0 or w > 1 for w in sel.weights) \
                or abs(sum(sel.weights) - 1.0) > 1e-9:
            p.append("selector.weights: need five values in [0, 1] summing to 1")
        if sel.population < 2:
            p.append("selector.population: must be >= 2")
        if sel.generations < 1:
            p.append("selector.generations: must be >= 1")
        if not 0.0 <= sel.mutation_p <= 1.0:
            p.append("selector.mutation_p: must be in [0, 1]")
        if sel.pro_signal not in ("utilization", "usage"):
            p.append("selector.pro_signal: must be 'utilization' or 'usage'")
        if not 0.0 < sel.csfl_fraction <= 1.0:
            p.append("selector.csfl_fraction: must be in (0, 1]")
        m = self.model
        if len(m.hidden) < 1 or min(m.hidden) < 1:
            p.append("model.hidden: need at least one positive width")
        if not 1 <= m.cut_index <= len(m.hidden):
            p.append("model.cut_index: must cut between 1 and len(hidden) layers")
        if m.lr <= 0 or not 0 <= m.momentum < 1:
            p.append("model.lr/momentum: need lr > 0 and 0 <= momentum < 1")
        if m.batch_size < 1 or m.epochs < 1:
            p.append("model.batch_size/epochs: must be >= 1")
        c = self.costs
        if c.bytes_per_real <= 0 or c.ms_per_sample_param <= 0 or c.message_overhead_bytes < 0:
            p.append("costs: constants must be positive")
        r = self.run
        if r.arm not in ARMS + ("all",):
            p.append(f"run.arm: unknown arm {r.arm!r} (choose from {', '.join(ARMS)}, all)")
        if r.rounds < 1:
            p.append("run.rounds: must be >= 1")
        if r.threads < 1:
            p.append("run.threads: must be >= 1")
        if r.sl_budget_mode not in ("total", "wallclock"):
            p.append("run.sl_budget_mode: must be 'total' or 'wallclock'")
        if r.sl_budget_ms is not None and r.sl_budget_ms <= 0:
            p.append("run.sl_budget_ms: must be positive")
        if p:
            raise ConfigError(p)


def _build_section(name: str, sec_cls, raw: dict[str, Any], problems: list[str]):
    defaults = sec_cls()
    kwargs = {}
    known = {f.name for f in fields(sec_cls)}
    for key in raw:
        if key not in known:
            problems.append(f"{name}.{key}: unknown key")
    for key in known:
        if key not in raw:
            continue
        default = getattr(defaults, key)
        value = raw[key]
        try:
            kwargs[key] = _coerce(default, value)
        except (TypeError, ValueError):
            problems.append(f"{name}.{key}: expected {_type_name(default)}, got {value!r}")
    return sec_cls(**kwargs)


def _coerce(default, value):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise TypeError
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise TypeError
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise TypeError
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise TypeError
        return value
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)) or not value:
            raise TypeError
        kind = type(default[0])
        return tuple(_coerce(default[0], v) if kind is not float else _coerce(0.0, v)
                     for v in value)
    if default is None:
        if value is None:
            return None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise TypeError
        return float(value)
    raise TypeError


def _type_name(default) -> str:
    if default is None:
        return "number or null"
    if isinstance(default, tuple):
        return f"list of {type(default[0]).__name__}"
    return type(default).__name__


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{path}: malformed JSON ({exc})"]) from exc
    return ExperimentConfig.from_dict(doc)
