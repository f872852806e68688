"""Command-line front end.

    crsfl run --config configs/default.json --arm crsfl --rounds 10 --seed 7
    crsfl run --arm all --out runs/ --resources.noise_sd=0.05
    crsfl verify all
    crsfl dump-population --seed 3 --out pop.json

Exit codes: 0 success, 1 runtime abort, 2 bad config or arguments.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .config import ARMS, ConfigError, ExperimentConfig, load_config
from .kernels import BACKEND
from .orchestrator import SimulationError, Simulation, run_arms, write_metrics_csv
from .population import dump_population, generate_population
from .splitnn import save_checkpoint
from .verify import SUITES, run_suites

OUTPUT_DIR_ENV = "CRSFL_OUTPUT_DIR"
EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_overrides(extra: list[str]) -> dict:
    """Turn ``--section.key=value`` (or ``--section.key value``) tokens into a dict."""
    out, problems = {}, []
    i = 0
    while i < len(extra):
        tok = extra[i]
        if not tok.startswith("--") or "." not in tok.split("=", 1)[0]:
            problems.append(f"unrecognised argument {tok!r}")
            i += 1
            continue
        if "=" in tok:
            key, raw = tok[2:].split("=", 1)
            i += 1
        elif i + 1 < len(extra):
            key, raw = tok[2:], extra[i + 1]
            i += 2
        else:
            problems.append(f"{tok}: missing value")
            i += 1
            continue
        out[key] = _parse_value(raw)
    if problems:
        raise ConfigError(problems)
    return out


def effective_config(args, overrides: dict) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    flags = {}
    for name in ("arm", "rounds", "seed", "threads"):
        value = getattr(args, name, None)
        if value is not None:
            flags[f"run.{name}"] = value
    return cfg.with_overrides({**overrides, **flags})


def run_id(cfg: ExperimentConfig) -> str:
    return hashlib.sha1(cfg.to_json().encode("utf-8")).hexdigest()[:12]


def output_dir(args) -> Path:
    return Path(args.out or os.environ.get(OUTPUT_DIR_ENV) or "runs")


def cmd_run(args, extra) -> int:
    try:
        cfg = effective_config(args, parse_overrides(extra))
    except ConfigError as exc:
        for p in exc.problems:
            print(f"config error: {p}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out = output_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    started = _now()
    arms = list(ARMS) if cfg.run.arm == "all" else [cfg.run.arm]
    try:
        sim = Simulation(cfg)
        outputs = {}
        if len(arms) > 1:
            ckpt = out / f"init_weights_seed{cfg.run.seed}.json"
            save_checkpoint(sim.layer_dims, cfg.model.cut_index, sim.init, ckpt)
            outputs["init_weights"] = str(ckpt)
        results = run_arms(cfg, arms, sim)
    except (SimulationError, ValueError) as exc:
        print(f"run aborted: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    for arm, rows in results.items():
        path = out / f"{arm}_seed{cfg.run.seed}.csv"
        write_metrics_csv(rows, path)
        outputs[arm] = str(path)
        last = rows[-1]
        print(f"{arm}: {len(rows)} rounds, final accuracy {last.accuracy:.4f} -> {path}")

    manifest = {
        "run_id": run_id(cfg),
        "version": __version__,
        "kernel_backend": BACKEND,
        "seed": cfg.run.seed,
        "started": started,
        "finished": _now(),
        "outputs": outputs,
        "config": cfg.to_dict(),
    }
    mpath = out / f"manifest_{cfg.run.arm}_seed{cfg.run.seed}.json"
    mpath.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"manifest -> {mpath}")
    return EXIT_OK


def cmd_verify(args, extra) -> int:
    if extra:
        print(f"unrecognised arguments: {' '.join(extra)}", file=sys.stderr)
        return EXIT_CONFIG
    names = list(SUITES) if args.suite == "all" else [args.suite]
    reports = run_suites(names, seed=args.seed)
    for r in reports:
        print(r.line())
    return EXIT_OK if all(r.passed for r in reports) else EXIT_RUNTIME


def cmd_dump_population(args, extra) -> int:
    try:
        cfg = effective_config(args, parse_overrides(extra))
    except (ConfigError, OSError) as exc:
        for p in getattr(exc, "problems", [str(exc)]):
            print(f"config error: {p}", file=sys.stderr)
        return EXIT_CONFIG
    devices, _ = generate_population(cfg.run.seed, cfg.population)
    path = Path(args.out) if args.out else \
        Path(os.environ.get(OUTPUT_DIR_ENV) or "runs") / f"population_seed{cfg.run.seed}.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    dump_population(devices, cfg.run.seed, cfg.population, path)
    print(f"{len(devices)} devices -> {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crsfl", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one arm or all four",
                         epilog="Any config leaf can be overridden with --section.key=value.")
    run.add_argument("--config", help="JSON config file (defaults if omitted)")
    run.add_argument("--arm", help=f"one of {', '.join(ARMS)} or all")
    run.add_argument("--rounds", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--threads", type=int)
    run.add_argument("--out", help=f"output directory (default ${OUTPUT_DIR_ENV} or ./runs)")
    run.set_defaults(func=cmd_run)

    ver = sub.add_parser("verify", help="run the built-in oracle checks")
    ver.add_argument("suite", choices=[*SUITES, "all"])
    ver.add_argument("--seed", type=int, default=0)
    ver.set_defaults(func=cmd_verify)

    dump = sub.add_parser("dump-population", help="write the generated population as JSON")
    dump.add_argument("--config")
    dump.add_argument("--seed", type=int)
    dump.add_argument("--out", help="output file")
    dump.set_defaults(func=cmd_dump_population)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    return args.func(args, extra)


if __name__ == "__main__":
    sys.exit(main())
