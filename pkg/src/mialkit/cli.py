"""Command-line front door: run experiments, synthesize datasets, build
reports, serve the annotation API.

Exit codes: 0 success, 2 configuration error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import yaml

from . import reporting
from .data import (MILDataset, MILFormatError, MILValidationError, SplitError,
                   SyntheticConfig, generate_synthetic, load_dataset, save_dataset)
from .loop import (DEFAULT_TRAIN_FRACTION, STRATEGY_NAMES, SessionConfig,
                   run_experiment)
from .metrics import count_wins, wins_vs_query_fraction
from .svm import KernelSpec

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

# named kernel/cost presets per benchmark corpus
PRESETS = {
    "sival": {"kernel": "rbf", "gamma": 0.01, "base_cost": 1000.0},
    "birds": {"kernel": "rbf", "gamma": 0.1, "base_cost": 1000.0},
    "newsgroups": {"kernel": "chi2", "gamma": None, "base_cost": 1000.0},
    "synthetic": {"kernel": "rbf", "gamma": 0.8, "base_cost": 10.0},
}

_FRACTION_GRID = [i / 20.0 for i in range(21)]


class ConfigError(ValueError):
    pass


_RUN_DEFAULTS = {
    "dataset": None,
    "synthetic": None,
    "preset": None,
    "kernel": None,
    "gamma": None,
    "base_cost": None,
    "strategies": list(STRATEGY_NAMES),
    "repetitions": 1,
    "seed": 0,
    "train_fraction": DEFAULT_TRAIN_FRACTION,
    "cluster_levels": 20,
    "inconsistency_depth": 16,
    "solver_tolerance": 1e-3,
    "standardize": False,
    "out": "results",
}

_SYNTH_DEFAULTS = {
    "clusters": 4,
    "spread": 0.5,
    "dim": 2,
    "bags": 180,
    "positive_fraction": 1.0 / 3.0,
    "instances_min": 5,
    "instances_max": 8,
    "witness_rate": 0.25,
    "seed": 0,
}


def _load_run_config(path: Path, overrides: dict) -> dict:
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a mapping")
    unknown = set(raw) - set(_RUN_DEFAULTS)
    if unknown:
        raise ConfigError(f"{path}: unknown config keys {sorted(unknown)}")
    config = dict(_RUN_DEFAULTS)
    config.update(raw)
    config.update({k: v for k, v in overrides.items() if v is not None})

    preset = config.get("preset")
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; expected one of {sorted(PRESETS)}")
        for key, value in PRESETS[preset].items():
            if config.get(key) is None:
                config[key] = value
    if config.get("kernel") is None:
        raise ConfigError("config needs a kernel (or a preset)")
    if config.get("base_cost") is None:
        raise ConfigError("config needs a base_cost (or a preset)")
    strategies = config["strategies"]
    if not isinstance(strategies, list) or not strategies:
        raise ConfigError("strategies must be a non-empty list")
    for s in strategies:
        if s not in STRATEGY_NAMES:
            raise ConfigError(f"unknown strategy {s!r}; expected one of {STRATEGY_NAMES}")
    if config["dataset"] is None and config["synthetic"] is None:
        raise ConfigError("config needs a dataset path or a synthetic block")
    return config


def _synthetic_config(block: dict | None, fallback_seed: int) -> SyntheticConfig:
    values = dict(_SYNTH_DEFAULTS)
    if block:
        unknown = set(block) - set(_SYNTH_DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown synthetic keys {sorted(unknown)}")
        values.update(block)
    if block is None or "seed" not in block:
        values["seed"] = fallback_seed
    try:
        return SyntheticConfig(
            positive_cluster_count=int(values["clusters"]),
            cluster_spread=float(values["spread"]),
            feature_dim=int(values["dim"]),
            bags=int(values["bags"]),
            positive_bag_fraction=float(values["positive_fraction"]),
            instances_per_bag=(int(values["instances_min"]), int(values["instances_max"])),
            witness_rate=float(values["witness_rate"]),
            seed=int(values["seed"]),
        )
    except ValueError as exc:
        raise ConfigError(f"bad synthetic spec: {exc}") from None


def _resolve_dataset(config: dict) -> MILDataset:
    if config["dataset"] not in (None, "synthetic"):
        return load_dataset(config["dataset"])
    return generate_synthetic(_synthetic_config(config["synthetic"], config["seed"]))


def _config_hash(config: dict) -> str:
    relevant = {k: v for k, v in config.items() if k != "out"}
    digest = hashlib.sha256(json.dumps(relevant, sort_keys=True).encode("utf-8"))
    return digest.hexdigest()[:12]


def cmd_run(args: argparse.Namespace) -> int:
    overrides = {"seed": args.seed, "out": args.out}
    try:
        config = _load_run_config(Path(args.config), overrides)
        dataset = _resolve_dataset(config)
    except (ConfigError, MILFormatError, MILValidationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    session_config = SessionConfig(
        strategy=config["strategies"][0],
        kernel=KernelSpec(kind=config["kernel"], gamma=config["gamma"]),
        base_cost=float(config["base_cost"]),
        seed=int(config["seed"]),
        cluster_levels=int(config["cluster_levels"]),
        inconsistency_depth=int(config["inconsistency_depth"]),
        solver_tolerance=float(config["solver_tolerance"]),
        standardize=bool(config["standardize"]),
    )
    out = Path(config["out"])
    chash = _config_hash(config)
    provenance = reporting.provenance_line(chash, int(config["seed"]))
    try:
        result = run_experiment(
            dataset,
            config["strategies"],
            repetitions=int(config["repetitions"]),
            base_seed=int(config["seed"]),
            config=session_config,
            train_fraction=float(config["train_fraction"]),
            jobs=args.jobs,
        )
        out.mkdir(parents=True, exist_ok=True)
        (out / "sessions").mkdir(exist_ok=True)
        reporting.dump_result_json(result, chash, out / "result.json")
        reporting.write_naulc_csv(result, out / "naulc.csv", provenance)
        reporting.write_curves_csv(result, out / "curves.csv", provenance)
        if len(result.strategies) >= 2:
            table = count_wins(result)
            reporting.write_win_table_csv(table, out / "win_table.csv", provenance)
            (out / "win_table.txt").write_text(provenance + "\n" + reporting.format_win_table(table),
                                               encoding="utf-8")
            counts = wins_vs_query_fraction(result, _FRACTION_GRID)
            reporting.write_wins_vs_fraction_csv(counts, _FRACTION_GRID,
                                                 out / "wins_vs_fraction.csv", provenance)
        failures = 0
        for rec in result.records:
            reporting.write_session_log(
                rec, rec.audit,
                out / "sessions" / f"{rec.strategy}-rep{rec.repetition}.jsonl", provenance)
            failures += rec.error is not None
        print(f"wrote {out} ({len(result.records)} sessions, {failures} failed)")
        return EXIT_OK if failures == 0 else EXIT_RUNTIME
    except (SplitError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def cmd_synth(args: argparse.Namespace) -> int:
    try:
        spec = SyntheticConfig(
            positive_cluster_count=args.clusters,
            cluster_spread=args.spread,
            feature_dim=args.dim,
            bags=args.bags,
            positive_bag_fraction=args.positive_fraction,
            instances_per_bag=(args.instances_min, args.instances_max),
            witness_rate=args.witness_rate,
            seed=args.seed if args.seed is not None else 0,
        )
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        dataset = generate_synthetic(spec)
        save_dataset(dataset, args.out)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"wrote {args.out} ({len(dataset)} bags, {dataset.n_instances} instances)")
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    results_dir = Path(args.results)
    paths = sorted(results_dir.rglob("result.json"))
    if not paths:
        print(f"error: no result.json under {results_dir}", file=sys.stderr)
        return EXIT_CONFIG
    problems = {}
    hashes = []
    try:
        for path in paths:
            result, chash = reporting.load_result_json(path)
            problems[result.dataset] = result
            hashes.append((result.dataset, chash, result.base_seed))
    except (json.JSONDecodeError, KeyError) as exc:
        print(f"error: corrupt results: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    provenance = "# provenance " + " ".join(
        f"{name}:config_hash={h}:seed={s}" for name, h, s in hashes)
    first = next(iter(problems.values()))
    merged_curves = out / "curves.csv"
    with merged_curves.open("w", encoding="utf-8") as fh:
        fh.write(provenance + "\n")
        fh.write("dataset,strategy,metric,split,query,mean,std,runs\n")
        for result in problems.values():
            tmp = out / "_tmp_curves.csv"
            reporting.write_curves_csv(result, tmp, provenance)
            lines = tmp.read_text(encoding="utf-8").splitlines()[2:]
            fh.write("\n".join(lines) + ("\n" if lines else ""))
            tmp.unlink()
    if len(first.strategies) >= 2:
        table = count_wins(problems)
        reporting.write_win_table_csv(table, out / "win_table.csv", provenance)
        (out / "win_table.txt").write_text(provenance + "\n" + reporting.format_win_table(table),
                                           encoding="utf-8")
        counts = wins_vs_query_fraction(problems, _FRACTION_GRID)
        reporting.write_wins_vs_fraction_csv(counts, _FRACTION_GRID,
                                             out / "wins_vs_fraction.csv", provenance)
    print(f"wrote report to {out} ({len(problems)} problem(s))")
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    try:
        app = create_app(Path(args.data), Path(args.state))
    except (MILFormatError, MILValidationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mialkit",
                                     description="bag-query active learning toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment from a config file")
    run.add_argument("--config", required=True, help="YAML run configuration")
    run.add_argument("--jobs", type=int, default=1, help="parallel sessions")
    run.add_argument("--seed", type=int, default=None, help="override the config seed")
    run.add_argument("--out", default=None, help="override the output directory")
    run.set_defaults(func=cmd_run)

    synth = sub.add_parser("synth", help="generate a synthetic MIL-CSV dataset")
    synth.add_argument("--out", required=True)
    synth.add_argument("--clusters", type=int, default=_SYNTH_DEFAULTS["clusters"])
    synth.add_argument("--spread", type=float, default=_SYNTH_DEFAULTS["spread"])
    synth.add_argument("--dim", type=int, default=_SYNTH_DEFAULTS["dim"])
    synth.add_argument("--bags", type=int, default=_SYNTH_DEFAULTS["bags"])
    synth.add_argument("--positive-fraction", dest="positive_fraction", type=float,
                       default=_SYNTH_DEFAULTS["positive_fraction"])
    synth.add_argument("--instances-min", dest="instances_min", type=int,
                       default=_SYNTH_DEFAULTS["instances_min"])
    synth.add_argument("--instances-max", dest="instances_max", type=int,
                       default=_SYNTH_DEFAULTS["instances_max"])
    synth.add_argument("--witness-rate", dest="witness_rate", type=float,
                       default=_SYNTH_DEFAULTS["witness_rate"])
    synth.add_argument("--seed", type=int, default=0)
    synth.set_defaults(func=cmd_synth)

    report = sub.add_parser("report", help="aggregate run outputs into tables")
    report.add_argument("--results", required=True, help="directory holding result.json files")
    report.add_argument("--out", required=True)
    report.set_defaults(func=cmd_report)

    serve = sub.add_parser("serve", help="start the annotation HTTP service")
    serve.add_argument("--data", required=True, help="directory of MIL-CSV datasets")
    serve.add_argument("--state", default="service-state", help="event-log directory")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8008)
    serve.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
