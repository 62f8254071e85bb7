"""Command-line entry point: simulate, optimize, sweep, bound, validate."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import subprocess
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .config import ConfigError, ScenarioConfig, expand_sweep, load_config
from .engine import compute_metrics, run_simulation
from .optimizer import SimulationScenario, genetic_optimize
from .targetmetric import targets_met, vbqc_min_fidelity

METRIC_COLUMNS = ["value", "n", "rate", "sem_rate", "fidelity", "sem_fidelity", "required_fidelity", "targets_met"]


def _meta(cfg: ScenarioConfig, seed: int) -> dict:
    return {"config_hash": cfg.config_hash, "seed": seed, "version": __version__, "scenario": cfg.name}


def _json_default(o):
    if isinstance(o, float) and not math.isfinite(o):
        return str(o)
    if dataclasses.is_dataclass(o):
        return dataclasses.asdict(o)
    return str(o)


def _write_json(path: Path, data: dict) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True, default=_json_default) + "\n")


def _with_overrides(cfg: ScenarioConfig, seed: Optional[int], runs: Optional[int]) -> ScenarioConfig:
    protocol = cfg.protocol
    if seed is not None:
        protocol = dataclasses.replace(protocol, seed=seed)
    if runs is not None:
        protocol = dataclasses.replace(protocol, n_pairs=runs)
    return dataclasses.replace(cfg, protocol=protocol)


def _simulate(cfg: ScenarioConfig, trace_path: Optional[Path] = None):
    stream = open(trace_path, "w") if trace_path else None
    try:
        records = run_simulation(cfg.topology, cfg.hardware, cfg.protocol, stream)
    finally:
        if stream:
            stream.close()
    server_T = cfg.target.server_T if cfg.target else None
    metrics = compute_metrics(records, server_T)
    met = targets_met(metrics.rate, metrics.fidelity, cfg.target).met if cfg.target else None
    return records, metrics, met


def _metrics_row(value, metrics, met) -> dict:
    row = {"value": value, **metrics.to_json(), "targets_met": met}
    return {k: row.get(k) for k in METRIC_COLUMNS}


def _write_csv(path: Path, rows: list[dict], meta: dict) -> None:
    with open(path, "w", newline="") as fh:
        for k, v in meta.items():
            fh.write(f"# {k}: {v}\n")
        w = csv.DictWriter(fh, fieldnames=METRIC_COLUMNS)
        w.writeheader()
        w.writerows(rows)


def cmd_simulate(args) -> int:
    cfg = _with_overrides(load_config(args.config), args.seed, args.runs)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records, metrics, met = _simulate(cfg, out / "trace.ndjson" if args.trace else None)
    meta = _meta(cfg, cfg.protocol.seed)
    if args.format == "csv":
        _write_csv(out / "simulate.csv", [_metrics_row(None, metrics, met)], meta)
    else:
        data = {"meta": meta, "metrics": metrics.to_json(), "targets_met": met}
        if args.records:
            data["records"] = [r.to_json() for r in records]
        _write_json(out / "simulate.json", data)
    print(json.dumps({"rate": metrics.rate, "fidelity": metrics.fidelity, "targets_met": met}))
    return 0


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    if cfg.sweep is None:
        raise ConfigError("config has no sweep stanza", "sweep")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for value, sub in zip(cfg.sweep.values, expand_sweep(cfg)):
        sub = _with_overrides(sub, args.seed, args.runs)
        _, metrics, met = _simulate(sub)
        rows.append(_metrics_row(value, metrics, met))
    meta = {**_meta(cfg, args.seed if args.seed is not None else cfg.seed), "parameter": cfg.sweep.parameter}
    if args.format == "csv":
        _write_csv(out / "sweep.csv", rows, meta)
    else:
        _write_json(out / "sweep.json", {"meta": meta, "rows": rows})
    return 0


def cmd_optimize(args) -> int:
    cfg = load_config(args.config)
    if cfg.ga is None or cfg.target is None:
        raise ConfigError("optimize needs optimizer and target stanzas", "optimizer")
    ga = cfg.ga
    if args.seed is not None:
        ga = dataclasses.replace(ga, seed=args.seed)
    if args.runs is not None:
        ga = dataclasses.replace(ga, n_runs=args.runs)
    scenario = SimulationScenario(
        cfg.topology, cfg.hardware, cfg.protocol, improvable=cfg.improvable, target_rate=cfg.target.rate
    )
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result = genetic_optimize(scenario, cfg.target, ga, history_path=str(out / "history.ndjson"))
    _write_json(
        out / "optimize.json",
        {
            "meta": _meta(cfg, ga.seed),
            "best": result.best.to_json(),
            "generations": result.generations,
            "stopped_by_var": result.stopped_by_var,
        },
    )
    print(json.dumps({"best_cost": result.best.cost, "generations": result.generations}))
    return 0


def cmd_bound(args) -> int:
    print(f"{vbqc_min_fidelity(args.rate, args.T):.4f}")
    return 0


def _tests_dir() -> Optional[Path]:
    here = Path(__file__).resolve()
    for parent in here.parents:
        cand = parent / "tests"
        if (cand / "test_acceptance.py").exists():
            return cand
    return None


def cmd_validate(args) -> int:
    tests = _tests_dir()
    if tests is None:
        raise FileNotFoundError("test suite not found next to the installed package")
    proc = subprocess.run(
        [sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", str(tests)],
        capture_output=True,
        text=True,
    )
    summary = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else ""
    counts = {}
    for part in summary.replace("=", "").split(","):
        words = part.split()
        if len(words) >= 2 and words[0].isdigit():
            counts[words[1]] = int(words[0])
    print(json.dumps({"summary": summary, "counts": counts, "exit_code": proc.returncode}))
    return 0 if proc.returncode == 0 else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="repeaterforge", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, outputs=True):
        sp.add_argument("--config", required=True)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--runs", type=int, help="delivered pairs per simulation")
        if outputs:
            sp.add_argument("--out-dir", default="results")
            sp.add_argument("--format", choices=("json", "csv"), default="json")

    sp = sub.add_parser("simulate", help="run one scenario")
    common(sp)
    sp.add_argument("--records", action="store_true", help="include every delivered pair in the output")
    sp.add_argument("--trace", action="store_true", help="write an event trace")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("sweep", help="run the sweep stanza of a scenario")
    common(sp)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("optimize", help="search for minimal hardware improvements")
    common(sp)
    sp.set_defaults(func=cmd_optimize)

    sp = sub.add_parser("bound", help="minimal teleportation fidelity for a rate and server memory")
    sp.add_argument("rate", type=float, help="Hz")
    sp.add_argument("T", type=float, help="server coherence time, s")
    sp.set_defaults(func=cmd_bound)

    sp = sub.add_parser("validate", help="run the oracle and acceptance suites")
    sp.set_defaults(func=cmd_validate)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(json.dumps(exc.to_json()), file=sys.stderr)
        return 2
    except (ValueError, FileNotFoundError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
