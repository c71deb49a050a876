"""Command line front end: ``quasi2d run | validate | list-experiments``.

Exit codes: 0 all assertions pass, 2 an assertion failed, 1 usage or
config error (the message names the offending key).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from .experiments import KINDS, ConfigError, ExperimentConfig, Outcome, run_experiment
from .plots import emit_plot

log = logging.getLogger("quasi2d")

EXIT_OK, EXIT_CONFIG, EXIT_ASSERT = 0, 1, 2


def _clean(obj):
    """JSON-safe, deterministic representation."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return float(f"{v:.12g}")
    if isinstance(obj, complex):
        return [_clean(obj.real), _clean(obj.imag)]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if obj is None or isinstance(obj, (str, int)):
        return obj
    if hasattr(obj, "to_dict"):
        return _clean(obj.to_dict())
    if hasattr(obj, "__dict__"):
        return _clean(vars(obj))
    return str(obj)


def load_config(path: str, seed: int | None = None) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return ExperimentConfig.from_dict(data, seed)


def output_dir(cfg: ExperimentConfig, config_path: str, override: str | None) -> Path:
    if override:
        return Path(override)
    if cfg.output:
        return Path(cfg.output)
    root = os.environ.get("QUASI2D_OUT", "quasi2d-out")
    return Path(root) / Path(config_path).stem


def write_artifacts(out_dir: Path, cfg: ExperimentConfig, outcome: Outcome) -> dict:
    out_dir.mkdir(parents=True, exist_ok=True)
    report = {
        "name": cfg.name,
        "kind": cfg.kind,
        "seed": cfg.seed,
        "config": {"params": cfg.params, "expect": cfg.expect},
        "thresholds": outcome.thresholds,
        "results": outcome.results,
        "assertions": outcome.assertions,
        "passed": outcome.passed,
        "tables": sorted(outcome.tables),
        "plots": [f"{name}.svg" for name, *_ in outcome.plots],
    }
    report = _clean(report)
    (out_dir / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    for name, rows in outcome.tables.items():
        if not rows:
            continue
        fields = []
        for row in rows:
            fields += [k for k in row if k not in fields]
        with open(out_dir / f"{name}.csv", "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=fields)
            writer.writeheader()
            for row in rows:
                writer.writerow({k: _clean(v) for k, v in row.items()})
    for name, kind, series, title in outcome.plots:
        if series:
            emit_plot(series, kind, out_dir / f"{name}.svg", title)
    return report


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config, args.seed)
        if args.jobs < 1:
            raise ConfigError("--jobs", "must be >= 1")
        outcome = run_experiment(cfg, args.jobs)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = output_dir(cfg, args.config, args.out)
    try:
        write_artifacts(out_dir, cfg, outcome)
    except OSError as exc:
        print(f"error: config key '--out': cannot write {out_dir}: {exc.strerror}", file=sys.stderr)
        return EXIT_CONFIG
    for a in outcome.assertions:
        print(f"{'PASS' if a['passed'] else 'FAIL'}  {a['name']}")
    print(f"report: {out_dir / 'report.json'}")
    return EXIT_OK if outcome.passed else EXIT_ASSERT


def cmd_validate(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"ok: {cfg.kind} ({cfg.name})")
    return EXIT_OK


def cmd_list(args) -> int:
    for kind, text in KINDS.items():
        print(f"{kind:16s} {text}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="quasi2d", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment config")
    run.add_argument("config")
    run.add_argument("--out", default=None, help="output directory (default $QUASI2D_OUT/<config name>)")
    run.add_argument("--jobs", type=int, default=1)
    run.add_argument("--seed", type=int, default=None, help="override the config seed")
    run.set_defaults(func=cmd_run)
    val = sub.add_parser("validate", help="check a config without running it")
    val.add_argument("config")
    val.set_defaults(func=cmd_validate)
    lst = sub.add_parser("list-experiments", help="list experiment kinds")
    lst.set_defaults(func=cmd_list)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
