"""Command-line front end.

Subcommands: table1, density, solve, cluster, evaluate, compare, fig2, fig3,
fig4, fig6. Each accepts --config JSON plus flags that override config-file
fields (flag > config > default). Every artifact directory gets a manifest
with the effective config, seeds, package version, and wall time.

Exit codes: 0 success, 1 configuration error, 2 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import jsonschema

from . import experiments
from .goals import GoalParameterError, UnknownGoalError
from .sources import CsvFormatError, SourceParameterError, UnknownSourceError

GOAL_IDS = ["scalar-ee", "scalar-log", "scalar-sigmoid10", "scalar-quadratic",
            "ee-multiband", "se-multiband", "quadratic-2d", "pcs-lp"]
SOURCE_IDS = ["uniform-box", "trunc-exp", "exp-iid", "rayleigh-gain", "synthetic-load"]

_COMMON = {
    "out": {"type": "string"},
    "seed": {"type": "integer"},
    "threads": {"type": "integer", "minimum": 1},
}
_GOAL_SOURCE = {
    "goal": {"type": "string", "enum": GOAL_IDS},
    "goal_params": {"type": "object"},
    "source": {"type": "string", "enum": SOURCE_IDS},
    "source_params": {"type": "object"},
    "dataset": {"type": "string"},
    "lenient": {"type": "boolean"},
}
_SOLVER = {
    "solver": {
        "type": "object",
        "additionalProperties": False,
        "properties": {
            "M": {"type": "integer", "minimum": 1},
            "max_iters": {"type": "integer", "minimum": 1},
            "epsilon": {"type": "number", "exclusiveMinimum": 0},
            "mc_points": {"type": "integer", "minimum": 1},
            "loss_mode": {"type": "string", "enum": ["approx-Ltilde", "exact-L"]},
            "restarts": {"type": "integer", "minimum": 1},
            "init": {"type": "string",
                     "enum": ["density-quantile", "kmeans-seed", "explicit"]},
            "pattern_max_iters": {"type": "integer", "minimum": 1},
            "pattern_tol": {"type": "number", "exclusiveMinimum": 0},
        },
    },
}


def _schema(extra: dict, required=()):
    props = dict(_COMMON)
    props.update(extra)
    return {
        "type": "object",
        "additionalProperties": False,
        "properties": props,
        "required": list(required),
    }


SCHEMAS = {
    "table1": _schema({"M": {"type": "integer", "minimum": 1}}),
    "density": _schema({**_GOAL_SOURCE, "kappa": {"type": "integer", "minimum": 1, "maximum": 4},
                        "grid": {"type": "integer", "minimum": 2}},
                       required=["goal", "source"]),
    "solve": _schema({**_GOAL_SOURCE, **_SOLVER, "M": {"type": "integer", "minimum": 1}},
                     required=["goal"]),
    "cluster": _schema({**_GOAL_SOURCE, **_SOLVER, "M": {"type": "integer", "minimum": 1}},
                       required=["goal", "dataset"]),
    "evaluate": _schema({**_GOAL_SOURCE, "quantizer": {"type": "string"},
                         "n": {"type": "integer", "minimum": 1}},
                        required=["goal", "quantizer"]),
    "compare": _schema({**_GOAL_SOURCE,
                        "quantizers": {"type": "array", "items": {"type": "string"},
                                       "minItems": 1},
                        "n": {"type": "integer", "minimum": 1}},
                       required=["goal", "quantizers"]),
    "fig2": _schema({"n": {"type": "integer", "minimum": 1},
                     "bits": {"type": "array", "items": {"type": "integer", "minimum": 1}},
                     "bands": {"type": "integer", "minimum": 1},
                     "p_max": {"type": "number", "exclusiveMinimum": 0},
                     "sigma2": {"type": "number", "exclusiveMinimum": 0},
                     "c": {"type": "number", "exclusiveMinimum": 0}}),
    "fig3": _schema({**_SOLVER, "n": {"type": "integer", "minimum": 1},
                     "m_values": {"type": "array", "items": {"type": "integer", "minimum": 1}},
                     "restarts": {"type": "integer", "minimum": 1}}),
    "fig4": _schema({**_GOAL_SOURCE, "grid": {"type": "integer", "minimum": 2},
                     "grid_lo": {"type": "number"}, "grid_hi": {"type": "number"}}),
    "fig6": _schema({**_SOLVER,
                     "p_values": {"type": "array", "items": {"type": "number", "minimum": 1}},
                     "target_pct": {"type": "number", "exclusiveMinimum": 0},
                     "profiles": {"type": "integer", "minimum": 2},
                     "dim": {"type": "integer", "minimum": 2},
                     "energy": {"type": "number", "exclusiveMinimum": 0},
                     "m_max": {"type": "integer", "minimum": 1}}),
}

RUNNERS = {
    "table1": experiments.run_table1,
    "density": experiments.run_density,
    "solve": experiments.run_solve,
    "cluster": experiments.run_cluster,
    "evaluate": experiments.run_evaluate,
    "compare": experiments.run_compare,
    "fig2": experiments.run_fig2,
    "fig3": experiments.run_fig3,
    "fig4": experiments.run_fig4,
    "fig6": experiments.run_fig6,
}


def _build_parser():
    ap = argparse.ArgumentParser(
        prog="goq",
        description="Design and benchmark quantizers that minimize decision loss.",
        epilog="Flag precedence: command-line flags override --config fields, "
               "which override defaults. GOQ_THREADS is the fallback for --threads.",
    )
    sub = ap.add_subparsers(dest="command", required=True)
    for name in RUNNERS:
        sp = sub.add_parser(name, help=f"run the {name} pipeline")
        sp.add_argument("--config", type=Path, help="JSON config file")
        sp.add_argument("--out", type=str, help="output directory")
        sp.add_argument("--seed", type=int, help="root seed for all stages")
        sp.add_argument("--threads", type=int, help="worker cap (recorded; "
                        "computations are deterministic regardless)")
        sp.add_argument("--goal", type=str)
        sp.add_argument("--source", type=str)
        sp.add_argument("--dataset", type=str, help="CSV dataset path")
        sp.add_argument("--quantizer", type=str, help="quantizer JSON path")
        sp.add_argument("--quantizers", type=str, nargs="+",
                        help="quantizer JSON paths (compare)")
        sp.add_argument("--M", type=int, help="region count")
        sp.add_argument("--n", type=int, help="evaluation sample count")
        sp.add_argument("--goal-params", type=str, dest="goal_params",
                        help="JSON object of goal parameters")
        sp.add_argument("--source-params", type=str, dest="source_params",
                        help="JSON object of source parameters")
    return ap


def _merge_config(args) -> dict:
    config = {}
    if args.config is not None:
        try:
            config = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}")
        if not isinstance(config, dict):
            raise ConfigError("config file must hold a JSON object")
    for key in ("out", "seed", "threads", "goal", "source", "dataset",
                "quantizer", "quantizers", "M", "n"):
        val = getattr(args, key, None)
        if val is not None:
            config[key] = val
    for key in ("goal_params", "source_params"):
        val = getattr(args, key, None)
        if val is not None:
            try:
                config[key] = json.loads(val)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"--{key.replace('_', '-')} is not valid JSON: {exc}")
    if "threads" not in config and os.environ.get("GOQ_THREADS"):
        try:
            config["threads"] = int(os.environ["GOQ_THREADS"])
        except ValueError:
            raise ConfigError("GOQ_THREADS must be an integer")
    config.setdefault("out", ".")
    config.setdefault("seed", 0)
    return config


class ConfigError(ValueError):
    pass


def _validate(command: str, config: dict):
    try:
        jsonschema.validate(config, SCHEMAS[command])
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config path {path}: {exc.message}")


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = _merge_config(args)
        _validate(args.command, config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        manifest = RUNNERS[args.command](config)
    except (GoalParameterError, UnknownGoalError, SourceParameterError,
            UnknownSourceError, CsvFormatError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ArithmeticError, RuntimeError, ValueError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 2
    if manifest.get("saturated"):
        print("warning: loss target unreachable within the M range for some "
              "sweep points (partial results written)", file=sys.stderr)
        return 2
    print(json.dumps({"out": config["out"], "wall_time_s": manifest["wall_time_s"]}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
