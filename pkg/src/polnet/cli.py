"""Command-line entry point: ``polnet CONFIG [--seed N] [--out-dir DIR] [--quiet]``.

Each run writes one CSV per result table plus ``run_metadata.json`` holding
the resolved configuration, seed and summary. Outputs carry no timestamps so
that repeated runs with the same seed are byte-identical.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, config_to_dict, load_config
from .experiments import ExperimentResult, run_experiment

METADATA_FILE = "run_metadata.json"


def _cell(value):
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, np.integer):
        return str(int(value))
    if value is None:
        return ""
    return value


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    return value


def write_result(result: ExperimentResult, config, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, table in sorted(result.tables.items()):
        path = out_dir / f"{name}.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(table.header)
            writer.writerows([_cell(v) for v in row] for row in table.rows)
        written.append(path)
    meta = {
        "kind": result.kind,
        "seed": config.seed,
        "config": config_to_dict(config),
        "summary": _jsonable(result.summary),
        "files": [p.name for p in written],
    }
    meta_path = out_dir / METADATA_FILE
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    written.append(meta_path)
    return written


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="polnet", description="Run a polarization-network experiment.")
    parser.add_argument("config", help="experiment configuration (JSON or YAML)")
    parser.add_argument("--seed", type=int, default=None, help="override the master seed")
    parser.add_argument("--out-dir", default=None, help="output directory (default: output.dir)")
    parser.add_argument("--quiet", action="store_true", help="suppress the summary printout")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
        if args.seed is not None:
            config.seed = args.seed
        out_dir = args.out_dir or config.output.dir
        result = run_experiment(config)
        files = write_result(result, config, out_dir)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - report any runtime failure as an exit status
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    if not args.quiet:
        print(f"{result.kind}: wrote {len(files)} files to {out_dir}")
        for key, value in result.summary.items():
            if isinstance(value, (int, float, str)):
                print(f"  {key} = {value}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
