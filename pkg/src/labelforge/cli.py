"""Command-line interface.

Subcommands: run (execute a pipeline config), sweep-entropy, sweep-noise,
matched-tvd (the three experiment sweeps), validate and info (dataset
utilities). Exit codes: 0 success, 1 configuration error, 2 data error.

Sweeps write a long-format `sweep.csv` plus rendered PNG figures alongside
it; pass --no-figures to keep only the delimited output.
"""

import argparse
import json
import sys
from pathlib import Path

from . import figures
from .data_model import read_dataset, validate, write_dataset
from .errors import ConfigError, DataError, UnsupportedModelOperation
from .pipeline import PipelineConfig, run_pipeline, write_pipeline_outputs
from .sweeps import (
    EntropySweepConfig,
    MatchedTvdConfig,
    NoiseSweepConfig,
    run_entropy_sweep,
    run_matched_tvd,
    run_noise_sweep,
)


class _Parser(argparse.ArgumentParser):
    """argparse variant that reports usage problems with exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _int_list(text: str):
    return [int(part) for part in text.split(",") if part != ""]


def _float_list(text: str):
    return [float(part) for part in text.split(",") if part != ""]


def _str_list(text: str):
    return [part.strip() for part in text.split(",") if part.strip()]


def build_parser() -> _Parser:
    parser = _Parser(prog="labelforge", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="execute a pipeline configuration")
    run.add_argument("--config", required=True, help="pipeline JSON document")
    run.add_argument("--seed", type=int, default=None, help="override the master seed")
    run.add_argument("--out", default=None, help="output directory")

    for name, helptext in (
        ("sweep-entropy", "entropy of hidden-feature soft labels per sampler"),
        ("sweep-noise", "uncertainty curves over a noise-rate grid"),
        ("matched-tvd", "entropy comparison at matched mean TVD"),
    ):
        cmd = sub.add_parser(name, help=helptext)
        cmd.add_argument("--config", default=None, help="sweep JSON document")
        cmd.add_argument("--input", default=None, help="observed dataset CSV")
        cmd.add_argument("--rows", type=int, default=None, help="synthetic dataset size")
        cmd.add_argument("--generator", default=None, help="synthetic generator name")
        cmd.add_argument("--seed", type=int, default=None, help="master seed")
        cmd.add_argument("--out", default="out", help="output directory")
        cmd.add_argument("--threads", type=int, default=1, help="worker threads")
        cmd.add_argument("--samples", type=int, default=None, help="hidden-value draws per instance")
        cmd.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
        if name == "sweep-entropy":
            cmd.add_argument("--runs", type=int, default=None, help="seeded repetitions")
            cmd.add_argument("--hidden-counts", type=_int_list, default=None)
            cmd.add_argument("--samplers", type=_str_list, default=None)
        elif name == "sweep-noise":
            cmd.add_argument("--runs", type=int, default=None, help="seeded repetitions")
            cmd.add_argument("--rates", type=_float_list, default=None)
            cmd.add_argument("--matrix", choices=("ncar", "nar"), default=None)
            cmd.add_argument("--hidden-count", type=int, default=None)
        else:
            cmd.add_argument("--hidden-counts", type=_int_list, default=None)

    val = sub.add_parser("validate", help="check dataset invariants")
    val.add_argument("--input", required=True)
    val.add_argument("--kind", choices=("G", "PG", "OS", "OH"), default=None)

    info = sub.add_parser("info", help="describe a dataset")
    info.add_argument("--input", required=True)
    return parser


def _sweep_config_dict(args) -> dict:
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {args.config} is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("sweep config must be a JSON object")
    else:
        raw = {}
    if args.input is not None:
        raw["input"] = args.input
    if raw.get("input") is None:
        synth = {"generator": args.generator or "silhouette_like", "rows": args.rows or 200}
        raw["input"] = {"synthetic": synth}
    elif args.rows is not None or args.generator is not None:
        raise ConfigError("--rows/--generator apply only to synthetic input")
    if args.seed is not None:
        raw["master_seed"] = args.seed
    if args.samples is not None:
        raw["samples"] = args.samples
    raw["threads"] = args.threads
    for attr, key in (("runs", "runs"), ("hidden_counts", "hidden_counts"),
                      ("samplers", "samplers"), ("rates", "rates"),
                      ("matrix", "matrix"), ("hidden_count", "hidden_count")):
        value = getattr(args, attr, None)
        if value is not None:
            raw[key] = value
    return raw


def _write_sweep_meta(out_dir: Path, command: str, raw_config: dict):
    meta = {"command": command, "config": raw_config}
    with open(out_dir / "sweep.meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _cmd_run(args) -> int:
    config = PipelineConfig.from_file(args.config)
    if args.seed is not None:
        config.master_seed = args.seed
    out_dir = Path(args.out or config.out_dir or "out")
    result = run_pipeline(config)
    written = write_pipeline_outputs(result, out_dir)
    print(f"wrote {len(written)} files to {out_dir}")
    return 0


def _cmd_sweep_entropy(args) -> int:
    raw = _sweep_config_dict(args)
    cfg = EntropySweepConfig.from_dict(raw)
    result = run_entropy_sweep(cfg)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = result.to_csv(out_dir / "sweep.csv")
    _write_sweep_meta(out_dir, "sweep-entropy", raw)
    print(f"wrote {csv_path}")
    if not args.no_figures:
        fig = figures.render_entropy_sweep(result, out_dir / "entropy_sweep.png")
        print(f"wrote {fig}")
    return 0


def _cmd_sweep_noise(args) -> int:
    raw = _sweep_config_dict(args)
    cfg = NoiseSweepConfig.from_dict(raw)
    result = run_noise_sweep(cfg)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = result.to_csv(out_dir / "sweep.csv")
    _write_sweep_meta(out_dir, "sweep-noise", raw)
    print(f"wrote {csv_path}")
    if not args.no_figures:
        fig = figures.render_noise_sweep(result, out_dir / "noise_sweep.png")
        print(f"wrote {fig}")
    return 0


def _cmd_matched_tvd(args) -> int:
    raw = _sweep_config_dict(args)
    cfg = MatchedTvdConfig.from_dict(raw)
    result = run_matched_tvd(cfg)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = result.sweep.to_csv(out_dir / "sweep.csv")
    _write_sweep_meta(out_dir, "matched-tvd", raw)
    print(f"wrote {csv_path}")
    for name, dataset in sorted(result.datasets.items()):
        write_dataset(dataset, out_dir / f"{name}.csv", master_seed=cfg.master_seed)
    print(f"wrote {len(result.datasets)} dataset files")
    if not args.no_figures:
        fig = figures.render_matched_tvd(result.sweep, out_dir / "matched_tvd.png")
        print(f"wrote {fig}")
        if result.scatter_columns and len(result.scatter_columns) == 2:
            x_col, y_col = result.scatter_columns
            for name, dataset in sorted(result.datasets.items()):
                if not hasattr(dataset, "soft_labels"):
                    continue
                if x_col not in dataset.features.column_names:
                    continue
                figures.render_soft_scatter(
                    dataset.features.values, dataset.features.column_names,
                    dataset.soft_labels, x_col, y_col,
                    out_dir / f"scatter_{name}.png", title=name,
                )
    return 0


def _cmd_validate(args) -> int:
    dataset = read_dataset(args.input, kind=args.kind)
    report = validate(dataset)
    print(report)
    if not report.ok:
        raise DataError(f"{args.input}: {len(report.violations)} invariant violations")
    return 0


def _cmd_info(args) -> int:
    dataset = read_dataset(args.input, kind=args.kind if hasattr(args, "kind") else None)
    features = dataset.kept_features if hasattr(dataset, "kept_features") else dataset.features
    print(f"kind: {dataset.kind}")
    print(f"rows: {features.row_count}")
    print(f"features: {features.column_count} ({', '.join(features.column_names[:8])}"
          f"{', ...' if features.column_count > 8 else ''})")
    print(f"classes: {dataset.schema.class_count} ({', '.join(dataset.schema.class_names)})")
    print(f"provenance: {len(dataset.provenance)} records")
    for record in dataset.provenance:
        print(f"  - {record.get('transform', '?')}")
    return 0


_COMMANDS = {
    "run": _cmd_run,
    "sweep-entropy": _cmd_sweep_entropy,
    "sweep-noise": _cmd_sweep_noise,
    "matched-tvd": _cmd_matched_tvd,
    "validate": _cmd_validate,
    "info": _cmd_info,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, UnsupportedModelOperation) as exc:
        print(f"config error [{args.command}]: {exc}", file=sys.stderr)
        return 1
    except (DataError, FileNotFoundError) as exc:
        print(f"data error [{args.command}]: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
