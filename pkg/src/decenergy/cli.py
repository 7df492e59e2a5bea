"""Command-line entry point.

One ``decenergy`` command with subcommands for catalog export, dataset
validation and merging, synthetic corpus generation, coefficient
fitting, evaluation with and without cross-validation, scatter export,
and energy measurement campaigns.

Conventions shared by every subcommand:

* exit 0 on success, 1 on validation or I/O errors, 2 on usage errors;
* diagnostics go to stderr; machine-readable output goes to files only;
* output files are written atomically, so a failing run leaves no
  partial artifacts and re-running with fixed seeds reproduces outputs
  byte for byte;
* ``--config run.json`` supplies defaults for recurring parameters
  (model kind, seed, fold count, bounds mode, measurement settings);
  explicit flags win over the config file.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from decenergy import __version__
from decenergy.catalog import dump_catalog_csv
from decenergy.dataset import (
    detect_catalog_kind,
    load_dataset,
    merge_datasets,
    save_dataset,
)
from decenergy.errors import ToolkitError, ValidationError
from decenergy.estimator import EnergyModel, FitConfig, fit_dataset
from decenergy.evaluation import (
    EvaluationReport,
    cross_validate,
    evaluate_dataset,
    export_scatter_csv,
)
from decenergy.measurement import (
    MockCounterSource,
    RaplCounterSource,
    SessionConfig,
    run_session,
)
from decenergy.synth import (
    DEFAULT_TOOL_OFF_PLAN,
    NoiseModel,
    SynthConfig,
    generate,
    save_truth,
)


@dataclass
class RunConfig:
    """Defaults shared across subcommands, loadable from a JSON file."""

    model: str | None = None
    seed: int | None = None
    k: int | None = None
    allow_negative: bool | None = None
    alpha: float | None = None
    beta: float | None = None
    m_min: int | None = None
    m_max: int | None = None
    source: str | None = None

    @classmethod
    def load(cls, path: str | Path) -> RunConfig:
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config file {path}: invalid JSON ({exc})") from None
        if not isinstance(data, dict):
            raise ValidationError(f"config file {path}: expected a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValidationError(
                f"config file {path}: unknown key {unknown[0]!r} "
                f"(known: {', '.join(sorted(known))})"
            )
        return cls(**data)


def _resolve(flag_value, config_value, default=None, name: str | None = None):
    """Flag beats config file beats built-in default."""
    if flag_value is not None:
        return flag_value
    if config_value is not None:
        return config_value
    if default is None and name is not None:
        raise ValidationError(f"missing required parameter {name}")
    return default


def _write_atomic(path: Path, write) -> None:
    """Write via a sibling temp file and rename, so failures leave nothing.

    The temp name keeps the real extension (fig.tmp.png, not fig.png.tmp)
    because image writers infer the format from it.
    """
    path = Path(path)
    tmp = path.with_name(path.stem + ".tmp" + path.suffix)
    try:
        write(tmp)
        os.replace(tmp, path)
    finally:
        tmp.unlink(missing_ok=True)


def _load_dataset_any_kind(path: str | Path):
    """Load a dataset CSV, inferring FV or FVS from its header."""
    import csv

    with Path(path).open(newline="", encoding="utf-8") as fh:
        for row in csv.reader(fh):
            if row and not row[0].startswith("#"):
                kind = detect_catalog_kind(row)
                break
        else:
            raise ValidationError(f"{path}: no header row found")
    return load_dataset(path, kind)


def _export_scatter_atomic(report: EvaluationReport, path: Path) -> tuple[Path, Path]:
    """Atomic variant of the two-file scatter export."""
    path = Path(path)
    identity = path.with_name(path.stem + "_identity" + path.suffix)
    with tempfile.TemporaryDirectory(dir=path.parent) as td:
        tmp_scatter, tmp_identity = export_scatter_csv(report, Path(td) / path.name)
        os.replace(tmp_scatter, path)
        os.replace(tmp_identity, identity)
    return path, identity


def _render_figure(report: EvaluationReport, scatter_path: Path, args) -> Path | None:
    """Render the scatter image next to the CSV unless suppressed."""
    if getattr(args, "no_figure", False):
        return None
    figure_path = getattr(args, "figure", None)
    if figure_path is None:
        figure_path = Path(scatter_path).with_suffix(".png")
    from decenergy.figures import render_scatter

    figure_path = Path(figure_path)
    _write_atomic(figure_path, lambda tmp: render_scatter(report, tmp))
    return figure_path


def _model_kind(args, config: RunConfig) -> str:
    return str(_resolve(args.model, config.model, name="--model")).upper()


def cmd_catalog_dump(args, config: RunConfig) -> int:
    kind = _model_kind(args, config)
    text = dump_catalog_csv(kind)
    _write_atomic(Path(args.output), lambda tmp: tmp.write_text(text))
    print(f"wrote {args.output} ({kind} catalog)", file=sys.stderr)
    return 0


def cmd_dataset_validate(args, config: RunConfig) -> int:
    kind = _model_kind(args, config)
    ds = load_dataset(args.path, kind)
    print(f"{args.path}: {len(ds)} records, valid {ds.catalog_kind} dataset", file=sys.stderr)
    return 0


def cmd_dataset_merge(args, config: RunConfig) -> int:
    a = _load_dataset_any_kind(args.first)
    b = _load_dataset_any_kind(args.second)
    merged = merge_datasets(a, b)
    _write_atomic(Path(args.output), lambda tmp: save_dataset(merged, tmp))
    print(
        f"wrote {args.output}: {len(a)} + {len(b)} = {len(merged)} records",
        file=sys.stderr,
    )
    return 0


def cmd_synth(args, config: RunConfig) -> int:
    kind = _model_kind(args, config)
    seed = int(_resolve(args.seed, config.seed, default=0))
    try:
        qps = tuple(int(q) for q in args.qps.split(","))
        configs = tuple(c for c in args.configs.split(",") if c)
    except ValueError:
        raise ValidationError(
            f"--qps must be comma-separated integers, got {args.qps!r}"
        ) from None
    synth_config = SynthConfig(
        catalog_kind=kind,
        n_sequences=args.sequences,
        qps=qps,
        configs=configs,
        seed=seed,
        noise=NoiseModel.parse(args.noise),
        tool_off_plan=() if args.no_tool_off else DEFAULT_TOOL_OFF_PLAN,
    )
    dataset, e_true = generate(synth_config)
    _write_atomic(Path(args.output), lambda tmp: save_dataset(dataset, tmp))
    if args.truth:
        _write_atomic(Path(args.truth), lambda tmp: save_truth(e_true, kind, tmp))
    print(
        f"wrote {args.output}: {len(dataset)} records ({kind}, seed {seed})",
        file=sys.stderr,
    )
    return 0


def _fit_config(args, config: RunConfig) -> FitConfig:
    allow_negative = bool(_resolve(args.allow_negative or None, config.allow_negative, default=False))
    lower = -np.inf if allow_negative else 0.0
    return FitConfig(lower_bound=lower)


def cmd_fit(args, config: RunConfig) -> int:
    kind = _model_kind(args, config)
    ds = load_dataset(args.data, kind)
    model = fit_dataset(ds, _fit_config(args, config))
    _write_atomic(Path(args.output), lambda tmp: model.save(tmp))
    print(
        f"wrote {args.output}: {len(model.coefficients)} coefficients, "
        f"residual {model.residual_norm:.6g}",
        file=sys.stderr,
    )
    return 0


def cmd_cv(args, config: RunConfig) -> int:
    kind = _model_kind(args, config)
    ds = load_dataset(args.data, kind)
    k = int(_resolve(args.k, config.k, default=10))
    seed = int(_resolve(args.seed, config.seed, default=0))
    report = cross_validate(
        ds,
        k=k,
        seed=seed,
        fit_config=_fit_config(args, config),
        group_field=args.group_by,
    )
    _write_atomic(Path(args.output), lambda tmp: report.save(tmp))
    print(
        f"wrote {args.output}: k={k} seed={seed} "
        f"epsilon_bar={report.epsilon_bar:.6f}",
        file=sys.stderr,
    )
    if args.scatter:
        scatter, identity = _export_scatter_atomic(report, Path(args.scatter))
        print(f"wrote {scatter} and {identity}", file=sys.stderr)
        figure = _render_figure(report, scatter, args)
        if figure is not None:
            print(f"wrote {figure}", file=sys.stderr)
    return 0


def cmd_eval(args, config: RunConfig) -> int:
    model = EnergyModel.load(args.coeffs)
    if model.catalog_kind is None:
        raise ValidationError(
            f"{args.coeffs}: model has no catalog kind; cannot infer dataset schema"
        )
    ds = load_dataset(args.data, model.catalog_kind)
    report = evaluate_dataset(ds, model)
    if args.output:
        _write_atomic(Path(args.output), lambda tmp: report.save(tmp))
        print(f"wrote {args.output}", file=sys.stderr)
    if args.scatter:
        scatter, identity = _export_scatter_atomic(report, Path(args.scatter))
        print(f"wrote {scatter} and {identity}", file=sys.stderr)
        figure = _render_figure(report, scatter, args)
        if figure is not None:
            print(f"wrote {figure}", file=sys.stderr)
    print(
        f"{args.data}: {len(report.records)} records, "
        f"epsilon_bar={report.epsilon_bar:.6f}",
        file=sys.stderr,
    )
    return 0


def cmd_scatter(args, config: RunConfig) -> int:
    report = EvaluationReport.load(args.report)
    scatter, identity = _export_scatter_atomic(report, Path(args.output))
    print(f"wrote {scatter} and {identity}", file=sys.stderr)
    figure = _render_figure(report, scatter, args)
    if figure is not None:
        print(f"wrote {figure}", file=sys.stderr)
    return 0


def _counter_source(spec: str):
    if spec == "rapl":
        return RaplCounterSource()
    if spec.startswith("mock:"):
        return MockCounterSource.from_file(spec[len("mock:"):])
    raise ValidationError(
        f"--source must be 'rapl' or 'mock:<path>', got {spec!r}"
    )


def cmd_measure(args, config: RunConfig) -> int:
    session_config = SessionConfig(
        alpha=float(_resolve(args.alpha, config.alpha, default=0.99)),
        beta=float(_resolve(args.beta, config.beta, default=0.02)),
        m_min=int(_resolve(args.m_min, config.m_min, default=5)),
        m_max=int(_resolve(args.m_max, config.m_max, default=50)),
    )
    source_spec = str(_resolve(args.source, config.source, name="--source"))
    source = _counter_source(source_spec)
    session = run_session(args.cmd, source, session_config)
    _write_atomic(Path(args.output), lambda tmp: session.save(tmp))
    state = "converged" if session.converged else "NOT converged (m_max reached)"
    print(
        f"wrote {args.output}: m={session.sample_count}, "
        f"mean={session.mean_energy_joules:.6g} J, {state}",
        file=sys.stderr,
    )
    return 0


def _add_model_flag(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--model",
        choices=["fv", "fvs", "FV", "FVS"],
        default=None,
        help="feature catalog: fv (230 columns) or fvs (66 columns)",
    )


def _add_figure_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_mutually_exclusive_group()
    group.add_argument(
        "--figure",
        metavar="PATH",
        default=None,
        help="render the scatter image to PATH (default: <scatter>.png)",
    )
    group.add_argument(
        "--no-figure",
        action="store_true",
        help="skip rendering the scatter image",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="decenergy",
        description="Decoder energy demand modeling from bit-stream features.",
    )
    parser.add_argument("--version", action="version", version=f"decenergy {__version__}")
    parser.add_argument(
        "--config",
        metavar="PATH",
        default=None,
        help="JSON file with shared parameter defaults; flags override it",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="SUBCOMMAND")

    p = sub.add_parser("catalog", help="feature catalog operations")
    catalog_sub = p.add_subparsers(dest="catalog_command", required=True)
    dump = catalog_sub.add_parser("dump", help="export the catalog column table as CSV")
    _add_model_flag(dump)
    dump.add_argument("-o", "--output", required=True, help="output CSV path")
    dump.set_defaults(handler=cmd_catalog_dump)

    p = sub.add_parser("dataset", help="dataset validation and merging")
    dataset_sub = p.add_subparsers(dest="dataset_command", required=True)
    validate = dataset_sub.add_parser("validate", help="check a dataset CSV against a schema")
    validate.add_argument("path", help="dataset CSV to validate")
    _add_model_flag(validate)
    validate.set_defaults(handler=cmd_dataset_validate)
    merge = dataset_sub.add_parser("merge", help="concatenate two datasets (disjoint ids)")
    merge.add_argument("first", help="first dataset CSV")
    merge.add_argument("second", help="second dataset CSV")
    merge.add_argument("-o", "--output", required=True, help="merged CSV path")
    merge.set_defaults(handler=cmd_dataset_merge)

    p = sub.add_parser("synth", help="generate a synthetic dataset with known truth")
    _add_model_flag(p)
    p.add_argument("--sequences", type=int, default=23, help="number of sequences (default 23)")
    p.add_argument("--qps", default="22,27,32,37", help="comma-separated QP list")
    p.add_argument("--configs", default="RA,AI,LB", help="comma-separated coder configs")
    p.add_argument("--noise", default="none", help="none, mult:<sigma_rel>, or add:<sigma_abs>")
    p.add_argument("--seed", type=int, default=None, help="generator seed (default 0)")
    p.add_argument("--no-tool-off", action="store_true", help="skip the tool-off encode sets")
    p.add_argument("-o", "--output", required=True, help="dataset CSV path")
    p.add_argument("--truth", default=None, help="also write ground-truth energies JSON")
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser("fit", help="fit per-feature energies to a dataset")
    p.add_argument("--data", required=True, help="training dataset CSV")
    _add_model_flag(p)
    p.add_argument(
        "--allow-negative",
        action="store_true",
        help="drop the nonnegativity bound on coefficients",
    )
    p.add_argument("-o", "--output", required=True, help="model JSON path")
    p.set_defaults(handler=cmd_fit)

    p = sub.add_parser("cv", help="k-fold cross-validation of the fit")
    p.add_argument("--data", required=True, help="dataset CSV")
    _add_model_flag(p)
    p.add_argument("--k", type=int, default=None, help="fold count (default 10)")
    p.add_argument("--seed", type=int, default=None, help="fold shuffle seed (default 0)")
    p.add_argument("--allow-negative", action="store_true", help="drop the nonnegativity bound")
    p.add_argument(
        "--group-by",
        metavar="FIELD",
        default=None,
        help="assign whole groups (e.g. sequence) to folds instead of records",
    )
    p.add_argument("-o", "--output", required=True, help="report JSON path")
    p.add_argument("--scatter", default=None, help="also export scatter CSV here")
    _add_figure_flags(p)
    p.set_defaults(handler=cmd_cv)

    p = sub.add_parser("eval", help="evaluate a fitted model on a dataset (no CV)")
    p.add_argument("--data", required=True, help="dataset CSV")
    p.add_argument("--coeffs", required=True, help="model JSON from fit")
    p.add_argument("-o", "--output", default=None, help="report JSON path")
    p.add_argument("--scatter", default=None, help="also export scatter CSV here")
    _add_figure_flags(p)
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("scatter", help="export scatter CSV and image from a report")
    p.add_argument("--report", required=True, help="report JSON from cv or eval")
    p.add_argument("-o", "--output", required=True, help="scatter CSV path")
    _add_figure_flags(p)
    p.set_defaults(handler=cmd_scatter)

    p = sub.add_parser("measure", help="run an energy measurement campaign")
    p.add_argument("--cmd", required=True, help="decoder command to measure")
    p.add_argument("--alpha", type=float, default=None, help="confidence level (default 0.99)")
    p.add_argument("--beta", type=float, default=None, help="relative CI width bound (default 0.02)")
    p.add_argument("--m-min", type=int, default=None, help="minimum samples (default 5)")
    p.add_argument("--m-max", type=int, default=None, help="maximum samples (default 50)")
    p.add_argument("--source", default=None, help="energy counter: rapl or mock:<path>")
    p.add_argument("-o", "--output", required=True, help="session JSON path")
    p.set_defaults(handler=cmd_measure)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = RunConfig.load(args.config) if args.config else RunConfig()
        return args.handler(args, config)
    except ToolkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except json.JSONDecodeError as exc:
        print(f"error: invalid JSON input ({exc})", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
