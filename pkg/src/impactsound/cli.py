"""Command-line front end.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .clustering import INPUTS, default_configs
from .errors import DataError, NumericError
from .features import from_csv, to_csv
from .pipeline import (
    OUTPUT_ENV,
    Outputs,
    PipelineConfig,
    PipelineError,
    cluster_stage,
    compute_features,
    grid_for,
    parse_config_value,
    pca_stage,
    read_config_file,
    run_pipeline,
)
from .signal_io import load_manifest_file
from .synth import SlabSpec, read_label_csv, score_against_truth, write_synth

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4

log = logging.getLogger("impactsound")


class UsageError(Exception):
    pass


def _exit_code(exc: BaseException) -> int:
    cause = exc.cause if isinstance(exc, PipelineError) else exc
    if isinstance(cause, NumericError):
        return EXIT_NUMERIC
    if isinstance(cause, (DataError, OSError)):
        return EXIT_DATA
    return EXIT_USAGE


def _default_out(args_out):
    return args_out or os.environ.get(OUTPUT_ENV) or "impactsound_out"


def _add_pipeline_flags(p):
    g = p.add_argument_group("pipeline options (override --config)")
    g.add_argument("--config", help="flat key=value config file")
    g.add_argument("--band", help="frequency band 'fmin,fmax' in Hz")
    g.add_argument("--include-dc", dest="include_dc", action="store_const", const="true")
    g.add_argument("--window", choices=["none", "hann"])
    g.add_argument("--trim", help="samples kept around the impact peak")
    g.add_argument("--enhance", action="store_const", const="true",
                   help="render feature maps from enhanced features")
    g.add_argument("--conventional-moments", dest="conventional_moments",
                   action="store_const", const="true")
    g.add_argument("--pca-components", dest="pca_components")
    g.add_argument("--pca-raw", dest="pca_standardize", action="store_const", const="false",
                   help="fit PCA on unstandardized features")
    g.add_argument("--methods", help="comma list of kmeans,spectral")
    g.add_argument("--ks", help="comma list of cluster counts")
    g.add_argument("--seed")
    g.add_argument("--gamma")
    g.add_argument("--sigma", help="spectral affinity width (default: median distance)")
    g.add_argument("--spacing", dest="spacing_cm", help="grid spacing in cm")
    g.add_argument("--workers", help="threads for per-recording stages")


def build_config(args, **fixed) -> PipelineConfig:
    values = read_config_file(args.config) if getattr(args, "config", None) else {}
    for f in fields(PipelineConfig):
        raw = getattr(args, f.name, None)
        if raw is not None and f.name not in ("manifest", "out_dir"):
            values[f.name] = parse_config_value(f.name, str(raw))
    values.update({k: v for k, v in fixed.items() if v is not None})
    cfg = replace(PipelineConfig(), **values)
    cfg.validate()
    return cfg


def _print_json(obj):
    print(json.dumps(obj, indent=2, sort_keys=True))


# Subcommands -----------------------------------------------------------------

def cmd_synth(args):
    spec = SlabSpec(seed=args.seed, noise_rms=args.noise_rms, duration_s=args.duration,
                    spacing_cm=args.spacing, width_cm=args.width, length_cm=args.length)
    if args.no_defects:
        spec = replace(spec, defects=())
    paths = write_synth(spec, _default_out(args.out))
    _print_json({k: str(v) for k, v in paths.items()})


def cmd_run(args):
    cfg = build_config(args, manifest=args.manifest, out_dir=_default_out(args.out))
    report = run_pipeline(cfg)
    _print_json(report)


def cmd_features(args):
    cfg = build_config(args, manifest=args.manifest)
    dataset = load_manifest_file(args.manifest, cfg.spacing_cm)
    raw = compute_features(dataset, cfg)
    out = Path(_default_out(args.out))
    out.mkdir(parents=True, exist_ok=True)
    (out / "features.csv").write_text(to_csv(raw), encoding="utf-8")
    print(out / "features.csv")


def _load_features(path):
    return from_csv(Path(path).read_text(encoding="utf-8"))


def cmd_pca(args):
    cfg = build_config(args)
    raw = _load_features(args.features)
    out = Outputs(Path(_default_out(args.out)))
    model, scores = pca_stage(out, raw, grid_for(raw, cfg.spacing_cm), cfg)
    _print_json({"explained_variance_ratio": model.explained_variance_ratio.tolist(),
                 "cumulative": model.cumulative_ratio().tolist(), "files": out.written})


def cmd_cluster(args):
    cfg = build_config(args)
    raw = _load_features(args.features)
    configs = default_configs(cfg.ks, cfg.methods)
    if args.input != "all":
        configs = [c for c in configs if c.input == args.input]
    out = Outputs(Path(_default_out(args.out)))
    table, _ = cluster_stage(out, raw, grid_for(raw, cfg.spacing_cm), cfg, configs)
    print(table.format())


def cmd_map(args):
    cfg = build_config(args)
    matrix = _load_features(args.values)
    if args.column not in matrix.columns:
        raise UsageError(f"column {args.column!r} not in {list(matrix.columns)}")
    values = matrix.column(args.column)
    if args.labels:
        values = values.astype(np.int64)
    out = Outputs(Path(_default_out(args.out)))
    out.write_map(args.name or args.column, grid_for(matrix, cfg.spacing_cm), values, cfg.gamma)
    _print_json({"files": out.written})


def cmd_score(args):
    labels = read_label_csv(Path(args.labels).read_text(encoding="utf-8"), "label")
    truth = read_label_csv(Path(args.truth).read_text(encoding="utf-8"), "truth_label")
    missing = set(labels) ^ set(truth)
    if missing:
        raise DataError(f"ids differ between labels and truth, e.g. {sorted(missing)[:3]}")
    ids = sorted(truth)
    t = np.array([truth[i] for i in ids])
    if args.binary:
        t = (t != 0).astype(np.int64)
    _print_json(score_against_truth(np.array([labels[i] for i in ids]), t))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="impactsound", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic slab dataset")
    p.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV})")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise-rms", type=float, default=SlabSpec.noise_rms)
    p.add_argument("--duration", type=float, default=SlabSpec.duration_s)
    p.add_argument("--spacing", type=float, default=SlabSpec.spacing_cm)
    p.add_argument("--width", type=float, default=SlabSpec.width_cm)
    p.add_argument("--length", type=float, default=SlabSpec.length_cm)
    p.add_argument("--no-defects", action="store_true")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("run", help="full pipeline from a manifest")
    p.add_argument("manifest")
    p.add_argument("--out")
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("features", help="compute the feature table")
    p.add_argument("manifest")
    p.add_argument("--out")
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("pca", help="PCA model and component maps from a feature table")
    p.add_argument("features")
    p.add_argument("--out")
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_pca)

    p = sub.add_parser("cluster", help="cluster a feature table and write label maps")
    p.add_argument("features")
    p.add_argument("--out")
    p.add_argument("--input", choices=list(INPUTS) + ["all"], default="all")
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("map", help="rasterize one column of a CSV with id,x_cm,y_cm columns")
    p.add_argument("values")
    p.add_argument("--column", required=True)
    p.add_argument("--name")
    p.add_argument("--labels", action="store_true", help="treat the column as integer labels")
    p.add_argument("--out")
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_map)

    p = sub.add_parser("score", help="compare a labels CSV with a truth CSV")
    p.add_argument("labels")
    p.add_argument("truth")
    p.add_argument("--binary", action="store_true", help="collapse truth to defect / no defect")
    p.set_defaults(func=cmd_score)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except PipelineError as exc:
        print(f"impactsound: error in stage {exc.stage}: {exc.cause}", file=sys.stderr)
        return _exit_code(exc)
    except UsageError as exc:
        print(f"impactsound: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, NumericError, ValueError, OSError) as exc:
        print(f"impactsound: error: {exc}", file=sys.stderr)
        return _exit_code(exc)
    return 0


if __name__ == "__main__":
    sys.exit(main())
