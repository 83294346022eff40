"""Command-line driver: ``phenofuse {synth,preprocess,features,train,evaluate,report}``.

Stages talk to each other only through files under the output directory::

    data/           synth inputs (phenology, climate, sentinel1/2, truth, grids/)
    preprocessed/   daily.csv, fields.csv, observations_clean.csv
    features/       <crop>.csv labeled daily feature tables
    train/<crop>/   onsets.csv, folds.csv, importance.csv, models/, studies/
    reports/        metrics, residual bins, per-year deltas, scatter, summary

``report`` chains preprocess through evaluate.  A failing stage leaves a
``<stage>.FAILED`` file with the error next to whatever it already wrote.
"""
from __future__ import annotations

import argparse
import dataclasses
import glob
import io
import json
import logging
import math
import os
import sys

import pandas as pd

from . import evaluate as ev
from ._io import atomic_write_text
from .config import ConfigError, PipelineConfig, load_config
from .crossval import nested_cv
from .dataset import dataset_from_csv, dataset_to_csv
from .ingest import (
    OPTICAL_COLUMNS,
    RADAR_COLUMNS,
    ParseError,
    ValidationError,
    clean_observations,
    parse_acquisitions_csv,
    parse_climate_csv,
    parse_grid,
    parse_phenology_csv,
    serialize_phenology_csv,
)
from .pipeline import PreprocessSettings, build_datasets, preprocess_inputs
from .preprocess import InsufficientData
from .selection import feature_importance
from .synth import SynthSpec, synth_generate

logger = logging.getLogger("phenofuse")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3
STAGES = ("synth", "preprocess", "features", "train", "evaluate", "report")


class DataError(Exception):
    """Inputs are missing or unusable."""


def _read(path: str) -> str:
    if not os.path.exists(path):
        raise DataError(f"missing input: {path}")
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def _csv(df: pd.DataFrame) -> str:
    return df.to_csv(index=False, lineterminator="\n")


def _read_frame(path: str) -> pd.DataFrame:
    return pd.read_csv(io.StringIO(_read(path)), float_precision="round_trip", dtype={"station_id": str})


def _paths(cfg: PipelineConfig) -> dict[str, str]:
    out = cfg.out_dir
    return {
        "pre": os.path.join(out, "preprocessed"),
        "features": os.path.join(out, "features"),
        "train": os.path.join(out, "train"),
        "reports": os.path.join(out, "reports"),
    }


def _crops(cfg: PipelineConfig) -> list[str]:
    """Configured crops, else every crop in the cleaned observations."""
    if cfg.crops:
        return list(cfg.crops)
    obs = parse_phenology_csv(_read(os.path.join(_paths(cfg)["pre"], "observations_clean.csv")))
    return sorted({o.crop for o in obs})


def stage_synth(cfg: PipelineConfig) -> None:
    doc = dict(cfg.synth)
    doc.setdefault("seed", cfg.seed)
    out = synth_generate(SynthSpec.from_dict(doc))
    out.write(os.path.join(cfg.out_dir, "data"))


def _load_grids(grid_dir: str) -> dict:
    if not os.path.isdir(grid_dir):
        raise DataError(f"missing input: {grid_dir}")
    grids: dict[str, dict] = {}
    for path in sorted(glob.glob(os.path.join(grid_dir, "*.asc"))):
        stem = os.path.basename(path)[:-4]
        sid, _, kind = stem.rpartition("_")
        if kind in ("cropmask", "dem") and sid:
            grids.setdefault(sid, {})[kind] = parse_grid(_read(path))
    out = {}
    for sid, g in grids.items():
        if set(g) != {"cropmask", "dem"}:
            raise DataError(f"station {sid}: need both {sid}_cropmask.asc and {sid}_dem.asc in {grid_dir}")
        out[sid] = (g["cropmask"], g["dem"])
    return out


def stage_preprocess(cfg: PipelineConfig) -> None:
    obs = clean_observations(parse_phenology_csv(_read(cfg.input_path("phenology"))))
    if cfg.crops:
        obs = [o for o in obs if o.crop in cfg.crops]
    if not obs:
        raise DataError("no usable phenology observations after cleaning")
    climate = parse_climate_csv(_read(cfg.input_path("climate")))
    s1 = parse_acquisitions_csv(_read(cfg.input_path("sentinel1")), RADAR_COLUMNS)
    s2 = parse_acquisitions_csv(_read(cfg.input_path("sentinel2")), OPTICAL_COLUMNS)
    grids = _load_grids(cfg.input_path("grids"))
    settings = PreprocessSettings(loess_fraction=cfg.loess_fraction, cloud_threshold=cfg.cloud_threshold,
                                  idw_k=cfg.idw_k, buffer_inner_m=cfg.buffer_inner_m, min_field_ha=cfg.min_field_ha)
    try:
        daily, fields = preprocess_inputs(obs, climate, s1, s2, grids, settings)
    except FileNotFoundError as e:
        raise DataError(str(e)) from None
    pre = _paths(cfg)["pre"]
    atomic_write_text(os.path.join(pre, "daily.csv"), _csv(daily))
    atomic_write_text(os.path.join(pre, "fields.csv"), _csv(fields))
    atomic_write_text(os.path.join(pre, "observations_clean.csv"), serialize_phenology_csv(obs))


def stage_features(cfg: PipelineConfig) -> None:
    pre = _paths(cfg)["pre"]
    obs = parse_phenology_csv(_read(os.path.join(pre, "observations_clean.csv")))
    daily = _read_frame(os.path.join(pre, "daily.csv"))
    fields = _read_frame(os.path.join(pre, "fields.csv"))
    crops = _crops(cfg)
    datasets = build_datasets(obs, daily, fields, crops)
    for crop in crops:
        if crop not in datasets:
            raise DataError(f"no observations for crop {crop}")
        atomic_write_text(os.path.join(_paths(cfg)["features"], f"{crop}.csv"), dataset_to_csv(datasets[crop]))


def stage_train(cfg: PipelineConfig) -> None:
    crops = _crops(cfg)
    feature_files = {c: os.path.join(_paths(cfg)["features"], f"{c}.csv") for c in crops}
    for path in feature_files.values():
        if not os.path.exists(path):
            raise DataError(f"missing input: {path}")
    for crop in crops:
        ds = dataset_from_csv(_read(feature_files[crop]))
        try:
            result = nested_cv(ds, seed=cfg.seed, cv_outer=cfg.cv_outer, cv_inner=cfg.cv_inner,
                               n_trials=cfg.n_trials, fixed_features=cfg.fixed_features)
        except ValueError as e:
            raise DataError(f"{crop}: {e}") from None
        _write_training(os.path.join(_paths(cfg)["train"], crop), result)


def _write_training(out: str, result) -> None:
    folds = []
    for fold in result.outer:
        for r in fold.inner:
            tag = f"outer{fold.fold:02d}_inner{r.fold:02d}"
            if r.model is not None:
                atomic_write_text(os.path.join(out, "models", f"{tag}.json"), r.model.to_json())
            if r.study is not None:
                atomic_write_text(os.path.join(out, "studies", f"{tag}.jsonl"), r.study.to_jsonl())
            folds.append({"outer": fold.fold, "inner": r.fold, "loss": r.loss, "n_features": len(r.features),
                          "features": ";".join(r.features)})
    atomic_write_text(os.path.join(out, "folds.csv"), _csv(pd.DataFrame(folds)))
    atomic_write_text(os.path.join(out, "onsets.csv"), _csv(ev.onsets_frame(result.onsets)))
    finite = [r for r in result.inner_results if math.isfinite(r.loss)]
    rows = [dataclasses.asdict(r) for r in feature_importance(finite)] if finite else []
    imp = pd.DataFrame(rows, columns=["feature", "n_folds", "mean_loss", "importance"])
    atomic_write_text(os.path.join(out, "importance.csv"), _csv(imp))


def _load_onsets(path: str) -> list[ev.OnsetPrediction]:
    df = _read_frame(path)
    out = []
    for r in df.itertuples(index=False):
        pred = None if pd.isna(r.predicted_doy) else int(r.predicted_doy)
        out.append(ev.OnsetPrediction(r.crop, str(r.station_id), int(r.season), int(r.bbch), pred,
                                      int(r.observed_doy)))
    return out


def _with_coords(table: pd.DataFrame, fields_path: str) -> pd.DataFrame:
    """Station residual table with lat/lon columns, for mapping the bins."""
    coords = _read_frame(fields_path)[["station_id", "lat", "lon"]].drop_duplicates("station_id")
    out = table.merge(coords.rename(columns={"station_id": "station"}), on="station", how="left")
    cols = ["crop", "station", "lat", "lon"]
    return out[cols + [c for c in out.columns if c not in cols]]


def stage_evaluate(cfg: PipelineConfig) -> None:
    onsets = []
    for crop in _crops(cfg):
        onsets += _load_onsets(os.path.join(_paths(cfg)["train"], crop, "onsets.csv"))
    rep = _paths(cfg)["reports"]
    records = ev.metrics_table(onsets, cfg.tolerance_days)
    atomic_write_text(os.path.join(rep, "metrics.csv"), _csv(ev.metrics_frame(records)))
    for group in ("stage", "year", "station"):
        table = ev.residual_report(onsets, group_by=group)
        if group == "station":
            table = _with_coords(table, os.path.join(_paths(cfg)["pre"], "fields.csv"))
        atomic_write_text(os.path.join(rep, f"residual_{group}.csv"), _csv(table))
    atomic_write_text(os.path.join(rep, "year_mae_delta.csv"), _csv(ev.per_year_mae_delta(onsets)))
    atomic_write_text(os.path.join(rep, "scatter.csv"), _csv(ev.onsets_frame(onsets)))
    atomic_write_text(os.path.join(rep, "scatter.svg"), ev.scatter_svg(onsets))
    summary = ev.summary_dict(records)
    atomic_write_text(os.path.join(rep, "summary.json"), json.dumps(summary, indent=2, sort_keys=True) + "\n")


RUNNERS = {"synth": stage_synth, "preprocess": stage_preprocess, "features": stage_features,
           "train": stage_train, "evaluate": stage_evaluate}
CHAINS = {"report": ("preprocess", "features", "train", "evaluate")}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON config file (defaults apply when omitted)")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--crop", action="append", metavar="NAME", help="restrict to this crop (repeatable)")
    common.add_argument("--out", metavar="DIR", help="override the output directory")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    parser = _Parser(prog="phenofuse", description="Crop phenology onset pipeline")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "synth": "write a synthetic input set to <out>/data",
        "preprocess": "smooth satellite series, interpolate climate, select fields",
        "features": "build labeled daily feature tables per crop",
        "train": "nested cross-validation with feature and hyperparameter search",
        "evaluate": "metrics, residual bins and scatter data from the test-fold onsets",
        "report": "preprocess, features, train and evaluate in one go",
    }
    for name in STAGES:
        p = sub.add_parser(name, parents=[common], help=helps[name])
        if name == "report":
            p.add_argument("--preset", help="fixed feature set, e.g. paper-standard, instead of the search")
    return parser


def resolve_config(args) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.crop:
        overrides["crops"] = tuple(args.crop)
    if args.out:
        overrides["out_dir"] = args.out
    if getattr(args, "preset", None):
        overrides["feature_preset"] = args.preset
    if not overrides:
        return cfg
    d = cfg.to_dict()
    d.update(overrides)
    return PipelineConfig.from_dict(d)


def _flag(cfg: PipelineConfig, stage: str, message: str | None) -> None:
    path = os.path.join(cfg.out_dir, f"{stage}.FAILED")
    if message is None:
        if os.path.exists(path):
            os.remove(path)
        return
    try:
        atomic_write_text(path, message + "\n")
    except OSError:
        pass


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
    except (ConfigError, OSError) as e:
        print(f"phenofuse: config error: {e}", file=sys.stderr)
        return EXIT_USAGE
    for stage in CHAINS.get(args.command, (args.command,)):
        try:
            RUNNERS[stage](cfg)
        except (DataError, ParseError, ValidationError, InsufficientData) as e:
            print(f"phenofuse {stage}: {e}", file=sys.stderr)
            _flag(cfg, stage, str(e))
            return EXIT_DATA
        except Exception as e:  # noqa: BLE001 - any other failure is a bug, reported as such
            logger.exception("internal error in %s", stage)
            _flag(cfg, stage, f"internal error: {e!r}")
            return EXIT_INTERNAL
        _flag(cfg, stage, None)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
