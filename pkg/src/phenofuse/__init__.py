"""Crop phenology onset detection from fused radar, optical and climate series."""
from .config import PipelineConfig, load_config
from .crossval import NestedCVResult, nested_cv, predict_onsets
from .dataset import BACKGROUND, LabeledDataset, compute_class_weights, kfold_split
from .evaluate import (
    MetricsRecord,
    OnsetPrediction,
    decode_onsets,
    ensemble_predict,
    metric_mae,
    metric_r2,
    metrics_table,
    objective_loss,
    per_year_mae_delta,
    residual_report,
    within_tolerance_share,
)
from .features import (
    BASE_TEMPERATURE,
    FEATURE_GROUPS,
    FEATURE_NAMES,
    CropConfig,
    accumulate_climate,
    build_feature_table,
    gdd_daily,
    idw_interpolate,
    optical_indices,
    radar_indices,
    terrain_derivatives,
)
from .gbdt import GbdtHyperparams, GbdtModel, fit_gbdt, predict_proba
from .ingest import Grid, StationObservation, clean_observations, parse_climate_csv, parse_grid, parse_phenology_csv
from .preprocess import cloud_mask_series, loess_smooth, median_aggregate, resample_daily, select_station_fields
from .selection import PAPER_STANDARD, feature_importance, select_feature_groups, standardize_feature_set
from .synth import SynthSpec, synth_generate
from .tpe import CategoricalParam, FloatParam, IntParam, tpe_optimize

__version__ = "0.1.0"
