"""reidkit: numerical core of a person re-identification retrieval pipeline.

Feature-space retrieval (distances, k-reciprocal re-ranking, query
expansion, ensembling), metric-learning losses with analytic gradients,
loss-based sample mining, pixel augmentations, mAP/CMC evaluation, and a
seeded synthetic dataset generator — all NumPy, all deterministic.
"""

from .augment import (
    EraseParams,
    FillMode,
    LgtParams,
    Rect,
    grayscale_region,
    horizontal_flip,
    load_ppm,
    local_grayscale,
    make_rng,
    random_erase,
    save_ppm,
)
from .errors import (
    BatchError,
    ConfigError,
    DataError,
    EvalError,
    FormatError,
    IoError,
    ReidkitError,
    ShapeError,
)
from .evaluation import EvalReport, ablation_table, evaluate, rank_gallery, save_cmc_csv, save_report
from .geometry import (
    GemParams,
    cosine_distances,
    euclidean_distances,
    fuse_flip_features,
    gem_pool,
    l2_normalize,
)
from .losses import (
    CircleParams,
    CombinedParams,
    TripletParams,
    circle_loss,
    combined_loss,
    loss_gradient,
    triplet_loss_batch_hard,
)
from .mining import (
    MiningReport,
    MiningThresholds,
    ResamplePlan,
    SampleClass,
    balanced_resample_plan,
    partition_samples,
    per_sample_losses,
    save_mining_report,
    thresholds_from_quantiles,
)
from .pipeline import PipelineConfig, config_from_mapping, load_config, run_pipeline
from .rerank import AqeParams, RerankParams, aqe_expand, ensemble_distances, k_reciprocal_rerank
from .schedule import WarmupSchedule, lr_at
from .synthetic import SynthParams, generate_synthetic, split_query_gallery
from .tensorio import (
    MetaTable,
    SampleMeta,
    load_distances,
    load_features,
    load_meta,
    save_distances,
    save_features,
    save_meta,
)

__version__ = "0.1.0"

__all__ = [
    "AqeParams",
    "BatchError",
    "CircleParams",
    "CombinedParams",
    "ConfigError",
    "DataError",
    "EraseParams",
    "EvalError",
    "EvalReport",
    "FillMode",
    "FormatError",
    "GemParams",
    "IoError",
    "LgtParams",
    "MetaTable",
    "MiningReport",
    "MiningThresholds",
    "PipelineConfig",
    "Rect",
    "ReidkitError",
    "RerankParams",
    "ResamplePlan",
    "SampleClass",
    "SampleMeta",
    "ShapeError",
    "SynthParams",
    "TripletParams",
    "WarmupSchedule",
    "ablation_table",
    "aqe_expand",
    "balanced_resample_plan",
    "circle_loss",
    "combined_loss",
    "config_from_mapping",
    "cosine_distances",
    "ensemble_distances",
    "euclidean_distances",
    "evaluate",
    "fuse_flip_features",
    "gem_pool",
    "generate_synthetic",
    "grayscale_region",
    "horizontal_flip",
    "k_reciprocal_rerank",
    "l2_normalize",
    "load_config",
    "load_distances",
    "load_features",
    "load_meta",
    "load_ppm",
    "local_grayscale",
    "loss_gradient",
    "lr_at",
    "make_rng",
    "partition_samples",
    "per_sample_losses",
    "random_erase",
    "rank_gallery",
    "run_pipeline",
    "save_cmc_csv",
    "save_distances",
    "save_features",
    "save_meta",
    "save_mining_report",
    "save_ppm",
    "save_report",
    "split_query_gallery",
    "thresholds_from_quantiles",
    "triplet_loss_batch_hard",
]
