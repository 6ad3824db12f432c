"""End-to-end retrieval pipeline and its flat key=value configuration.

Stage order: load -> optional flip-feature fusion -> L2 normalization ->
optional query expansion -> distances -> optional re-ranking -> optional
ensembling with externally supplied .dmat files -> evaluation.  Query
expansion runs either before the distance stage (``aqe_stage = pre``) or
as a second re-scoring pass on expanded queries after re-ranking
(``aqe_stage = post``, the default).  Each enabled stage is evaluated, so
a run also yields a cumulative ablation table.

Configuration lives in a flat ``key = value`` text file; CLI flags override
file values.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import tensorio
from .errors import ConfigError, ReidkitError
from .evaluation import (
    EvalReport,
    ablation_table,
    evaluate,
    rank_gallery,
    save_cmc_csv,
    save_report,
)
from .geometry import cosine_distances, euclidean_distances, fuse_flip_features, l2_normalize
from .rerank import AqeParams, RerankParams, aqe_expand, ensemble_distances, k_reciprocal_rerank

_BOOL_WORDS = {
    "true": True, "yes": True, "on": True, "1": True,
    "false": False, "no": False, "off": False, "0": False,
}


@dataclass
class PipelineConfig:
    query_features: str = ""
    gallery_features: str = ""
    query_meta: str = ""
    gallery_meta: str = ""
    query_flipped: str = ""
    gallery_flipped: str = ""
    tta: bool = False
    aqe: bool = False
    rerank: bool = False
    ensemble: list = field(default_factory=list)
    normalize_ensemble: bool = False
    metric: str = "euclidean"
    k1: int = 20
    k2: int = 6
    lam: float = 0.1
    aqe_k: int = 5
    aqe_alpha: float = 3.0
    aqe_stage: str = "post"  # "pre" or "post"
    exclude_same_camera: bool = False
    topk: int = 50
    out_dir: str = "."
    seed: int = 0


_FIELD_TYPES = {
    "tta": bool, "aqe": bool, "rerank": bool, "normalize_ensemble": bool,
    "exclude_same_camera": bool,
    "k1": int, "k2": int, "aqe_k": int, "topk": int, "seed": int,
    "lam": float, "aqe_alpha": float,
    "ensemble": list,
}


def load_config(path) -> dict:
    """Parse a flat key=value config file into a string mapping."""
    values = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value, got {raw!r}")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    return values


def config_from_mapping(values: dict) -> PipelineConfig:
    """Build a PipelineConfig from string values, with type coercion."""
    cfg = PipelineConfig()
    updates = {}
    for key, value in values.items():
        if value is None:
            continue
        if not hasattr(cfg, key):
            raise ConfigError(f"unknown config key {key!r}")
        kind = _FIELD_TYPES.get(key, str)
        if kind is bool:
            if isinstance(value, bool):
                updates[key] = value
                continue
            word = str(value).lower()
            if word not in _BOOL_WORDS:
                raise ConfigError(f"config key {key!r}: not a boolean: {value!r}")
            updates[key] = _BOOL_WORDS[word]
        elif kind is list:
            if isinstance(value, list):
                updates[key] = [str(v) for v in value]
            else:
                updates[key] = [p.strip() for p in str(value).split(",") if p.strip()]
        else:
            try:
                updates[key] = kind(value)
            except ValueError:
                raise ConfigError(f"config key {key!r}: expected {kind.__name__}, got {value!r}") from None
    cfg = replace(cfg, **updates)
    if cfg.aqe_stage not in ("pre", "post"):
        raise ConfigError(f"aqe_stage must be 'pre' or 'post', got {cfg.aqe_stage!r}")
    if cfg.metric not in ("euclidean", "cosine"):
        raise ConfigError(f"metric must be 'euclidean' or 'cosine', got {cfg.metric!r}")
    return cfg


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except ReidkitError as exc:
        raise type(exc)(f"[stage {name}] {exc}") from exc


def _distances(metric, q, g):
    if metric == "cosine":
        return cosine_distances(q, g)
    return euclidean_distances(q, g)


def run_pipeline(cfg: PipelineConfig):
    """Execute the configured pipeline.

    Writes distances.dmat, report.txt, cmc.csv and ablation.txt under
    cfg.out_dir and returns (final EvalReport, ablation rows).
    """
    for key in ("query_features", "gallery_features", "query_meta", "gallery_meta"):
        if not getattr(cfg, key):
            raise ConfigError(f"missing required config key {key!r}")
    if cfg.tta and (not cfg.query_flipped or not cfg.gallery_flipped):
        raise ConfigError("tta requires query_flipped and gallery_flipped feature paths")

    q = _stage("load", tensorio.load_features, cfg.query_features)
    g = _stage("load", tensorio.load_features, cfg.gallery_features)
    qmeta = _stage("load", tensorio.load_meta, cfg.query_meta)
    gmeta = _stage("load", tensorio.load_meta, cfg.gallery_meta)

    def score(name, dist):
        ranking = rank_gallery(dist)
        return _stage(
            name, evaluate, ranking, qmeta, gmeta,
            exclude_same_camera=cfg.exclude_same_camera, topk=cfg.topk,
        )

    rows = []
    qn = _stage("normalize", l2_normalize, q)
    gn = _stage("normalize", l2_normalize, g)
    dist = _stage("distances", _distances, cfg.metric, qn, gn)
    rows.append(("baseline", score("evaluate", dist)))

    if cfg.tta:
        qf = _stage("load", tensorio.load_features, cfg.query_flipped)
        gf = _stage("load", tensorio.load_features, cfg.gallery_flipped)
        qn = _stage("normalize", l2_normalize, _stage("tta", fuse_flip_features, q, qf))
        gn = _stage("normalize", l2_normalize, _stage("tta", fuse_flip_features, g, gf))
        dist = _stage("distances", _distances, cfg.metric, qn, gn)
        rows.append(("+tta", score("evaluate", dist)))

    rerank_params = RerankParams(k1=cfg.k1, k2=cfg.k2, lam=cfg.lam)
    aqe_params = AqeParams(k=cfg.aqe_k, alpha=cfg.aqe_alpha)

    if cfg.aqe and cfg.aqe_stage == "pre":
        qn = _stage("aqe", aqe_expand, qn, gn, aqe_params)
        dist = _stage("distances", _distances, cfg.metric, qn, gn)
        rows.append(("+aqe", score("evaluate", dist)))

    if cfg.rerank:
        dist = _stage("rerank", k_reciprocal_rerank, qn, gn, rerank_params)
        rows.append(("+rerank", score("evaluate", dist)))

    if cfg.aqe and cfg.aqe_stage == "post":
        qn = _stage("aqe", aqe_expand, qn, gn, aqe_params)
        if cfg.rerank:
            dist = _stage("rerank", k_reciprocal_rerank, qn, gn, rerank_params)
        else:
            dist = _stage("distances", _distances, cfg.metric, qn, gn)
        rows.append(("+aqe", score("evaluate", dist)))

    if cfg.ensemble:
        extern = [_stage("ensemble", tensorio.load_distances, p) for p in cfg.ensemble]
        dist = _stage(
            "ensemble", ensemble_distances, [dist] + extern, cfg.normalize_ensemble
        )
        rows.append(("+ensemble", score("evaluate", dist)))

    report = rows[-1][1]
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _stage("write", tensorio.save_distances, dist, out / "distances.dmat")
    _stage("write", save_report, report, out / "report.txt")
    _stage("write", save_cmc_csv, report, out / "cmc.csv")
    try:
        (out / "ablation.txt").write_text(ablation_table(rows) + "\n", encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot write ablation table: {exc}") from exc
    return report, rows
