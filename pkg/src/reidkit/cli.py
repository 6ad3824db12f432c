"""Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 data/format error,
4 evaluation error.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import augment as aug
from . import tensorio
from .errors import ConfigError, ReidkitError
from .evaluation import evaluate, rank_gallery, save_cmc_csv, save_report
from .geometry import cosine_distances, euclidean_distances, l2_normalize
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
    MiningThresholds,
    partition_samples,
    per_sample_losses,
    save_mining_report,
    thresholds_from_quantiles,
)
from .pipeline import config_from_mapping, load_config, run_pipeline
from .rerank import AqeParams, RerankParams, aqe_expand, ensemble_distances, k_reciprocal_rerank
from .synthetic import SynthParams, generate_synthetic, split_query_gallery


def _add_synth(sub):
    p = sub.add_parser("synth", help="generate a seeded synthetic embedding dataset")
    p.add_argument("--n-ids", type=int, default=50)
    p.add_argument("--per-id", type=int, default=20)
    p.add_argument("--dims", type=int, default=32)
    p.add_argument("--spread", type=float, default=0.3)
    p.add_argument("--noise-frac", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-prefix", required=True, help="writes PREFIX.fvec and PREFIX.csv")
    p.add_argument(
        "--query-per-id", type=int, default=None,
        help="also write PREFIX_query/_gallery splits with this many queries per identity",
    )


def _cmd_synth(args):
    params = SynthParams(
        n_ids=args.n_ids, per_id=args.per_id, dims=args.dims,
        cluster_spread=args.spread, noise_frac=args.noise_frac, seed=args.seed,
    )
    features, meta = generate_synthetic(params)
    tensorio.save_features(features, f"{args.out_prefix}.fvec")
    tensorio.save_meta(meta, f"{args.out_prefix}.csv")
    print(f"wrote {args.out_prefix}.fvec ({features.shape[0]}x{features.shape[1]}) and {args.out_prefix}.csv")
    if args.query_per_id is not None:
        qf, qm, gf, gm = split_query_gallery(features, meta, args.query_per_id)
        for tag, f, m in (("query", qf, qm), ("gallery", gf, gm)):
            tensorio.save_features(f, f"{args.out_prefix}_{tag}.fvec")
            tensorio.save_meta(m, f"{args.out_prefix}_{tag}.csv")
            print(f"wrote {args.out_prefix}_{tag}.fvec ({f.shape[0]} rows)")
    return 0


def _add_distances(sub):
    p = sub.add_parser("distances", help="pairwise query x gallery distance matrix")
    p.add_argument("--query", required=True)
    p.add_argument("--gallery", required=True)
    p.add_argument("--metric", choices=["euclidean", "cosine"], default="euclidean")
    p.add_argument("--l2-normalize", action="store_true", help="normalize rows first")
    p.add_argument("--out", required=True)


def _cmd_distances(args):
    q = tensorio.load_features(args.query)
    g = tensorio.load_features(args.gallery)
    if args.l2_normalize:
        q, g = l2_normalize(q), l2_normalize(g)
    dist = cosine_distances(q, g) if args.metric == "cosine" else euclidean_distances(q, g)
    tensorio.save_distances(dist, args.out)
    print(f"wrote {args.out} ({dist.shape[0]}x{dist.shape[1]})")
    return 0


def _add_rerank(sub):
    p = sub.add_parser("rerank", help="k-reciprocal re-ranking of query x gallery distances")
    p.add_argument("--query", required=True)
    p.add_argument("--gallery", required=True)
    p.add_argument("--k1", type=int, default=20)
    p.add_argument("--k2", type=int, default=6)
    p.add_argument("--lambda", dest="lam", type=float, default=0.1)
    p.add_argument("--l2-normalize", action="store_true", help="normalize rows first")
    p.add_argument("--out", required=True)


def _cmd_rerank(args):
    q = tensorio.load_features(args.query)
    g = tensorio.load_features(args.gallery)
    if args.l2_normalize:
        q, g = l2_normalize(q), l2_normalize(g)
    dist = k_reciprocal_rerank(q, g, RerankParams(k1=args.k1, k2=args.k2, lam=args.lam))
    tensorio.save_distances(dist, args.out)
    print(f"wrote {args.out} ({dist.shape[0]}x{dist.shape[1]})")
    return 0


def _add_aqe(sub):
    p = sub.add_parser("aqe", help="alpha-weighted query expansion")
    p.add_argument("--query", required=True)
    p.add_argument("--gallery", required=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--alpha", type=float, default=3.0)
    p.add_argument("--out", required=True, help="expanded query features (.fvec)")


def _cmd_aqe(args):
    q = tensorio.load_features(args.query)
    g = tensorio.load_features(args.gallery)
    expanded = aqe_expand(q, g, AqeParams(k=args.k, alpha=args.alpha))
    tensorio.save_features(expanded, args.out)
    print(f"wrote {args.out} ({expanded.shape[0]}x{expanded.shape[1]})")
    return 0


def _add_ensemble(sub):
    p = sub.add_parser("ensemble", help="elementwise sum of distance matrices")
    p.add_argument("inputs", nargs="+", help=".dmat files to fuse")
    p.add_argument("--normalize", action="store_true", help="min-max scale each input first")
    p.add_argument("--out", required=True)


def _cmd_ensemble(args):
    mats = [tensorio.load_distances(p) for p in args.inputs]
    fused = ensemble_distances(mats, normalize=args.normalize)
    tensorio.save_distances(fused, args.out)
    print(f"wrote {args.out} (sum of {len(mats)} matrices)")
    return 0


def _add_eval(sub):
    p = sub.add_parser("eval", help="mAP/CMC evaluation of a distance matrix")
    p.add_argument("--distances", required=True)
    p.add_argument("--query-meta", required=True)
    p.add_argument("--gallery-meta", required=True)
    p.add_argument("--exclude-same-camera", action="store_true")
    p.add_argument("--topk", type=int, default=50)
    p.add_argument("--out-report", default=None)
    p.add_argument("--out-cmc", default=None)


def _cmd_eval(args):
    dist = tensorio.load_distances(args.distances)
    qmeta = tensorio.load_meta(args.query_meta)
    gmeta = tensorio.load_meta(args.gallery_meta)
    report = evaluate(
        rank_gallery(dist), qmeta, gmeta,
        exclude_same_camera=args.exclude_same_camera, topk=args.topk,
    )
    print(f"mAP {report.map:.6f}  top1 {report.cmc[0]:.6f}  "
          f"valid {report.n_valid_queries}  skipped {report.n_skipped}")
    if args.out_report:
        save_report(report, args.out_report)
    if args.out_cmc:
        save_cmc_csv(report, args.out_cmc)
    return 0


def _add_mine(sub):
    p = sub.add_parser("mine", help="loss-based clean/hard/noise partition")
    p.add_argument("--features", required=True)
    p.add_argument("--meta", required=True)
    p.add_argument("--margin", type=float, default=0.4)
    p.add_argument("--q-hard", type=float, default=0.7)
    p.add_argument("--q-noise", type=float, default=0.97)
    p.add_argument("--t-hard", type=float, default=None, help="explicit threshold (overrides quantiles)")
    p.add_argument("--t-noise", type=float, default=None)
    p.add_argument("--losses", default=None, help="optional externally computed loss vector (.fvec, one row)")
    p.add_argument("--out", required=True, help="report CSV: image_id,loss,class")


def _cmd_mine(args):
    meta = tensorio.load_meta(args.meta)
    if args.losses:
        losses = tensorio.load_features(args.losses).reshape(-1)
        if losses.shape[0] != len(meta):
            raise ConfigError(
                f"loss vector length {losses.shape[0]} does not match metadata length {len(meta)}"
            )
    else:
        features = tensorio.load_features(args.features)
        losses = per_sample_losses(features, meta, TripletParams(margin=args.margin))
    if (args.t_hard is None) != (args.t_noise is None):
        raise ConfigError("provide both --t-hard and --t-noise, or neither")
    if args.t_hard is not None:
        thresholds = MiningThresholds(t_hard=args.t_hard, t_noise=args.t_noise)
    else:
        thresholds = thresholds_from_quantiles(losses, args.q_hard, args.q_noise)
    report = partition_samples(losses, thresholds)
    save_mining_report(report, meta, args.out)
    counts = report.counts()
    print(
        f"wrote {args.out}: "
        + "  ".join(f"{cls.value} {n}" for cls, n in counts.items())
        + f"  (t_hard {thresholds.t_hard:.6g}, t_noise {thresholds.t_noise:.6g})"
    )
    return 0


def _add_augment(sub):
    p = sub.add_parser("augment", help="pixel augmentations on PPM (P6) images")
    p.add_argument("--op", choices=["flip", "erase", "lgt"], required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--probability", type=float, default=None)
    p.add_argument("--area-low", type=float, default=None)
    p.add_argument("--area-high", type=float, default=None)
    p.add_argument("--aspect-low", type=float, default=None)
    p.add_argument("--aspect-high", type=float, default=None)
    p.add_argument("--fill", choices=[m.value for m in aug.FillMode], default=None)


def _region_kwargs(args):
    kwargs = {}
    for key in ("probability", "area_low", "area_high", "aspect_low", "aspect_high"):
        value = getattr(args, key)
        if value is not None:
            kwargs[key] = value
    return kwargs


def _cmd_augment(args):
    img = aug.load_ppm(args.input)
    rng = aug.make_rng(args.seed)
    if args.op == "flip":
        aug.save_ppm(aug.horizontal_flip(img), args.out)
        print(f"wrote {args.out}")
        return 0
    if args.op == "erase":
        kwargs = _region_kwargs(args)
        if args.fill is not None:
            kwargs["fill"] = aug.FillMode(args.fill)
        out, rect = aug.random_erase(img, aug.EraseParams(**kwargs), rng)
    else:
        out, rect = aug.local_grayscale(img, aug.LgtParams(**_region_kwargs(args)), rng)
    aug.save_ppm(out, args.out)
    where = f"rect(top={rect.top}, left={rect.left}, h={rect.height}, w={rect.width})" if rect else "no-op"
    print(f"wrote {args.out} ({where})")
    return 0


def _add_loss_check(sub):
    p = sub.add_parser("loss-check", help="loss values (and gradient check) for a feature set")
    p.add_argument("--features", required=True)
    p.add_argument("--meta", required=True)
    p.add_argument("--margin", type=float, default=0.4)
    p.add_argument("--m", type=float, default=0.4)
    p.add_argument("--gamma", type=float, default=64.0)
    p.add_argument("--w-triplet", type=float, default=1.0)
    p.add_argument("--w-circle", type=float, default=1.0)
    p.add_argument("--grad-check", action="store_true",
                   help="compare the analytic gradient against central finite differences")


def _cmd_loss_check(args):
    features = tensorio.load_features(args.features)
    labels = tensorio.load_meta(args.meta).person_ids
    params = CombinedParams(
        w_triplet=args.w_triplet, w_circle=args.w_circle,
        triplet=TripletParams(margin=args.margin),
        circle=CircleParams(m=args.m, gamma=args.gamma),
    )
    loss_t, _ = triplet_loss_batch_hard(features, labels, params.triplet)
    loss_c = circle_loss(features, labels, params.circle)
    total = combined_loss(features, labels, params)
    print(f"triplet {loss_t:.6f}  circle {loss_c:.6f}  combined {total:.6f}")
    if args.grad_check:
        x = features.astype(np.float64)
        grad = loss_gradient(x, labels, params)
        h = 1e-3
        fd = np.zeros_like(x)
        for i in range(x.shape[0]):
            for j in range(x.shape[1]):
                xp, xm = x.copy(), x.copy()
                xp[i, j] += h
                xm[i, j] -= h
                fd[i, j] = (combined_loss(xp, labels, params) - combined_loss(xm, labels, params)) / (2 * h)
        scale = max(np.abs(fd).max(), 1e-12)
        err = np.abs(grad - fd).max() / scale
        print(f"gradient check: max relative error {err:.3e} (h={h})")
    return 0


def _add_pipeline(sub):
    p = sub.add_parser("pipeline", help="full retrieval pipeline with ablation report")
    p.add_argument("--config", default=None, help="flat key=value config file")
    p.add_argument("--query-features", dest="query_features", default=None)
    p.add_argument("--gallery-features", dest="gallery_features", default=None)
    p.add_argument("--query-meta", dest="query_meta", default=None)
    p.add_argument("--gallery-meta", dest="gallery_meta", default=None)
    p.add_argument("--query-flipped", dest="query_flipped", default=None)
    p.add_argument("--gallery-flipped", dest="gallery_flipped", default=None)
    p.add_argument("--tta", dest="tta", action="store_const", const="true", default=None)
    p.add_argument("--aqe", dest="aqe", action="store_const", const="true", default=None)
    p.add_argument("--rerank", dest="rerank", action="store_const", const="true", default=None)
    p.add_argument("--ensemble", dest="ensemble", action="append", default=None,
                   help=".dmat file to add to the final matrix (repeatable)")
    p.add_argument("--normalize-ensemble", dest="normalize_ensemble",
                   action="store_const", const="true", default=None)
    p.add_argument("--metric", dest="metric", choices=["euclidean", "cosine"], default=None)
    p.add_argument("--k1", dest="k1", default=None)
    p.add_argument("--k2", dest="k2", default=None)
    p.add_argument("--lambda", dest="lam", default=None)
    p.add_argument("--aqe-k", dest="aqe_k", default=None)
    p.add_argument("--aqe-alpha", dest="aqe_alpha", default=None)
    p.add_argument("--aqe-stage", dest="aqe_stage", choices=["pre", "post"], default=None)
    p.add_argument("--exclude-same-camera", dest="exclude_same_camera",
                   action="store_const", const="true", default=None)
    p.add_argument("--topk", dest="topk", default=None)
    p.add_argument("--out-dir", dest="out_dir", default=None)
    p.add_argument("--seed", dest="seed", default=None)


_PIPELINE_KEYS = [
    "query_features", "gallery_features", "query_meta", "gallery_meta",
    "query_flipped", "gallery_flipped", "tta", "aqe", "rerank", "ensemble",
    "normalize_ensemble", "metric", "k1", "k2", "lam", "aqe_k", "aqe_alpha",
    "aqe_stage", "exclude_same_camera", "topk", "out_dir", "seed",
]


def _cmd_pipeline(args):
    values = load_config(args.config) if args.config else {}
    for key in _PIPELINE_KEYS:
        override = getattr(args, key)
        if override is not None:
            values[key] = override  # flags win over the file
    cfg = config_from_mapping(values)
    report, rows = run_pipeline(cfg)
    for name, r in rows:
        print(f"{name:<12} mAP {r.map:.6f}  top1 {r.cmc[0]:.6f}")
    print(f"artifacts in {cfg.out_dir}")
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "distances": _cmd_distances,
    "rerank": _cmd_rerank,
    "aqe": _cmd_aqe,
    "ensemble": _cmd_ensemble,
    "eval": _cmd_eval,
    "mine": _cmd_mine,
    "augment": _cmd_augment,
    "loss-check": _cmd_loss_check,
    "pipeline": _cmd_pipeline,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reidkit",
        description="Numerical core of a person re-identification retrieval pipeline.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    _add_synth(sub)
    _add_distances(sub)
    _add_rerank(sub)
    _add_aqe(sub)
    _add_ensemble(sub)
    _add_eval(sub)
    _add_mine(sub)
    _add_augment(sub)
    _add_loss_check(sub)
    _add_pipeline(sub)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ReidkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
