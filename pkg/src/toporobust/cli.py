"""Command-line interface.

Subcommands mirror the pipeline stages and operate on explicit files, so any
stage can be rerun or swapped in isolation; `run` executes the whole
pipeline from an INI config with per-stage caching.  Exit status is 0 on
success and 1 on failure, with the failing stage named on stderr.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io
from .attack import DeepSetAttackTarget, StableRankAttackTarget, attack
from .baseline import predict_diagram, train_deepset
from .lipnet import certify_dataset, train
from .metric import INF, bottleneck, wasserstein
from .orbit import generate_dataset
from .pipeline import (
    PipelineConfig,
    compute_diagrams,
    config_from_ini,
    run_pipeline,
    stage_report,
)
from .seeds import make_rng
from .stablerank import lipschitz_bound, suggested_dimension, vectorize_dataset


def _add_common(sub):
    sub.add_argument("--seed", type=int, default=None, help="override the stage seed")
    sub.add_argument("--config", type=str, default=None, help="INI config file")
    sub.add_argument("--out", type=str, required=True, help="output path")


def _load_cfg(args) -> PipelineConfig:
    cfg = config_from_ini(args.config) if args.config else PipelineConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def cmd_gen_data(args) -> None:
    seed = args.seed if args.seed is not None else 7
    ds = generate_dataset(args.per_class, args.points, seed)
    io.save_dataset(args.out, ds)
    print(f"wrote {len(ds)} clouds to {args.out}")


def cmd_compute_ph(args) -> None:
    ds = io.load_dataset(getattr(args, "in"))
    diagrams = compute_diagrams(ds.clouds, args.degree, args.scale)
    io.save_diagrams(args.out, diagrams, ds.labels,
                     extra_meta={"degree": args.degree, "scale": args.scale})
    print(f"wrote {len(diagrams)} diagrams to {args.out}")


def cmd_vectorize(args) -> None:
    diagrams, labels, _ = io.load_diagrams(getattr(args, "in"))
    p = io.parse_p(args.p)
    rep = io.rep_from_string(args.F)
    n_dim = args.dim or suggested_dimension(diagrams)
    vectors, truncated = vectorize_dataset(diagrams, p, rep, n_dim)
    io.save_vectors(args.out, vectors, labels, meta={
        "p": io.p_to_string(p), "F": io.rep_to_string(rep),
        "K": lipschitz_bound(rep), "n_truncated": int(truncated.sum()),
    })
    print(f"wrote {vectors.shape} vectors to {args.out}")


def cmd_train_srn(args) -> None:
    cfg = _load_cfg(args)
    if args.seed is not None:
        cfg.srn_train = replace(cfg.srn_train, seed=args.seed)
    vectors, labels, vmeta = io.load_vectors(args.vectors)
    net, history = train(vectors, labels, cfg.srn_train)
    io.save_lipschitz_model(args.out, net, meta={
        "p": vmeta.get("p", "inf"),
        "F": vmeta.get("F", "identity"),
        "K": vmeta.get("K", "1.0"),
        "train_acc": history["train_acc"][-1],
        "val_acc": history["val_acc"][-1],
    })
    print(f"trained Lipschitz model (train acc {history['train_acc'][-1]:.3f}) -> {args.out}")


def cmd_train_baseline(args) -> None:
    cfg = _load_cfg(args)
    if args.seed is not None:
        cfg.baseline_train = replace(cfg.baseline_train, seed=args.seed)
    diagrams, labels, _ = io.load_diagrams(args.diagrams)
    net, history = train_deepset(diagrams, labels, cfg.baseline_train)
    io.save_deepset_model(args.out, net, meta={"train_acc": history["train_acc"][-1]})
    print(f"trained set-classifier baseline (train acc {history['train_acc'][-1]:.3f}) -> {args.out}")


def cmd_certify(args) -> None:
    net, meta = io.load_model(args.model)
    if meta.get("arch") != "linf":
        raise ValueError("certification requires a Lipschitz model")
    vectors, labels, _ = io.load_vectors(args.vectors)
    k_bound = float(meta.get("K", 1.0))
    records = certify_dataset(net, vectors, labels, lipschitz_k=k_bound)
    io.save_certification_records(args.out, records, meta={"K": k_bound})
    clean = float(np.mean([r.correct for r in records])) if records else 0.0
    print(f"certified {len(records)} samples (clean accuracy {clean:.3f}) -> {args.out}")


def cmd_attack(args) -> None:
    cfg = _load_cfg(args)
    acfg = replace(cfg.attack_cfg, p=io.parse_p(args.p), budget=args.eps)
    if args.seed is not None:
        acfg = replace(acfg, seed=args.seed)
    diagrams, labels, _ = io.load_diagrams(args.diagrams)
    net, meta = io.load_model(args.model)
    if meta.get("arch") == "linf":
        rep = io.rep_from_string(meta.get("F", "identity"))
        p_vec = io.parse_p(meta.get("p", "inf"))
        target = StableRankAttackTarget(net, p_vec, rep, net.input_dim)
        predict = lambda pts: int(np.argmax(target.logits(pts)))
    else:
        target = DeepSetAttackTarget(net)
        predict = lambda pts: predict_diagram(net, pts)
    n = min(len(diagrams), args.max_samples) if args.max_samples else len(diagrams)
    rows = []
    for sid in range(n):
        pts = diagrams[sid].points
        clean = predict(pts) == labels[sid]
        if not clean:
            rows.append({"sample_id": sid, "clean_correct": False, "success": False,
                         "distance": 0.0, "iterations": 0})
            continue
        result = attack(target, pts, int(labels[sid]), acfg, rng_key=sid)
        rows.append({"sample_id": sid, "clean_correct": True, "success": result.success,
                     "distance": result.distance, "iterations": result.iterations})
    io.save_attack_results(args.out, rows, meta={"budget": args.eps, "p": args.p})
    n_success = sum(r["success"] for r in rows)
    print(f"attacked {len(rows)} samples, {n_success} successes within {args.eps} -> {args.out}")


def cmd_distances(args) -> None:
    diagrams, labels, _ = io.load_diagrams(getattr(args, "in"))
    p = io.parse_p(args.p)
    seed = args.seed if args.seed is not None else 7
    rng = make_rng(seed, 0xD157)
    n = len(diagrams)
    pairs = []
    if args.pairs == "all":
        pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    else:
        want_intra = args.pairs == "intra"
        candidates = [
            (i, j)
            for i in range(n)
            for j in range(i + 1, n)
            if (labels[i] == labels[j]) == want_intra
        ]
        pairs = candidates
    if args.max_pairs and len(pairs) > args.max_pairs:
        idx = rng.choice(len(pairs), size=args.max_pairs, replace=False)
        pairs = [pairs[int(k)] for k in sorted(idx)]
    dist = (lambda a, b: bottleneck(a, b)) if p == INF else (lambda a, b: wasserstein(a, b, p))
    rows = [[i, j, float(dist(diagrams[i].points, diagrams[j].points))] for i, j in pairs]
    io.save_table(args.out, ["id_a", "id_b", "distance"], rows,
                  meta={"p": args.p, "pairs": args.pairs})
    print(f"wrote {len(rows)} pairwise distances -> {args.out}")


def cmd_report(args) -> None:
    cfg = _load_cfg(args)
    cfg.outdir = args.out
    stage_report(cfg, Path(args.out))


def cmd_run(args) -> None:
    cfg = _load_cfg(args)
    if args.out:
        cfg.outdir = args.out
    out = run_pipeline(cfg)
    print(f"pipeline complete in {out}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="toporobust",
        description="Persistent homology, stable ranks, certified-robust classification",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    s = subs.add_parser("gen-data", help="generate labeled orbit point clouds")
    s.add_argument("--per-class", type=int, required=True)
    s.add_argument("--points", type=int, required=True)
    _add_common(s)
    s.set_defaults(fn=cmd_gen_data)

    s = subs.add_parser("compute-ph", help="alpha-complex persistence diagrams")
    s.add_argument("--in", dest="in", required=True)
    s.add_argument("--degree", type=int, default=1)
    s.add_argument("--scale", type=float, default=1000.0)
    _add_common(s)
    s.set_defaults(fn=cmd_compute_ph)

    s = subs.add_parser("vectorize", help="stable-rank vectors from diagrams")
    s.add_argument("--in", dest="in", required=True)
    s.add_argument("--p", default="inf")
    s.add_argument("--F", default="identity")
    s.add_argument("--dim", type=int, default=0, help="0 = smallest lossless")
    _add_common(s)
    s.set_defaults(fn=cmd_vectorize)

    s = subs.add_parser("train-srn", help="train the Lipschitz classifier")
    s.add_argument("--vectors", required=True)
    _add_common(s)
    s.set_defaults(fn=cmd_train_srn)

    s = subs.add_parser("train-baseline", help="train the set-classifier baseline")
    s.add_argument("--diagrams", required=True)
    _add_common(s)
    s.set_defaults(fn=cmd_train_baseline)

    s = subs.add_parser("certify", help="certified robustness records")
    s.add_argument("--model", required=True)
    s.add_argument("--vectors", required=True)
    _add_common(s)
    s.set_defaults(fn=cmd_certify)

    s = subs.add_parser("attack", help="adversarial search against a model")
    s.add_argument("--model", required=True)
    s.add_argument("--diagrams", required=True)
    s.add_argument("--p", default="inf")
    s.add_argument("--eps", type=float, required=True)
    s.add_argument("--max-samples", type=int, default=0)
    _add_common(s)
    s.set_defaults(fn=cmd_attack)

    s = subs.add_parser("distances", help="pairwise diagram distances")
    s.add_argument("--in", dest="in", required=True)
    s.add_argument("--p", default="inf")
    s.add_argument("--pairs", choices=("all", "intra", "inter"), default="all")
    s.add_argument("--max-pairs", type=int, default=200)
    _add_common(s)
    s.set_defaults(fn=cmd_distances)

    s = subs.add_parser("report", help="summary tables from pipeline artifacts")
    _add_common(s)
    s.set_defaults(fn=cmd_report)

    s = subs.add_parser("run", help="full pipeline with stage caching")
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--config", type=str, default=None)
    s.add_argument("--out", type=str, default=None)
    s.set_defaults(fn=cmd_run)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.fn(args)
    except Exception as exc:
        print(f"{args.command} failed: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
