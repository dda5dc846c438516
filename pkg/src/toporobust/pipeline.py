"""End-to-end orchestration: data -> diagrams -> vectors -> models -> reports.

Each stage writes one artifact into the output directory with the hash of
its config stanza in the header; a rerun skips stages whose artifact already
carries the current hash.  Stage functions are also the implementation
behind the corresponding CLI subcommands.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import io
from .attack import AttackConfig, DeepSetAttackTarget, attack
from .baseline import predict_diagram, train_deepset
from .complexes import alpha_complex, persistence, scale_diagram
from .lipnet import (
    certify_dataset,
    certified_robust_accuracy,
    predict_batch,
    train,
)
from .metric import INF, bottleneck
from .orbit import generate_dataset
from .seeds import make_rng
from .stablerank import (
    Reparameterization,
    lipschitz_bound,
    suggested_dimension,
    vectorize_dataset,
)
from .training import TrainConfig, stratified_split


@dataclass
class PipelineConfig:
    outdir: str = "runs/desk"
    seed: int = 7
    # dataset
    per_class: int = 200
    n_points: int = 300
    # persistent homology
    degree: int = 1
    scale: float = 1000.0
    # vectorization
    p: float = INF
    rep: Reparameterization = field(default_factory=Reparameterization.identity)
    n_dim: int = 128  # 0 = smallest lossless dimension
    # split
    test_fraction: float = 0.3
    # training
    srn_train: TrainConfig = field(
        default_factory=lambda: TrainConfig(
            epochs=100,
            batch_size=32,
            learning_rate=0.3,
            loss="xent",
            temperature=1.0,
            layer_sizes=(256, 128, 5),
            lr_decay_every=40,
            lr_decay_factor=0.5,
            val_fraction=0.0,
            equalize_quantile=0.9,
            relax_p_start=0.0,
            seed=1,
        )
    )
    baseline_train: TrainConfig = field(
        default_factory=lambda: TrainConfig(
            epochs=60,
            batch_size=32,
            learning_rate=0.03,
            loss="xent",
            lr_decay_every=20,
            lr_decay_factor=0.5,
            val_fraction=0.0,
            seed=1,
        )
    )
    # certification / attack
    eps_grid: tuple[float, ...] = (1e-5, 1e-2, 1e-1, 1.0)
    attack_cfg: AttackConfig = field(
        default_factory=lambda: AttackConfig(
            steps=100, step_size=5.0, n_added=10, reseed_patience=5, seed=1
        )
    )
    attack_samples: int = 100
    # reports
    pairs_per_cell: int = 20

    def __post_init__(self) -> None:
        if tuple(self.eps_grid) != tuple(sorted(self.eps_grid)):
            raise ValueError("eps_grid must be sorted ascending")


def _train_config_from(stanza: dict, base: TrainConfig) -> TrainConfig:
    kwargs = {}
    for key, value in stanza.items():
        if key == "layer_sizes":
            kwargs[key] = tuple(int(v) for v in value.split(","))
        elif key in ("epochs", "batch_size", "seed", "lr_decay_every"):
            kwargs[key] = int(value)
        elif key == "loss":
            kwargs[key] = value
        elif key == "center_last":
            kwargs[key] = value.lower() in ("1", "true", "yes")
        else:
            kwargs[key] = float(value)
    return replace(base, **kwargs)


def config_from_ini(path) -> PipelineConfig:
    parser = io.load_config(path)
    cfg = PipelineConfig()
    main = io.stanza(parser, "pipeline")
    if "outdir" in main:
        cfg.outdir = main["outdir"]
    if "seed" in main:
        cfg.seed = int(main["seed"])
    ds = io.stanza(parser, "dataset")
    cfg.per_class = int(ds.get("per_class", cfg.per_class))
    cfg.n_points = int(ds.get("n_points", cfg.n_points))
    ph = io.stanza(parser, "ph")
    cfg.degree = int(ph.get("degree", cfg.degree))
    cfg.scale = float(ph.get("scale", cfg.scale))
    vec = io.stanza(parser, "vectorize")
    if "p" in vec:
        cfg.p = io.parse_p(vec["p"])
    if "f" in vec:
        cfg.rep = io.rep_from_string(vec["f"])
    cfg.n_dim = int(vec.get("n_dim", cfg.n_dim))
    split = io.stanza(parser, "split")
    cfg.test_fraction = float(split.get("test_fraction", cfg.test_fraction))
    cfg.srn_train = _train_config_from(io.stanza(parser, "train_srn"), cfg.srn_train)
    cfg.baseline_train = _train_config_from(
        io.stanza(parser, "train_baseline"), cfg.baseline_train
    )
    cert = io.stanza(parser, "certify")
    if "eps_grid" in cert:
        cfg.eps_grid = tuple(float(v) for v in cert["eps_grid"].split(","))
    atk = io.stanza(parser, "attack")
    atk_kwargs = {}
    for key, value in atk.items():
        if key == "lambdas":
            atk_kwargs[key] = tuple(float(v) for v in value.split(","))
        elif key in ("steps", "n_added", "seed"):
            atk_kwargs[key] = int(value)
        elif key == "p":
            atk_kwargs[key] = io.parse_p(value)
        elif key == "n_samples":
            cfg.attack_samples = int(value)
        else:
            atk_kwargs[key] = float(value)
    if atk_kwargs:
        cfg.attack_cfg = replace(cfg.attack_cfg, **atk_kwargs)
    rep = io.stanza(parser, "report")
    cfg.pairs_per_cell = int(rep.get("pairs_per_cell", cfg.pairs_per_cell))
    return cfg


def _fresh(path: Path, stage_hash: str) -> bool:
    if not path.exists():
        return False
    try:
        meta = io.read_header_meta(path)
    except Exception:
        return False
    return meta.get("config_hash") == stage_hash


def _model_fresh(path: Path, stage_hash: str) -> bool:
    if not path.exists():
        return False
    try:
        _, meta = io.load_model(path)
    except Exception:
        return False
    return meta.get("config_hash") == stage_hash


# ------------------------------------------------------------------ stages


def stage_gen_data(cfg: PipelineConfig, out: Path, log=print) -> Path:
    path = out / "clouds.csv"
    h = io.config_hash(
        {"per_class": cfg.per_class, "n_points": cfg.n_points, "seed": cfg.seed}
    )
    if _fresh(path, h):
        log(f"[gen-data] up to date: {path}")
        return path
    ds = generate_dataset(cfg.per_class, cfg.n_points, cfg.seed)
    io.save_dataset(path, ds, extra_meta={"config_hash": h})
    log(f"[gen-data] wrote {len(ds)} clouds to {path}")
    return path


def compute_diagrams(clouds, degree: int, scale: float):
    out = []
    for cloud in clouds:
        dgm = persistence(alpha_complex(cloud), q=degree)
        out.append(scale_diagram(dgm, scale) if scale != 1.0 else dgm)
    return out


def stage_compute_ph(cfg: PipelineConfig, out: Path, log=print) -> Path:
    clouds_path = out / "clouds.csv"
    path = out / "diagrams.csv"
    h = io.config_hash(
        {
            "degree": cfg.degree,
            "scale": cfg.scale,
            "clouds": io.read_header_meta(clouds_path).get("config_hash", ""),
        }
    )
    if _fresh(path, h):
        log(f"[compute-ph] up to date: {path}")
        return path
    ds = io.load_dataset(clouds_path)
    diagrams = compute_diagrams(ds.clouds, cfg.degree, cfg.scale)
    io.save_diagrams(
        path,
        diagrams,
        ds.labels,
        extra_meta={"config_hash": h, "degree": cfg.degree, "scale": cfg.scale},
    )
    log(f"[compute-ph] wrote {len(diagrams)} degree-{cfg.degree} diagrams to {path}")
    return path


def stage_vectorize(cfg: PipelineConfig, out: Path, log=print) -> Path:
    diagrams_path = out / "diagrams.csv"
    path = out / "vectors.csv"
    h = io.config_hash(
        {
            "p": io.p_to_string(cfg.p),
            "F": io.rep_to_string(cfg.rep),
            "n_dim": cfg.n_dim,
            "diagrams": io.read_header_meta(diagrams_path).get("config_hash", ""),
        }
    )
    if _fresh(path, h):
        log(f"[vectorize] up to date: {path}")
        return path
    diagrams, labels, _ = io.load_diagrams(diagrams_path)
    n_dim = cfg.n_dim or suggested_dimension(diagrams)
    vectors, truncated = vectorize_dataset(diagrams, cfg.p, cfg.rep, n_dim)
    io.save_vectors(
        path,
        vectors,
        labels,
        meta={
            "config_hash": h,
            "p": io.p_to_string(cfg.p),
            "F": io.rep_to_string(cfg.rep),
            "K": lipschitz_bound(cfg.rep),
            "n_truncated": int(truncated.sum()),
        },
    )
    if truncated.any():
        log(f"[vectorize] NOTE: {int(truncated.sum())} diagrams truncated to {n_dim - 1} points")
    log(f"[vectorize] wrote {vectors.shape} vectors to {path}")
    return path


def _splits(labels: np.ndarray, cfg: PipelineConfig):
    return stratified_split(labels, cfg.test_fraction, cfg.seed)


def stage_train_srn(cfg: PipelineConfig, out: Path, log=print) -> Path:
    vectors_path = out / "vectors.csv"
    path = out / "model_srn.txt"
    h = io.config_hash(
        {
            "train": str(cfg.srn_train),
            "test_fraction": cfg.test_fraction,
            "seed": cfg.seed,
            "vectors": io.read_header_meta(vectors_path).get("config_hash", ""),
        }
    )
    if _model_fresh(path, h):
        log(f"[train-srn] up to date: {path}")
        return path
    vectors, labels, vmeta = io.load_vectors(vectors_path)
    train_idx, test_idx = _splits(labels, cfg)
    net, history = train(vectors[train_idx], labels[train_idx], cfg.srn_train)
    test_acc = float((predict_batch(net, vectors[test_idx]) == labels[test_idx]).mean())
    io.save_lipschitz_model(
        path,
        net,
        meta={
            "config_hash": h,
            "p": vmeta.get("p", "inf"),
            "F": vmeta.get("F", "identity"),
            "K": vmeta.get("K", "1.0"),
            "train_acc": history["train_acc"][-1],
            "val_acc": history["val_acc"][-1],
            "test_acc": test_acc,
        },
    )
    log(f"[train-srn] test accuracy {test_acc:.3f}; model at {path}")
    return path


def stage_train_baseline(cfg: PipelineConfig, out: Path, log=print) -> Path:
    diagrams_path = out / "diagrams.csv"
    path = out / "model_baseline.txt"
    h = io.config_hash(
        {
            "train": str(cfg.baseline_train),
            "test_fraction": cfg.test_fraction,
            "seed": cfg.seed,
            "diagrams": io.read_header_meta(diagrams_path).get("config_hash", ""),
        }
    )
    if _model_fresh(path, h):
        log(f"[train-baseline] up to date: {path}")
        return path
    diagrams, labels, _ = io.load_diagrams(diagrams_path)
    train_idx, test_idx = _splits(labels, cfg)
    net, history = train_deepset(
        [diagrams[i] for i in train_idx], labels[train_idx], cfg.baseline_train
    )
    preds = np.array([predict_diagram(net, diagrams[i]) for i in test_idx])
    test_acc = float((preds == labels[test_idx]).mean())
    io.save_deepset_model(
        path,
        net,
        meta={
            "config_hash": h,
            "train_acc": history["train_acc"][-1],
            "test_acc": test_acc,
        },
    )
    log(f"[train-baseline] test accuracy {test_acc:.3f}; model at {path}")
    return path


def load_srn(out: Path):
    """(net, K, p, rep) from the saved model; the input transform rides inside."""
    net, meta = io.load_model(out / "model_srn.txt")
    return net, float(meta["K"]), io.parse_p(meta["p"]), io.rep_from_string(meta["F"])


def stage_certify(cfg: PipelineConfig, out: Path, log=print) -> Path:
    path = out / "records.csv"
    model_meta = io.load_model(out / "model_srn.txt")[1]
    h = io.config_hash({"model": model_meta.get("config_hash", "")})
    if _fresh(path, h):
        log(f"[certify] up to date: {path}")
        return path
    vectors, labels, _ = io.load_vectors(out / "vectors.csv")
    net, k_bound, _, _ = load_srn(out)
    _, test_idx = _splits(labels, cfg)
    records = certify_dataset(
        net,
        vectors[test_idx],
        labels[test_idx],
        lipschitz_k=k_bound,
        sample_ids=test_idx,
    )
    io.save_certification_records(path, records, meta={"config_hash": h, "K": k_bound})
    clean = np.mean([r.correct for r in records])
    log(f"[certify] {len(records)} test records (clean accuracy {clean:.3f}) at {path}")
    return path


def stage_attack(cfg: PipelineConfig, out: Path, log=print) -> Path:
    """Attack the baseline on test samples at the largest budget in the grid."""
    path = out / "attack_baseline.csv"
    model_meta = io.load_model(out / "model_baseline.txt")[1]
    h = io.config_hash(
        {
            "model": model_meta.get("config_hash", ""),
            "attack": str(cfg.attack_cfg),
            "samples": cfg.attack_samples,
            "eps": max(cfg.eps_grid),
        }
    )
    if _fresh(path, h):
        log(f"[attack] up to date: {path}")
        return path
    diagrams, labels, _ = io.load_diagrams(out / "diagrams.csv")
    net, _ = io.load_model(out / "model_baseline.txt")
    target = DeepSetAttackTarget(net)
    _, test_idx = _splits(labels, cfg)
    chosen = test_idx[: cfg.attack_samples]
    budget = max(cfg.eps_grid)
    rows = []
    for sid in chosen:
        pts = diagrams[sid].points
        clean = predict_diagram(net, pts) == labels[sid]
        if not clean:
            rows.append(
                {"sample_id": int(sid), "clean_correct": False, "success": False,
                 "distance": 0.0, "iterations": 0}
            )
            continue
        acfg = replace(cfg.attack_cfg, budget=budget)
        result = attack(target, pts, int(labels[sid]), acfg, rng_key=int(sid))
        rows.append(
            {
                "sample_id": int(sid),
                "clean_correct": True,
                "success": result.success,
                "distance": result.distance,
                "iterations": result.iterations,
            }
        )
    io.save_attack_results(path, rows, meta={"config_hash": h, "budget": budget})
    n_success = sum(r["success"] for r in rows)
    log(f"[attack] {n_success}/{len(rows)} baseline attacks succeeded within {budget}; {path}")
    return path


def report_class_distances(
    diagrams, labels, pairs_per_cell: int, seed: int
) -> np.ndarray:
    """Mean bottleneck distance per class pair, sampled up to pairs_per_cell."""
    labels = np.asarray(labels, dtype=np.int64)
    classes = np.unique(labels)
    rng = make_rng(seed, 0x7AB3)
    table = np.zeros((len(classes), len(classes)))
    for a_i, a in enumerate(classes):
        for b_i, b in enumerate(classes):
            if b_i < a_i:
                continue
            members_a = np.nonzero(labels == a)[0]
            members_b = np.nonzero(labels == b)[0]
            dists = []
            for _ in range(pairs_per_cell):
                i = int(members_a[rng.integers(len(members_a))])
                j = int(members_b[rng.integers(len(members_b))])
                if i == j:
                    continue
                dists.append(bottleneck(diagrams[i], diagrams[j]))
            table[a_i, b_i] = float(np.mean(dists)) if dists else 0.0
    return table


def report_certified_distribution(records) -> list[tuple[int, float]]:
    """(class, certified radius) for each correctly classified record."""
    return [(r.true_class, r.certified_radius) for r in records if r.correct]


def stage_report(cfg: PipelineConfig, out: Path, log=print) -> list[Path]:
    records, _ = io.load_certification_records(out / "records.csv")
    attack_rows, attack_meta = io.load_attack_results(out / "attack_baseline.csv")
    diagrams, labels, _ = io.load_diagrams(out / "diagrams.csv")
    srn_meta = io.load_model(out / "model_srn.txt")[1]
    base_meta = io.load_model(out / "model_baseline.txt")[1]
    h = io.config_hash(
        {
            "records": str(len(records)),
            "attack": attack_meta.get("config_hash", ""),
            "pairs_per_cell": cfg.pairs_per_cell,
            "eps_grid": ",".join(repr(e) for e in cfg.eps_grid),
        }
    )
    paths = []

    acc_path = out / "table_accuracy.csv"
    io.save_table(
        acc_path,
        ["model", "test_accuracy"],
        [
            ["srn", float(srn_meta["test_acc"])],
            ["deepset", float(base_meta["test_acc"])],
        ],
        meta={"config_hash": h},
    )
    paths.append(acc_path)

    clean_srn = float(np.mean([r.correct for r in records]))
    srn_row = ["srn_certified", clean_srn] + [
        certified_robust_accuracy(records, eps) for eps in cfg.eps_grid
    ]
    attacked = [r for r in attack_rows]
    clean_base = float(np.mean([r["clean_correct"] for r in attacked])) if attacked else 0.0

    def base_robust(eps: float) -> float:
        if not attacked:
            return 0.0
        ok = [
            r["clean_correct"] and not (r["success"] and r["distance"] <= eps)
            for r in attacked
        ]
        return float(np.mean(ok))

    base_row = ["deepset_empirical", clean_base] + [base_robust(e) for e in cfg.eps_grid]
    rob_path = out / "table_robust_accuracy.csv"
    io.save_table(
        rob_path,
        ["model", "clean"] + [f"eps_{e:g}" for e in cfg.eps_grid],
        [srn_row, base_row],
        meta={"config_hash": h},
    )
    paths.append(rob_path)

    table = report_class_distances(diagrams, labels, cfg.pairs_per_cell, cfg.seed)
    rows = []
    for i in range(table.shape[0]):
        for j in range(i, table.shape[1]):
            rows.append([i, j, float(table[i, j])])
    dist_path = out / "table_class_distances.csv"
    io.save_table(
        dist_path,
        ["class_a", "class_b", "mean_bottleneck"],
        rows,
        meta={"config_hash": h, "pairs_per_cell": cfg.pairs_per_cell},
    )
    paths.append(dist_path)

    dist_rows = report_certified_distribution(records)
    cert_path = out / "certified_distribution.csv"
    io.save_table(
        cert_path,
        ["class", "certified_radius"],
        [[c, r] for c, r in dist_rows],
        meta={"config_hash": h},
    )
    paths.append(cert_path)
    for p in paths:
        log(f"[report] wrote {p}")
    return paths


STAGES = (
    ("gen-data", stage_gen_data),
    ("compute-ph", stage_compute_ph),
    ("vectorize", stage_vectorize),
    ("train-srn", stage_train_srn),
    ("train-baseline", stage_train_baseline),
    ("certify", stage_certify),
    ("attack", stage_attack),
    ("report", stage_report),
)


def run_pipeline(cfg: PipelineConfig, log=print) -> Path:
    """Run every stage in order; a failing stage aborts with its name."""
    out = Path(cfg.outdir)
    out.mkdir(parents=True, exist_ok=True)
    for name, fn in STAGES:
        try:
            fn(cfg, out, log=log)
        except Exception as exc:
            raise RuntimeError(f"stage {name} failed: {exc}") from exc
    return out
