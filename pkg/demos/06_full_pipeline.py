"""Run the whole pipeline programmatically on a reduced configuration.

Every stage writes one artifact into the output directory and records its
config hash; rerunning the script skips everything that is already up to
date.  The CLI equivalent is `toporobust run --config cfg.ini --out DIR`.
"""

from pathlib import Path

from toporobust import AttackConfig, PipelineConfig, run_pipeline
from toporobust.io import load_table
from toporobust.training import TrainConfig

cfg = PipelineConfig(
    outdir="runs/demo",
    seed=7,
    per_class=30,
    n_points=200,
    n_dim=96,
    srn_train=TrainConfig(
        epochs=50, batch_size=32, learning_rate=0.3, loss="xent",
        layer_sizes=(128, 64, 5), val_fraction=0.0, equalize_quantile=0.9,
        lr_decay_every=25, relax_p_start=0.0, seed=1,
    ),
    baseline_train=TrainConfig(
        epochs=80, batch_size=16, learning_rate=0.01, loss="xent",
        lr_decay_every=30, lr_decay_factor=0.5, val_fraction=0.0, seed=1,
    ),
    attack_cfg=AttackConfig(steps=80, step_size=5.0, n_added=10, seed=1, reseed_patience=5),
    attack_samples=30,
    pairs_per_cell=10,
)

out = run_pipeline(cfg)

print("\n--- robust accuracy table ---")
header, rows, _ = load_table(Path(out) / "table_robust_accuracy.csv")
print(",".join(header))
for row in rows:
    print(",".join(row))

print("\n--- mean bottleneck distance per class pair ---")
header, rows, _ = load_table(Path(out) / "table_class_distances.csv")
for row in rows:
    print(f"  classes {row[0]}-{row[1]}: {float(row[2]):.2f}")
