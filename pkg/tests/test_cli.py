import pytest

from toporobust import io
from toporobust.cli import main


def run_cli(*argv) -> int:
    return main(list(argv))


@pytest.fixture(scope="module")
def artifacts(tmp_path_factory):
    """A small chain of CLI artifacts shared across tests."""
    root = tmp_path_factory.mktemp("cli")
    clouds = root / "clouds.csv"
    diagrams = root / "diagrams.csv"
    vectors = root / "vectors.csv"
    ini = root / "cfg.ini"
    ini.write_text(
        """
[train_srn]
epochs = 3
batch_size = 8
layer_sizes = 12,5
loss = xent
learning_rate = 0.1
val_fraction = 0.0
equalize_quantile = 0.9

[train_baseline]
epochs = 3
batch_size = 8
learning_rate = 0.03
loss = xent
val_fraction = 0.0

[attack]
steps = 5
n_added = 2
step_size = 5.0
"""
    )
    assert run_cli("gen-data", "--per-class", "5", "--points", "40",
                   "--seed", "3", "--out", str(clouds)) == 0
    assert run_cli("compute-ph", "--in", str(clouds), "--degree", "1",
                   "--scale", "1000", "--out", str(diagrams)) == 0
    assert run_cli("vectorize", "--in", str(diagrams), "--p", "inf",
                   "--F", "identity", "--dim", "0", "--out", str(vectors)) == 0
    return root, clouds, diagrams, vectors, ini


def test_gen_data_and_ph_outputs(artifacts):
    root, clouds, diagrams, vectors, ini = artifacts
    ds = io.load_dataset(clouds)
    assert len(ds) == 25
    dgms, labels, meta = io.load_diagrams(diagrams)
    assert len(dgms) == 25
    assert meta["scale"] == "1000.0"
    x, y, vmeta = io.load_vectors(vectors)
    assert len(x) == 25 and vmeta["p"] == "inf"


def test_train_certify_attack_chain(artifacts):
    root, clouds, diagrams, vectors, ini = artifacts
    model = root / "model.txt"
    records = root / "records.csv"
    results = root / "attack.csv"
    assert run_cli("train-srn", "--vectors", str(vectors), "--config", str(ini),
                   "--seed", "2", "--out", str(model)) == 0
    assert run_cli("certify", "--model", str(model), "--vectors", str(vectors),
                   "--out", str(records)) == 0
    recs, meta = io.load_certification_records(records)
    assert len(recs) == 25
    assert all(r.certified_radius >= 0 for r in recs)
    assert run_cli("attack", "--model", str(model), "--diagrams", str(diagrams),
                   "--p", "inf", "--eps", "0.01", "--config", str(ini),
                   "--max-samples", "3", "--out", str(results)) == 0
    rows, _ = io.load_attack_results(results)
    assert len(rows) == 3


def test_train_baseline_and_attack(artifacts):
    root, clouds, diagrams, vectors, ini = artifacts
    model = root / "model_ds.txt"
    results = root / "attack_ds.csv"
    assert run_cli("train-baseline", "--diagrams", str(diagrams),
                   "--config", str(ini), "--out", str(model)) == 0
    net, meta = io.load_model(model)
    assert meta["arch"] == "deepset"
    assert run_cli("attack", "--model", str(model), "--diagrams", str(diagrams),
                   "--p", "inf", "--eps", "0.05", "--config", str(ini),
                   "--max-samples", "3", "--out", str(results)) == 0


def test_distances_command(artifacts):
    root, clouds, diagrams, vectors, ini = artifacts
    out = root / "dists.csv"
    assert run_cli("distances", "--in", str(diagrams), "--p", "inf",
                   "--pairs", "inter", "--max-pairs", "10", "--seed", "1",
                   "--out", str(out)) == 0
    header, rows, _ = io.load_table(out)
    assert header == ["id_a", "id_b", "distance"]
    assert 0 < len(rows) <= 10
    assert all(float(r[2]) >= 0 for r in rows)


def test_failure_exit_code_and_stage_name(tmp_path, capsys):
    rc = run_cli("compute-ph", "--in", str(tmp_path / "missing.csv"),
                 "--out", str(tmp_path / "x.csv"))
    assert rc == 1
    assert "compute-ph failed" in capsys.readouterr().err


def test_run_subcommand_tiny(tmp_path):
    ini = tmp_path / "cfg.ini"
    ini.write_text(
        """
[pipeline]
seed = 5

[dataset]
per_class = 5
n_points = 35

[vectorize]
n_dim = 0

[train_srn]
epochs = 2
batch_size = 8
layer_sizes = 10,5
loss = xent
val_fraction = 0.0

[train_baseline]
epochs = 2
batch_size = 8
learning_rate = 0.03
val_fraction = 0.0

[attack]
steps = 3
n_added = 2
n_samples = 2

[report]
pairs_per_cell = 2
"""
    )
    out = tmp_path / "run"
    assert run_cli("run", "--config", str(ini), "--out", str(out)) == 0
    assert (out / "table_robust_accuracy.csv").exists()
