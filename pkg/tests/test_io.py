import numpy as np

from toporobust import io
from toporobust.baseline import init_deepset
from toporobust.complexes import PersistenceDiagram
from toporobust.lipnet import CertificationRecord, LinfLayer, LipschitzNetwork, forward
from toporobust.orbit import generate_dataset
from toporobust.stablerank import Reparameterization


def test_dataset_roundtrip(tmp_path):
    ds = generate_dataset(per_class=2, n_points=15, seed=5)
    path = tmp_path / "clouds.csv"
    io.save_dataset(path, ds, extra_meta={"config_hash": "abc"})
    back = io.load_dataset(path)
    assert back.class_params == ds.class_params
    assert back.seed == 5 and back.n_points == 15 and back.per_class == 2
    assert np.array_equal(back.labels, ds.labels)
    for a, b in zip(ds.clouds, back.clouds):
        assert np.array_equal(a, b)  # repr round-trip is exact
    assert io.read_header_meta(path)["config_hash"] == "abc"


def test_diagrams_roundtrip_with_empty(tmp_path):
    rng = np.random.default_rng(0)
    diagrams = [
        PersistenceDiagram(points=np.array([[0.1, 0.5], [0.2, 0.9]]), degree=1),
        PersistenceDiagram(points=np.empty((0, 2)), degree=1),
        PersistenceDiagram(points=np.array([[1.0, 2.0]]), degree=1),
    ]
    labels = np.array([0, 3, 1])
    path = tmp_path / "diagrams.csv"
    io.save_diagrams(path, diagrams, labels)
    back, back_labels, meta = io.load_diagrams(path)
    assert np.array_equal(back_labels, labels)
    assert len(back) == 3
    assert back[1].rank == 0
    for a, b in zip(diagrams, back):
        assert np.array_equal(a.points, b.points)


def test_vectors_roundtrip(tmp_path):
    vectors = np.random.default_rng(1).random((4, 6))
    labels = np.array([0, 1, 2, 0])
    path = tmp_path / "vectors.csv"
    io.save_vectors(path, vectors, labels, meta={"p": "inf", "K": 1.0})
    back_v, back_l, meta = io.load_vectors(path)
    assert np.array_equal(back_v, vectors)
    assert np.array_equal(back_l, labels)
    assert meta["p"] == "inf"


def test_lipschitz_model_roundtrip(tmp_path):
    rng = np.random.default_rng(2)
    net = LipschitzNetwork(
        layers=[
            LinfLayer(weights=rng.standard_normal((4, 3)), biases=rng.standard_normal(4),
                      center=True, running_mean=rng.standard_normal(4)),
            LinfLayer(weights=rng.standard_normal((2, 4)), biases=rng.standard_normal(2),
                      center=False, running_mean=np.zeros(2)),
        ],
        input_mean=rng.standard_normal(3),
        input_scale=np.array([1.0, 0.5, 0.125]),
    )
    path = tmp_path / "model.txt"
    io.save_lipschitz_model(path, net, meta={"K": 1.0, "p": "inf", "F": "identity"})
    back, meta = io.load_model(path)
    assert meta["arch"] == "linf"
    x = rng.standard_normal(3)
    assert np.allclose(forward(net, x), forward(back, x))
    assert np.array_equal(net.input_mean, back.input_mean)
    assert np.array_equal(net.input_scale, back.input_scale)
    for a, b in zip(net.layers, back.layers):
        assert np.array_equal(a.weights, b.weights)
        assert np.array_equal(a.running_mean, b.running_mean)
        assert a.center == b.center


def test_deepset_model_roundtrip(tmp_path):
    from toporobust.baseline import deepset_forward

    net = init_deepset(seed=9)
    path = tmp_path / "model.txt"
    io.save_deepset_model(path, net, meta={"note": "x"})
    back, meta = io.load_model(path)
    assert meta["arch"] == "deepset"
    d = np.array([[0.5, 1.5], [1.0, 3.0]])
    assert np.allclose(deepset_forward(net, d), deepset_forward(back, d))


def test_certification_records_roundtrip(tmp_path):
    records = [
        CertificationRecord(3, 1, 1, 0.8, 0.4, 1.0),
        CertificationRecord(5, 0, 2, -0.5, 0.0, 1.0),
    ]
    path = tmp_path / "records.csv"
    io.save_certification_records(path, records, meta={"K": 1.0})
    back, _ = io.load_certification_records(path)
    assert back == records


def test_attack_results_roundtrip(tmp_path):
    rows = [
        {"sample_id": 0, "clean_correct": True, "success": True, "distance": 0.125, "iterations": 40},
        {"sample_id": 1, "clean_correct": False, "success": False, "distance": 0.0, "iterations": 0},
    ]
    path = tmp_path / "attack.csv"
    io.save_attack_results(path, rows, meta={"budget": 0.5})
    back, meta = io.load_attack_results(path)
    assert back == rows
    assert float(meta["budget"]) == 0.5


def test_table_roundtrip(tmp_path):
    path = tmp_path / "table.csv"
    io.save_table(path, ["a", "b"], [["x", 1.5], ["y", 2.0]], meta={"config_hash": "zz"})
    header, rows, meta = io.load_table(path)
    assert header == ["a", "b"]
    assert rows == [["x", "1.5"], ["y", "2.0"]]
    assert meta["config_hash"] == "zz"


def test_rep_and_p_strings():
    rep = Reparameterization.gaussian_mixture([(1.0, 0.5, 2.0), (0.3, 1.0, 0.1)])
    back = io.rep_from_string(io.rep_to_string(rep))
    assert back == rep
    assert io.rep_from_string("identity") == Reparameterization.identity()
    assert io.parse_p("inf") == float("inf")
    assert io.parse_p("2") == 2.0
    assert io.p_to_string(float("inf")) == "inf"


def test_config_hash_stability():
    a = io.config_hash({"x": 1, "y": "z"})
    b = io.config_hash({"y": "z", "x": 1})
    c = io.config_hash({"x": 2, "y": "z"})
    assert a == b != c
