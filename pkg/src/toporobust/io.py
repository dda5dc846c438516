"""Delimited-text file formats for every pipeline artifact.

All files are plain CSV with `#`-prefixed header lines carrying metadata as
`key=value` pairs.  Every writer stamps the config hash of the producing
stage so reruns can detect stale outputs; every reader round-trips exactly
what was written.
"""

from __future__ import annotations

import hashlib
import math
from configparser import ConfigParser
from typing import Optional

import numpy as np

from .baseline import DeepSetNet
from .complexes import PersistenceDiagram
from .lipnet import CertificationRecord, LinfLayer, LipschitzNetwork
from .orbit import LabeledDataset
from .stablerank import Reparameterization

FORMAT_VERSION = 1


# ----------------------------------------------------------------- helpers


def config_hash(items: dict) -> str:
    """Short stable hash of a config stanza (order-insensitive)."""
    canon = ";".join(f"{k}={items[k]}" for k in sorted(items))
    return hashlib.sha256(canon.encode()).hexdigest()[:12]


def _write_meta(fh, meta: dict) -> None:
    for key, value in meta.items():
        fh.write(f"# {key}={value}\n")


def _read_meta(lines: list[str]) -> tuple[dict, list[str]]:
    meta: dict[str, str] = {}
    body = []
    for line in lines:
        if line.startswith("#"):
            stripped = line[1:].strip()
            if "=" in stripped:
                key, value = stripped.split("=", 1)
                meta[key.strip()] = value.strip()
        elif line.strip():
            body.append(line.strip())
    return meta, body


def _fmt(x: float) -> str:
    return repr(float(x))


def read_header_meta(path) -> dict:
    with open(path) as fh:
        meta, _ = _read_meta(fh.readlines())
    return meta


# ----------------------------------------------------------------- dataset


def save_dataset(path, ds: LabeledDataset, extra_meta: Optional[dict] = None) -> None:
    """One record per sample: label, then the flattened coordinates."""
    with open(path, "w") as fh:
        meta = {
            "format_version": FORMAT_VERSION,
            "kind": "point-clouds",
            "class_params": ",".join(_fmt(r) for r in ds.class_params),
            "seed": ds.seed,
            "per_class": ds.per_class,
            "n_points": ds.n_points,
            "n_samples": len(ds),
        }
        meta.update(extra_meta or {})
        _write_meta(fh, meta)
        for label, cloud in zip(ds.labels, ds.clouds):
            coords = ",".join(_fmt(v) for v in cloud.ravel())
            fh.write(f"{int(label)},{coords}\n")


def load_dataset(path) -> LabeledDataset:
    with open(path) as fh:
        meta, body = _read_meta(fh.readlines())
    clouds, labels = [], []
    for line in body:
        parts = line.split(",")
        labels.append(int(parts[0]))
        coords = np.array([float(v) for v in parts[1:]])
        clouds.append(coords.reshape(-1, 2))
    return LabeledDataset(
        clouds=clouds,
        labels=np.array(labels, dtype=np.int64),
        class_params=tuple(float(v) for v in meta["class_params"].split(",")),
        seed=int(meta.get("seed", 0)),
        n_points=int(meta.get("n_points", len(clouds[0]) if clouds else 0)),
        per_class=int(meta.get("per_class", 0)),
    )


# ---------------------------------------------------------------- diagrams


def save_diagrams(path, diagrams, labels, extra_meta: Optional[dict] = None) -> None:
    """Rows `sample_id,degree,birth,death`; labels ride in the header."""
    labels = np.asarray(labels, dtype=np.int64)
    with open(path, "w") as fh:
        meta = {
            "format_version": FORMAT_VERSION,
            "kind": "persistence-diagrams",
            "n_samples": len(diagrams),
            "labels": ",".join(str(int(l)) for l in labels),
        }
        meta.update(extra_meta or {})
        _write_meta(fh, meta)
        fh.write("sample_id,degree,birth,death\n")
        for sid, dgm in enumerate(diagrams):
            for birth, death in dgm.points:
                fh.write(f"{sid},{dgm.degree},{_fmt(birth)},{_fmt(death)}\n")


def load_diagrams(path) -> tuple[list[PersistenceDiagram], np.ndarray, dict]:
    with open(path) as fh:
        meta, body = _read_meta(fh.readlines())
    n_samples = int(meta["n_samples"])
    labels = np.array([int(v) for v in meta["labels"].split(",")]) if meta.get("labels") else np.zeros(n_samples, dtype=np.int64)
    buckets: list[list[tuple[float, float]]] = [[] for _ in range(n_samples)]
    degree = 1
    for line in body[1:] if body and body[0].startswith("sample_id") else body:
        sid_s, deg_s, birth_s, death_s = line.split(",")
        degree = int(deg_s)
        buckets[int(sid_s)].append((float(birth_s), float(death_s)))
    diagrams = [
        PersistenceDiagram(
            points=np.array(b, dtype=np.float64).reshape(-1, 2), degree=degree
        )
        for b in buckets
    ]
    return diagrams, labels, meta


# ----------------------------------------------------------------- vectors


def save_vectors(path, vectors: np.ndarray, labels, meta: dict) -> None:
    """Rows `sample_id,label,v0,...`; p, F and K live in the header."""
    labels = np.asarray(labels, dtype=np.int64)
    with open(path, "w") as fh:
        full = {
            "format_version": FORMAT_VERSION,
            "kind": "stable-rank-vectors",
            "n_samples": len(vectors),
            "n_dim": vectors.shape[1],
        }
        full.update(meta)
        _write_meta(fh, full)
        for sid, (label, row) in enumerate(zip(labels, vectors)):
            vals = ",".join(_fmt(v) for v in row)
            fh.write(f"{sid},{int(label)},{vals}\n")


def load_vectors(path) -> tuple[np.ndarray, np.ndarray, dict]:
    with open(path) as fh:
        meta, body = _read_meta(fh.readlines())
    labels, rows = [], []
    for line in body:
        parts = line.split(",")
        labels.append(int(parts[1]))
        rows.append([float(v) for v in parts[2:]])
    return np.array(rows), np.array(labels, dtype=np.int64), meta


# ------------------------------------------------------- reparameterization


def rep_to_string(rep: Reparameterization) -> str:
    if rep.kind == "identity":
        return "identity"
    comps = "|".join(f"{_fmt(w)}:{_fmt(mu)}:{_fmt(s)}" for w, mu, s in rep.components)
    return f"gaussian-mixture {comps}"


def rep_from_string(text: str) -> Reparameterization:
    text = text.strip()
    if text == "identity":
        return Reparameterization.identity()
    kind, comps = text.split(None, 1)
    if kind != "gaussian-mixture":
        raise ValueError(f"unknown reparameterization {kind!r}")
    components = []
    for part in comps.split("|"):
        w, mu, s = part.split(":")
        components.append((float(w), float(mu), float(s)))
    return Reparameterization.gaussian_mixture(components)


def parse_p(text: str) -> float:
    text = str(text).strip().lower()
    if text in ("inf", "infinity", "oo"):
        return math.inf
    return float(text)


def p_to_string(p: float) -> str:
    return "inf" if math.isinf(p) else repr(float(p))


# ------------------------------------------------------------------ models


def save_lipschitz_model(path, net: LipschitzNetwork, meta: dict) -> None:
    """Structured text: metadata lines, then flat row-major weight arrays."""
    with open(path, "w") as fh:
        fh.write(f"format_version {FORMAT_VERSION}\n")
        fh.write("arch linf\n")
        fh.write(f"input_dim {net.input_dim}\n")
        fh.write(f"layer_sizes {','.join(str(s) for s in net.layer_sizes)}\n")
        for key, value in meta.items():
            fh.write(f"{key} {value}\n")
        if net.input_mean is not None:
            fh.write("input_mean_vec " + " ".join(_fmt(v) for v in net.input_mean) + "\n")
        if net.input_scale is not None:
            fh.write("input_scale_vec " + " ".join(_fmt(v) for v in net.input_scale) + "\n")
        for li, layer in enumerate(net.layers):
            fh.write(f"center {li} {int(layer.center)}\n")
            fh.write(f"W {li} " + " ".join(_fmt(v) for v in layer.weights.ravel()) + "\n")
            fh.write(f"b {li} " + " ".join(_fmt(v) for v in layer.biases) + "\n")
            fh.write(
                f"running_mean {li} "
                + " ".join(_fmt(v) for v in layer.running_mean)
                + "\n"
            )


def save_deepset_model(path, net: DeepSetNet, meta: dict) -> None:
    with open(path, "w") as fh:
        fh.write(f"format_version {FORMAT_VERSION}\n")
        fh.write("arch deepset\n")
        fh.write(f"coord_scale {_fmt(net.coord_scale)}\n")
        for key, value in meta.items():
            fh.write(f"{key} {value}\n")
        for name in ("w1", "b1", "w2", "b2", "w3", "b3"):
            arr = getattr(net, name)
            shape = ",".join(str(s) for s in arr.shape)
            fh.write(f"{name} {shape} " + " ".join(_fmt(v) for v in arr.ravel()) + "\n")


def load_model(path):
    """Load either architecture; returns (net, meta) with meta['arch'] set."""
    meta: dict[str, str] = {}
    weights: dict = {}
    centers: dict[int, bool] = {}
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line.strip():
                continue
            head, rest = line.split(None, 1)
            if head in ("W", "b", "running_mean"):
                li_s, vals = rest.split(None, 1)
                weights[(head, int(li_s))] = np.array([float(v) for v in vals.split()])
            elif head in ("input_mean_vec", "input_scale_vec"):
                weights[head] = np.array([float(v) for v in rest.split()])
            elif head == "center":
                li_s, flag = rest.split()
                centers[int(li_s)] = bool(int(flag))
            elif head in ("w1", "b1", "w2", "b2", "w3", "b3"):
                parts = rest.split(None, 1)
                shape = tuple(int(s) for s in parts[0].split(","))
                weights[head] = np.array([float(v) for v in parts[1].split()]).reshape(shape)
            else:
                meta[head] = rest
    if int(meta.get("format_version", 0)) != FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {meta.get('format_version')}")
    arch = meta.get("arch")
    if arch == "linf":
        sizes = [int(s) for s in meta["layer_sizes"].split(",")]
        input_dim = int(meta["input_dim"])
        layers = []
        dim = input_dim
        for li, units in enumerate(sizes):
            layers.append(
                LinfLayer(
                    weights=weights[("W", li)].reshape(units, dim),
                    biases=weights[("b", li)],
                    center=centers.get(li, True),
                    running_mean=weights[("running_mean", li)],
                )
            )
            dim = units
        net = LipschitzNetwork(
            layers=layers,
            input_mean=weights.get("input_mean_vec"),
            input_scale=weights.get("input_scale_vec"),
        )
        return net, meta
    if arch == "deepset":
        net = DeepSetNet(
            w1=weights["w1"], b1=weights["b1"],
            w2=weights["w2"], b2=weights["b2"],
            w3=weights["w3"], b3=weights["b3"],
            coord_scale=float(meta.get("coord_scale", 1.0)),
        )
        return net, meta
    raise ValueError(f"unknown model architecture {arch!r}")


# ----------------------------------------------------------------- records


def save_certification_records(path, records: list[CertificationRecord], meta: dict) -> None:
    with open(path, "w") as fh:
        full = {"format_version": FORMAT_VERSION, "kind": "certification-records"}
        full.update(meta)
        _write_meta(fh, full)
        fh.write("sample_id,true_class,predicted_class,margin,certified_radius,lipschitz_k\n")
        for r in records:
            fh.write(
                f"{r.sample_id},{r.true_class},{r.predicted_class},"
                f"{_fmt(r.margin)},{_fmt(r.certified_radius)},{_fmt(r.lipschitz_k)}\n"
            )


def load_certification_records(path) -> tuple[list[CertificationRecord], dict]:
    with open(path) as fh:
        meta, body = _read_meta(fh.readlines())
    records = []
    for line in body[1:]:
        sid, true_c, pred_c, m, radius, k = line.split(",")
        records.append(
            CertificationRecord(
                sample_id=int(sid),
                true_class=int(true_c),
                predicted_class=int(pred_c),
                margin=float(m),
                certified_radius=float(radius),
                lipschitz_k=float(k),
            )
        )
    return records, meta


def save_attack_results(path, rows: list[dict], meta: dict) -> None:
    """Rows: sample_id, clean_correct, success, distance, iterations."""
    with open(path, "w") as fh:
        full = {"format_version": FORMAT_VERSION, "kind": "attack-results"}
        full.update(meta)
        _write_meta(fh, full)
        fh.write("sample_id,clean_correct,success,distance,iterations\n")
        for row in rows:
            fh.write(
                f"{row['sample_id']},{int(row['clean_correct'])},{int(row['success'])},"
                f"{_fmt(row['distance'])},{row['iterations']}\n"
            )


def load_attack_results(path) -> tuple[list[dict], dict]:
    with open(path) as fh:
        meta, body = _read_meta(fh.readlines())
    rows = []
    for line in body[1:]:
        sid, clean, success, dist, iters = line.split(",")
        rows.append(
            {
                "sample_id": int(sid),
                "clean_correct": bool(int(clean)),
                "success": bool(int(success)),
                "distance": float(dist),
                "iterations": int(iters),
            }
        )
    return rows, meta


# ------------------------------------------------------------------ tables


def save_table(path, header: list[str], rows: list[list], meta: dict) -> None:
    with open(path, "w") as fh:
        full = {"format_version": FORMAT_VERSION}
        full.update(meta)
        _write_meta(fh, full)
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) if isinstance(v, float) else str(v) for v in row) + "\n")


def load_table(path) -> tuple[list[str], list[list[str]], dict]:
    with open(path) as fh:
        meta, body = _read_meta(fh.readlines())
    header = body[0].split(",")
    rows = [line.split(",") for line in body[1:]]
    return header, rows, meta


# ------------------------------------------------------------------ config


def load_config(path) -> ConfigParser:
    parser = ConfigParser()
    with open(path) as fh:
        parser.read_file(fh)
    return parser


def stanza(parser: ConfigParser, section: str) -> dict:
    if parser.has_section(section):
        return dict(parser.items(section))
    return {}
