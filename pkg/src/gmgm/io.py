"""On-disk formats: dataset manifests with raw binary tensors, sparse-graph
edge lists, matrices, and run reports.

Tensors are stored row-major as little-endian 64-bit floats next to a JSON
manifest; 2-axis tensors are also accepted as headerless CSV whose row count
equals the first axis.  Graphs are TSV edge lists with a JSON sidecar, so
every artifact directory is self-describing.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .sparsify import SparseGraph
from .tensors import Dataset, Modality

MANIFEST_NAME = "manifest.json"


def _read_tensor_file(path, shape):
    path = Path(path)
    if path.suffix.lower() == ".csv":
        if len(shape) != 2:
            raise ValueError("CSV tensors are only supported for 2-axis modalities")
        arr = np.loadtxt(path, delimiter=",", dtype=float, ndmin=2)
        if arr.shape != tuple(shape):
            raise ValueError(f"{path}: expected shape {tuple(shape)}, got {arr.shape}")
        return arr
    data = np.fromfile(path, dtype="<f8")
    expected = math.prod(shape)
    if data.size != expected:
        raise ValueError(f"{path}: expected {expected} values, found {data.size}")
    return data.reshape(shape)


def _write_tensor_file(path, tensor):
    np.ascontiguousarray(tensor, dtype="<f8").tofile(path)


def load_dataset(manifest_path):
    """Read a dataset from its JSON manifest; sample paths resolve relative
    to the manifest's directory."""
    manifest_path = Path(manifest_path)
    with open(manifest_path) as f:
        manifest = json.load(f)
    axes = {a["name"]: int(a["size"]) for a in manifest["axes"]}
    modalities = []
    for m in manifest["modalities"]:
        shape = tuple(axes[name] for name in m["axes"])
        samples = [
            _read_tensor_file(manifest_path.parent / ref, shape)
            for ref in m["samples"]
        ]
        modalities.append(Modality(m["name"], m["axes"], samples))
    return Dataset(axes, modalities)


def save_dataset(dataset, directory, extra_metadata=None):
    """Write binaries plus a manifest into ``directory``; returns the
    manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {
        "axes": [{"name": a.name, "size": a.size} for a in dataset.axes.values()],
        "modalities": [],
    }
    if extra_metadata:
        manifest["metadata"] = extra_metadata
    for mod in dataset.modalities:
        refs = []
        for i, sample in enumerate(mod.samples):
            ref = f"{mod.name}_{i}.bin"
            _write_tensor_file(directory / ref, sample)
            refs.append(ref)
        manifest["modalities"].append(
            {"name": mod.name, "axes": list(mod.axis_names), "samples": refs}
        )
    path = directory / MANIFEST_NAME
    with open(path, "w") as f:
        json.dump(manifest, f, indent=2)
        f.write("\n")
    return path


def save_graph(graph, tsv_path, method=None, parameters=None):
    """TSV edge list (i, j, weight) plus a JSON sidecar at <path>.json."""
    tsv_path = Path(tsv_path)
    with open(tsv_path, "w") as f:
        for i, j, w in graph.edges:
            f.write(f"{i}\t{j}\t{w!r}\n")
    sidecar = {
        "axis_name": graph.axis_name,
        "n_vertices": graph.n_vertices,
        "n_edges": graph.n_edges,
        "method": method,
        "parameters": parameters or {},
    }
    with open(tsv_path.with_suffix(tsv_path.suffix + ".json"), "w") as f:
        json.dump(sidecar, f, indent=2, sort_keys=True)
        f.write("\n")
    return tsv_path


def load_graph(tsv_path):
    tsv_path = Path(tsv_path)
    with open(tsv_path.with_suffix(tsv_path.suffix + ".json")) as f:
        sidecar = json.load(f)
    edges = []
    with open(tsv_path) as f:
        for line in f:
            if line.strip():
                i, j, w = line.split("\t")
                edges.append((int(i), int(j), float(w)))
    return SparseGraph(sidecar["axis_name"], int(sidecar["n_vertices"]), edges), sidecar


def load_matrix(path, shape=None):
    """Read a square matrix from CSV or raw binary."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return np.loadtxt(path, delimiter=",", dtype=float, ndmin=2)
    data = np.fromfile(path, dtype="<f8")
    if shape is None:
        d = math.isqrt(data.size)
        if d * d != data.size:
            raise ValueError(f"{path}: cannot infer a square shape from {data.size} values")
        shape = (d, d)
    return data.reshape(shape)


def save_matrix(path, matrix):
    path = Path(path)
    if path.suffix.lower() == ".csv":
        np.savetxt(path, np.asarray(matrix, dtype=float), delimiter=",")
    else:
        _write_tensor_file(path, matrix)
    return path


def save_json(path, payload):
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True, default=_json_default)
        f.write("\n")
    return Path(path)


def load_json(path):
    with open(path) as f:
        return json.load(f)


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer, np.floating, np.bool_)):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj)!r}")
