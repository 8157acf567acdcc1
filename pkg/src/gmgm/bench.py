"""Runtime benchmark harness: phase-separated timings on synthetic data.

Each run times the Gram, eigendecomposition, and eigenvalue-iteration phases
separately, so scaling exponents can be fit per phase.  Records serialize as
CSV rows with a JSON metadata sidecar.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass

import numpy as np

from ._threads import get_num_threads
from .estimator import AxisSpectrum, EstimatorConfig, decompose, estimate_eigenvalues, priorize
from .synth import gen_er_precision, sample_ks_normal
from .tensors import Dataset, GramSet, Modality, effective_gram

# Refuse scenarios whose working set would obviously exceed this many bytes.
DEFAULT_MEMORY_CAP = 4 << 30


@dataclass
class BenchRecord:
    """Phase timings for one (scenario, seed) benchmark run."""

    axis_sizes: tuple
    k: int
    gram_seconds: float
    decompose_seconds: float
    iterate_seconds: float
    iterations: int
    seed: int
    threads: int

    def __post_init__(self):
        self.axis_sizes = tuple(int(s) for s in self.axis_sizes)
        if min(self.gram_seconds, self.decompose_seconds, self.iterate_seconds) < 0:
            raise ValueError("phase times must be nonnegative")


def estimate_memory_bytes(axis_sizes, n_samples=1):
    """Rough working-set bound: data tensors plus dense per-axis matrices."""
    total = math.prod(axis_sizes)
    per_axis = sum(d * d for d in axis_sizes)
    return 8 * (3 * n_samples * total + 6 * per_axis)


def bench_one(axis_sizes, seed, p_edge=0.02, n_samples=1, config=None,
              memory_cap=DEFAULT_MEMORY_CAP):
    """Generate one synthetic instance and time each estimation phase."""
    estimate = estimate_memory_bytes(axis_sizes, n_samples)
    if estimate > memory_cap:
        raise MemoryError(
            f"estimated working set {estimate} bytes exceeds cap {memory_cap}"
        )
    config = config or EstimatorConfig()
    truths = [
        gen_er_precision(d, p_edge, seed + 7919 * i) for i, d in enumerate(axis_sizes)
    ]
    samples = sample_ks_normal(truths, n_samples, seed)
    names = [f"axis{i}" for i in range(len(axis_sizes))]
    dataset = Dataset(
        dict(zip(names, axis_sizes)),
        [Modality("bench", names, list(samples))],
    )

    t0 = time.perf_counter()
    grams = effective_gram(dataset)
    t1 = time.perf_counter()
    priorized = priorize(grams)
    spectra = {}
    for name in names:
        v, e = decompose(priorized[name])
        spectra[name] = AxisSpectrum(v, e)
    t2 = time.perf_counter()
    _, info = estimate_eigenvalues(spectra, dataset.structure(), config)
    t3 = time.perf_counter()

    return BenchRecord(
        axis_sizes=tuple(axis_sizes),
        k=len(axis_sizes),
        gram_seconds=t1 - t0,
        decompose_seconds=t2 - t1,
        iterate_seconds=t3 - t2,
        iterations=info["iterations"],
        seed=seed,
        threads=get_num_threads(),
    )


def bench_run(scenarios, seeds, p_edge=0.02, n_samples=1, config=None,
              max_seconds=None, memory_cap=DEFAULT_MEMORY_CAP):
    """Run the benchmark over a sweep of axis-size scenarios.

    ``scenarios`` is a sequence of axis-size tuples; every scenario runs for
    every seed.  With ``max_seconds`` set, the sweep stops after the first
    scenario whose total wall time exceeds the budget.
    """
    records = []
    for sizes in scenarios:
        start = time.perf_counter()
        for seed in seeds:
            records.append(
                bench_one(sizes, seed, p_edge, n_samples, config, memory_cap)
            )
        if max_seconds is not None and time.perf_counter() - start > max_seconds:
            break
    return records


_FIELDS = ["axis_sizes", "k", "gram_seconds", "decompose_seconds",
           "iterate_seconds", "iterations", "seed", "threads"]


def write_records(records, csv_path, meta_path, metadata=None):
    """Write records as CSV plus a JSON metadata sidecar."""
    with open(csv_path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=_FIELDS)
        writer.writeheader()
        for rec in records:
            row = asdict(rec)
            row["axis_sizes"] = "x".join(str(s) for s in rec.axis_sizes)
            writer.writerow(row)
    meta = {"format": "bench-records", "version": 1, "fields": _FIELDS}
    meta.update(metadata or {})
    with open(meta_path, "w") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")


def read_records(csv_path):
    with open(csv_path, newline="") as f:
        out = []
        for row in csv.DictReader(f):
            out.append(BenchRecord(
                axis_sizes=tuple(int(s) for s in row["axis_sizes"].split("x")),
                k=int(row["k"]),
                gram_seconds=float(row["gram_seconds"]),
                decompose_seconds=float(row["decompose_seconds"]),
                iterate_seconds=float(row["iterate_seconds"]),
                iterations=int(row["iterations"]),
                seed=int(row["seed"]),
                threads=int(row["threads"]),
            ))
    return out


def fit_scaling_exponent(sizes, times):
    """Least-squares slope of log(time) against log(size)."""
    x = np.log(np.asarray(sizes, dtype=float))
    y = np.log(np.asarray(times, dtype=float))
    return float(np.polyfit(x, y, 1)[0])
