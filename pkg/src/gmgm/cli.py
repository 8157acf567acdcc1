"""Command-line front end.

Subcommands: ``generate`` (synthetic datasets), ``estimate`` (full pipeline),
``partition`` (covariance-thresholding plan only), ``eval`` (edge-recovery /
assortativity metrics), ``bench`` (runtime scaling records).  Structured
settings live in JSON configs; flags exist only as overrides.  Exit codes:
0 success, 1 usage or configuration error, 2 numerical non-convergence,
3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import io
from ._threads import set_num_threads
from .bench import bench_run, write_records
from .errors import ConvergenceError, NotPositiveDefiniteError
from .estimator import EstimatorConfig, PriorSpec, fit, recompose
from .metrics import assortativity, pr_curve
from .preprocess import PreprocessSpec
from .sparsify import (
    SparseGraph,
    covariance_partition,
    partitioned_fit,
    threshold_colnorm_top_k,
    threshold_global,
    threshold_top_k_rows,
)
from .synth import GroundTruth, gen_ar1_precision, gen_er_precision, sample_ks_normal
from .tensors import Dataset, Modality, effective_gram

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NO_CONVERGENCE = 2
EXIT_IO = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser():
    parser = _Parser(prog="gmgm", description=__doc__.split("\n", 1)[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic dataset with ground truth")
    p.add_argument("scenario", help="scenario JSON path")
    p.add_argument("-o", "--output", required=True, help="output directory")

    p = sub.add_parser("estimate", help="fit precision matrices for a dataset")
    p.add_argument("config", help="run configuration JSON path")
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--max-iter", type=int, default=None)
    p.add_argument("--rho", type=float, default=None,
                   help="restricted-L1 strength override")
    p.add_argument("--dense", action="store_true",
                   help="also write dense precision matrices")
    p.add_argument("--partition-rho", type=float, default=None,
                   help="covariance-thresholding rho; routes through partitioned_fit")
    p.add_argument("--threads", type=int, default=None)

    p = sub.add_parser("partition", help="write a covariance-thresholding plan only")
    p.add_argument("manifest", help="dataset manifest JSON path")
    p.add_argument("--partition-rho", type=float, required=True)
    p.add_argument("-o", "--output", required=True, help="plan JSON path")

    p = sub.add_parser("eval", help="score an estimate against ground truth or labels")
    p.add_argument("estimate_dir", help="directory written by the estimate command")
    p.add_argument("--truth-dir", default=None, help="directory written by generate")
    p.add_argument("--labels", default=None,
                   help="JSON file {axis: [category per vertex]} for assortativity")
    p.add_argument("--max-edges-per-vertex", type=int, default=40)
    p.add_argument("-o", "--output", required=True, help="metrics CSV path")

    p = sub.add_parser("bench", help="run the phase-timing benchmark sweep")
    p.add_argument("scenario", help="benchmark scenario JSON path")
    p.add_argument("-o", "--output", required=True, help="records CSV path")
    p.add_argument("--max-seconds", type=float, default=None)
    p.add_argument("--threads", type=int, default=None)
    return parser


# ---------------------------------------------------------------- generate

_GENERATORS = {
    "er": lambda d, params, seed: gen_er_precision(
        d, params.get("p_edge", 0.02), seed
    ),
    "ar1": lambda d, params, seed: gen_ar1_precision(d, params.get("phi", 0.5)),
}


def cmd_generate(args):
    scenario = io.load_json(args.scenario)
    axes = {a["name"]: int(a["size"]) for a in scenario["axes"]}
    dist = scenario.get("distribution", "er")
    if dist not in _GENERATORS:
        raise UsageError(f"unknown distribution {dist!r}")
    params = scenario.get("params", {})
    n_samples = int(scenario.get("n_samples", 1))
    seed = int(scenario.get("seed", 0))
    modality_specs = scenario.get(
        "modalities", [{"name": "data", "axes": list(axes)}]
    )

    names = list(axes)
    truths = {
        name: _GENERATORS[dist](axes[name], params, seed + 7919 * i)
        for i, name in enumerate(names)
    }
    modalities = []
    for mi, mspec in enumerate(modality_specs):
        mod_axes = mspec["axes"]
        for a in mod_axes:
            if a not in axes:
                raise UsageError(f"modality {mspec['name']!r} uses unknown axis {a!r}")
        samples = sample_ks_normal(
            [truths[a] for a in mod_axes], n_samples, seed + 104729 * (mi + 1)
        )
        modalities.append(Modality(mspec["name"], mod_axes, list(samples)))
    dataset = Dataset(axes, modalities)

    out = Path(args.output)
    io.save_dataset(dataset, out, extra_metadata={"seed": seed, "distribution": dist})
    truth = GroundTruth(truths, seed=seed)
    for name, psi in truths.items():
        io.save_matrix(out / f"truth_{name}.bin", psi)
        iu, ju = np.triu_indices(psi.shape[0], k=1)
        edges = [
            (int(i), int(j), float(psi[i, j]))
            for i, j in zip(iu, ju)
            if psi[i, j] != 0
        ]
        io.save_graph(
            SparseGraph(name, psi.shape[0], edges),
            out / f"truth_{name}.tsv",
            method="ground_truth",
            parameters={"distribution": dist, "seed": seed, **params},
        )
    io.save_json(out / "truth.json", {
        "seed": seed,
        "distribution": dist,
        "params": params,
        "axes": {name: axes[name] for name in names},
        "precision_files": {name: f"truth_{name}.bin" for name in names},
    })
    return EXIT_OK


# ---------------------------------------------------------------- estimate

def _load_priors(config, base):
    priors = {}
    for name, spec in (config.get("priors") or {}).items():
        kind = spec.get("kind", "wishart")
        if kind == "none":
            continue
        path = base / spec["scale_matrix"]
        if not path.exists():
            raise UsageError(f"prior scale matrix file not found: {path}")
        priors[name] = PriorSpec(
            kind=kind,
            scale_matrix=io.load_matrix(path),
            degrees_of_freedom=spec.get("degrees_of_freedom"),
        )
    return priors


def _estimator_config(config, args):
    fields = {}
    for key in ("tolerance", "max_iterations", "initial_step", "backtrack_factor",
                "pd_margin", "l1_strength", "l1_max_iterations", "force_projection",
                "cap_epsilon"):
        if key in config:
            fields[key] = config[key]
    if args.tol is not None:
        fields["tolerance"] = args.tol
    if getattr(args, "max_iter", None) is not None:
        fields["max_iterations"] = args.max_iter
    if getattr(args, "rho", None) is not None:
        fields["l1_strength"] = args.rho
    return EstimatorConfig(**fields)


_THRESHOLDERS = {
    "global": lambda m, p, name: threshold_global(m, float(p), name),
    "topk": lambda m, p, name: threshold_top_k_rows(m, int(p), name),
    "colnorm_topk": lambda m, p, name: threshold_colnorm_top_k(m, int(p), name),
}


def cmd_estimate(args):
    base = Path(args.config).parent
    config = io.load_json(args.config)
    manifest = (base / config["manifest"]).resolve()
    if not manifest.exists():
        raise UsageError(f"manifest not found: {manifest}")
    dataset = io.load_dataset(manifest)

    preprocess = {
        name: PreprocessSpec(tuple(steps))
        for name, steps in (config.get("preprocess") or {}).items()
    }
    for name in preprocess:
        if all(m.name != name for m in dataset.modalities):
            raise UsageError(f"preprocess references unknown modality {name!r}")
    priors = _load_priors(config, base)
    for name in priors:
        if name not in dataset.axes:
            raise UsageError(f"prior references unknown axis {name!r}")
    est_config = _estimator_config(config, args)
    thresh = config.get("threshold", {"method": "topk", "parameter": 5})
    if thresh["method"] not in _THRESHOLDERS:
        raise UsageError(f"unknown threshold method {thresh['method']!r}")

    partition_rho = args.partition_rho
    if partition_rho is None:
        partition_rho = config.get("partition_rho")

    out = Path(config.get("output_dir", "estimate"))
    if not out.is_absolute():
        out = base / out
    out.mkdir(parents=True, exist_ok=True)

    t0 = time.perf_counter()
    if partition_rho is not None:
        result = partitioned_fit(dataset, float(partition_rho),
                                 config=est_config, preprocess=preprocess,
                                 priors=priors)
    else:
        result = fit(dataset, preprocess=preprocess, priors=priors,
                     config=est_config)
    elapsed = time.perf_counter() - t0

    spectra_files = {}
    for name, spec in result.spectra.items():
        files = {
            "eigenvectors": f"spectrum_{name}_vectors.bin",
            "precision_eigenvalues": f"spectrum_{name}_values.bin",
            "gram_eigenvalues": f"spectrum_{name}_gram_values.bin",
        }
        io.save_matrix(out / files["eigenvectors"], spec.eigenvectors)
        np.asarray(spec.precision_eigenvalues, dtype="<f8").tofile(
            out / files["precision_eigenvalues"]
        )
        np.asarray(spec.gram_eigenvalues, dtype="<f8").tofile(
            out / files["gram_eigenvalues"]
        )
        spectra_files[name] = files

    for name in result.spectra:
        psi = result.precision(name)
        if args.dense:
            io.save_matrix(out / f"precision_{name}.bin", psi)
        graph = _THRESHOLDERS[thresh["method"]](psi, thresh["parameter"], name)
        io.save_graph(graph, out / f"edges_{name}.tsv",
                      method=thresh["method"],
                      parameters={"parameter": thresh["parameter"]})

    report = {
        "axes": {name: dataset.axes[name].size for name in result.spectra},
        "spectra": spectra_files,
        "iterations": result.iterations,
        "l1_iterations": result.l1_iterations,
        "objective": result.objective,
        "objective_trace": result.objective_trace,
        "converged": result.converged,
        "flagged_axes": result.flagged_axes,
        "threshold": thresh,
        "l1_strength": est_config.l1_strength,
        "partition_rho": partition_rho,
        "seconds": elapsed,
        "seed": config.get("seed"),
    }
    if partition_rho is not None:
        plan = result.metadata["partition"]
        report["partition"] = {
            "rho": plan.rho,
            "labels": {name: plan.labels[name].tolist() for name in plan.labels},
            "heuristic": result.metadata["heuristic"],
        }
    io.save_json(out / "report.json", report)
    return EXIT_OK if result.converged else EXIT_NO_CONVERGENCE


# ---------------------------------------------------------------- partition

def cmd_partition(args):
    manifest = Path(args.manifest)
    if not manifest.exists():
        raise UsageError(f"manifest not found: {manifest}")
    dataset = io.load_dataset(manifest)
    grams = effective_gram(dataset)
    plan = covariance_partition(grams, args.partition_rho, dataset.structure())
    io.save_json(args.output, {
        "rho": plan.rho,
        "labels": {name: plan.labels[name].tolist() for name in plan.labels},
        "components": {
            name: {str(c): idx.tolist() for c, idx in plan.components(name).items()}
            for name in plan.labels
        },
    })
    return EXIT_OK


# ---------------------------------------------------------------- eval

def _load_estimate(estimate_dir):
    estimate_dir = Path(estimate_dir)
    report = io.load_json(estimate_dir / "report.json")
    precisions = {}
    for name, files in report["spectra"].items():
        d = int(report["axes"][name])
        v = io.load_matrix(estimate_dir / files["eigenvectors"], shape=(d, d))
        lam = np.fromfile(estimate_dir / files["precision_eigenvalues"], dtype="<f8")
        precisions[name] = recompose(v, lam)
    return report, precisions


def cmd_eval(args):
    report, precisions = _load_estimate(args.estimate_dir)
    rows = []
    if args.labels is not None:
        labels = io.load_json(args.labels)
        for name, psi in sorted(precisions.items()):
            if name not in labels:
                continue
            lab = labels[name]
            if len(lab) != psi.shape[0]:
                raise UsageError(f"axis {name!r}: {len(lab)} labels for "
                                 f"{psi.shape[0]} vertices")
            for k in range(1, args.max_edges_per_vertex + 1):
                graph = threshold_top_k_rows(psi, min(k, psi.shape[0] - 1), name)
                try:
                    r = assortativity(graph, lab)
                except ValueError:
                    r = float("nan")
                rows.append({"axis": name, "metric": "assortativity",
                             "edges_per_vertex": k, "value": r})
        header = ["axis", "metric", "edges_per_vertex", "value"]
    elif args.truth_dir is not None:
        truth_dir = Path(args.truth_dir)
        truth_meta = io.load_json(truth_dir / "truth.json")
        for name, psi in sorted(precisions.items()):
            if name not in truth_meta["precision_files"]:
                continue
            true_psi = io.load_matrix(truth_dir / truth_meta["precision_files"][name])
            if true_psi.shape != psi.shape:
                raise UsageError(f"axis {name!r}: truth is {true_psi.shape}, "
                                 f"estimate is {psi.shape}")
            support = true_psi != 0
            points, area = pr_curve(psi, support)
            rows.append({"axis": name, "metric": "aupr",
                         "recall": "", "precision": "", "value": area})
            for r, p in points:
                rows.append({"axis": name, "metric": "pr_point",
                             "recall": r, "precision": p, "value": ""})
        header = ["axis", "metric", "recall", "precision", "value"]
    else:
        raise UsageError("eval needs either --truth-dir or --labels")

    with open(args.output, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=header)
        writer.writeheader()
        writer.writerows(rows)
    io.save_json(Path(args.output).with_suffix(".meta.json"), {
        "format": "eval-metrics",
        "estimate_dir": str(args.estimate_dir),
        "mode": "assortativity" if args.labels else "edge_recovery",
        "fields": header,
    })
    return EXIT_OK


# ---------------------------------------------------------------- bench

def cmd_bench(args):
    scenario = io.load_json(args.scenario)
    sizes = [tuple(int(d) for d in s) for s in scenario["sizes"]]
    seeds = [int(s) for s in scenario.get("seeds", [0])]
    config_fields = scenario.get("estimator", {})
    records = bench_run(
        sizes, seeds,
        p_edge=scenario.get("p_edge", 0.02),
        n_samples=scenario.get("n_samples", 1),
        config=EstimatorConfig(**config_fields) if config_fields else None,
        max_seconds=args.max_seconds,
    )
    out = Path(args.output)
    write_records(records, out, out.with_suffix(".meta.json"),
                  metadata={"scenario": scenario})
    return EXIT_OK


_COMMANDS = {
    "generate": cmd_generate,
    "estimate": cmd_estimate,
    "partition": cmd_partition,
    "eval": cmd_eval,
    "bench": cmd_bench,
}


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "threads", None) is not None:
            set_num_threads(args.threads)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConvergenceError, NotPositiveDefiniteError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
