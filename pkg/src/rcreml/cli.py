"""Command line interface: validate, fit, simulate, bench.

Exit codes: 0 success (fit converged), 2 fit finished without converging,
1 any error (bad file, invalid dataset, bad flags).
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import os
import statistics
import sys
import time

import numpy as np

from .errors import RcremlError
from .likelihood import reml_full, reml_full_gradient, reml_reduced
from .model import DispersionSpec, load_dataset, save_dataset_json, validate_dataset
from .scoring import FitConfig, fit, gradient
from .simgen import SimConfig, generate, truth_block
from .stats import compute_all_stats


def _threads(args) -> int:
    if args.threads is not None:
        return args.threads
    env = os.environ.get("RCML_THREADS")
    return int(env) if env else 1


def cmd_validate(args) -> int:
    dataset = load_dataset(args.input)
    report = validate_dataset(dataset, args.tol)
    doc = report.to_dict()
    if args.stats and report.valid:
        doc["stats"] = [s.to_dict() for s in compute_all_stats(dataset, args.tol)]
    print(json.dumps(doc, indent=1))
    return 0 if report.valid else 1


def cmd_fit(args) -> int:
    dataset = load_dataset(args.input)
    cfg_doc = {}
    if args.config:
        with open(args.config) as fh:
            cfg_doc = json.load(fh)
    sigma2 = cfg_doc.pop("sigma2", None)
    if args.sigma_mode:
        cfg_doc["sigma_mode"] = args.sigma_mode
    cfg_doc.setdefault("threads", _threads(args))
    dispersion = cfg_doc.pop("dispersion", "full-symmetric")
    config = FitConfig.from_dict(cfg_doc)
    if config.sigma_mode == "user-fixed" and sigma2 is None:
        raise RcremlError(
            "sigma_mode 'user-fixed' requires a 'sigma2' array in the config file"
        )
    dspec = DispersionSpec.from_kind(dispersion, dataset.q)
    result = fit(dataset, dspec, config, sigma2=sigma2)
    payload = json.dumps(result.to_dict(), indent=1)
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(payload + "\n")
    else:
        print(payload)
    return 0 if result.converged else 2


def cmd_simulate(args) -> int:
    with open(args.config) as fh:
        doc = json.load(fh)
    if args.seed is not None:
        doc["seed"] = args.seed
    cfg = SimConfig.from_dict(doc)
    dataset = generate(cfg)
    extra = {"truth": truth_block(cfg)} if args.truth else None
    save_dataset_json(dataset, args.output, extra=extra)
    return 0


def _time_call(func, min_time=0.01, max_calls=200) -> float:
    """Seconds per call, batching fast calls until the batch is measurable."""
    func()  # warm up
    calls = 1
    while True:
        start = time.perf_counter()
        for _ in range(calls):
            func()
        elapsed = time.perf_counter() - start
        if elapsed >= min_time or calls >= max_calls:
            return elapsed / calls
        calls = min(max_calls, max(calls * 2, int(calls * min_time / max(elapsed, 1e-9))))


def run_bench(doc: dict, out_path: str) -> None:
    from .errors import InvalidConfig

    try:
        grid_n = doc["N"]
        grid_nk = doc["n_k"]
        grid_p = doc["p"]
        grid_q = doc["q"]
    except KeyError as exc:
        raise InvalidConfig(f"bench config missing key {exc}")
    reps = int(doc.get("reps", 3))
    seed = int(doc.get("seed", 0))

    rows = []
    for n_ind, n_k, p, q in itertools.product(grid_n, grid_nk, grid_p, grid_q):
        if q > p:
            raise InvalidConfig("bench grid requires q <= p")
        cfg = SimConfig(
            n_individuals=n_ind,
            n_obs=n_k,
            p=p,
            q=q,
            true_alpha=np.ones(p),
            true_d=0.2 * np.eye(q),
            true_sigma2=1.0,
            seed=seed,
        )
        dataset = generate(cfg)
        dspec = DispersionSpec.full_symmetric(q)
        theta0 = np.zeros(dspec.n_params)
        d0 = dspec.d_from_theta(theta0)
        sigma2 = np.ones(n_ind)

        pre, red, full = [], [], []
        for _ in range(reps):
            start = time.perf_counter()
            stats = compute_all_stats(dataset)
            pre.append(time.perf_counter() - start)

            def reduced_step():
                reml_reduced(stats, d0, sigma2)
                gradient(theta0, stats, sigma2, dspec)

            def full_step():
                reml_full(dataset, d0, sigma2)
                reml_full_gradient(dataset, dspec, theta0, sigma2)

            red.append(_time_call(reduced_step))
            full.append(_time_call(full_step))
        base = (n_ind, n_k, p, q)
        rows.append(base + ("reduced", "precompute", statistics.median(pre)))
        rows.append(base + ("reduced", "per-step", statistics.median(red)))
        rows.append(base + ("full", "per-step", statistics.median(full)))

    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["N", "n_k", "p", "q", "method", "phase", "median_seconds"])
        writer.writerows(rows)


def cmd_bench(args) -> int:
    with open(args.config) as fh:
        doc = json.load(fh)
    run_bench(doc, args.output)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rcreml",
        description="REML fitting of random coefficient models from per-individual "
                    "sufficient statistics",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p_fit = sub.add_parser("fit", help="fit a model to a dataset file")
    p_fit.add_argument("--input", required=True)
    p_fit.add_argument("--config", default=None, help="JSON file with FitConfig keys")
    p_fit.add_argument("--output", default=None)
    p_fit.add_argument("--sigma-mode", choices=["hybrid-ols", "user-fixed"], default=None)
    p_fit.add_argument("--threads", type=int, default=None)
    p_fit.set_defaults(func=cmd_fit)

    p_val = sub.add_parser("validate", help="check the random-coefficient conditions")
    p_val.add_argument("--input", required=True)
    p_val.add_argument("--tol", type=float, default=1e-8)
    p_val.add_argument("--stats", action="store_true",
                       help="include per-individual statistics in the report")
    p_val.set_defaults(func=cmd_validate)

    p_sim = sub.add_parser("simulate", help="generate a synthetic dataset")
    p_sim.add_argument("--config", required=True)
    p_sim.add_argument("--output", required=True)
    p_sim.add_argument("--seed", type=int, default=None)
    p_sim.add_argument("--truth", action="store_true",
                       help="embed the generating parameters in the output")
    p_sim.set_defaults(func=cmd_simulate)

    p_bench = sub.add_parser("bench", help="time the full vs reduced evaluations")
    p_bench.add_argument("--config", required=True)
    p_bench.add_argument("--output", required=True)
    p_bench.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (RcremlError, OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"rcreml: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
