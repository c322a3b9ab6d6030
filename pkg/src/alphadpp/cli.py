"""Command-line entry point: ``sample``, ``bench`` and ``validate``.

Exit codes: 0 success, 2 usage error or unsupported request, 3 data
ingestion failure, 4 sampler failure (the partial trace is printed as JSON).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time

import numpy as np
import scipy.stats

from . import __version__
from .alpha_sampler import AlphaSamplerConfig
from .bless import BlessConfig
from .data import IngestionError, gaussian_mixture, load_features
from .errors import DPPError, Unsupported
from .kdpp import BinarySearchConfig, KDPPSampler
from .linalg import KERNELS, KernelSource
from .validation import CHECKS, MAX_VALIDATE_N, P_THRESHOLD, run_suite

SCHEMA_VERSION = 1
EXIT_OK, EXIT_USAGE, EXIT_INGEST, EXIT_SAMPLER = 0, 2, 3, 4
BENCH_SIGMA = 8.0
BENCH_Q_FINAL = 20.0


def _r_value(text):
    if text == "auto":
        return None
    value = float(text)
    if value < 1:
        raise argparse.ArgumentTypeError("r must be >= 1 or 'auto'")
    return value


def _grid(text):
    try:
        values = [int(float(x)) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad grid {text!r}") from exc
    if not values or min(values) < 2:
        raise argparse.ArgumentTypeError("grid values must be integers >= 2")
    return values


def _add_sampler_flags(p):
    p.add_argument("--format", choices=("csv", "f32bin"), default="csv")
    p.add_argument("--header", action="store_true", help="CSV has a header row")
    p.add_argument("--kernel", choices=KERNELS, default="rbf")
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--q-bless", type=float, default=2.0)
    p.add_argument("--q-dpp", type=float, default=1.0, help="final oversampling multiplier")
    p.add_argument("--q-final", type=float, default=None, help="absolute final oversampling")
    p.add_argument("--r", type=_r_value, default=None, metavar="REAL|auto")
    p.add_argument("--c", type=float, default=0.25)
    p.add_argument("--C", type=float, default=4.0)
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)


def build_parser():
    parser = argparse.ArgumentParser(prog="alphadpp", description="Exact k-DPP sampling.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="draw k-DPP samples from a feature file")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", help="feature file (one row per item)")
    src.add_argument("--synthetic", type=int, metavar="N", help="use N synthetic mixture points")
    _add_sampler_flags(p)
    p.add_argument("--samples", type=int, default=1)
    p.add_argument("--output", choices=("json", "csv"), default="json")
    p.add_argument("--deterministic", action="store_true", help="omit wall-clock fields")

    p = sub.add_parser("bench", help="runtime and observed fraction over a grid of n")
    p.add_argument("--data", help="subsample this feature file instead of synthetic data")
    _add_sampler_flags(p)
    p.add_argument("--n-grid", type=_grid, default=[10_000, 30_000, 100_000])
    p.add_argument("--reps", type=int, default=3)
    # regime where d_eff(L) grows with n while k stays fixed
    p.set_defaults(sigma=BENCH_SIGMA, q_final=BENCH_Q_FINAL, k=10)

    p = sub.add_parser("validate", help="exactness checks against enumeration")
    p.add_argument("--n", type=int, default=MAX_VALIDATE_N)
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--quick", action="store_true", help="one seed, fewer draws")
    return parser


def _configs(args):
    bless = BlessConfig(q=args.q_bless, q_dpp=args.q_dpp, q_final=args.q_final)
    search = BinarySearchConfig(c=args.c, C=args.C, delta=args.delta)
    alpha = AlphaSamplerConfig(alpha=1.0, r=args.r)  # alpha is set per call
    return bless, alpha, search


def _sampler(src, args, rng):
    bless, alpha, search = _configs(args)
    return KDPPSampler(src, args.k, rng, bless_cfg=bless, alpha_cfg=alpha, search_cfg=search)


def _report(sampler, sample, seconds, deterministic):
    b = sampler.bless
    rep = {
        "sample": [int(i) for i in sample],
        "alpha_hat": sampler.alpha_hat,
        "beta": sampler.beta,
        "bless_touched_fraction": b.touched_fraction if b else 0.0,
        "dictionary_size": b.dictionary.m if b else 0,
        "deff_estimate": b.deff_max if b else None,
        "search_steps": sampler.search.steps if sampler.search else 0,
        "oracle_calls": sampler.search.oracle_calls if sampler.search else 0,
        "low_confidence": bool(sampler.search and sampler.search.low_confidence),
        "iterations": sampler.trace.iterations,
        "size_rejections": sampler.size_rejections,
        "seconds": None if deterministic else seconds,
    }
    return rep


def _load_source(args):
    if getattr(args, "synthetic", None):
        X = gaussian_mixture(args.synthetic, seed=args.seed)
    else:
        X = load_features(args.data, args.format, header=args.header)
    return KernelSource.from_features(X, args.kernel, args.sigma)


def cmd_sample(args, out):
    if args.k is None:
        raise Unsupported("--k is required")
    if args.samples < 1:
        raise Unsupported("--samples must be positive")
    src = _load_source(args)
    rng = np.random.default_rng(args.seed)
    t0 = time.perf_counter()
    sampler = _sampler(src, args, rng)
    prep = time.perf_counter() - t0
    reports = []
    for _ in range(args.samples):
        t1 = time.perf_counter()
        s = sampler.sample()
        reports.append(_report(sampler, s, time.perf_counter() - t1, args.deterministic))
    phases = {k: (None if args.deterministic else v) for k, v in sampler.timings.items()}
    aggregate = {
        "samples": len(reports),
        "beta": sampler.beta,
        "alpha_hat": sampler.alpha_hat,
        "interval": None
        if sampler.bless is None
        else [sampler.bless.interval.alpha_min, sampler.bless.interval.alpha_max],
        "iterations": sampler.trace.iterations,
        "accepted": sampler.trace.accepted,
        "size_rejections": sampler.size_rejections,
        "phase_seconds": phases,
        "preprocess_seconds": None if args.deterministic else prep,
    }
    config = {
        key: getattr(args, key)
        for key in ("data", "synthetic", "format", "kernel", "sigma", "k", "q_bless", "q_dpp", "q_final", "r", "c", "C", "delta", "seed", "samples")
    }
    if args.output == "json":
        doc = {"schema_version": SCHEMA_VERSION, "config": config, "reports": reports, "aggregate": aggregate}
        out.write(json.dumps(doc, sort_keys=True) + "\n")
    else:
        w = csv.writer(out)
        fields = ["sample", "alpha_hat", "beta", "dictionary_size", "iterations", "size_rejections", "seconds"]
        w.writerow(fields)
        for rep in reports:
            w.writerow([" ".join(map(str, rep["sample"])) if f == "sample" else rep[f] for f in fields])
    return EXIT_OK


def _ci95(values):
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        return 0.0
    return float(scipy.stats.t.ppf(0.975, values.size - 1) * values.std(ddof=1) / math.sqrt(values.size))


def bench_rows(args, progress=None):
    """One row per grid point: mean runtime, 95% CI, and mean beta, m, alpha_hat."""
    base = None
    if args.data:
        base = load_features(args.data, args.format, header=args.header)
    rows = []
    for n in args.n_grid:
        times, betas, ms, alphas = [], [], [], []
        for rep in range(args.reps):
            seed = args.seed + rep
            if base is None:
                X = gaussian_mixture(n, seed=seed)
            else:
                if n > base.shape[0]:
                    raise Unsupported(f"grid value {n} exceeds the {base.shape[0]} rows available")
                X = base[np.random.default_rng([seed, n]).choice(base.shape[0], n, replace=False)]
            src = KernelSource.from_features(X, args.kernel, args.sigma)
            rng = np.random.default_rng([seed, n, 1])
            t0 = time.perf_counter()
            sampler = _sampler(src, args, rng)
            sampler.sample()
            times.append(time.perf_counter() - t0)
            betas.append(sampler.beta)
            ms.append(sampler.bless.dictionary.m if sampler.bless else 0)
            alphas.append(sampler.alpha_hat or float("nan"))
            if progress:
                progress(n, rep, times[-1], betas[-1])
        rows.append(
            {
                "n": n,
                "mean_runtime": float(np.mean(times)),
                "ci95": _ci95(times),
                "beta": float(np.mean(betas)),
                "m": float(np.mean(ms)),
                "alpha_hat": float(np.mean(alphas)),
            }
        )
    return rows


def cmd_bench(args, out):
    if args.reps < 1:
        raise Unsupported("--reps must be positive")
    rows = bench_rows(args)
    w = csv.DictWriter(out, fieldnames=["n", "mean_runtime", "ci95", "beta", "m", "alpha_hat"])
    w.writeheader()
    w.writerows(rows)
    return EXIT_OK


VALIDATE_DRAWS = {"alpha_dpp_full_dictionary": 200_000, "alpha_dpp_poor_dictionary": 200_000, "kdpp_end_to_end": 50_000}
QUICK_DRAWS = {"alpha_dpp_full_dictionary": 20_000, "alpha_dpp_poor_dictionary": 20_000, "kdpp_end_to_end": 5_000}


def cmd_validate(args, out):
    seeds = [0] if args.quick else list(range(args.seeds))
    draws = QUICK_DRAWS if args.quick else VALIDATE_DRAWS

    def progress(name, seed, p):
        out.write(f"{name} seed={seed} p={p:.4g} {'pass' if p > P_THRESHOLD else 'FAIL'}\n")
        out.flush()

    result = run_suite(seeds, draws, n=args.n, progress=progress)
    for name in CHECKS:
        out.write(f"{name}: {result.passes(name)}/{len(seeds)} seeds passed -> {'OK' if result.ok(name) else 'FAILED'}\n")
    return EXIT_OK if result.all_ok else 1


COMMANDS = {"sample": cmd_sample, "bench": cmd_bench, "validate": cmd_validate}


def main(argv=None, out=None, err=None):
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args, out)
    except Unsupported as exc:
        err.write(f"unsupported: {exc}\n")
        return EXIT_USAGE
    except IngestionError as exc:
        err.write(f"ingestion failed: {exc}\n")
        return EXIT_INGEST
    except (DPPError, ValueError) as exc:
        trace = getattr(exc, "trace", None)
        doc = {"schema_version": SCHEMA_VERSION, "error": type(exc).__name__, "message": str(exc)}
        if trace is not None:
            doc["trace"] = trace.to_dict()
        err.write(json.dumps(doc) + "\n")
        return EXIT_SAMPLER


if __name__ == "__main__":
    sys.exit(main())
