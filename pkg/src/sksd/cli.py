"""Command-line harness: ``sksd {gof,rbm,ica,slices}``.

Every run writes machine-readable output (JSONL and CSV) into an output
directory, taken from ``--out`` or the ``SKSD_OUTPUT_DIR`` environment
variable (falling back to the working directory), plus a JSON header with
the full configuration, seed and package version.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .active_slices import active_slice_algorithm
from .gof import BENCHMARKS, MethodConfig, RBMBenchmark, make_benchmark, run_trials
from .ica import IcaConfig, generate_ica_data, heldout_nll, train_ica
from .refinement import GoConfig

OUTPUT_ENV = "SKSD_OUTPUT_DIR"
SUMMARY_FIELDS = ["benchmark", "D", "method", "trials", "rejection_rate", "mean_seconds_per_trial"]
RECORD_FIELDS = ["trial", "statistic", "threshold_prop", "reject", "seed"]


class ConfigError(ValueError):
    pass


def _positive(name, value):
    if value is None or value < 1:
        raise ConfigError(f"--{name} must be a positive integer, got {value}")


def _out_dir(args):
    raw = args.out or os.environ.get(OUTPUT_ENV) or "."
    path = Path(raw)
    if not path.is_dir():
        raise ConfigError(f"output directory {raw!r} does not exist")
    if not os.access(path, os.W_OK):
        raise ConfigError(f"output directory {raw!r} is not writable")
    return path


def _write_header(path, command, args):
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "out")}
    doc = {"command": command, "version": __version__, "seed": args.seed, "config": cfg}
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_jsonl(path, rows):
    with path.open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")


def _write_summary(out, stem, rows, fmt):
    if fmt == "json":
        _write_jsonl(out / f"{stem}_summary.jsonl", rows)
        return
    with (out / f"{stem}_summary.csv").open("w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SUMMARY_FIELDS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


def _summary_row(name, dim, method, records):
    return {
        "benchmark": name,
        "D": dim,
        "method": method.label,
        "trials": len(records),
        "rejection_rate": float(np.mean([r["reject"] for r in records])),
        "mean_seconds_per_trial": float(np.mean([r["seconds"] for r in records])),
    }


def _go_config(args):
    if args.go_epochs <= 0:
        return None
    return GoConfig(epochs=args.go_epochs, optimize_r=getattr(args, "go_optimize_r", False))


def _method(args, r_mode, n_train, n_test):
    if args.gamma < 0:
        raise ConfigError("--gamma must be non-negative")
    if not 0 < args.alpha < 1:
        raise ConfigError("--alpha must lie in (0, 1)")
    _positive("M", args.M)
    if args.prune is not None:
        _positive("prune", args.prune)
    try:
        return MethodConfig(
            kind=args.method,
            estimator=args.estimator,
            r_mode=r_mode,
            prune=args.prune,
            gamma=args.gamma,
            go=_go_config(args),
            n_train=n_train,
            n_test=n_test,
            M=args.M,
            alpha=args.alpha,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_gof(args):
    _positive("trials", args.trials)
    _positive("dim", args.dim)
    _positive("threads", args.threads)
    out = _out_dir(args)
    method = _method(args, args.r_mode, args.n_train, args.n_test)
    if args.prune is not None and args.prune > args.dim:
        raise ConfigError("--prune cannot exceed --dim")
    bench = make_benchmark(args.benchmark, args.dim)
    records = run_trials(bench, method, args.trials, args.seed, args.threads)
    _write_header(out / "gof_config.json", "gof", args)
    _write_jsonl(out / "gof_trials.jsonl", [{k: r[k] for k in RECORD_FIELDS} for r in records])
    row = _summary_row(bench.name, args.dim, method, records)
    _write_summary(out, "gof", [row], args.format)
    print(f"{row['benchmark']} D={row['D']} {row['method']}: rejection rate {row['rejection_rate']:.3f}")
    return 0


def cmd_rbm(args):
    _positive("trials", args.trials)
    _positive("dim", args.dim)
    _positive("hidden", args.hidden)
    _positive("threads", args.threads)
    if not args.sigmas:
        raise ConfigError("--sigmas needs at least one value")
    if any(s < 0 for s in args.sigmas):
        raise ConfigError("--sigmas must be non-negative")
    if args.prune is not None and args.prune > args.dim:
        raise ConfigError("--prune cannot exceed --dim")
    out = _out_dir(args)
    method = _method(args, "active", args.n_train, args.n_test)
    rows, trial_rows = [], []
    for sigma in args.sigmas:
        bench = RBMBenchmark(dim=args.dim, n_hidden=args.hidden, sigma=sigma, burn_in=args.burn_in)
        records = run_trials(bench, method, args.trials, args.seed, args.threads)
        trial_rows += [{"sigma": sigma, **{k: r[k] for k in RECORD_FIELDS}} for r in records]
        rows.append(_summary_row(bench.name, args.dim, method, records))
        print(f"sigma={sigma:g} {method.label}: rejection rate {rows[-1]['rejection_rate']:.3f}")
    _write_header(out / "rbm_config.json", "rbm", args)
    _write_jsonl(out / "rbm_trials.jsonl", trial_rows)
    _write_summary(out, "rbm", rows, args.format)
    return 0


def cmd_ica(args):
    _positive("dim", args.dim)
    for name in ("iterations", "epoch_length", "n_train", "n_test", "checkpoint_every"):
        _positive(name.replace("_", "-"), getattr(args, name))
    out = _out_dir(args)
    # independent streams for the generator and for training
    data_ss, train_ss = np.random.SeedSequence(args.seed).spawn(2)
    try:
        cfg = IcaConfig(
            iterations=args.iterations,
            epoch_length=args.epoch_length,
            batch_size=args.batch_size,
            estimator=args.estimator,
            slice_points=args.slice_points,
            checkpoint_every=args.checkpoint_every,
            loss=args.loss,
            seed=int(train_ss.generate_state(1)[0]),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if args.n_train < cfg.batch_size:
        raise ConfigError("--n-train must be at least the batch size")
    data_rng = np.random.default_rng(data_ss)
    W_true, train, test = generate_ica_data(args.dim, args.n_train, args.n_test, data_rng, cfg.df)
    W, curve = train_ica(train, test, args.dim, cfg)
    _write_header(out / "ica_config.json", "ica", args)
    with (out / "ica_curve.csv").open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["iter", "test_nll"])
        writer.writerows([it, repr(v)] for it, v in curve)
    _write_jsonl(out / "ica_checkpoints.jsonl", [{"iter": it, "test_nll": v} for it, v in curve])
    (out / "ica_W.json").write_text(json.dumps(W.tolist()) + "\n", encoding="utf-8")
    print(
        f"test NLL {curve[0][1]:.4f} -> {curve[-1][1]:.4f} "
        f"(generator W: {heldout_nll(test, W_true, cfg.df):.4f})"
    )
    return 0


def cmd_slices(args):
    _positive("dim", args.dim)
    _positive("n", args.n)
    if args.n < 2:
        raise ConfigError("--n must be at least 2")
    if args.prune is not None and not 1 <= args.prune <= args.dim:
        raise ConfigError("--prune must lie in [1, --dim]")
    out = _out_dir(args)
    bench = make_benchmark(args.benchmark, args.dim)
    rng = np.random.default_rng(args.seed)
    samples = bench.q.sample(args.n, rng)
    slices, summary = active_slice_algorithm(
        samples, bench.p, bench.q, estimator=args.estimator, prune=args.prune, r_mode="active", return_summary=True
    )
    text = slices.to_json()
    print(text)
    _write_header(out / "slices_config.json", "slices", args)
    (out / "slices.json").write_text(text + "\n", encoding="utf-8")
    with (out / "slices_eigenvalues.csv").open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["index", "eigenvalue"])
        writer.writerows([i, repr(float(v))] for i, v in enumerate(summary.eigenvalues))
    return 0


def _common(p, estimator_default="ex"):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help=f"output directory (default: ${OUTPUT_ENV} or cwd)")
    p.add_argument("--estimator", choices=["ex", "ke", "ge"], default=estimator_default)


def _test_options(p, trials, n_train, n_test, prune):
    p.add_argument("--trials", type=int, default=trials)
    p.add_argument("--method", choices=["active", "go", "ksd"], default="active")
    p.add_argument("--prune", type=int, default=prune)
    p.add_argument("--go-epochs", type=int, default=0, help="gradient refinement epochs (0 disables)")
    p.add_argument("--gamma", type=float, default=0.0, help="slice noise level")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--M", type=int, default=1000, help="bootstrap samples")
    p.add_argument("--n-train", type=int, default=n_train)
    p.add_argument("--n-test", type=int, default=n_test)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--format", choices=["csv", "json"], default="csv", help="summary format")


def build_parser():
    parser = argparse.ArgumentParser(prog="sksd", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gof", help="rejection rate on a benchmark problem")
    p.add_argument("--benchmark", choices=BENCHMARKS, default="laplace")
    p.add_argument("--dim", type=int, default=50)
    p.add_argument("--r-mode", choices=["identity", "active"], default="identity")
    p.add_argument("--go-optimize-r", action="store_true")
    _common(p)
    _test_options(p, 100, 200, 800, None)
    p.set_defaults(func=cmd_gof)

    p = sub.add_parser("rbm", help="tests against perturbed restricted Boltzmann machines")
    p.add_argument("--dim", type=int, default=50)
    p.add_argument("--hidden", type=int, default=40)
    p.add_argument("--sigmas", type=float, nargs="+", default=[0.0, 0.01, 0.02, 0.04])
    p.add_argument("--burn-in", type=int, default=2000)
    _common(p)
    _test_options(p, 100, 2000, 1000, 3)
    p.set_defaults(func=cmd_rbm)

    p = sub.add_parser("ica", help="train an ICA model by discrepancy minimization")
    p.add_argument("--dim", type=int, default=10)
    p.add_argument("--n-train", type=int, default=20000)
    p.add_argument("--n-test", type=int, default=5000)
    p.add_argument("--iterations", type=int, default=15000)
    p.add_argument("--epoch-length", type=int, default=200)
    p.add_argument("--batch-size", type=int, default=100)
    p.add_argument("--slice-points", type=int, default=3000)
    p.add_argument("--checkpoint-every", type=int, default=200)
    p.add_argument("--loss", choices=["sksd", "ksd"], default="sksd")
    _common(p, estimator_default="ke")
    p.set_defaults(func=cmd_ica)

    p = sub.add_parser("slices", help="print active slices and the spectrum of S")
    p.add_argument("--benchmark", choices=BENCHMARKS, default="diffusion")
    p.add_argument("--dim", type=int, default=10)
    p.add_argument("--n", type=int, default=1000, help="samples from q")
    p.add_argument("--prune", type=int, default=None)
    _common(p)
    p.set_defaults(func=cmd_slices)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"sksd {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
