"""``privileged-gp`` command-line interface."""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

from . import datagen
from .errors import ConfigError, DomainError
from .experiments import (
    METHODS,
    REPEAT_COLUMNS,
    SUMMARY_COLUMNS,
    SWEEP_COLUMNS,
    TIMING_COLUMNS,
    TIMING_RUN_COLUMNS,
    CsvSpec,
    ExperimentConfig,
    SweepConfig,
    default_threads,
    run_benchmark,
    run_bound,
    run_rho_sweep,
    run_timing,
)
from .model_selection import SearchConfig

EXIT_OK = 0
EXIT_FATAL = 1
EXIT_USAGE = 2


def fmt(value) -> str:
    """Full-precision, platform-stable CSV cell."""
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(rows, columns, dest) -> None:
    """Write ``rows`` to a path, or to stdout when ``dest`` is None or '-'."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt(r.get(c, "")) for c in columns])
    if dest is None or str(dest) == "-":
        sys.stdout.write(buf.getvalue())
    else:
        Path(dest).parent.mkdir(parents=True, exist_ok=True)
        Path(dest).write_text(buf.getvalue())


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment. Keys use flag spelling."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, value = (p.strip() for p in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _split(value):
    if value is None or isinstance(value, (list, tuple)):
        return value
    return tuple(v.strip() for v in str(value).split(",") if v.strip())


def _floats(value):
    return None if value is None else tuple(float(v) for v in _split(value))


def _add_common(p: argparse.ArgumentParser) -> None:
    # defaults are None so that config-file values survive unless a flag is given
    p.add_argument("--config", help="key = value file; explicit flags override it")
    p.add_argument("--dataset", help=f"generator name ({', '.join(datagen.GENERATORS)})")
    p.add_argument("--seed", type=int, help="base seed; repeat r uses seed + r")
    p.add_argument("--kernel", choices=("rbf", "linear"), help="override the per-dataset kernel family")
    p.add_argument("--restarts", type=int, help="hyperparameter search restarts")
    p.add_argument("--max-evals", type=int, help="objective evaluations per restart")
    p.add_argument("--threads", type=int, help="worker processes (default: $PRIVGP_THREADS or 1)")
    p.add_argument("--out", help="output file or directory ('-' for stdout)")


def _add_csv(p: argparse.ArgumentParser) -> None:
    p.add_argument("--csv", help="read a CSV file instead of a generator")
    p.add_argument("--input-cols", help="comma-separated input columns")
    p.add_argument("--priv-cols", help="comma-separated privileged columns")
    p.add_argument("--label-col", help="binary label column")
    p.add_argument("--train-fraction", type=float)
    p.add_argument("--n-train", type=int)
    p.add_argument("--n-test", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="privileged-gp", description="GP classification with privileged soft labels")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="accuracy benchmark over repeated datasets")
    _add_common(run)
    _add_csv(run)
    run.add_argument("--methods", help=f"comma-separated subset of {','.join(METHODS)}")
    run.add_argument("--repeats", type=int)

    bound = sub.add_parser("bound", help="fit SLT-GP and evaluate the PAC-Bayes risk bound")
    _add_common(bound)
    _add_csv(bound)
    bound.add_argument("--sigma0-sq", type=float)
    bound.add_argument("--delta", type=float)
    bound.add_argument("--log-marginal", type=float, help="skip fitting and use this log p(y|s,X)")
    bound.add_argument("--n", type=int, help="sample size paired with --log-marginal")

    sweep = sub.add_parser("rho-sweep", help="bound-optimal vs risk-optimal rho under noisy privileged data")
    _add_common(sweep)
    sweep.add_argument("--r-grid", help="comma-separated noise rates in [0, 1]")
    sweep.add_argument("--repeats", type=int)
    sweep.add_argument("--sigma0-sq", type=float)
    sweep.add_argument("--delta", type=float)

    timing = sub.add_parser("timing", help="fit time and accuracy against training-set size")
    _add_common(timing)
    timing.add_argument("--methods", help="comma-separated methods")
    timing.add_argument("--n-grid", help="comma-separated training sizes")
    timing.add_argument("--repeats", type=int)

    gen = sub.add_parser("gen", help="write a generated dataset as CSV")
    _add_common(gen)
    gen.add_argument("--r", type=float, help="noise rate; writes a rho-sweep dataset instead")
    return parser


def resolve(args: argparse.Namespace) -> dict:
    """Merge config file values with explicitly given flags (flags win)."""
    opts = read_config_file(args.config) if getattr(args, "config", None) else {}
    for k, v in vars(args).items():
        if v is not None and k not in ("config", "command"):
            opts[k] = v
    return opts


def _search_config(opts: dict, **defaults) -> SearchConfig:
    kw = dict(defaults)
    if "restarts" in opts:
        kw["restarts"] = int(opts["restarts"])
    if "max_evals" in opts:
        kw["max_evals"] = int(opts["max_evals"])
    return SearchConfig(**kw)


def _threads(opts: dict) -> int:
    return int(opts["threads"]) if "threads" in opts else default_threads()


def experiment_config(opts: dict, default_repeats: int = 100) -> ExperimentConfig:
    csv_spec = None
    if opts.get("csv"):
        if not opts.get("input_cols") or not opts.get("label_col"):
            raise ConfigError("--csv needs --input-cols and --label-col")
        csv_spec = CsvSpec(
            path=opts["csv"],
            input_columns=_split(opts["input_cols"]),
            privileged_columns=_split(opts.get("priv_cols")) or (),
            label_column=opts["label_col"],
            train_fraction=float(opts.get("train_fraction", 0.5)),
            n_train=int(opts["n_train"]) if "n_train" in opts else None,
            n_test=int(opts["n_test"]) if "n_test" in opts else None,
        )
    dataset = opts.get("dataset") or (Path(opts["csv"]).stem if csv_spec else "clean_soft_label")
    return ExperimentConfig(
        dataset=dataset,
        methods=_split(opts.get("methods")) or METHODS,
        repeats=int(opts.get("repeats", default_repeats)),
        base_seed=int(opts.get("seed", 0)),
        kernel=opts.get("kernel"),
        search=_search_config(opts),
        out=opts.get("out"),
        sigma0_sq=float(opts.get("sigma0_sq", 0.1)),
        delta=float(opts.get("delta", 0.05)),
        csv=csv_spec,
        threads=_threads(opts),
    )


def cmd_run(opts: dict) -> int:
    config = experiment_config(opts)
    rows, summary, timings = run_benchmark(config)
    out = config.out
    if out is None or out == "-":
        write_csv(summary, SUMMARY_COLUMNS, None)
    else:
        d = Path(out)
        write_csv(rows, REPEAT_COLUMNS, d / "repeats.csv")
        write_csv(summary, SUMMARY_COLUMNS, d / "summary.csv")
        write_csv(timings, TIMING_COLUMNS, d / "timings.csv")
    failed = sum(r["status"] != "ok" for r in rows)
    if failed:
        print(f"{failed} repeat/method fits failed; see the error column", file=sys.stderr)
    return EXIT_OK


def cmd_bound(opts: dict) -> int:
    config = experiment_config(opts, default_repeats=1)
    lm = opts.get("log_marginal")
    if (lm is None) != (opts.get("n") is None):
        raise ConfigError("--log-marginal and --n go together")
    report = run_bound(config, None if lm is None else float(lm), None if lm is None else int(opts["n"]))
    cols = ("dataset", "seed", "n", "rho", "log_cond_marginal", "sigma0_sq", "delta", "c", "b", "bound")
    write_csv([report.as_row()], cols, config.out)
    return EXIT_OK


def cmd_rho_sweep(opts: dict) -> int:
    kw = {}
    if "r_grid" in opts:
        kw["r_grid"] = _floats(opts["r_grid"])
    for name, cast in (("repeats", int), ("sigma0_sq", float), ("delta", float)):
        if name in opts:
            kw[name] = cast(opts[name])
    config = SweepConfig(
        base_seed=int(opts.get("seed", 0)),
        search=_search_config(opts, restarts=2),
        threads=_threads(opts),
        **kw,
    )
    write_csv(run_rho_sweep(config), SWEEP_COLUMNS, opts.get("out"))
    return EXIT_OK


def cmd_timing(opts: dict) -> int:
    opts = dict(opts)
    opts.setdefault("dataset", "latent_gp")
    opts.setdefault("methods", "gpc,slt_gp")
    config = experiment_config(opts, default_repeats=1)
    n_grid = tuple(int(v) for v in _split(opts["n_grid"])) if "n_grid" in opts else tuple(range(20, 201, 20))
    write_csv(run_timing(config, n_grid), TIMING_RUN_COLUMNS, config.out)
    return EXIT_OK


def cmd_gen(opts: dict) -> int:
    seed = int(opts.get("seed", 0))
    if "r" in opts:
        ds = datagen.generate_rho_sweep(float(opts["r"]), seed=seed)
    else:
        ds = datagen.generate(opts.get("dataset", "clean_soft_label"), seed)
    out = opts.get("out") or f"{ds.generator_name}_seed{seed}"
    datagen.dump(ds, out)
    print(json.dumps({"out": str(out), "n_train": ds.n_train, "n_test": ds.n_test}))
    return EXIT_OK


COMMANDS = {"run": cmd_run, "bound": cmd_bound, "rho-sweep": cmd_rho_sweep, "timing": cmd_timing, "gen": cmd_gen}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](resolve(args))
    except (ConfigError, DomainError, ValueError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE if isinstance(exc, (ConfigError, DomainError)) else EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
