"""Benchmark harness behind the command-line interface.

Each repeat is a pure function of (config, repeat index), so repeats can be
farmed out to worker processes and merged back in repeat order without
changing any emitted value.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

from . import datagen, gpc, pacbayes, sltgp
from ._ep import EPConfig
from .errors import ConfigError
from .kernels import Family, KernelSpec
from .model_selection import (
    RhoProfile,
    SearchConfig,
    accuracy,
    optimize_gpc,
    optimize_rho_by_risk,
    optimize_slt,
)

METHODS = ("gpc", "slt_gp", "gpc_reference")
LINEAR_DATASETS = ("clean_soft_label", "clean_feature", "relevant_feature", "independent_feature")
THREADS_ENV = "PRIVGP_THREADS"

REPEAT_COLUMNS = (
    "dataset",
    "repeat",
    "seed",
    "method",
    "status",
    "accuracy",
    "rho",
    "log_marginal",
    "cond_log_marginal",
    "converged",
    "kernel_family",
    "log_length_scale",
    "log_amplitude",
    "log_signal_variance",
    "error",
)
SUMMARY_COLUMNS = ("dataset", "method", "n_ok", "n_failed", "mean_accuracy", "std_accuracy", "single_sample")
TIMING_COLUMNS = ("dataset", "repeat", "method", "fit_seconds")


@dataclass(frozen=True)
class CsvSpec:
    path: str
    input_columns: tuple
    privileged_columns: tuple
    label_column: str
    train_fraction: float | None = 0.5
    n_train: int | None = None
    n_test: int | None = None
    balance: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str = "clean_soft_label"
    methods: tuple = METHODS
    repeats: int = 100
    base_seed: int = 0
    kernel: str | None = None
    search: SearchConfig = SearchConfig()
    ep: EPConfig = EPConfig()
    out: str | None = None
    sigma0_sq: float = 0.1
    delta: float = 0.05
    csv: CsvSpec | None = None
    threads: int = 1

    def __post_init__(self):
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1")
        if not self.methods:
            raise ConfigError("methods must be non-empty")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ConfigError(f"unknown methods {bad}; choose from {METHODS}")
        if self.csv is None and self.dataset not in datagen.GENERATORS:
            raise ConfigError(f"unknown dataset {self.dataset!r}")
        if self.csv is not None and not self.csv.privileged_columns:
            needs = [m for m in self.methods if m != "gpc"]
            if needs:
                raise ConfigError(f"methods {needs} need privileged columns")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def kernel_template(dataset: str, override: str | None = None) -> KernelSpec:
    family = override or ("linear" if dataset in LINEAR_DATASETS else "rbf")
    return KernelSpec.linear() if Family(family) is Family.LINEAR else KernelSpec.rbf()


def load_dataset(config: ExperimentConfig, seed: int) -> datagen.PrivilegedDataset:
    if config.csv is not None:
        c = config.csv
        return datagen.load_csv(
            c.path,
            c.input_columns,
            c.privileged_columns,
            c.label_column,
            train_fraction=c.train_fraction,
            seed=seed,
            n_train=c.n_train,
            n_test=c.n_test,
            balance=c.balance,
        )
    return datagen.generate(config.dataset, seed)


def _row(config, repeat, seed, method, **values) -> dict:
    row = {k: "" for k in REPEAT_COLUMNS}
    row.update(dataset=config.dataset, repeat=repeat, seed=seed, method=method, status="ok")
    row.update(values)
    return row


def _kernel_cols(k: KernelSpec) -> dict:
    return {
        "kernel_family": k.family.value,
        "log_length_scale": k.log_length_scale,
        "log_amplitude": k.log_amplitude,
        "log_signal_variance": k.log_signal_variance,
    }


def run_repeat(config: ExperimentConfig, repeat: int):
    """Fit every requested method on one freshly drawn dataset.

    Returns (rows, timings); failures become rows with status ``failed``.
    """
    seed = config.base_seed + repeat
    search = replace(config.search, seed=config.search.seed + repeat)
    tmpl = kernel_template(config.dataset, config.kernel)
    rows, timings = [], []
    try:
        ds = load_dataset(config, seed)
    except Exception as exc:  # noqa: BLE001 - recorded, not fatal
        for m in config.methods:
            rows.append(_row(config, repeat, seed, m, status="failed", error=f"{type(exc).__name__}: {exc}"))
        return rows, timings

    extractor = None

    def get_extractor():
        nonlocal extractor
        if extractor is None:
            t = time.perf_counter()
            kp, _ = optimize_gpc(ds.train_privileged, ds.train_labels, tmpl, search, config.ep)
            s, post = gpc.extract_soft_labels(ds.train_privileged, ds.train_labels, kp, config.ep)
            extractor = (s, post, time.perf_counter() - t)
        return extractor

    for method in config.methods:
        try:
            t0 = time.perf_counter()
            if method == "gpc":
                k, _ = optimize_gpc(ds.train_inputs, ds.train_labels, tmpl, search, config.ep)
                post = gpc.fit_gpc(ds.train_inputs, ds.train_labels, k, config.ep)
                acc = accuracy(gpc.predict_prob(post, ds.test_inputs), ds.test_labels)
                elapsed = time.perf_counter() - t0
                rows.append(_row(config, repeat, seed, method, accuracy=acc, log_marginal=post.log_marginal,
                                 converged=int(post.converged), **_kernel_cols(k)))
            elif method == "gpc_reference":
                s, post, t_ext = get_extractor()
                acc = accuracy(gpc.predict_prob(post, ds.test_privileged), ds.test_labels)
                elapsed = t_ext
                rows.append(_row(config, repeat, seed, method, accuracy=acc, log_marginal=post.log_marginal,
                                 converged=int(post.converged), **_kernel_cols(post.kernel)))
            else:
                s, _, t_ext = get_extractor()
                t1 = time.perf_counter()
                k, rho, _ = optimize_slt(ds.train_inputs, ds.train_labels, s, tmpl, search, config.ep)
                model = sltgp.fit_slt(ds.train_inputs, ds.train_labels, s, k, rho, config.ep)
                acc = accuracy(sltgp.predict_prob_slt(model, ds.test_inputs), ds.test_labels)
                elapsed = t_ext + time.perf_counter() - t1
                rows.append(_row(config, repeat, seed, method, accuracy=acc, rho=rho,
                                 log_marginal=model.joint_log_marginal,
                                 cond_log_marginal=sltgp.conditional_log_marginal(model),
                                 converged=int(model.converged), **_kernel_cols(k)))
            timings.append({"dataset": config.dataset, "repeat": repeat, "method": method, "fit_seconds": elapsed})
        except Exception as exc:  # noqa: BLE001 - recorded, not fatal
            rows.append(_row(config, repeat, seed, method, status="failed", error=f"{type(exc).__name__}: {exc}"))
    return rows, timings


def _map_ordered(fn, args_list, threads: int):
    if threads <= 1 or len(args_list) <= 1:
        return [fn(*a) for a in args_list]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(fn, *a) for a in args_list]
        return [f.result() for f in futures]


def run_benchmark(config: ExperimentConfig):
    """All repeats; returns (rows, summary, timings) merged in repeat order."""
    results = _map_ordered(run_repeat, [(config, r) for r in range(config.repeats)], config.threads)
    rows = [row for rs, _ in results for row in rs]
    timings = [t for _, ts in results for t in ts]
    return rows, summarize(rows), timings


def summarize(rows) -> list[dict]:
    """Mean and sample standard deviation of accuracy per (dataset, method)."""
    out = []
    keys = []
    for r in rows:
        k = (r["dataset"], r["method"])
        if k not in keys:
            keys.append(k)
    for dataset, method in keys:
        sel = [r for r in rows if r["dataset"] == dataset and r["method"] == method]
        accs = [float(r["accuracy"]) for r in sel if r["status"] == "ok"]
        n_ok = len(accs)
        mean = math.fsum(accs) / n_ok if n_ok else float("nan")
        if n_ok >= 2:
            std = math.sqrt(math.fsum((a - mean) ** 2 for a in accs) / (n_ok - 1))
        else:
            std = 0.0 if n_ok == 1 else float("nan")
        out.append({
            "dataset": dataset,
            "method": method,
            "n_ok": n_ok,
            "n_failed": len(sel) - n_ok,
            "mean_accuracy": mean,
            "std_accuracy": std,
            "single_sample": int(n_ok == 1),
        })
    return out


@dataclass
class BoundReport:
    dataset: str
    seed: int
    n: int
    rho: float
    log_cond_marginal: float
    sigma0_sq: float
    delta: float
    c: float
    b: float
    bound: float

    def as_row(self) -> dict:
        return dict(self.__dict__)


def run_bound(config: ExperimentConfig, log_cond_marginal: float | None = None, n: int | None = None,
              rho: float = float("nan")) -> BoundReport:
    """Fit SLT-GP by empirical Bayes and evaluate the risk bound.

    ``log_cond_marginal`` and ``n`` may be supplied to skip fitting.
    """
    c = pacbayes.c_threshold(config.sigma0_sq)
    b = pacbayes.b_constant(config.sigma0_sq)
    seed = config.base_seed
    if log_cond_marginal is None:
        ds = load_dataset(config, seed)
        tmpl = kernel_template(config.dataset, config.kernel)
        kp, _ = optimize_gpc(ds.train_privileged, ds.train_labels, tmpl, config.search, config.ep)
        s, _ = gpc.extract_soft_labels(ds.train_privileged, ds.train_labels, kp, config.ep)
        k, rho, _ = optimize_slt(ds.train_inputs, ds.train_labels, s, tmpl, config.search, config.ep)
        model = sltgp.fit_slt(ds.train_inputs, ds.train_labels, s, k, rho, config.ep)
        log_cond_marginal = sltgp.conditional_log_marginal(model)
        n = ds.n_train
    inputs = pacbayes.BoundInputs(config.sigma0_sq, config.delta, int(n), float(log_cond_marginal))
    return BoundReport(config.dataset, seed, int(n), rho, float(log_cond_marginal), config.sigma0_sq,
                       config.delta, c, b, pacbayes.risk_bound(inputs, b))


SWEEP_COLUMNS = ("r", "repeat", "seed", "rho_bound", "rho_risk", "rho_eb", "length_scale", "risk_at_bound", "risk_at_risk")


@dataclass(frozen=True)
class SweepConfig:
    r_grid: tuple = (0.0, 0.25, 0.5, 0.75, 1.0)
    repeats: int = 100
    base_seed: int = 0
    search: SearchConfig = SearchConfig(restarts=2)
    ep: EPConfig = EPConfig()
    sigma0_sq: float = 0.1
    delta: float = 0.05
    n_train: int = 200
    n_test: int = 1000
    threads: int = 1


def sweep_cell(config: SweepConfig, r: float, repeat: int) -> dict:
    """Bound-optimal and risk-optimal rho for one noisy-privileged dataset."""
    seed = config.base_seed + repeat
    ds = datagen.generate_rho_sweep(r, config.n_train, config.n_test, seed)
    search = replace(config.search, seed=config.search.seed + repeat)
    kp, _ = optimize_gpc(ds.train_privileged, ds.train_labels, KernelSpec.rbf(), search, config.ep)
    s, _ = gpc.extract_soft_labels(ds.train_privileged, ds.train_labels, kp, config.ep)
    # fixed amplitude 1/4, length scale and rho by empirical Bayes
    fixed_amp = replace(search, fixed=frozenset({"log_amplitude"}))
    k, rho_eb, _ = optimize_slt(ds.train_inputs, ds.train_labels, s, KernelSpec.rbf(1.0, 0.25), fixed_amp, config.ep)
    profile = RhoProfile(ds.train_inputs, ds.train_labels, s, k, (ds.test_inputs, ds.test_labels), config.ep,
                         mc_seed=seed)
    rho_bound = pacbayes.optimize_rho_by_bound(ds.train_inputs, ds.train_labels, s, k, config.sigma0_sq,
                                               config.delta, profile=profile)
    rho_risk = optimize_rho_by_risk(ds.train_inputs, ds.train_labels, s, k, None, profile=profile)
    return {
        "r": float(r),
        "repeat": repeat,
        "seed": seed,
        "rho_bound": rho_bound,
        "rho_risk": rho_risk,
        "rho_eb": rho_eb,
        "length_scale": k.length_scale,
        "risk_at_bound": profile.risk(rho_bound),
        "risk_at_risk": profile.risk(rho_risk),
    }


def run_rho_sweep(config: SweepConfig) -> list[dict]:
    cells = [(config, float(r), rep) for r in config.r_grid for rep in range(config.repeats)]
    return _map_ordered(sweep_cell, cells, config.threads)


TIMING_RUN_COLUMNS = ("dataset", "n", "repeat", "method", "fit_seconds", "accuracy")


def timing_cell(config: ExperimentConfig, n: int, repeat: int) -> list[dict]:
    """Fit time (including hyperparameter search) and accuracy at training size n."""
    seed = config.base_seed + repeat
    full = load_dataset(config, seed)
    X, Xp, y = full.train_inputs[:n], full.train_privileged[:n], full.train_labels[:n]
    tmpl = kernel_template(config.dataset, config.kernel)
    search = replace(config.search, seed=config.search.seed + repeat)
    out = []
    for method in config.methods:
        t0 = time.perf_counter()
        if method == "gpc":
            k, _ = optimize_gpc(X, y, tmpl, search, config.ep)
            p = gpc.predict_prob(gpc.fit_gpc(X, y, k, config.ep), full.test_inputs)
        elif method == "slt_gp":
            kp, _ = optimize_gpc(Xp, y, tmpl, search, config.ep)
            s, _ = gpc.extract_soft_labels(Xp, y, kp, config.ep)
            k, rho, _ = optimize_slt(X, y, s, tmpl, search, config.ep)
            p = sltgp.predict_prob_slt(sltgp.fit_slt(X, y, s, k, rho, config.ep), full.test_inputs)
        else:
            kp, _ = optimize_gpc(Xp, y, tmpl, search, config.ep)
            p = gpc.predict_prob(gpc.fit_gpc(Xp, y, kp, config.ep), full.test_privileged)
        elapsed = time.perf_counter() - t0
        out.append({
            "dataset": config.dataset,
            "n": n,
            "repeat": repeat,
            "method": method,
            "fit_seconds": elapsed,
            "accuracy": accuracy(p, full.test_labels),
        })
    return out


def run_timing(config: ExperimentConfig, n_grid=tuple(range(20, 201, 20))) -> list[dict]:
    cells = [(config, int(n), rep) for n in n_grid for rep in range(config.repeats)]
    # timing cells stay serial so measured wall times are not inflated by contention
    return [row for rows in _map_ordered(timing_cell, cells, 1) for row in rows]
