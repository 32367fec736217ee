"""Synthetic benchmark harness: run each method over a (distribution, sample
size, trial) grid, score confounder recovery and causal-effect accuracy, and
emit deterministic CSV rows plus a JSON summary.

Per-trial method failures become NA rows and never abort a run. Wall-clock
timings go to the JSON summary only, so identical specs reproduce the CSV
byte for byte.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from . import __version__
from .dr import ica_fit, pca_fit, pls_fit
from .estimate import adjusted_effect, cv_regression_baseline, evaluate, pca_baseline_effect
from .exceptions import InvalidRankError, PcfError
from .gdpcf import GdpcfHyper, gdpcf_extract, gdpcf_train
from .select import select_confounder
from .stats import LATENT_FAMILIES, derive_seed
from .synth import ScmConfig, generate_scm

ALL_METHODS = ("oracle", "pca-pcf", "pls-pcf", "ica-pcf", "gd-pcf", "lasso", "ridge", "enet")
AER_BASELINES = ("pca-k", "enet")

RESULT_COLUMNS = ("method", "dist", "n", "trial", "abs_cor", "ae", "aer", "alpha_hat", "seed")

_BASELINE_METHODS = {"lasso", "ridge", "enet"}


@dataclass(frozen=True)
class ExperimentSpec:
    methods: tuple[str, ...] = ("oracle", "pca-pcf", "pls-pcf", "ica-pcf")
    sizes: tuple[int, ...] = (10, 50, 100, 500, 1000)
    trials: int = 30
    dists: tuple[str, ...] = ("exponential",)
    p: int = 100
    k: int = 20
    proxy_noise: bool = True
    aer_baseline: str = "pca-k"
    seed: int = 0
    gd_steps: int | None = None  # override for quick runs; None keeps the default

    def validate(self) -> None:
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if any(n < 1 for n in self.sizes):
            raise ValueError("sizes must be positive")
        for m in self.methods:
            if m not in ALL_METHODS:
                raise ValueError(f"unknown method {m!r}; expected subset of {ALL_METHODS}")
        for d in self.dists:
            if d not in LATENT_FAMILIES:
                raise ValueError(f"unknown latent family {d!r}")
        if self.aer_baseline not in AER_BASELINES:
            raise ValueError(f"aer_baseline must be one of {AER_BASELINES}")


def _candidate_count(k: int, n: int, p: int) -> int:
    # Centered proxies have rank at most n-1; off-the-shelf reducers clamp
    # the component count the same way.
    return max(1, min(k, n - 1, p))


def _run_method(method: str, draw, k: int, seed: int, gd_steps: int | None):
    """One method arm: returns (confounder estimate or None, alpha_hat)."""
    U, x, y = draw.U, draw.x, draw.y
    n = x.size
    if method == "oracle":
        return draw.z_c, adjusted_effect(x, y, draw.z_c).alpha_hat
    if method == "pca-pcf":
        red = pca_fit(U, _candidate_count(k, n, U.shape[1]))
    elif method == "pls-pcf":
        if n - 1 < k:
            # Small-sample guard mirroring deflation-style extraction limits:
            # k candidates are not recoverable from fewer than k+1 samples.
            raise InvalidRankError(f"{k} candidates are not extractable from {n} samples")
        red = pls_fit(U, x, y, min(k, 2, U.shape[1]))
    elif method == "ica-pcf":
        red = ica_fit(U, _candidate_count(k, n, U.shape[1]), seed=seed)
    elif method == "gd-pcf":
        hyper = GdpcfHyper(seed=seed) if gd_steps is None else GdpcfHyper(seed=seed, steps=gd_steps)
        state = gdpcf_train(U, x, y, hyper)
        z = gdpcf_extract(state, U)
        return z, adjusted_effect(x, y, z).alpha_hat
    elif method in _BASELINE_METHODS:
        est = cv_regression_baseline(U, x, y, method, folds=min(10, n), seed=seed, bootstrap=0)
        return None, est.alpha_hat
    else:
        raise ValueError(f"unknown method {method!r}")
    chosen = select_confounder(red.z_hat, x, y).chosen[0]
    z = red.z_hat[:, chosen]
    return z, adjusted_effect(x, y, z).alpha_hat


def _baseline_alpha(spec: ExperimentSpec, draw, seed: int) -> float:
    n = draw.x.size
    if spec.aer_baseline == "pca-k":
        # The adjustment regression needs n > k + 2, so small samples get a
        # reduced component count.
        k = max(0, min(spec.k, n - 3, draw.U.shape[1]))
        return pca_baseline_effect(draw.U, draw.x, draw.y, k).alpha_hat
    est = cv_regression_baseline(
        draw.U, draw.x, draw.y, "enet", folds=min(10, n), seed=derive_seed(seed, 99), bootstrap=0
    )
    return est.alpha_hat


def _run_cell(payload):
    """Worker: all methods for one (dist, n, trial) cell."""
    spec_dict, dist, n, trial, seed = payload
    spec = ExperimentSpec(**spec_dict)
    rows = []
    runtimes = {}
    failures = []
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        draw = generate_scm(
            ScmConfig(
                n=n, p=spec.p, dist=dist, k=spec.k, proxy_noise=spec.proxy_noise,
                seed=derive_seed(seed, 0),
            )
        )
        try:
            alpha_baseline = _baseline_alpha(spec, draw, seed)
        except (PcfError, np.linalg.LinAlgError, ValueError) as exc:
            alpha_baseline = float("nan")
            failures.append({"dist": dist, "n": n, "trial": trial,
                             "method": f"aer-baseline({spec.aer_baseline})", "error": str(exc)})
        for mi, method in enumerate(spec.methods):
            start = time.perf_counter()
            try:
                z_hat, alpha_hat = _run_method(method, draw, spec.k, derive_seed(seed, 1 + mi), spec.gd_steps)
                metrics = evaluate(
                    z_hat, draw.z_c, alpha_hat, draw.alpha_true, alpha_baseline,
                    baseline_tag=spec.aer_baseline,
                )
                row = dict(method=method, dist=dist, n=n, trial=trial,
                           abs_cor=metrics.abs_cor, ae=metrics.ae, aer=metrics.aer,
                           alpha_hat=alpha_hat, seed=seed)
            except (PcfError, np.linalg.LinAlgError, ValueError) as exc:
                failures.append({"dist": dist, "n": n, "trial": trial,
                                 "method": method, "error": str(exc)})
                row = dict(method=method, dist=dist, n=n, trial=trial,
                           abs_cor=float("nan"), ae=float("nan"), aer=float("nan"),
                           alpha_hat=float("nan"), seed=seed)
            runtimes[method] = (time.perf_counter() - start) * 1000.0
            rows.append(row)
    return dist, n, trial, rows, runtimes, failures


def _worker_count(n_tasks: int) -> int:
    env = os.environ.get("PCF_THREADS", "").strip()
    if env:
        workers = max(1, int(env))
    else:
        workers = os.cpu_count() or 1
    return max(1, min(workers, n_tasks))


def run_benchmark(spec: ExperimentSpec) -> tuple[list[dict], dict]:
    """Execute the grid and return (rows, summary).

    Rows hold one entry per (method, dist, n, trial) plus one median row per
    (method, dist, n); aggregation is the NaN-skipping median so failed
    trials do not poison a cell.
    """
    spec.validate()
    payloads = []
    for di, dist in enumerate(spec.dists):
        for ni, n in enumerate(spec.sizes):
            for trial in range(spec.trials):
                seed = derive_seed(spec.seed, di, ni, trial)
                payloads.append((asdict(spec), dist, n, trial, seed))

    results = {}
    workers = _worker_count(len(payloads))
    if workers == 1:
        for payload in payloads:
            dist, n, trial, rows, runtimes, failures = _run_cell(payload)
            results[(dist, n, trial)] = (rows, runtimes, failures)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for dist, n, trial, rows, runtimes, failures in pool.map(_run_cell, payloads, chunksize=1):
                results[(dist, n, trial)] = (rows, runtimes, failures)

    # Deterministic merge order regardless of completion order.
    all_rows: list[dict] = []
    runtimes_ms: dict[str, float] = {}
    failures: list[dict] = []
    seeds: dict[str, int] = {}
    for di, dist in enumerate(spec.dists):
        for ni, n in enumerate(spec.sizes):
            per_cell: list[dict] = []
            for trial in range(spec.trials):
                rows, times, fails = results[(dist, n, trial)]
                per_cell.extend(rows)
                failures.extend(fails)
                seeds[f"{dist}/{n}/{trial}"] = derive_seed(spec.seed, di, ni, trial)
                for method, ms in times.items():
                    runtimes_ms[f"{dist}/{n}/{trial}/{method}"] = ms
            all_rows.extend(per_cell)
            for method in spec.methods:
                sub = [r for r in per_cell if r["method"] == method]
                all_rows.append(_median_row(method, dist, n, sub))

    summary = {
        "spec": asdict(spec),
        "version": __version__,
        "seeds": seeds,
        "failures": failures,
        "runtimes_ms": runtimes_ms,
    }
    return all_rows, summary


def _median_row(method: str, dist: str, n: int, rows: list[dict]) -> dict:
    def med(key: str) -> float:
        vals = np.asarray([r[key] for r in rows], dtype=float)
        if np.all(np.isnan(vals)):
            return float("nan")
        return float(np.nanmedian(vals))

    return dict(method=method, dist=dist, n=n, trial="median",
                abs_cor=med("abs_cor"), ae=med("ae"), aer=med("aer"),
                alpha_hat=med("alpha_hat"), seed="NA")


def format_cell(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    f = float(value)
    return "NA" if math.isnan(f) else repr(f)


def write_results_csv(path, rows: list[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RESULT_COLUMNS)
        for row in rows:
            writer.writerow([format_cell(row[c]) for c in RESULT_COLUMNS])


def read_results_csv(path) -> list[dict]:
    """Parse a results CSV back into typed rows (lossless round trip)."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        rows = []
        for rec in reader:
            row: dict = {}
            for col in ("method", "dist"):
                row[col] = rec[col]
            row["n"] = int(rec["n"])
            row["trial"] = rec["trial"] if rec["trial"] == "median" else int(rec["trial"])
            for col in ("abs_cor", "ae", "aer", "alpha_hat"):
                row[col] = float("nan") if rec[col] == "NA" else float(rec[col])
            row["seed"] = rec["seed"] if rec["seed"] == "NA" else int(rec["seed"])
            rows.append(row)
    return rows


def write_summary_json(path, summary: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
