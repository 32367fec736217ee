"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line (run with ``pytest tests/test_acceptance.py -v -s`` to watch).

These are end-to-end statistical gates over the real pipeline at fixed seeds
and pinned tolerances; the heavier ones take a few minutes combined.
"""

import math

import numpy as np

from pcf.bench import ExperimentSpec, run_benchmark, write_results_csv
from pcf.estimate import adjusted_effect, elastic_net_fit, pca_baseline_effect
from pcf.gdpcf import GdpcfHyper, finite_difference_check, gdpcf_extract, gdpcf_train
from pcf.select import select_confounder
from pcf.stats import nhsic
from pcf.synth import ScmConfig, generate_noiseless, generate_scm

from oracle_utils import nhsic_permutation_null, pearson_abs


def _report(name: str, ok: bool, detail: str) -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


def _median_of(rows, method: str, n: int, key: str) -> float:
    for row in rows:
        if row["trial"] == "median" and row["method"] == method and row["n"] == n:
            return row[key]
    raise KeyError((method, n, key))


def test_c01_pca_adjustment_equality():
    worst = 0.0
    for seed in range(20):
        d = generate_noiseless(ScmConfig(n=500, p=100, k=20, seed=seed))
        via_pcs = pca_baseline_effect(d.U, d.x, d.y, 20).alpha_hat
        via_truth = adjusted_effect(d.x, d.y, d.Z).alpha_hat
        worst = max(worst, abs(via_pcs - via_truth))
    _report(
        "C1 principal-component adjustment equality",
        worst < 1e-8,
        f"max |difference| over 20 noiseless draws = {worst:.3e} (< 1e-8)",
    )


def test_c02_ica_recovery_trend():
    spec = ExperimentSpec(
        methods=("oracle", "ica-pcf"), sizes=(500, 1000), trials=30,
        dists=("exponential",), p=100, k=20, seed=101,
    )
    rows, _ = run_benchmark(spec)
    cor_500 = _median_of(rows, "ica-pcf", 500, "abs_cor")
    cor_1000 = _median_of(rows, "ica-pcf", 1000, "abs_cor")
    ae_ica = _median_of(rows, "ica-pcf", 1000, "ae")
    ae_oracle = _median_of(rows, "oracle", 1000, "ae")
    ok = cor_500 >= 0.65 and cor_1000 >= 0.90 and ae_ica <= 2.0 * ae_oracle
    _report(
        "C2 ICA recovery approaches the oracle",
        ok,
        f"median AbsCor n=500 {cor_500:.3f} (>= 0.65), n=1000 {cor_1000:.3f} (>= 0.90), "
        f"median AE {ae_ica:.4f} vs oracle {ae_oracle:.4f} (<= 2x)",
    )


def test_c03_gaussian_non_identifiability():
    spec = ExperimentSpec(
        methods=("ica-pcf", "pls-pcf"), sizes=(1000,), trials=30,
        dists=("gaussian",), p=100, k=20, seed=103,
    )
    rows, _ = run_benchmark(spec)
    ica = _median_of(rows, "ica-pcf", 1000, "abs_cor")
    pls = _median_of(rows, "pls-pcf", 1000, "abs_cor")
    _report(
        "C3 no Gaussian-case advantage for ICA",
        ica <= pls + 0.1,
        f"median AbsCor ica {ica:.3f} <= pls {pls:.3f} + 0.1",
    )


def test_c04_selection_consistency():
    rates = {}
    for n, need, trials in ((500, 0.80, 100), (2000, 0.95, 100)):
        hits = 0
        for t in range(trials):
            d = generate_scm(ScmConfig(n=n, p=100, dist="exponential", seed=40_000 + t))
            hits += select_confounder(d.Z, d.x, d.y).chosen[0] == d.cfg.d_x
        rates[n] = hits / trials
    ok = rates[500] >= 0.80 and rates[2000] >= 0.95
    _report(
        "C4 large-sample selection consistency",
        ok,
        f"correct-selection rate n=500 {rates[500]:.2f} (>= 0.80), n=2000 {rates[2000]:.2f} (>= 0.95)",
    )


def test_c05_gradient_check():
    worst = 0.0
    for seed in range(5):
        result = finite_difference_check(seed=seed, n=30, p=10, n_coords=20)
        worst = max(worst, result.max_rel_error)
    _report(
        "C5 analytic gradient matches central differences",
        worst < 1e-4,
        f"max relative error over 5 seeds x 20 coordinates = {worst:.3e} (< 1e-4)",
    )


def test_c06_training_improves_on_init():
    wins = 0
    for seed in range(100):
        d = generate_scm(ScmConfig(n=500, p=50, dist="exponential", seed=seed))
        state = gdpcf_train(d.U, d.x, d.y, GdpcfHyper(seed=seed))
        Uc = d.U - d.U.mean(axis=0)
        gd = pearson_abs(gdpcf_extract(state, d.U), d.z_c)
        init = pearson_abs(Uc @ state.init_v[2], d.z_c)
        wins += gd >= init
    _report(
        "C6 gradient training beats its own init",
        wins >= 60,
        f"trained AbsCor >= init AbsCor in {wins}/100 paired seeds (>= 60)",
    )


def test_c07_nhsic_suite():
    rng = np.random.default_rng(7)
    x = rng.standard_normal(200)
    y = rng.standard_normal(200)
    identity_err = abs(nhsic(x, x) - 1.0)
    symmetry_err = abs(nhsic(x, y) - nhsic(y, x))
    below = 0
    for t in range(100):
        trial_rng = np.random.default_rng(70_000 + t)
        a = trial_rng.standard_normal(300)
        b = trial_rng.standard_normal(300)
        null = nhsic_permutation_null(a, b, 200, np.random.default_rng(80_000 + t))
        below += nhsic(a, b) < np.percentile(null, 95)
    ok = identity_err <= 1e-10 and symmetry_err <= 1e-12 and below >= 90
    _report(
        "C7 normalized HSIC statistic",
        ok,
        f"identity err {identity_err:.1e} (<= 1e-10), symmetry err {symmetry_err:.1e} (<= 1e-12), "
        f"independent pairs below permutation 95th: {below}/100 (>= 90)",
    )


def test_c08_elastic_net_correctness():
    rng = np.random.default_rng(8)
    X = rng.standard_normal((80, 5))
    y = rng.standard_normal(80)
    ols_gap = float(np.max(np.abs(
        elastic_net_fit(X, y, 0.0, 1.0).coef - np.linalg.solve(X.T @ X, X.T @ y)
    )))

    Xs = np.column_stack([(c - c.mean()) / c.std() for c in rng.standard_normal((4, 60))])
    ys = rng.standard_normal(60)
    lam_max = float(np.max(np.abs(Xs.T @ ys)) / 60)
    dead = bool(np.all(elastic_net_fit(Xs, ys, lam_max * 1.0001, 1.0).coef == 0.0))

    x1 = rng.standard_normal(100)
    x1 = (x1 - x1.mean()) / x1.std()
    y1 = 0.8 * x1 + rng.standard_normal(100)
    rho = float(x1 @ y1) / 100
    expected = math.copysign(max(abs(rho) - 0.3, 0.0), rho)
    soft_gap = abs(elastic_net_fit(x1[:, None], y1, 0.3, 1.0).coef[0] - expected)

    Xm = rng.standard_normal((120, 15))
    ym = Xm[:, 0] - 2 * Xm[:, 3] + rng.standard_normal(120)
    trace = elastic_net_fit(Xm, ym, 0.05, 0.5, track_objective=True).objective_trace
    monotone = bool(np.all(np.diff(trace) <= 1e-12))

    ok = ols_gap < 1e-6 and dead and soft_gap < 1e-8 and monotone
    _report(
        "C8 elastic-net solver correctness",
        ok,
        f"lambda=0 vs OLS {ols_gap:.1e} (< 1e-6), dead zone exact zeros {dead}, "
        f"soft-threshold gap {soft_gap:.1e} (< 1e-8), objective monotone {monotone}",
    )


def test_c09_baseline_error_ratio():
    spec = ExperimentSpec(
        methods=("ica-pcf",), sizes=(1000,), trials=30, dists=("uniform",),
        p=100, k=20, aer_baseline="enet", seed=109,
    )
    rows, _ = run_benchmark(spec)
    aer = _median_of(rows, "ica-pcf", 1000, "aer")
    _report(
        "C9 error ratio against the elastic-net baseline",
        aer <= 1.2,
        f"median AER {aer:.3f} (<= 1.2) at n=1000, uniform latents",
    )


def test_c10_deterministic_csv(tmp_path):
    spec = ExperimentSpec(
        methods=("oracle", "pca-pcf", "pls-pcf"), sizes=(10, 50), trials=3,
        dists=("exponential",), p=50, k=20, seed=110,
    )
    paths = []
    for name in ("first", "second"):
        rows, _ = run_benchmark(spec)
        path = tmp_path / f"{name}.csv"
        write_results_csv(path, rows)
        paths.append(path)
    identical = paths[0].read_bytes() == paths[1].read_bytes()
    _report(
        "C10 rerun determinism",
        identical,
        f"two runs of the same spec produced byte-identical CSVs ({paths[0].stat().st_size} bytes)",
    )
