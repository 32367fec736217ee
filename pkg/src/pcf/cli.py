"""Command line interface.

Subcommands:
    synth-bench  run the synthetic benchmark grid and write CSV + JSON results
    fit          run one method on a dataset CSV and emit a JSON report
    gradcheck    verify the analytic training gradient against finite differences

Benchmark configuration can come from a JSON file (--config) whose keys match
the ExperimentSpec fields; explicit flags take precedence over the file. The
PCF_THREADS environment variable caps benchmark worker parallelism (default:
logical cores).
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__
from .bench import ALL_METHODS, AER_BASELINES, ExperimentSpec, run_benchmark, write_results_csv, write_summary_json
from .dataset import read_dataset
from .dr import ica_fit, pca_fit, pls_fit
from .estimate import CLIMATE_PCA_ADJUST_K, adjusted_effect, pca_baseline_effect
from .exceptions import PcfError
from .gdpcf import GdpcfHyper, finite_difference_check, gdpcf_extract, gdpcf_train
from .select import (
    DEFAULT_SCORE_THRESHOLD,
    score_component,
    score_component_symmetric,
    select_confounder,
    select_confounders_threshold,
)
from .stats import LATENT_FAMILIES, ols_fit

FIT_METHODS = ("pca-pcf", "pls-pcf", "ica-pcf", "gd-pcf")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pcf", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"pcf {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    bench = sub.add_parser("synth-bench", help="run the synthetic benchmark grid")
    bench.add_argument("--config", help="JSON file with ExperimentSpec fields; flags override it")
    bench.add_argument("--methods", help=f"comma-separated subset of {','.join(ALL_METHODS)}")
    bench.add_argument("--sizes", help="comma-separated sample sizes")
    bench.add_argument("--trials", type=int)
    bench.add_argument("--dist", action="append", dest="dists", choices=LATENT_FAMILIES,
                       help="latent family; repeat for several")
    bench.add_argument("--p", type=int, help="proxy dimension")
    bench.add_argument("--k", type=int, help="candidate component count")
    bench.add_argument("--seed", type=int)
    bench.add_argument("--no-proxy-noise", action="store_true")
    bench.add_argument("--paper-scale", action="store_true",
                       help="p=1000 and 100 trials (slow); explicit --p/--trials still win")
    bench.add_argument("--aer-baseline", choices=AER_BASELINES)
    bench.add_argument("--gd-steps", type=int, help="override gd-pcf step count")
    bench.add_argument("--out-csv", default="results.csv")
    bench.add_argument("--out-json", default="results.json")

    fit = sub.add_parser("fit", help="fit one method on a dataset CSV")
    fit.add_argument("dataset", help="CSV with columns x, y, u_0..u_{p-1} [, z_c_true, ref_*]")
    fit.add_argument("--method", choices=FIT_METHODS, default="ica-pcf")
    fit.add_argument("--k", type=int, default=None,
                     help="candidate component count (required for real data)")
    fit.add_argument("--selection", choices=("argmin", "threshold"), default="argmin")
    fit.add_argument("--tau", type=float, default=DEFAULT_SCORE_THRESHOLD,
                     help="threshold on p_x + p_y in threshold mode")
    fit.add_argument("--orientation", choices=("dag", "symmetric"), default="dag",
                     help="symmetric scores both causal directions (climate mode)")
    fit.add_argument("--standardize-proxies", action="store_true",
                     help="scale proxy columns to unit variance before reduction")
    fit.add_argument("--pca-adjust-k", type=int, default=CLIMATE_PCA_ADJUST_K,
                     help="components for the reported proxy-PCA adjustment baseline")
    fit.add_argument("--seed", type=int, default=0)
    fit.add_argument("--gd-steps", type=int, default=None)
    fit.add_argument("--out", help="write the JSON report here instead of stdout")

    grad = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    grad.add_argument("--seed", type=int, default=0)
    grad.add_argument("--n", type=int, default=30)
    grad.add_argument("--p", type=int, default=10)
    return parser


def _parse_int_list(text: str) -> tuple[int, ...]:
    return tuple(int(tok) for tok in text.split(",") if tok.strip())


def _spec_from_args(args) -> ExperimentSpec:
    fields = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            loaded = json.load(fh)
        allowed = set(ExperimentSpec.__dataclass_fields__)
        unknown = set(loaded) - allowed
        if unknown:
            raise PcfError(f"unknown config keys {sorted(unknown)}; expected subset of {sorted(allowed)}")
        fields.update(loaded)
        for key in ("methods", "sizes", "dists"):
            if key in fields:
                fields[key] = tuple(fields[key])
    if args.paper_scale:
        fields["p"] = 1000
        fields["trials"] = 100
    if args.methods:
        fields["methods"] = tuple(tok.strip() for tok in args.methods.split(",") if tok.strip())
    if args.sizes:
        fields["sizes"] = _parse_int_list(args.sizes)
    if args.trials is not None:
        fields["trials"] = args.trials
    if args.dists:
        fields["dists"] = tuple(args.dists)
    if args.p is not None:
        fields["p"] = args.p
    if args.k is not None:
        fields["k"] = args.k
    if args.seed is not None:
        fields["seed"] = args.seed
    if args.no_proxy_noise:
        fields["proxy_noise"] = False
    if args.aer_baseline:
        fields["aer_baseline"] = args.aer_baseline
    if args.gd_steps is not None:
        fields["gd_steps"] = args.gd_steps
    return ExperimentSpec(**fields)


def _cmd_synth_bench(args) -> int:
    spec = _spec_from_args(args)
    rows, summary = run_benchmark(spec)
    write_results_csv(args.out_csv, rows)
    write_summary_json(args.out_json, summary)
    medians = [r for r in rows if r["trial"] == "median"]
    for row in medians:
        print(
            f"{row['dist']:>12} n={row['n']:<6} {row['method']:<8} "
            f"abs_cor={_show(row['abs_cor'])} ae={_show(row['ae'])} aer={_show(row['aer'])}"
        )
    if summary["failures"]:
        print(f"{len(summary['failures'])} per-trial method failures recorded as NA rows", file=sys.stderr)
    print(f"wrote {args.out_csv} and {args.out_json}")
    return 0


def _show(value: float) -> str:
    return "NA" if value != value else f"{value:.4f}"


def _estimate_dict(est) -> dict:
    return {
        "alpha_hat": est.alpha_hat,
        "std_error": est.std_error,
        "ci95": list(est.ci95),
        "adjustment": est.adjustment,
    }


def _variance_explained(ref: np.ndarray, components: np.ndarray) -> float:
    """R-squared of the reference series on the chosen components."""
    fit = ols_fit(components, ref, intercept=True)
    total = float(np.sum((ref - ref.mean()) ** 2))
    if total <= 0:
        return float("nan")
    return 1.0 - float(fit.residuals @ fit.residuals) / total


def _cmd_fit(args) -> int:
    data = read_dataset(args.dataset)
    U = data.U
    if args.standardize_proxies:
        sd = U.std(axis=0)
        U = (U - U.mean(axis=0)) / np.where(sd > 0, sd, 1.0)
    n, p = U.shape

    if args.method == "gd-pcf":
        hyper = GdpcfHyper(seed=args.seed) if args.gd_steps is None else GdpcfHyper(
            seed=args.seed, steps=args.gd_steps)
        state = gdpcf_train(U, data.x, data.y, hyper)
        candidates = gdpcf_extract(state, U)[:, None]
        weights = state.v_c[:, None]
        convergence = {"init_mode": state.init_mode,
                       "final_loss": float(state.loss_trace[-1]) if state.loss_trace.size else None}
    else:
        if args.k is None:
            raise PcfError("--k is required for reduction-based methods")
        if args.k > p:
            raise PcfError(f"k={args.k} exceeds the {p} proxy columns in the dataset")
        if args.method == "pca-pcf":
            red = pca_fit(U, args.k)
        elif args.method == "pls-pcf":
            red = pls_fit(U, data.x, data.y, args.k)
        else:
            red = ica_fit(U, args.k, seed=args.seed)
        candidates = red.z_hat
        weights = red.weights
        convergence = {"converged": red.converged, "rank_warning": red.rank_warning}

    scorer = score_component if args.orientation == "dag" else score_component_symmetric
    scores = sorted(
        (scorer(candidates[:, i], data.x, data.y, index=i) for i in range(candidates.shape[1])),
        key=lambda s: (s.score, s.index),
    )
    if args.selection == "argmin":
        selection = select_confounder(candidates, data.x, data.y)
        chosen = selection.chosen if args.orientation == "dag" else [scores[0].index]
    else:
        selection = select_confounders_threshold(
            candidates, data.x, data.y, args.tau, orientation=args.orientation)
        chosen = selection.chosen

    Z_adj = candidates[:, chosen] if chosen else None
    forward = adjusted_effect(data.x, data.y, Z_adj)
    reverse = adjusted_effect(data.y, data.x, Z_adj)

    report = {
        "method": args.method,
        "n": n,
        "p": p,
        "k": args.k,
        "selection": {"mode": args.selection, "tau": args.tau if args.selection == "threshold" else None,
                      "orientation": args.orientation},
        "scores": [{"index": s.index, "p_x": s.p_x, "p_y": s.p_y, "score": s.score} for s in scores],
        "chosen": list(chosen),
        "weights": {str(i): weights[:, 0 if args.method == "gd-pcf" else i].tolist() for i in chosen},
        "components": {str(i): candidates[:, i].tolist() for i in chosen},
        "estimates": {"x_to_y": _estimate_dict(forward), "y_to_x": _estimate_dict(reverse)},
        "pca_adjustment": _estimate_dict(
            pca_baseline_effect(U, data.x, data.y, min(args.pca_adjust_k, p, max(0, n - 3)))),
        "convergence": convergence,
    }
    if data.z_c_true is not None and chosen:
        best = candidates[:, chosen[0]]
        report["abs_cor_true_confounder"] = float(abs(np.corrcoef(best, data.z_c_true)[0, 1]))
    if data.refs and chosen:
        report["reference_variance_explained"] = {
            name: _variance_explained(series, candidates[:, chosen])
            for name, series in sorted(data.refs.items())
        }

    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
        print(f"wrote {args.out}")
    else:
        print(text)
    return 0


def _cmd_gradcheck(args) -> int:
    result = finite_difference_check(seed=args.seed, n=args.n, p=args.p)
    print(f"gradient check: n={args.n} p={args.p} seed={args.seed}")
    print(f"coordinates checked: {len(result.coords)} (kink-straddling skipped: {result.skipped_kinks})")
    print(f"max relative error: {result.max_rel_error:.6e}")
    print("PASS" if result.passed else "FAIL")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "synth-bench":
            return _cmd_synth_bench(args)
        if args.command == "fit":
            return _cmd_fit(args)
        return _cmd_gradcheck(args)
    except (PcfError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
