"""Adjusted causal-effect estimation, evaluation metrics, and penalized
regression baselines."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg as scipy_linalg
from scipy import special

from .dr import pca_fit
from .exceptions import InsufficientSamplesError, SingularityError
from .stats import as_matrix, as_rng, as_vector, derive_seed, kfold_split, ols_fit

# Component count used for the proxy principal-component adjustment on real
# (climate-style) data.
CLIMATE_PCA_ADJUST_K = 10

_Z95 = 1.959963984540054  # two-sided 95% normal quantile


@dataclass(frozen=True)
class CausalEstimate:
    alpha_hat: float
    std_error: float
    ci95: tuple[float, float]
    adjustment: str


@dataclass(frozen=True)
class MetricsRecord:
    """abs_cor / ae / aer for one confounder estimate; undefined metrics are NaN."""

    abs_cor: float
    ae: float
    aer: float
    baseline_tag: str


def _name_collinear_columns(design: np.ndarray, n_fixed: int) -> list[int]:
    """Which adjustment columns (0-based, after the fixed leading columns)
    break the design's rank, per pivoted QR."""
    r = scipy_linalg.qr(design, mode="r", pivoting=True)
    R, piv = r[0], r[1]
    diag = np.abs(np.diag(R))
    tol = diag.max() * max(design.shape) * np.finfo(float).eps if diag.size else 0.0
    rank = int(np.sum(diag > tol))
    return sorted(int(j) - n_fixed for j in piv[rank:] if j >= n_fixed)


def adjusted_effect(x, y, Z_adj=None, *, use_t_ci: bool = False, adjustment_label: str | None = None) -> CausalEstimate:
    """Treatment coefficient from the regression of y on [intercept, x, Z_adj].

    The 95% interval uses the normal quantile by default; use_t_ci switches
    to the exact Student-t quantile at the fit's degrees of freedom.
    """
    xv = as_vector(x, "x")
    yv = as_vector(y, "y")
    if Z_adj is None:
        Z = np.empty((xv.size, 0))
    else:
        Z = as_matrix(Z_adj, "Z_adj") if np.asarray(Z_adj).ndim == 2 else as_vector(Z_adj, "Z_adj")[:, None]
    if Z.shape[0] != xv.size or yv.size != xv.size:
        raise ValueError("x, y, Z_adj have mismatched sample counts")
    if xv.size <= Z.shape[1] + 2:
        raise InsufficientSamplesError(
            f"need more than {Z.shape[1] + 2} samples to adjust for {Z.shape[1]} columns"
        )
    design = np.column_stack([np.ones(xv.size), xv, Z])
    if np.linalg.matrix_rank(design) < design.shape[1]:
        bad = _name_collinear_columns(design, n_fixed=2)
        raise SingularityError(f"collinear adjustment columns: {bad}")
    fit = ols_fit(np.column_stack([xv, Z]), yv, intercept=True)
    alpha = float(fit.coefficients[1])
    se = float(fit.std_errors[1])
    q = float(special.stdtrit(fit.dof, 0.975)) if use_t_ci else _Z95
    label = adjustment_label
    if label is None:
        label = "none" if Z.shape[1] == 0 else f"{Z.shape[1]} adjustment column(s)"
    return CausalEstimate(alpha, se, (alpha - q * se, alpha + q * se), label)


def pca_baseline_effect(U, x, y, k: int, *, use_t_ci: bool = False) -> CausalEstimate:
    """Adjust with the first k principal components of the proxies; k=0 is
    the unadjusted regression."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    if k == 0:
        return adjusted_effect(x, y, None, use_t_ci=use_t_ci, adjustment_label="none")
    z = pca_fit(U, k).z_hat
    return adjusted_effect(
        x, y, z, use_t_ci=use_t_ci, adjustment_label=f"first {k} principal components"
    )


@dataclass
class EnetFit:
    coef: np.ndarray
    converged: bool
    sweeps: int
    objective_trace: np.ndarray | None = None


def _soft_threshold(value: float, threshold: float) -> float:
    if value > threshold:
        return value - threshold
    if value < -threshold:
        return value + threshold
    return 0.0


try:
    from numba import njit as _njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is an optional accelerator
    _HAVE_NUMBA = False

    def _njit(*args, **kwargs):
        def deco(fn):
            return fn

        return deco


@_njit(cache=True)
def _cd_pass(gram, diag, pen, rho, beta, thr, l2, indices):
    max_delta = 0.0
    d = beta.size
    for ii in range(indices.size):
        j = indices[ii]
        dj = diag[j]
        if dj == 0.0:
            continue
        cj = rho[j] + dj * beta[j]
        if pen[j]:
            if cj > thr:
                bj = (cj - thr) / (dj + l2)
            elif cj < -thr:
                bj = (cj + thr) / (dj + l2)
            else:
                bj = 0.0
        else:
            bj = cj / dj
        delta = bj - beta[j]
        if delta != 0.0:
            ad = abs(delta)
            if ad > max_delta:
                max_delta = ad
            beta[j] = bj
            for col in range(d):
                rho[col] -= gram[j, col] * delta
    return max_delta


@_njit(cache=True)
def _cd_solve_kernel(gram, diag, pen, cy, beta, thr, l2, tol, max_sweeps):
    d = beta.size
    rho = cy - gram @ beta
    everything = np.arange(d)
    sweeps = 0
    converged = False
    while sweeps < max_sweeps:
        sweeps += 1
        max_delta = _cd_pass(gram, diag, pen, rho, beta, thr, l2, everything)
        if max_delta < tol:
            converged = True
            break
        while sweeps < max_sweeps:
            n_active = 0
            for j in range(d):
                if beta[j] != 0.0 or not pen[j]:
                    n_active += 1
            if n_active >= d:
                break
            active = np.empty(n_active, dtype=np.int64)
            pos = 0
            for j in range(d):
                if beta[j] != 0.0 or not pen[j]:
                    active[pos] = j
                    pos += 1
            sweeps += 1
            max_delta = _cd_pass(gram, diag, pen, rho, beta, thr, l2, active)
            if max_delta < tol:
                break
    return converged, sweeps


class _CdProblem:
    """Standardized-space coordinate-descent state reusable across a
    lambda path: the Gram matrix and target correlations are built once."""

    def __init__(self, X: np.ndarray, y: np.ndarray, pen: np.ndarray):
        n, d = X.shape
        scale = np.ones(d)
        sd = X.std(axis=0)
        scale[pen] = np.where(sd[pen] > 0, sd[pen], 1.0)
        self.Xs = X / scale
        self.y = y
        self.n = n
        self.d = d
        self.pen = pen
        self.scale = scale
        self.gram = self.Xs.T @ self.Xs / n
        self.cy = self.Xs.T @ y / n
        self.diag = np.diag(self.gram).copy()

    def objective(self, beta: np.ndarray, lam: float, mix: float) -> float:
        r = self.y - self.Xs @ beta
        pen_l1 = float(np.abs(beta[self.pen]).sum())
        pen_l2 = float((beta[self.pen] ** 2).sum())
        return float(r @ r) / (2 * self.n) + lam * (mix * pen_l1 + 0.5 * (1 - mix) * pen_l2)

    def _sweep(self, indices, beta, rho, thr, denom, workable) -> float:
        # rho tracks cy - gram @ beta and is updated incrementally; zero
        # coefficient moves skip the vector update entirely.
        gram = self.gram
        diag = self.diag
        pen = self.pen
        max_delta = 0.0
        for j in indices:
            if not workable[j]:
                continue
            cj = rho[j] + diag[j] * beta[j]
            if pen[j]:
                bj = _soft_threshold(cj, thr) / denom[j]
            else:
                bj = cj / diag[j]
            delta = bj - beta[j]
            if delta != 0.0:
                ad = abs(delta)
                if ad > max_delta:
                    max_delta = ad
                beta[j] = bj
                rho -= gram[j] * delta
        return max_delta

    def solve(self, lam, mix, beta, tol, max_sweeps, trace_to=None):
        """Cyclic minimization from the given (standardized) start; beta is
        updated in place. Convergence requires a full sweep whose largest
        coefficient change stays below tol; between full sweeps, only the
        currently active coefficients are iterated."""
        if trace_to is None and _HAVE_NUMBA:
            return _cd_solve_kernel(
                self.gram, self.diag, self.pen, self.cy, beta,
                lam * mix, lam * (1.0 - mix), tol, max_sweeps,
            )
        thr = lam * mix
        denom = self.diag + lam * (1.0 - mix)
        rho = self.cy - self.gram @ beta
        workable = self.diag != 0.0
        everything = range(self.d)
        sweeps = 0
        converged = False
        while sweeps < max_sweeps:
            sweeps += 1
            max_delta = self._sweep(everything, beta, rho, thr, denom, workable)
            if trace_to is not None:
                trace_to.append(self.objective(beta, lam, mix))
            if max_delta < tol:
                converged = True
                break
            while sweeps < max_sweeps:
                active = np.flatnonzero((beta != 0.0) | ~self.pen)
                if active.size >= self.d:
                    break
                sweeps += 1
                max_delta = self._sweep(active, beta, rho, thr, denom, workable)
                if trace_to is not None:
                    trace_to.append(self.objective(beta, lam, mix))
                if max_delta < tol:
                    break
        return converged, sweeps


def elastic_net_fit(
    X,
    y,
    lam: float,
    mix: float,
    penalty_mask=None,
    *,
    warm_start: np.ndarray | None = None,
    tol: float = 1e-7,
    max_sweeps: int = 10_000,
    track_objective: bool = False,
) -> EnetFit:
    """Cyclic coordinate descent on
    (1/2n)||y - X b||^2 + lam * (mix * ||b_pen||_1 + (1-mix)/2 * ||b_pen||^2).

    Penalized columns are rescaled to unit standard deviation internally and
    the returned coefficients are mapped back to the original scale. Sweeps
    stop when the largest coefficient change falls below tol; hitting
    max_sweeps first returns converged=False.
    """
    Xm = as_matrix(X, "X")
    yv = as_vector(y, "y")
    n, d = Xm.shape
    if n != yv.size:
        raise ValueError("X and y have mismatched sample counts")
    if lam < 0 or not 0.0 <= mix <= 1.0:
        raise ValueError("need lam >= 0 and mix in [0, 1]")
    pen = np.ones(d, dtype=bool) if penalty_mask is None else np.asarray(penalty_mask, dtype=bool)
    if pen.size != d:
        raise ValueError("penalty_mask length must match the column count")

    problem = _CdProblem(Xm, yv, pen)
    beta = np.zeros(d) if warm_start is None else np.asarray(warm_start, dtype=float) * problem.scale
    trace: list[float] | None = [] if track_objective else None
    converged, sweeps = problem.solve(lam, mix, beta, tol, max_sweeps, trace_to=trace)
    return EnetFit(
        coef=beta / problem.scale,
        converged=converged,
        sweeps=sweeps,
        objective_trace=np.asarray(trace) if track_objective else None,
    )


_BASELINE_MIX = {"lasso": 1.0, "ridge": 0.0, "enet": 0.5}


def cv_regression_baseline(
    U,
    x,
    y,
    method: str,
    folds: int = 10,
    seed: int = 0,
    *,
    n_lambdas: int = 50,
    bootstrap: int = 200,
) -> CausalEstimate:
    """Penalized regression of y on [x, proxies] with x left unpenalized.

    The penalty weight is picked from a 50-point log grid spanning
    [1e-4 * lam_max, lam_max] by held-out MSE over seeded k-fold splits, the
    model is refit on the full data at the winner, and the treatment
    coefficient's standard error comes from a nonparametric bootstrap.
    Passing bootstrap=0 skips the resampling and reports NaN uncertainty.
    """
    if method not in _BASELINE_MIX:
        raise ValueError(f"unknown baseline {method!r}; expected one of {sorted(_BASELINE_MIX)}")
    mix = _BASELINE_MIX[method]
    Um = as_matrix(U, "U")
    xv = as_vector(x, "x")
    yv = as_vector(y, "y")
    n, p = Um.shape
    if not (n == xv.size == yv.size):
        raise ValueError("U, x, y have mismatched sample counts")
    X = np.column_stack([xv, Um])
    mask = np.ones(p + 1, dtype=bool)
    mask[0] = False  # the treatment column stays unpenalized

    Xc = X - X.mean(axis=0)
    yc = yv - yv.mean()
    sd = Xc[:, 1:].std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    lam_max = float(np.max(np.abs((Xc[:, 1:] / sd).T @ yc)) / n) / max(mix, 1e-3)
    lam_max = max(lam_max, 1e-12)
    grid = np.geomspace(lam_max, lam_max * 1e-4, n_lambdas)

    errors = np.zeros(n_lambdas)
    for train, test in kfold_split(n, folds, seed):
        mu = X[train].mean(axis=0)
        my = yv[train].mean()
        problem = _CdProblem(X[train] - mu, yv[train] - my, mask)
        Xv, yh = X[test] - mu, yv[test] - my
        beta_s = np.zeros(p + 1)  # standardized scale, warm-started down the path
        for i, lam in enumerate(grid):
            problem.solve(lam, mix, beta_s, 1e-7, 10_000)
            r = yh - Xv @ (beta_s / problem.scale)
            errors[i] += float(r @ r)
    best_idx = int(np.argmin(errors))

    problem = _CdProblem(Xc, yc, mask)
    beta_s = np.zeros(p + 1)
    for lam in grid[: best_idx + 1]:  # warm-started path down to the winner
        problem.solve(lam, mix, beta_s, 1e-7, 10_000)
    beta = beta_s / problem.scale
    alpha_hat = float(beta[0])
    best_lam = float(grid[best_idx])

    if bootstrap > 1:
        rng = as_rng(derive_seed(seed, 1))
        stars = np.empty(bootstrap)
        for b in range(bootstrap):
            idx = rng.integers(0, n, n)
            Xb = X[idx] - X[idx].mean(axis=0)
            yb = yv[idx] - yv[idx].mean()
            stars[b] = elastic_net_fit(Xb, yb, best_lam, mix, mask, warm_start=beta).coef[0]
        se = float(np.std(stars, ddof=1))
    else:
        se = float("nan")
    return CausalEstimate(
        alpha_hat,
        se,
        (alpha_hat - _Z95 * se, alpha_hat + _Z95 * se),
        f"{method}(lambda={best_lam:.6g}, mix={mix}) on [x, {p} proxies], {folds}-fold CV",
    )


def evaluate(z_hat_c, z_c_true, alpha_hat: float, alpha_true: float, alpha_baseline: float, baseline_tag: str = "") -> MetricsRecord:
    """Absolute correlation with the true confounder plus absolute error and
    its ratio against a baseline estimate. Metrics without a defined value
    (no latent estimate, zero variance, zero baseline error) come back NaN."""
    abs_cor = float("nan")
    if z_hat_c is not None:
        zh = as_vector(z_hat_c, "z_hat_c")
        zt = as_vector(z_c_true, "z_c_true")
        if zh.size != zt.size:
            raise ValueError("confounder estimate and truth have mismatched lengths")
        sh, st = zh.std(), zt.std()
        if sh > 0 and st > 0:
            abs_cor = float(abs(np.mean((zh - zh.mean()) * (zt - zt.mean())) / (sh * st)))
    ae = abs(alpha_true - alpha_hat)
    denom = abs(alpha_true - alpha_baseline)
    aer = ae / denom if denom > 0 and math.isfinite(denom) else float("nan")
    return MetricsRecord(abs_cor=abs_cor, ae=float(ae), aer=float(aer), baseline_tag=baseline_tag)
