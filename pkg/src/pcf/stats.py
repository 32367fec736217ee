"""Core numerics shared by all modules.

Seeded sampling of standardized latent families, ordinary and ridge least
squares with t-test p-values, Gaussian-kernel normalized HSIC, and k-fold
splitting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .exceptions import (
    DegenerateInputError,
    InsufficientSamplesError,
    SingularityError,
)

LATENT_FAMILIES = ("uniform", "gamma", "exponential", "gaussian")

_SQRT3 = math.sqrt(3.0)
_SQRT2 = math.sqrt(2.0)


def as_rng(seed) -> np.random.Generator:
    """Accept either an integer seed or an existing Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def derive_seed(master: int, *path: int) -> int:
    """Derive a disjoint child seed from a master seed and an index path."""
    ss = np.random.SeedSequence(master, spawn_key=tuple(int(p) for p in path))
    return int(ss.generate_state(1)[0])


def as_vector(v, name: str = "input") -> np.ndarray:
    arr = np.asarray(v, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size < 1:
        raise ValueError(f"{name} must be nonempty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def as_matrix(a, name: str = "input") -> np.ndarray:
    arr = np.asarray(a, dtype=float)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be two-dimensional, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must be nonempty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def sample_latent(dist: str, n: int, rng) -> np.ndarray:
    """Draw n i.i.d. samples from the named family, affinely standardized to
    zero mean and unit standard deviation. Deterministic for a given seed."""
    if n < 1:
        raise ValueError("n must be at least 1")
    gen = as_rng(rng)
    if dist == "uniform":
        return gen.uniform(-_SQRT3, _SQRT3, n)
    if dist == "gaussian":
        return gen.standard_normal(n)
    if dist == "exponential":
        return gen.standard_exponential(n) - 1.0
    if dist == "gamma":
        # shape 2, scale 1: mean 2, std sqrt(2)
        return (gen.gamma(2.0, 1.0, n) - 2.0) / _SQRT2
    raise ValueError(f"unknown latent family {dist!r}; expected one of {LATENT_FAMILIES}")


@dataclass(frozen=True)
class OlsFit:
    coefficients: np.ndarray
    residuals: np.ndarray
    std_errors: np.ndarray
    t_stats: np.ndarray
    p_values: np.ndarray
    dof: int


def ols_fit(design, y, intercept: bool = False) -> OlsFit:
    """Least squares with classical standard errors and two-sided t-tests.

    The optional intercept is prepended as a leading column of ones, so with
    ``intercept=True`` coefficient 0 is the intercept.
    """
    X = as_matrix(design, "design")
    yv = as_vector(y, "y")
    if X.shape[0] != yv.size:
        raise ValueError("design and y have mismatched sample counts")
    if intercept:
        X = np.column_stack([np.ones(X.shape[0]), X])
    n, d = X.shape
    if n <= d:
        raise InsufficientSamplesError(f"need more than {d} samples, got {n}")
    if np.linalg.matrix_rank(X) < d:
        raise SingularityError("design matrix is rank deficient")
    xtx_inv = np.linalg.inv(X.T @ X)
    coef = xtx_inv @ (X.T @ yv)
    resid = yv - X @ coef
    dof = n - d
    sigma2 = float(resid @ resid) / dof
    se = np.sqrt(np.maximum(sigma2 * np.diag(xtx_inv), 0.0))
    t = np.zeros(d)
    nz = se > 0
    t[nz] = coef[nz] / se[nz]
    exact = ~nz & (coef != 0)
    t[exact] = np.inf * np.sign(coef[exact])
    return OlsFit(
        coefficients=coef,
        residuals=resid,
        std_errors=se,
        t_stats=t,
        p_values=t_p_value(t, dof),
        dof=dof,
    )


def t_p_value(t, dof: int):
    """Two-sided Student-t tail probability P(|T| >= |t|).

    Computed through the regularized incomplete beta function; |t| = inf
    maps to exactly 0.
    """
    if dof < 1:
        raise ValueError("dof must be at least 1")
    tt = np.asarray(t, dtype=float)
    x = np.where(np.isinf(tt), 0.0, dof / (dof + tt * tt))
    p = special.betainc(dof / 2.0, 0.5, x)
    if np.ndim(t) == 0:
        return float(p)
    return p


def ridge_solve(A, b, lam: float) -> np.ndarray:
    """Solve the penalized normal equations (A'A + lam*I) beta = A'b."""
    Am = as_matrix(A, "A")
    bv = as_vector(b, "b")
    if Am.shape[0] != bv.size:
        raise ValueError("A and b have mismatched sample counts")
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    d = Am.shape[1]
    if lam == 0.0 and np.linalg.matrix_rank(Am) < d:
        raise SingularityError("A'A is singular and lambda is zero")
    return np.linalg.solve(Am.T @ Am + lam * np.eye(d), Am.T @ bv)


@dataclass(frozen=True)
class KernelSpec:
    """Gaussian kernel; bandwidth None means the median pairwise-distance
    heuristic, evaluated per argument."""

    family: str = "gaussian"
    bandwidth: float | None = None

    def __post_init__(self):
        if self.family != "gaussian":
            raise ValueError(f"unsupported kernel family {self.family!r}")
        if self.bandwidth is not None and not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")


def median_bandwidth(values: np.ndarray) -> float:
    """Median pairwise absolute distance, with a positive fallback when more
    than half of the pairs coincide."""
    v = np.asarray(values, dtype=float)
    d = np.abs(v[:, None] - v[None, :])
    iu = np.triu_indices(v.size, k=1)
    pair = d[iu]
    med = float(np.median(pair))
    if med <= 0.0:
        pos = pair[pair > 0]
        med = float(np.median(pos)) if pos.size else 1.0
    return med


def gaussian_gram(values: np.ndarray, bandwidth: float) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    diff = v[:, None] - v[None, :]
    return np.exp(diff * diff * (-0.5 / (bandwidth * bandwidth)))


def center_gram(K: np.ndarray) -> np.ndarray:
    """Double centering H K H with H = I - (1/n) 11'."""
    row = K.mean(axis=0)
    col = K.mean(axis=1)[:, None]
    return K - row - col + K.mean()


def nhsic(x, y, kernel: KernelSpec | None = None) -> float:
    """Normalized HSIC in [0, 1]: biased estimator with double-centered
    Gaussian Gram matrices, HSIC(x,y) / sqrt(HSIC(x,x) * HSIC(y,y))."""
    xv = as_vector(x, "x")
    yv = as_vector(y, "y")
    if xv.size != yv.size:
        raise ValueError("x and y have mismatched lengths")
    if xv.size < 4:
        raise InsufficientSamplesError("nhsic needs at least 4 samples")
    if np.var(xv) == 0.0 or np.var(yv) == 0.0:
        raise DegenerateInputError("nhsic inputs must have nonzero variance")
    spec = kernel if kernel is not None else KernelSpec()
    bx = spec.bandwidth if spec.bandwidth is not None else median_bandwidth(xv)
    by = spec.bandwidth if spec.bandwidth is not None else median_bandwidth(yv)
    Kc = center_gram(gaussian_gram(xv, bx))
    Lc = center_gram(gaussian_gram(yv, by))
    cross = float(np.sum(Kc * Lc))
    kk = float(np.sum(Kc * Kc))
    ll = float(np.sum(Lc * Lc))
    if kk <= 0.0 or ll <= 0.0:
        raise DegenerateInputError("kernel matrix is constant after centering")
    return min(1.0, max(0.0, cross / math.sqrt(kk * ll)))


def kfold_split(n: int, k: int, seed=0) -> list[tuple[np.ndarray, np.ndarray]]:
    """Seeded random partition into k near-equal folds.

    Returns (train_indices, test_indices) pairs; every index lands in exactly
    one test set and fold sizes differ by at most one.
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    if n < k:
        raise InsufficientSamplesError(f"cannot split {n} samples into {k} folds")
    perm = as_rng(seed).permutation(n)
    folds = np.array_split(perm, k)
    splits = []
    for i in range(k):
        train = np.sort(np.concatenate([folds[j] for j in range(k) if j != i]))
        splits.append((train, np.sort(folds[i])))
    return splits
