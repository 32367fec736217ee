"""Dimensionality-reduction front ends: PCA, cross-covariance PLS, FastICA.

Each maps an n x p proxy matrix to n x k candidate latent components plus the
projection weights that produced them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import InsufficientSamplesError, InvalidRankError, SingularityError
from .stats import as_matrix, as_rng, as_vector

_RANK_TOL = 1e-12


@dataclass
class ReductionOutput:
    """Candidate latents plus the linear map that produced them.

    z_hat is n x k; weights is p x k and satisfies z_hat == centered(U) @ weights.
    For ICA, mixing is the k x p least-squares factor with centered(U) ~ z_hat @ mixing.
    """

    z_hat: np.ndarray
    weights: np.ndarray
    method: str
    column_order: str
    mixing: np.ndarray | None = None
    explained: np.ndarray | None = None
    converged: bool = True
    rank_warning: bool = False


def _fix_signs(weights: np.ndarray) -> np.ndarray:
    """Per-column sign flips so the largest-magnitude weight is positive."""
    idx = np.argmax(np.abs(weights), axis=0)
    signs = np.sign(weights[idx, np.arange(weights.shape[1])])
    signs[signs == 0] = 1.0
    return signs


def pca_fit(U, k: int) -> ReductionOutput:
    """Principal components of the column-centered proxies.

    Weights are the top-k right singular vectors; components are ordered by
    decreasing explained variance. Requesting more components than the matrix
    rank yields zero-variance surplus columns and sets rank_warning.
    """
    Um = as_matrix(U, "U")
    n, p = Um.shape
    if n < 2:
        raise InsufficientSamplesError("pca_fit needs at least 2 rows")
    if not 1 <= k <= min(n, p):
        raise InvalidRankError(f"k must be in [1, {min(n, p)}], got {k}")
    Uc = Um - Um.mean(axis=0)
    _, s, vt = np.linalg.svd(Uc, full_matrices=False)
    weights = vt[:k].T * _fix_signs(vt[:k].T)
    z_hat = Uc @ weights
    explained = s[:k] ** 2 / (n - 1)
    rank_warning = bool(s[0] <= 0.0 or s[k - 1] <= s[0] * _RANK_TOL)
    return ReductionOutput(
        z_hat=z_hat,
        weights=weights,
        method="pca",
        column_order="explained-variance",
        explained=explained,
        rank_warning=rank_warning,
    )


def pls_fit(U, x, y, k: int) -> ReductionOutput:
    """Cross-covariance PLS: weights are left singular vectors of the p x 2
    covariance between the centered proxies and the stacked (x, y) targets,
    ordered by decreasing singular value.

    The cross-covariance has at most two nonzero directions, so k > 2 is
    rejected outright.
    """
    Um = as_matrix(U, "U")
    xv = as_vector(x, "x")
    yv = as_vector(y, "y")
    n, p = Um.shape
    if not (n == xv.size == yv.size):
        raise ValueError("U, x, y have mismatched sample counts")
    if n < 2:
        raise InsufficientSamplesError("pls_fit needs at least 2 rows")
    if k > 2:
        raise InvalidRankError(
            f"cross-covariance with (x, y) has at most 2 nonzero directions, got k={k}"
        )
    if not 1 <= k <= min(p, 2):
        raise InvalidRankError(f"k must be in [1, {min(p, 2)}], got {k}")
    Uc = Um - Um.mean(axis=0)
    targets = np.column_stack([xv - xv.mean(), yv - yv.mean()])
    C = Uc.T @ targets / (n - 1)
    v, s, _ = np.linalg.svd(C, full_matrices=False)
    weights = v[:, :k]
    return ReductionOutput(
        z_hat=Uc @ weights,
        weights=weights,
        method="pls",
        column_order="cross-covariance",
        explained=s[:k].copy(),
    )


def _symmetric_decorrelate(W: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(W @ W.T)
    if vals[0] <= 0:
        raise SingularityError("unmixing update collapsed to a singular matrix")
    return vecs @ np.diag(1.0 / np.sqrt(vals)) @ vecs.T @ W


def ica_fit(U, k: int, *, max_iter: int = 200, tol: float = 1e-4, seed=0) -> ReductionOutput:
    """Fixed-point FastICA with the log-cosh contrast and symmetric
    decorrelation.

    The proxies are whitened to k dimensions through PCA first; iteration
    stops when the unmixing update's maximum absolute diagonal deviation
    drops below tol, else after max_iter sweeps with converged=False.
    Components have unit sample variance; recovery is identifiable only when
    at most one source is Gaussian.
    """
    Um = as_matrix(U, "U")
    n, p = Um.shape
    if not 1 <= k <= min(n, p):
        raise InvalidRankError(f"k must be in [1, {min(n, p)}], got {k}")
    if n < 2:
        raise InsufficientSamplesError("ica_fit needs at least 2 rows")
    Uc = Um - Um.mean(axis=0)
    _, s, vt = np.linalg.svd(Uc, full_matrices=False)
    if s[0] <= 0.0 or s[k - 1] <= s[0] * _RANK_TOL:
        raise SingularityError("proxies are rank deficient; cannot whiten to k components")
    white = vt[:k].T * (np.sqrt(n - 1) / s[:k])
    Xw = Uc @ white  # n x k with identity sample covariance
    rng = as_rng(seed)
    W = _symmetric_decorrelate(rng.standard_normal((k, k)))
    converged = False
    for _ in range(max_iter):
        Y = W @ Xw.T
        G = np.tanh(Y)
        W_new = G @ Xw / n - ((1.0 - G * G).mean(axis=1))[:, None] * W
        W_new = _symmetric_decorrelate(W_new)
        delta = float(np.max(np.abs(np.abs(np.diag(W_new @ W.T)) - 1.0)))
        W = W_new
        if delta < tol:
            converged = True
            break
    weights = white @ W.T
    signs = _fix_signs(weights)
    weights = weights * signs
    z_hat = (Xw @ W.T) * signs
    mixing = z_hat.T @ Uc / (n - 1)  # least squares: z_hat'z_hat = (n-1) I
    return ReductionOutput(
        z_hat=z_hat,
        weights=weights,
        method="ica",
        column_order="arbitrary",
        mixing=mixing,
        converged=converged,
    )
