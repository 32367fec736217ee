"""Ground-truth data generation from the linear structural causal model.

The latent vector splits into instrumental, confounding, outcome-only, and
noise blocks; proxies mix all latents through a Gaussian weight matrix, and
treatment/outcome follow linear equations with unit-variance Gaussian noise.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .exceptions import SingularityError
from .stats import LATENT_FAMILIES, as_rng, sample_latent

_RANK_TOL = 1e-10


@dataclass(frozen=True)
class ScmConfig:
    n: int
    p: int
    dist: str = "exponential"
    k: int = 20
    d_x: int = 6
    d_c: int = 1
    d_y: int = 6
    proxy_noise: bool = True
    seed: int = 0

    @property
    def d_n(self) -> int:
        return self.k - self.d_x - self.d_c - self.d_y

    def validate(self) -> None:
        if self.n < 1 or self.p < 1:
            raise ValueError("n and p must be positive")
        if self.dist not in LATENT_FAMILIES:
            raise ValueError(f"unknown latent family {self.dist!r}")
        if min(self.d_x, self.d_c, self.d_y) < 1 or self.d_n < 0:
            raise ValueError(
                f"invalid latent dims: d_x={self.d_x}, d_c={self.d_c}, "
                f"d_y={self.d_y}, d_n={self.d_n} (k={self.k})"
            )


@dataclass
class ScmDraw:
    """One sampled dataset plus everything needed to reconstruct it.

    Z columns are ordered (Z_x, Z_c, Z_y, Z_n); z_c is the first confounder
    column. Coefficients c_x and c_y carry the confounder's effect into the
    treatment and outcome respectively, all drawn from Uniform(0.5, 1.5)
    along with a_x, a_y and alpha_true.
    """

    cfg: ScmConfig
    U: np.ndarray
    x: np.ndarray
    y: np.ndarray
    Z: np.ndarray
    z_c: np.ndarray
    alpha_true: float
    W: np.ndarray
    a_x: np.ndarray
    c_x: np.ndarray
    c_y: np.ndarray
    a_y: np.ndarray
    n_u: np.ndarray = field(repr=False)
    n_x: np.ndarray = field(repr=False)
    n_y: np.ndarray = field(repr=False)

    @property
    def Z_x(self) -> np.ndarray:
        return self.Z[:, : self.cfg.d_x]

    @property
    def Z_c(self) -> np.ndarray:
        return self.Z[:, self.cfg.d_x : self.cfg.d_x + self.cfg.d_c]

    @property
    def Z_y(self) -> np.ndarray:
        lo = self.cfg.d_x + self.cfg.d_c
        return self.Z[:, lo : lo + self.cfg.d_y]


def _draw_structure(cfg: ScmConfig, rng: np.random.Generator):
    Z = np.column_stack([sample_latent(cfg.dist, cfg.n, rng) for _ in range(cfg.k)])
    W = rng.standard_normal((cfg.k, cfg.p))
    a_x = rng.uniform(0.5, 1.5, cfg.d_x)
    c_x = rng.uniform(0.5, 1.5, cfg.d_c)
    alpha = float(rng.uniform(0.5, 1.5))
    c_y = rng.uniform(0.5, 1.5, cfg.d_c)
    a_y = rng.uniform(0.5, 1.5, cfg.d_y)
    return Z, W, a_x, c_x, alpha, c_y, a_y


def _assemble(cfg, Z, W, a_x, c_x, alpha, c_y, a_y, n_u, n_x, n_y) -> ScmDraw:
    lo_c = cfg.d_x
    lo_y = cfg.d_x + cfg.d_c
    Zc = Z[:, lo_c : lo_c + cfg.d_c]
    x = Z[:, : cfg.d_x] @ a_x + Zc @ c_x + n_x
    y = alpha * x + Zc @ c_y + Z[:, lo_y : lo_y + cfg.d_y] @ a_y + n_y
    return ScmDraw(
        cfg=cfg,
        U=Z @ W + n_u,
        x=x,
        y=y,
        Z=Z,
        z_c=Z[:, lo_c].copy(),
        alpha_true=alpha,
        W=W,
        a_x=a_x,
        c_x=c_x,
        c_y=c_y,
        a_y=a_y,
        n_u=n_u,
        n_x=n_x,
        n_y=n_y,
    )


def generate_scm(cfg: ScmConfig) -> ScmDraw:
    """Sample one dataset from the structural model, deterministically per seed."""
    cfg.validate()
    if cfg.p < cfg.k:
        warnings.warn(
            f"p={cfg.p} < k={cfg.k}: fewer proxies than latents leaves the "
            "latent space unidentifiable",
            stacklevel=2,
        )
    rng = as_rng(cfg.seed)
    Z, W, a_x, c_x, alpha, c_y, a_y = _draw_structure(cfg, rng)
    n_x = rng.standard_normal(cfg.n)
    n_y = rng.standard_normal(cfg.n)
    if cfg.proxy_noise:
        n_u = rng.standard_normal((cfg.n, cfg.p))
    else:
        n_u = np.zeros((cfg.n, cfg.p))
    return _assemble(cfg, Z, W, a_x, c_x, alpha, c_y, a_y, n_u, n_x, n_y)


def generate_noiseless(cfg: ScmConfig) -> ScmDraw:
    """Noise-free proxies with centered columns and a full-rank mixing matrix.

    W is resampled until its numerical rank equals k; the proxy columns are
    centered after mixing, so U equals centered(Z) @ W exactly.
    """
    cfg.validate()
    if cfg.p < cfg.k:
        raise ValueError(f"noiseless draws need p >= k, got p={cfg.p}, k={cfg.k}")
    rng = as_rng(cfg.seed)
    Z, W, a_x, c_x, alpha, c_y, a_y = _draw_structure(cfg, rng)
    for _ in range(10):
        s = np.linalg.svd(W, compute_uv=False)
        if s[-1] > s[0] * _RANK_TOL:
            break
        W = rng.standard_normal((cfg.k, cfg.p))
    else:
        raise SingularityError("could not draw a rank-k mixing matrix in 10 attempts")
    n_x = rng.standard_normal(cfg.n)
    n_y = rng.standard_normal(cfg.n)
    raw = Z @ W
    n_u = -np.tile(raw.mean(axis=0), (cfg.n, 1))  # centering offset, so U = ZW + n_u holds
    return _assemble(cfg, Z, W, a_x, c_x, alpha, c_y, a_y, n_u, n_x, n_y)
