"""Confounder selection: score candidate components by regression p-values
and pick the one(s) with the smallest p_x + p_y."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import InsufficientSamplesError, SingularityError
from .stats import as_matrix, as_vector, ols_fit

# Threshold-mode default: two p-values whose sum stays below one conventional
# significance level.
DEFAULT_SCORE_THRESHOLD = 0.05


@dataclass(frozen=True)
class ComponentScore:
    index: int
    p_x: float
    p_y: float
    score: float


@dataclass(frozen=True)
class SelectionOutput:
    scores: list[ComponentScore]  # sorted ascending by (score, index)
    chosen: list[int]
    mode: str


def _coef_p_value(design: np.ndarray, target: np.ndarray, coef_index: int) -> float:
    # Collinearity with the controls means no independent evidence: score 1.
    try:
        return float(ols_fit(design, target, intercept=True).p_values[coef_index])
    except SingularityError:
        return 1.0


def score_component(z_i, x, y, index: int = 0) -> ComponentScore:
    """Score one candidate in the treatment->outcome orientation.

    p_x tests the candidate's coefficient when predicting x from it alone;
    p_y tests its coefficient when predicting y from it and x. Zero-variance
    candidates score 1 on both tests instead of erroring.
    """
    zv = as_vector(z_i, "z_i")
    xv = as_vector(x, "x")
    yv = as_vector(y, "y")
    if not (zv.size == xv.size == yv.size):
        raise ValueError("z_i, x, y have mismatched lengths")
    if zv.size < 4:
        raise InsufficientSamplesError("scoring needs at least 4 samples")
    if np.var(zv) == 0.0:
        return ComponentScore(index, 1.0, 1.0, 2.0)
    p_x = _coef_p_value(zv[:, None], xv, 1)
    p_y = _coef_p_value(np.column_stack([xv, zv]), yv, 2)
    return ComponentScore(index, p_x, p_y, p_x + p_y)


def score_component_symmetric(z_i, x, y, index: int = 0) -> ComponentScore:
    """Score one candidate without assuming a causal direction: each side is
    predicted while controlling for the other. p_x tests the candidate when
    predicting x given y, p_y when predicting y given x."""
    zv = as_vector(z_i, "z_i")
    xv = as_vector(x, "x")
    yv = as_vector(y, "y")
    if not (zv.size == xv.size == yv.size):
        raise ValueError("z_i, x, y have mismatched lengths")
    if zv.size < 4:
        raise InsufficientSamplesError("scoring needs at least 4 samples")
    if np.var(zv) == 0.0:
        return ComponentScore(index, 1.0, 1.0, 2.0)
    p_x = _coef_p_value(np.column_stack([yv, zv]), xv, 2)
    p_y = _coef_p_value(np.column_stack([xv, zv]), yv, 2)
    return ComponentScore(index, p_x, p_y, p_x + p_y)


def _scored_columns(Z_hat, x, y, orientation: str) -> list[ComponentScore]:
    Z = as_matrix(Z_hat, "Z_hat")
    scorer = {"dag": score_component, "symmetric": score_component_symmetric}[orientation]
    scores = [scorer(Z[:, i], x, y, index=i) for i in range(Z.shape[1])]
    return sorted(scores, key=lambda s: (s.score, s.index))


def select_confounder(Z_hat, x, y) -> SelectionOutput:
    """Pick the single candidate minimizing p_x + p_y; ties go to the lowest
    column index."""
    scores = _scored_columns(Z_hat, x, y, "dag")
    return SelectionOutput(scores=scores, chosen=[scores[0].index], mode="argmin")


def select_confounders_threshold(
    Z_hat, x, y, tau: float = DEFAULT_SCORE_THRESHOLD, *, orientation: str = "dag"
) -> SelectionOutput:
    """Pick every candidate with p_x + p_y <= tau, ascending by score.

    An empty selection is a valid outcome. orientation="symmetric" scores
    both directions for data with unknown causal order.
    """
    if not 0.0 < tau <= 2.0:
        raise ValueError("tau must lie in (0, 2]")
    scores = _scored_columns(Z_hat, x, y, orientation)
    chosen = [s.index for s in scores if s.score <= tau]
    return SelectionOutput(scores=scores, chosen=chosen, mode=f"threshold({tau})")
