import numpy as np
import pytest
from scipy import stats as scipy_stats

from pcf.exceptions import InsufficientSamplesError
from pcf.select import (
    DEFAULT_SCORE_THRESHOLD,
    score_component,
    score_component_symmetric,
    select_confounder,
    select_confounders_threshold,
)
from pcf.synth import ScmConfig, generate_scm


def test_perfect_predictor_gets_tiny_p_x():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(200)
    y = 2.0 * x + 0.1 * rng.standard_normal(200)
    score = score_component(x.copy(), x, y)
    assert score.p_x < 1e-10


def test_null_p_values_are_uniform():
    # Simulation oracle: independent Gaussian candidates give exactly
    # uniform t-test p-values; Kolmogorov-Smirnov distance must stay small.
    rng = np.random.default_rng(1)
    p_xs = []
    for _ in range(1000):
        z = rng.standard_normal(30)
        x = rng.standard_normal(30)
        y = rng.standard_normal(30)
        p_xs.append(score_component(z, x, y).p_x)
    ks = scipy_stats.kstest(p_xs, "uniform").statistic
    assert ks < 0.05


def test_true_confounder_beats_noise_components():
    # Monte-Carlo against the generator: the real confounder's score should
    # undercut every pure-noise candidate almost always at n=500.
    hits = 0
    for seed in range(100):
        draw = generate_scm(ScmConfig(n=500, p=30, dist="exponential", seed=seed))
        rng = np.random.default_rng(10_000 + seed)
        true_score = score_component(draw.z_c, draw.x, draw.y).score
        noise_scores = [
            score_component(rng.standard_normal(500), draw.x, draw.y).score
            for _ in range(19)
        ]
        hits += all(true_score < s for s in noise_scores)
    assert hits >= 95


def test_zero_variance_candidate_scores_one():
    rng = np.random.default_rng(2)
    score = score_component(np.full(50, 3.14), rng.standard_normal(50), rng.standard_normal(50))
    assert score.p_x == 1.0 and score.p_y == 1.0 and score.score == 2.0


def test_candidate_equal_to_treatment_still_scores():
    # z duplicating x makes the outcome regression collinear; that side
    # degrades to p=1 instead of erroring.
    rng = np.random.default_rng(3)
    x = rng.standard_normal(100)
    y = x + rng.standard_normal(100)
    score = score_component(x.copy(), x, y)
    assert score.p_x < 1e-10
    assert score.p_y == 1.0


def test_scale_invariance_of_scores():
    rng = np.random.default_rng(4)
    z = rng.standard_normal(120)
    x = z + rng.standard_normal(120)
    y = x + z + rng.standard_normal(120)
    a = score_component(z, x, y)
    b = score_component(-1e6 * z, x, y)
    assert a.p_x == pytest.approx(b.p_x, abs=1e-8)
    assert a.p_y == pytest.approx(b.p_y, abs=1e-8)


def test_too_short_rejected():
    with pytest.raises(InsufficientSamplesError):
        score_component(np.arange(3.0), np.arange(3.0), np.arange(3.0))


def test_select_single_column_unconditionally():
    rng = np.random.default_rng(5)
    out = select_confounder(rng.standard_normal((50, 1)), rng.standard_normal(50), rng.standard_normal(50))
    assert out.chosen == [0]
    assert out.mode == "argmin"


def test_select_finds_planted_confounder():
    draw = generate_scm(ScmConfig(n=800, p=40, dist="exponential", seed=11))
    rng = np.random.default_rng(6)
    Z_hat = np.column_stack([rng.standard_normal((800, 10)), draw.z_c, rng.standard_normal((800, 9))])
    out = select_confounder(Z_hat, draw.x, draw.y)
    assert out.chosen == [10]


def test_tie_break_prefers_lower_index():
    rng = np.random.default_rng(7)
    z = rng.standard_normal(100)
    x = z + 0.5 * rng.standard_normal(100)
    y = x + z + 0.5 * rng.standard_normal(100)
    Z_hat = np.column_stack([z, z])  # bitwise-identical candidates
    out = select_confounder(Z_hat, x, y)
    assert out.chosen == [0]


def test_scores_sorted_ascending():
    rng = np.random.default_rng(8)
    Z_hat = rng.standard_normal((60, 6))
    out = select_confounder(Z_hat, rng.standard_normal(60), rng.standard_normal(60))
    values = [s.score for s in out.scores]
    assert values == sorted(values)


def test_threshold_vacuous_tau_selects_everything():
    rng = np.random.default_rng(9)
    out = select_confounders_threshold(
        rng.standard_normal((40, 5)), rng.standard_normal(40), rng.standard_normal(40), tau=2.0
    )
    assert sorted(out.chosen) == [0, 1, 2, 3, 4]


def test_threshold_tiny_tau_selects_nothing_under_null():
    empties = 0
    for seed in range(100):
        rng = np.random.default_rng(20_000 + seed)
        out = select_confounders_threshold(
            rng.standard_normal((50, 8)), rng.standard_normal(50), rng.standard_normal(50), tau=1e-9
        )
        empties += not out.chosen
    assert empties == 100


def test_default_threshold_matches_two_pvalue_rule():
    assert DEFAULT_SCORE_THRESHOLD == 0.05


def test_threshold_rejects_bad_tau():
    rng = np.random.default_rng(10)
    Z = rng.standard_normal((30, 2))
    with pytest.raises(ValueError):
        select_confounders_threshold(Z, rng.standard_normal(30), rng.standard_normal(30), tau=0.0)


def test_symmetric_orientation_scores_both_directions():
    rng = np.random.default_rng(11)
    z = rng.standard_normal(300)
    x = z + rng.standard_normal(300)
    y = z + rng.standard_normal(300)  # no direct x -> y link
    s = score_component_symmetric(z, x, y)
    assert s.p_x < 1e-6 and s.p_y < 1e-6
    out = select_confounders_threshold(z[:, None], x, y, tau=0.05, orientation="symmetric")
    assert out.chosen == [0]
