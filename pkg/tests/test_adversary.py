"""
Local adversaries, ratio transforms and Bayes-optimal discriminators
"""

import math

import numpy as np
import pytest
from scipy.stats import norm

from adversary.local import (
    LocalAdversary, discriminate, discriminator_accuracy, fit_adversary, loss_locD, ratio_log,
)
from adversary.optimal import AnalyticDiscriminator, analytic_optimal_discriminator, log_ratio_logits
from config.settings import LOGIT_CLAMP
from core.errors import SamplingError, ShapeError


def _shifted_gaussians(rng, count=2000):
    top_down = rng.normal(1.0, 1.0, size=(count, 1))
    bottom_up = rng.normal(-1.0, 1.0, size=(count, 1))
    return top_down, bottom_up


def test_fresh_zero_output_adversary_is_uninformed(rng):
    adv = LocalAdversary("x", ("x",), 2, hidden=(4,))
    params = adv.init_params(rng, zero_output=True)
    rows = rng.normal(size=(6, 2))
    np.testing.assert_allclose(discriminate(adv, params, rows).numpy(), 0.5)
    assert loss_locD(adv, params, rows, rows).item() == pytest.approx(2 * math.log(2.0))


def test_input_width_is_checked(rng):
    adv = LocalAdversary("x", ("x",), 2, hidden=(4,))
    with pytest.raises(ShapeError):
        adv.logits(adv.init_params(rng), np.ones((3, 3)))


def test_empty_side_is_rejected(rng):
    adv = LocalAdversary("x", ("x",), 1, hidden=(4,))
    params = adv.init_params(rng)
    with pytest.raises(SamplingError):
        loss_locD(adv, params, np.zeros((0, 1)), np.ones((3, 1)))


def test_ratio_transforms_are_consistent(rng):
    adv = LocalAdversary("x", ("x",), 1, hidden=(4,))
    params = adv.init_params(rng)
    rows = rng.normal(size=(10, 1))
    log_d = ratio_log(adv, params, rows, "p_over_m").numpy()
    log_one_minus_d = ratio_log(adv, params, rows, "q_over_m").numpy()
    logit = ratio_log(adv, params, rows, "p_over_q").numpy()
    np.testing.assert_allclose(np.exp(log_d) + np.exp(log_one_minus_d), 1.0)
    np.testing.assert_allclose(log_d - log_one_minus_d, logit)
    np.testing.assert_allclose(ratio_log(adv, params, rows, "q_over_p").numpy(), -logit)
    with pytest.raises(ValueError):
        ratio_log(adv, params, rows, "sideways")


def test_trained_adversary_approaches_the_optimal_logit(rng):
    top_down, bottom_up = _shifted_gaussians(rng)
    adv = LocalAdversary("x", ("x",), 1, hidden=(16,))
    params, _, losses = fit_adversary(adv, adv.init_params(rng), top_down, bottom_up, steps=1500, lr=1e-2)
    assert losses[-1] < losses[0]

    grid = np.linspace(-1.0, 1.0, 21).reshape(-1, 1)
    learned = adv.logits(params, grid).numpy()
    assert np.mean(np.abs(learned - 2.0 * grid[:, 0])) < 0.5
    # Bayes accuracy for unit Gaussians two apart is Phi(1) ~ 0.84
    assert discriminator_accuracy(adv, params, top_down, bottom_up) > 0.78


def test_fit_adversary_leaves_input_params_untouched(rng):
    adv = LocalAdversary("x", ("x",), 1, hidden=(4,))
    params = adv.init_params(rng)
    before = {k: v.copy() for k, v in params.items()}
    top_down, bottom_up = _shifted_gaussians(rng, 50)
    fit_adversary(adv, params, top_down, bottom_up, steps=3, batch=10, rng=rng)
    for name, value in before.items():
        np.testing.assert_array_equal(params[name], value)


def test_analytic_discriminator_matches_density_ratio():
    d_star = AnalyticDiscriminator(
        log_p=lambda t: norm.logpdf(t[:, 0], 1.0, 1.0),
        log_q=lambda t: norm.logpdf(t[:, 0], -1.0, 1.0),
        slots=("x",),
    )
    grid = np.linspace(-2.0, 2.0, 9).reshape(-1, 1)
    np.testing.assert_allclose(d_star.logits({}, grid).numpy(), 2.0 * grid[:, 0])
    expected = norm.pdf(grid[:, 0], 1.0) / (norm.pdf(grid[:, 0], 1.0) + norm.pdf(grid[:, 0], -1.0))
    np.testing.assert_allclose(d_star(grid), expected)
    assert d_star.param_names({"xi.a": 1}) == []


def test_optimal_discriminator_where_both_densities_vanish():
    optimal = analytic_optimal_discriminator(lambda x: np.zeros(len(x)), lambda x: np.zeros(len(x)))
    np.testing.assert_array_equal(optimal(np.ones((3, 1))), 0.5)


def test_log_ratio_logits_clamps_and_handles_zero_mass():
    out = log_ratio_logits(np.array([0.0, -np.inf, -np.inf, 0.0]), np.array([-100.0, -np.inf, 0.0, 0.0]))
    np.testing.assert_array_equal(out, [LOGIT_CLAMP, 0.0, -LOGIT_CLAMP, 0.0])
