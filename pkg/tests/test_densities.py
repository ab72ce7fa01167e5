"""
Explicit families and implicit samplers
"""

import numpy as np
import pytest
from scipy.stats import norm

from core.errors import ConfigurationError, DomainError, ShapeError
from core.gradcheck import gradient_check
from core.tensor import Tensor
from densities.explicit import (
    Bernoulli, Categorical, ExplicitFamily, Normal, SlotLayout, configuration_index, log_prob, normal_kl,
    sample_explicit,
)
from densities.implicit import ImplicitSampler, sample_implicit


def test_normal_log_prob_matches_scipy():
    loc = np.array([[0.5, -1.0]])
    scale = np.array([[2.0, 0.3]])
    value = np.array([[1.0, -0.8]])
    got = Normal(loc, scale=scale).log_prob(value).item()
    assert got == pytest.approx(norm.logpdf(value, loc, scale).sum())
    assert Normal(loc, log_scale=np.log(scale)).log_prob(value).item() == pytest.approx(got)


def test_normal_rejects_nonpositive_scale():
    with pytest.raises(DomainError):
        Normal(np.zeros((1, 1)), scale=np.zeros((1, 1))).log_prob(np.zeros((1, 1)))


def test_normal_kl_closed_form():
    q = Normal(np.array([[1.0]]), scale=np.array([[0.5]]))
    p = Normal(np.array([[0.0]]), scale=np.array([[1.0]]))
    expected = np.log(1.0 / 0.5) + (0.25 + 1.0) / 2.0 - 0.5
    assert normal_kl(q, p).item() == pytest.approx(expected)
    assert normal_kl(p, p).item() == pytest.approx(0.0)


def test_bernoulli_log_prob_and_support():
    dist = Bernoulli.from_probs(np.array([[0.2, 0.7]]))
    assert dist.log_prob(np.array([[1.0, 0.0]])).item() == pytest.approx(np.log(0.2) + np.log(0.3))
    with pytest.raises(DomainError):
        dist.log_prob(np.array([[0.5, 1.0]]))


def test_categorical_needs_one_hot():
    dist = Categorical.from_probs(np.array([[0.1, 0.6, 0.3]]))
    assert dist.log_prob(np.array([[0.0, 1.0, 0.0]])).item() == pytest.approx(np.log(0.6))
    with pytest.raises(DomainError):
        dist.log_prob(np.array([[1.0, 1.0, 0.0]]))
    with pytest.raises(ShapeError):
        dist.log_prob(np.array([[1.0, 0.0]]))


def test_categorical_sampling_frequencies(rng):
    probs = np.array([0.1, 0.6, 0.3])
    draws = Categorical.from_probs(np.tile(probs, (20000, 1))).sample(rng).numpy()
    assert np.all(draws.sum(axis=1) == 1.0)
    np.testing.assert_allclose(draws.mean(axis=0), probs, atol=0.02)


def test_gaussian_sample_is_reparametrized():
    noise = np.array([[1.0], [-2.0]])
    out = Normal(np.array([[3.0], [3.0]]), scale=np.array([[0.5], [0.5]])).sample(noise=noise)
    np.testing.assert_allclose(out.numpy(), [[3.5], [2.0]])


def test_linear_family_uses_initial_values():
    family = ExplicitFamily(
        "gaussian", 1, "theta.x", (SlotLayout("z", 1),),
        init={"weight": (2.0,), "bias": (1.0,), "log_scale": (np.log(0.5),)},
    )
    params = family.init_params(np.random.default_rng(0))
    got = log_prob(family, np.array([[3.0]]), np.array([[1.0]]), params).item()
    assert got == pytest.approx(norm.logpdf(3.0, 3.0, 0.5))


def test_table_family_indexes_parent_configurations(rng):
    slots = (SlotLayout("a", 2, "binary"), SlotLayout("c", 3, "categorical", 3))
    family = ExplicitFamily("bernoulli", 1, "theta.y", slots, source="table")
    assert family.configurations == 12
    parents = np.array([[1.0, 0.0, 0.0, 0.0, 1.0], [1.0, 1.0, 1.0, 0.0, 0.0]])
    np.testing.assert_array_equal(configuration_index(parents, slots), [1 * 3 + 2, 3 * 3 + 0])
    params = family.init_params(rng)
    assert params["theta.y.table"].shape == (12, 1)
    value = np.array([[1.0], [0.0]])
    expected = Bernoulli(params["theta.y.table"][[5, 9]]).log_prob(value).numpy()
    np.testing.assert_allclose(log_prob(family, value, parents, params).numpy(), expected)


def test_table_source_rejects_continuous_parents():
    with pytest.raises(ConfigurationError):
        ExplicitFamily("gaussian", 1, "theta.x", (SlotLayout("z", 1),), source="table")


def test_unknown_family_or_source():
    with pytest.raises(ConfigurationError):
        ExplicitFamily("poisson", 1, "theta.x")
    with pytest.raises(ConfigurationError):
        ExplicitFamily("gaussian", 1, "theta.x", source="spline")


def test_parent_width_mismatch(rng):
    family = ExplicitFamily("gaussian", 1, "theta.x", (SlotLayout("z", 2),))
    with pytest.raises(ShapeError):
        sample_explicit(family, np.ones((3, 1)), family.init_params(rng), rng)


def test_mlp_family_log_prob_gradients(rng):
    family = ExplicitFamily("gaussian", 2, "theta.x", (SlotLayout("z", 3),), source="mlp", hidden=(5,))
    z = rng.normal(size=(4, 3))
    x = rng.normal(size=(4, 2))

    def loss(p):
        return log_prob(family, x, z, p).mean()

    assert all(row.passed for row in gradient_check(loss, family.init_params(rng)))


def test_implicit_sampler_shapes_and_determinism(rng):
    sampler = ImplicitSampler(dim=2, prefix="phi.z", parent_slots=(SlotLayout("x", 3),), noise_dim=4, hidden=(8,))
    params = sampler.init_params(rng)
    parents = rng.normal(size=(5, 3))
    noise = sampler.draw_noise(rng, 5)
    assert noise.shape == (5, 4)
    first = sample_implicit(sampler, parents, params, noise=noise)
    second = sample_implicit(sampler, parents, params, noise=noise)
    assert first.shape == (5, 2)
    np.testing.assert_array_equal(first.numpy(), second.numpy())
    with pytest.raises(ShapeError):
        sample_implicit(sampler, np.ones((5, 2)), params, noise=noise)


def test_implicit_uniform_noise_range(rng):
    sampler = ImplicitSampler(dim=1, prefix="phi.z", noise="uniform")
    noise = sampler.draw_noise(rng, 1000)
    assert noise.min() >= 0.0 and noise.max() < 1.0
    with pytest.raises(ConfigurationError):
        ImplicitSampler(dim=1, prefix="phi.z", noise="cauchy")


def test_tensor_values_are_copied():
    source = np.ones(2)
    t = Tensor(source)
    source[0] = 5.0
    assert t.numpy()[0] == 1.0
