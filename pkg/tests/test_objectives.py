"""
Objective functions, variant wiring and the MMD metric
"""

import math

import numpy as np
import pytest
from scipy.stats import norm

from adversary.local import LocalAdversary
from adversary.optimal import AnalyticDiscriminator
from core.errors import ConfigurationError, SamplingError
from core.tensor import ComputationRecord, Tensor, backward
from graph.families import CompiledModel
from graph.inverse import derive_inverse_factorization
from graph.model_graph import FamilySpec, GraphBuilder, two_layer_chain
from graph.sampling import JointSample
from objectives.gan import gan_value, gan_value_from_logits, generator_rows
from objectives.local_jsd import admp_jsd_model_loss, local_divergence, local_terms, score_surrogate
from objectives.mmd import mmd_rbf
from objectives.variants import (
    BOTTOM_UP, DATA, PRIOR, RECONSTRUCTION, TOP_DOWN, ObjectiveVariant, build_program, local_adversary_factors,
)
from objectives.variational import elbo, mixed_equivalence_check

LOG2 = math.log(2.0)


def _joint(values, origin="top_down"):
    tensors = {k: Tensor(np.asarray(v, dtype=np.float64).reshape(len(v), -1)) for k, v in values.items()}
    count = len(next(iter(values.values())))
    return JointSample(tensors, count, origin)


def _gaussian_adversary(name, mu_top, mu_bottom):
    return AnalyticDiscriminator(
        log_p=lambda t: norm.logpdf(t[:, 0], mu_top, 1.0),
        log_q=lambda t: norm.logpdf(t[:, 0], mu_bottom, 1.0),
        slots=(name,),
        name=name,
    )


def _lingauss_model():
    graph = (
        GraphBuilder("lingauss")
        .variable("z").variable("x", role="observed")
        .factor("z", (), FamilySpec(trainable=False))
        .factor("x", ("z",), FamilySpec(init=(("weight", (1.0,)), ("bias", (0.0,)), ("log_scale", (math.log(0.5),)))))
        .inference("z", FamilySpec(source="linear"))
        .build()
    )
    return CompiledModel(graph, derive_inverse_factorization(graph))


def _posterior_phi(model, rng):
    """q(z | x) set to the exact posterior N(0.8 x, 0.2) of the linear-Gaussian model"""
    phi = model.init_phi(rng)
    phi["phi.z.W"] = np.array([[0.8]])
    phi["phi.z.b"] = np.zeros(1)
    phi["phi.z.log_scale"] = np.full(1, 0.5 * math.log(0.2))
    return phi


def _discrete_chain():
    return (
        GraphBuilder("discrete")
        .variable("z", support="categorical", cardinality=3)
        .variable("x", role="observed", support="binary")
        .factor("z", (), FamilySpec(source="table"))
        .factor("x", ("z",), FamilySpec(source="table"))
        .build()
    )


# ------------------------------------------------------------------
# GAN
# ------------------------------------------------------------------
def test_gan_value_at_the_uninformed_discriminator():
    assert gan_value(np.full(4, 0.5), np.full(3, 0.5)) == pytest.approx(-2 * LOG2)
    assert gan_value_from_logits(Tensor(np.zeros(4)), Tensor(np.zeros(3))).item() == pytest.approx(-2 * LOG2)
    with pytest.raises(SamplingError):
        gan_value(np.zeros(0), np.full(3, 0.5))


def test_generator_rows_saturating_and_not():
    logits = Tensor(np.array([0.0, 2.0]))
    np.testing.assert_allclose(generator_rows(logits).numpy(), -np.logaddexp(0.0, [0.0, 2.0]))
    np.testing.assert_allclose(generator_rows(logits, non_saturating=True).numpy(), np.logaddexp(0.0, [0.0, -2.0]))


# ------------------------------------------------------------------
# LOCAL JSD
# ------------------------------------------------------------------
def test_local_divergence_is_zero_for_matching_chains(rng):
    samples = rng.normal(size=(500, 1))
    adversaries = {"x": _gaussian_adversary("x", 0.0, 0.0)}
    top, bottom = _joint({"x": samples}), _joint({"x": samples}, "bottom_up")
    assert local_divergence(bottom, top, adversaries, {}) == pytest.approx(0.0, abs=1e-12)


def test_local_divergence_is_positive_for_different_chains(rng):
    top = _joint({"x": rng.normal(1.0, 1.0, size=(4000, 1))})
    bottom = _joint({"x": rng.normal(-1.0, 1.0, size=(4000, 1))}, "bottom_up")
    adversaries = {"x": _gaussian_adversary("x", 1.0, -1.0)}
    terms = local_terms(bottom, top, adversaries, {})
    assert 0.0 < terms["x"] < LOG2
    # JSD of unit Gaussians two apart is about 0.34 nats
    assert terms["x"] == pytest.approx(0.34, abs=0.04)


def test_model_loss_plus_log2_per_adversary_is_the_divergence(rng):
    adv_z = LocalAdversary("z", ("z",), 1, hidden=(3,))
    adv_x = LocalAdversary("x", ("x", "z"), 2, hidden=(3,))
    xi = {**adv_z.init_params(rng), **adv_x.init_params(rng)}
    adversaries = {"z": adv_z, "x": adv_x}
    top = _joint({"z": rng.normal(size=(30, 1)), "x": rng.normal(size=(30, 1))})
    bottom = _joint({"z": rng.normal(size=(20, 1)), "x": rng.normal(size=(20, 1))}, "bottom_up")
    loss = admp_jsd_model_loss(bottom, top, adversaries, xi).item()
    assert loss + 2 * LOG2 == pytest.approx(local_divergence(bottom, top, adversaries, xi))


def test_model_loss_without_bottom_up_rows(rng):
    adv = LocalAdversary("x", ("x",), 1, hidden=(3,))
    xi = adv.init_params(rng, zero_output=True)
    top = _joint({"x": rng.normal(size=(10, 1))})
    empty = JointSample({}, 0, "bottom_up")
    assert admp_jsd_model_loss(empty, top, {"x": adv}, xi).item() == pytest.approx(-0.5 * LOG2)


def test_model_loss_requires_adversaries(rng):
    top = _joint({"x": rng.normal(size=(5, 1))})
    with pytest.raises(ConfigurationError):
        admp_jsd_model_loss(top, top, {}, {})
    adv = LocalAdversary("x", ("x",), 1, hidden=(3,))
    with pytest.raises(ConfigurationError):
        admp_jsd_model_loss(top, top, {"x": adv}, adv.init_params(rng), factors=["x", "z"])


def test_score_surrogate_keeps_value_and_adds_score_gradient():
    record = ComputationRecord()
    with record:
        theta = record.leaf(np.array([0.3]), "theta")
        log_p = Tensor(np.array([1.0, 2.0, 3.0])) * theta
        rows = Tensor(np.array([1.0, 0.0, 2.0]))
        out = score_surrogate(rows, [log_p])
    assert out.item() == pytest.approx(1.0)
    grad = record.gradients_by_name(backward(record, out))["theta"]
    weights = np.array([1.0, 0.0, 2.0]) - 1.0
    assert grad[0] == pytest.approx(np.mean(weights * np.array([1.0, 2.0, 3.0])))


# ------------------------------------------------------------------
# VARIANT WIRING
# ------------------------------------------------------------------
def test_local_adversaries_skip_roots_with_children():
    assert local_adversary_factors(two_layer_chain()) == ["z1", "x"]


def test_jsdloc_program_on_the_chain():
    graph = two_layer_chain()
    program = build_program(ObjectiveVariant.ADMP_JSD_LOC, CompiledModel(graph, derive_inverse_factorization(graph)))
    assert [w.name for w in program.adversaries] == ["z1", "x"]
    assert program.adversary("x").slots == ("x", "z1")
    assert program.adversary("z1").positive == TOP_DOWN and program.adversary("z1").negative == BOTTOM_UP
    assert [u.name for u in program.units] == ["z2", "z1", "x"]
    assert program.units[0].adversaries == ()
    assert program.units[2].phi_vars == ()


def test_gan_and_kl_wiring():
    model = _lingauss_model()
    gan = build_program(ObjectiveVariant.GAN, model)
    assert (gan.adversaries[0].positive, gan.adversaries[0].negative) == (DATA, TOP_DOWN)
    tractable = build_program(ObjectiveVariant.ADMP_KL_TRACTABLE, model)
    assert tractable.adversary("z").positive == PRIOR
    assert tractable.units[0].theta_vars == ("x",)
    intractable = build_program(ObjectiveVariant.ADMP_KL_INTRACTABLE, model)
    assert intractable.adversary("z").positive == BOTTOM_UP
    assert intractable.adversary("x").negative == RECONSTRUCTION
    assert build_program(ObjectiveVariant.ELBO, model).adversaries == ()


def test_discrete_latents_only_train_with_gan():
    graph = _discrete_chain()
    model = CompiledModel(graph, derive_inverse_factorization(graph))
    assert build_program(ObjectiveVariant.GAN, model).units[0].theta_vars == ("z", "x")
    for variant in (ObjectiveVariant.ADMP_JSD_LOC, ObjectiveVariant.GLOBAL_BIADV, ObjectiveVariant.ELBO):
        with pytest.raises(ConfigurationError):
            build_program(variant, model)


def test_variant_parse():
    assert ObjectiveVariant.parse("ADMP_JSD_LOC") is ObjectiveVariant.ADMP_JSD_LOC
    assert ObjectiveVariant.parse("global-biadv") is ObjectiveVariant.GLOBAL_BIADV
    with pytest.raises(ConfigurationError):
        ObjectiveVariant.parse("wasserstein")


# ------------------------------------------------------------------
# VARIATIONAL
# ------------------------------------------------------------------
def test_elbo_is_below_the_log_evidence_by_the_posterior_kl(rng):
    model = _lingauss_model()
    theta = model.init_theta(rng)
    phi = _posterior_phi(model, rng)
    # q(z | x) = N(0.8 x + 1, 0.2): KL to the exact posterior is 1 / (2 * 0.2) = 2.5 nats per row
    phi["phi.z.b"] = np.ones(1)
    x = np.array([[0.5], [-1.0], [2.0]])
    value = elbo(model, theta, phi, {"x": x}, 2000, rng).item()
    log_evidence = norm.logpdf(x[:, 0], 0.0, math.sqrt(1.25)).mean()
    assert value < log_evidence
    assert value == pytest.approx(log_evidence - 2.5, abs=0.15)


def test_elbo_rejects_implicit_factors(rng):
    graph = (
        GraphBuilder().variable("z").variable("x", role="observed")
        .factor("z").factor("x", ("z",), FamilySpec(kind="implicit", hidden=(4,)))
        .build()
    )
    model = CompiledModel(graph, derive_inverse_factorization(graph))
    with pytest.raises(ConfigurationError):
        elbo(model, model.init_theta(rng), model.init_phi(rng), {"x": np.zeros((2, 1))}, 1, rng)


def test_mixed_objective_differs_from_elbo_by_a_constant(rng):
    model = _lingauss_model()
    theta = model.init_theta(rng)
    phi = _posterior_phi(model, rng)
    x = rng.normal(size=(8, 1))
    report = mixed_equivalence_check(
        model, theta, phi, {"x": x}, lambda t: norm.logpdf(t[:, 0], 0.0, 1.2), count=4, rng=rng,
    )
    assert report.difference == pytest.approx(report.data_term, abs=1e-9)
    assert report.agrees


@pytest.mark.slow
def test_mixed_objective_gradients_agree_at_scale(rng):
    model = _lingauss_model()
    theta = model.init_theta(rng)
    theta["theta.x.W"] = np.array([[0.7]])
    phi = _posterior_phi(model, rng)
    x = rng.normal(0.0, math.sqrt(1.25), size=(1000, 1))
    report = mixed_equivalence_check(
        model, theta, phi, {"x": x}, lambda t: norm.logpdf(t[:, 0], 0.0, math.sqrt(1.25)), count=100, rng=rng,
    )
    assert report.cosine > 0.99
    assert report.difference == pytest.approx(report.data_term, abs=1e-9)


# ------------------------------------------------------------------
# MMD
# ------------------------------------------------------------------
def test_mmd_of_identical_lists_is_zero(rng):
    samples = rng.normal(size=(200, 2))
    assert mmd_rbf(samples, samples) == pytest.approx(0.0, abs=1e-12)


def test_mmd_separates_shifted_samples(rng):
    same = mmd_rbf(rng.normal(size=(300, 2)), rng.normal(size=(300, 2)))
    shifted = mmd_rbf(rng.normal(size=(300, 2)), rng.normal(2.0, 1.0, size=(250, 2)))
    assert abs(same) < 0.02
    assert shifted > 0.1


def test_mmd_needs_two_samples_per_set():
    with pytest.raises(SamplingError):
        mmd_rbf(np.zeros((1, 2)), np.zeros((5, 2)))
