"""
Ground truth: conjugate posteriors, quadrature, enumeration and recovery reports
"""

import math

import numpy as np
import pytest
from scipy.special import logsumexp
from scipy.stats import entropy, norm

from cli.spec_parser import load_spec
from core.errors import OracleError
from graph.families import CompiledModel
from graph.inverse import derive_inverse_factorization
from graph.model_graph import FamilySpec, GraphBuilder
from objectives.variants import local_adversary_factors
from oracle.conjugate import LinearGaussianOracle, conjugate_gaussian_posterior, linear_gaussian_posterior
from oracle.enumeration import (
    Enumeration, conditional_tables, enumerate_model, exact_elbo, exact_local_divergence, joint_from_tables,
    joint_size, list_observed_states, random_tables,
)
from oracle.quadrature import (
    INFINITE_DIVERGENCE, default_2d_grid, discrete_jsd, discrete_kl, gaussian_density, gaussian_grid, gaussian_kl,
    numeric_divergence, numeric_divergence_2d,
)
from oracle.report import OracleSpec, oracle_hook, posterior_recovery_report

LOG2 = math.log(2.0)


def _compiled(path):
    graph = load_spec(path).graph
    return CompiledModel(graph, derive_inverse_factorization(graph))


def _ternary_dag(rng, size, edge_prob=0.5):
    builder = GraphBuilder("random")
    names = [f"v{i}" for i in range(size)]
    for name in names:
        builder.variable(name, support="categorical", cardinality=3)
    for j, child in enumerate(names):
        parents = [names[i] for i in range(j) if rng.uniform() < edge_prob]
        builder.factor(child, parents, FamilySpec(source="table"))
    return builder.build()


def _shaped(graph, flat_tables):
    """random_tables rows reshaped to (|pa_1|, ..., |pa_k|, |x|) for ternary variables"""
    return {
        name: np.asarray(flat).reshape(tuple(3 for _ in graph.parents(name)) + (3,))
        for name, flat in flat_tables.items()
    }


# ------------------------------------------------------------------
# CONJUGATE
# ------------------------------------------------------------------
def test_conjugate_posterior_closed_form():
    mean, var = conjugate_gaussian_posterior(0.0, 1.0, 0.25, 1.0)
    assert var == pytest.approx(0.2)
    assert mean == pytest.approx(0.8)
    means, _ = conjugate_gaussian_posterior(0.0, 1.0, 0.25, np.array([-1.0, 2.0]))
    np.testing.assert_allclose(means, [-0.8, 1.6])
    with pytest.raises(OracleError):
        conjugate_gaussian_posterior(0.0, 0.0, 0.25, 1.0)


def test_linear_gaussian_posterior_matches_affine_form():
    oracle = LinearGaussianOracle("z", "x", prior_mu=0.5, prior_var=2.0, weight=-1.5, bias=0.3, noise_var=0.4)
    slope, intercept, std = oracle.posterior_affine()
    for x in (-2.0, 0.0, 1.7):
        mean, var = oracle.posterior(x)
        assert mean == pytest.approx(slope * x + intercept)
        assert math.sqrt(var) == pytest.approx(std)
    expected = linear_gaussian_posterior(0.5, 2.0, -1.5, 0.3, 0.4, 1.7)
    assert oracle.posterior(1.7) == pytest.approx(expected)


def test_linear_gaussian_log_evidence_and_sampling(rng):
    oracle = LinearGaussianOracle("z", "x", prior_mu=0.0, prior_var=1.0, weight=1.0, bias=0.0, noise_var=0.25)
    assert oracle.log_evidence(0.7) == pytest.approx(norm.logpdf(0.7, 0.0, math.sqrt(1.25)))
    draws = oracle.sample_posterior(1.0, 20000, rng)
    assert draws.mean() == pytest.approx(0.8, abs=0.02)
    assert draws.var() == pytest.approx(0.2, abs=0.02)
    data = oracle.sample_data(20000, rng)
    assert data.var() == pytest.approx(1.25, abs=0.05)


def test_oracle_reads_the_model_parameters(lingauss_spec, rng):
    model = _compiled(lingauss_spec)
    theta = model.init_theta(rng)
    theta["theta.x.W"] = np.array([[2.0]])
    oracle = LinearGaussianOracle.from_model(model, theta)
    assert (oracle.latent, oracle.observed) == ("z", "x")
    assert oracle.weight == 2.0
    assert oracle.noise_var == pytest.approx(0.25)


def test_oracle_rejects_other_structures(chain_spec, rng):
    model = _compiled(chain_spec)
    with pytest.raises(OracleError):
        LinearGaussianOracle.from_model(model, model.init_theta(rng))


# ------------------------------------------------------------------
# QUADRATURE
# ------------------------------------------------------------------
def test_quadrature_kl_of_shifted_gaussians():
    grid = gaussian_grid([0.0, 1.0], [1.0, 1.0])
    result = numeric_divergence(gaussian_density(0.0, 1.0), gaussian_density(1.0, 1.0), "kl", grid)
    assert result.value == pytest.approx(0.5, abs=1e-6)
    assert result.warning == ""
    assert float(result) == result.value
    assert gaussian_kl(0.0, 1.0, 1.0, 1.0) == pytest.approx(0.5)


def test_quadrature_agrees_with_closed_form_kl():
    grid = gaussian_grid([0.3, -0.5], [0.5, 1.5])
    result = numeric_divergence(gaussian_density(0.3, 0.5), gaussian_density(-0.5, 1.5), "KL", grid)
    assert result.value == pytest.approx(gaussian_kl(0.3, 0.25, -0.5, 2.25), abs=1e-6)


def test_quadrature_jsd_is_symmetric_and_bounded():
    p, q = gaussian_density(0.0, 1.0), gaussian_density(2.0, 0.5)
    grid = gaussian_grid([0.0, 2.0], [1.0, 0.5])
    forward = numeric_divergence(p, q, "jsd", grid).value
    backward = numeric_divergence(q, p, "jsd", grid).value
    assert forward == pytest.approx(backward, abs=1e-9)
    assert 0.0 < forward < LOG2


def test_quadrature_flags_disjoint_support_and_bad_input():
    grid = np.linspace(-1.0, 1.0, 101)
    uniform = lambda x: np.full_like(x, 0.5)
    right_half = lambda x: np.where(x > 0, 1.0, 0.0)
    assert numeric_divergence(uniform, right_half, "kl", grid).value == INFINITE_DIVERGENCE
    with pytest.raises(OracleError):
        numeric_divergence(uniform, uniform, "tv", grid)
    with pytest.raises(OracleError):
        numeric_divergence(uniform, uniform, "kl", np.array([0.0, 1.0]))


def test_coarse_grid_carries_a_warning():
    grid = np.linspace(-3.0, 3.0, 5)
    result = numeric_divergence(gaussian_density(0.0, 0.1), gaussian_density(0.5, 0.1), "kl", grid)
    assert "too coarse" in result.warning


def test_two_dimensional_quadrature():
    def density(mean):
        return lambda t: norm.pdf(t[:, 0], mean[0], 1.0) * norm.pdf(t[:, 1], mean[1], 1.0)

    grid_x, grid_y = default_2d_grid([(0.0, 0.0), (1.0, 1.0)], [(1.0, 1.0), (1.0, 1.0)])
    result = numeric_divergence_2d(density((0.0, 0.0)), density((1.0, 1.0)), "kl", grid_x, grid_y)
    assert result.value == pytest.approx(1.0, abs=1e-4)


def test_discrete_divergences():
    p = np.array([0.5, 0.5, 0.0])
    q = np.array([0.25, 0.25, 0.5])
    assert discrete_kl(p, q) == pytest.approx(LOG2)
    assert discrete_kl(q, p) == INFINITE_DIVERGENCE
    assert discrete_jsd(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == pytest.approx(LOG2)
    assert discrete_jsd(p, p) == 0.0
    with pytest.raises(OracleError):
        discrete_kl(p, q[:2])


# ------------------------------------------------------------------
# ENUMERATION
# ------------------------------------------------------------------
def test_enumeration_reproduces_the_initial_tables(discrete_spec, rng):
    model = _compiled(discrete_spec)
    enumeration = enumerate_model(model.graph, model.init_theta(rng))
    assert enumeration.names == ("z", "x1", "x2")
    assert enumeration.joint.sum() == pytest.approx(1.0)
    np.testing.assert_allclose(enumeration.marginal(["z"]), [0.5, 0.3, 0.2])
    np.testing.assert_allclose(
        enumeration.conditional("x1", ["z"]),
        [[0.8, 0.1, 0.1], [0.1, 0.8, 0.1], [0.1, 0.1, 0.8]],
        atol=1e-12,
    )


def test_enumeration_posterior_and_evidence(discrete_spec, rng):
    model = _compiled(discrete_spec)
    enumeration = enumerate_model(model.graph, model.init_theta(rng))
    configs = list_observed_states(enumeration, ["x1", "x2"])
    assert len(configs) == 9
    evidences = [enumeration.log_evidence(c) for c in configs]
    assert logsumexp(evidences) == pytest.approx(0.0, abs=1e-12)

    config = {"x1": 0, "x2": 0}
    posterior = enumeration.posterior(config)
    assert posterior.sum() == pytest.approx(1.0)
    assert posterior.argmax() == 0
    assert exact_elbo(enumeration, config, posterior) == pytest.approx(enumeration.log_evidence(config))
    assert exact_elbo(enumeration, config, np.full(3, 1.0 / 3.0)) < enumeration.log_evidence(config)
    with pytest.raises(OracleError):
        exact_elbo(enumeration, config, np.ones(2) / 2)


def test_enumeration_refuses_large_or_continuous_models(discrete_spec, lingauss_spec, rng):
    model = _compiled(discrete_spec)
    assert joint_size(model.graph) == 27
    with pytest.raises(OracleError) as info:
        enumerate_model(model.graph, model.init_theta(rng), limit=10)
    assert "27" in str(info.value)
    continuous = _compiled(lingauss_spec)
    with pytest.raises(OracleError):
        enumerate_model(continuous.graph, continuous.init_theta(rng))


def test_local_divergence_vanishes_only_at_matching_factors(rng):
    for _ in range(100):
        graph = _ternary_dag(rng, int(rng.integers(1, 5)))
        names = graph.topological_order
        p_tables = _shaped(graph, random_tables(graph, rng))
        p = joint_from_tables(graph, p_tables)
        assert p.sum() == pytest.approx(1.0)
        same, _ = exact_local_divergence(graph, names, p, p)
        assert same == pytest.approx(0.0, abs=1e-12)

        changed = names[int(rng.integers(len(names)))]
        q_tables = dict(p_tables)
        q_tables[changed] = _shaped(graph, random_tables(graph, rng))[changed]
        q = joint_from_tables(graph, q_tables)
        total, terms = exact_local_divergence(graph, names, p, q)
        assert set(terms) == set(local_adversary_factors(graph))
        assert all(-1e-12 <= t <= LOG2 + 1e-12 for t in terms.values())
        assert total > 1e-10, (names, changed)


def test_single_adversary_divergence_is_the_joint_jsd(rng):
    lone = GraphBuilder("lone").variable("x", support="categorical", cardinality=3)
    lone = lone.factor("x", (), FamilySpec(source="table")).build()
    pair = (
        GraphBuilder("pair")
        .variable("z", support="categorical", cardinality=3)
        .variable("x", role="observed", support="categorical", cardinality=3)
        .factor("z", (), FamilySpec(source="table"))
        .factor("x", ("z",), FamilySpec(source="table"))
        .build()
    )
    for graph in (lone, pair):
        assert local_adversary_factors(graph) == ["x"]
        names = graph.topological_order
        for _ in range(20):
            p = joint_from_tables(graph, _shaped(graph, random_tables(graph, rng)))
            q = joint_from_tables(graph, _shaped(graph, random_tables(graph, rng)))
            total, _ = exact_local_divergence(graph, names, p, q)
            jsd = entropy(0.5 * (p + q).ravel()) - 0.5 * (entropy(p.ravel()) + entropy(q.ravel()))
            assert total == pytest.approx(jsd, abs=1e-9)
            assert total == pytest.approx(discrete_jsd(p, q), abs=1e-12)


def test_exact_elbo_never_exceeds_the_log_evidence(rng):
    for _ in range(100):
        graph = _ternary_dag(rng, int(rng.integers(2, 5)))
        names = graph.topological_order
        joint = joint_from_tables(graph, _shaped(graph, random_tables(graph, rng)))
        enumeration = Enumeration(tuple(names), {n: np.eye(3) for n in names}, np.log(joint))
        count = int(rng.integers(1, len(names)))
        observed = [str(n) for n in rng.choice(names, size=count, replace=False)]
        config = {n: int(rng.integers(3)) for n in observed}
        evidence = enumeration.log_evidence(config)

        latents = len(names) - count
        q = rng.dirichlet(np.ones(3 ** latents)).reshape((3,) * latents)
        assert exact_elbo(enumeration, config, q) - evidence <= 1e-9
        tight = exact_elbo(enumeration, config, enumeration.posterior(config))
        assert tight == pytest.approx(evidence, abs=1e-9)


def test_conditional_tables_recover_the_factors(discrete_spec):
    graph = _compiled(discrete_spec).graph
    names = graph.topological_order
    tables = {}
    for name, flat in random_tables(graph, np.random.default_rng(5)).items():
        shape = tuple(3 for _ in graph.parents(name)) + (3,)
        tables[name] = np.asarray(flat).reshape(shape)
    joint = joint_from_tables(graph, tables)
    recovered = conditional_tables(graph, names, joint, {n: graph.parents(n) for n in names})
    for name in names:
        np.testing.assert_allclose(recovered[name], tables[name], atol=1e-12)


# ------------------------------------------------------------------
# REPORTS
# ------------------------------------------------------------------
def test_conjugate_report_with_the_exact_posterior(lingauss_spec, rng):
    model = _compiled(lingauss_spec)
    theta = model.init_theta(rng)
    slope, intercept, std = LinearGaussianOracle.from_model(model, theta).posterior_affine()
    phi = model.init_phi(rng)
    phi["phi.z.W"] = np.array([[slope]])
    phi["phi.z.b"] = np.array([intercept])
    phi["phi.z.log_scale"] = np.array([math.log(std)])

    report = posterior_recovery_report(model, theta, phi, OracleSpec("conjugate"), samples=2000, rng=rng)
    assert report.kind == "conjugate"
    assert list(report.rows["x"]) == [-2.0, -1.0, 0.0, 1.0, 2.0]
    assert report.summary["kl_max"] < 1e-4
    assert report.summary["mean_error_max"] < 0.06
    assert report.summary["std_error_max"] < 0.05
    assert set(report.to_dict()) == {"kind", "summary", "notes", "rows"}

    hook = oracle_hook(OracleSpec("conjugate"))

    class _State:
        pass

    state = _State()
    state.theta, state.phi = theta, phi
    assert hook(model, state)["kl_max"] < 1e-9


def test_enumerable_report(discrete_spec, rng):
    model = _compiled(discrete_spec)
    report = posterior_recovery_report(
        model, model.init_theta(rng), model.init_phi(rng), OracleSpec("enumerable"), samples=500, rng=rng,
    )
    assert len(report.rows) == 9
    assert report.summary["kl_mean"] >= 0.0
    assert 0.0 <= report.summary["total_variation_max"] <= 1.0


def test_report_needs_a_registered_oracle(lingauss_spec, rng):
    model = _compiled(lingauss_spec)
    with pytest.raises(OracleError):
        posterior_recovery_report(model, model.init_theta(rng), model.init_phi(rng), None)
    with pytest.raises(OracleError):
        OracleSpec("bootstrap")
