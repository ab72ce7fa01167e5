"""
Training loop, masks, metrics, checkpoints and exact descent
"""

import math

import numpy as np
import pytest

from cli.datasets import toy_dataset
from cli.spec_parser import load_spec
from core.errors import (
    CheckpointCorruptError, CheckpointFormatError, ConfigurationError, MaskError, OracleError,
)
from graph.families import CompiledModel
from graph.inverse import derive_inverse_factorization
from graph.model_graph import FamilySpec, GraphBuilder
from objectives.variants import ObjectiveVariant
from oracle.conjugate import LinearGaussianOracle
from oracle.report import OracleSpec, oracle_hook
from trainer.admp import AdmpTrainer, admp_train, prepare_dataset
from trainer.checkpoint import (
    check_shapes, checkpoint_load, checkpoint_save, decode_checkpoint, encode_checkpoint, read_checkpoint,
)
from trainer.exact import ExactLocalDescent
from trainer.masking import InverseCache, apply_mask, mask_for_batch
from trainer.metrics import MetricsSink, last_value, metrics_history, read_metrics
from trainer.state import ObservationMask, TrainConfig, parse_mask_policy


def _loaded(path, size=256):
    spec = load_spec(path)
    graph = spec.graph
    inverse = derive_inverse_factorization(graph)
    options = spec.dataset.options if spec.dataset else {}
    name = spec.dataset.name if spec.dataset else "model"
    data = toy_dataset(name, graph, inverse.observed, options, size)
    return graph, inverse, data


def _config(**overrides):
    values = dict(iterations=3, minibatch=16, particles_k=16, lr_theta=1e-2, lr_phi=1e-2, lr_xi=1e-2,
                  seed=3, metrics_every=1)
    values.update(overrides)
    return TrainConfig(**values)


def _all_finite(state):
    return all(np.all(np.isfinite(v)) for group in ("theta", "phi", "xi") for v in state.group(group).values())


# ------------------------------------------------------------------
# CONFIGURATION
# ------------------------------------------------------------------
def test_mask_policy_parsing():
    assert parse_mask_policy("full") == ("full", 0.0)
    assert parse_mask_policy("missing") == ("missing", 0.0)
    assert parse_mask_policy("drop:0.25") == ("drop", 0.25)
    for bad in ("drop:1.0", "drop:x", "full:0.1", "sometimes"):
        with pytest.raises(ConfigurationError):
            parse_mask_policy(bad)


def test_train_config_validation():
    for field, value in (("minibatch", 0), ("particles_l", 0), ("n_d", 0), ("iterations", -1)):
        with pytest.raises(ConfigurationError):
            TrainConfig(**{field: value})
    with pytest.raises(ConfigurationError):
        TrainConfig(optimizer="rmsprop")
    with pytest.raises(ConfigurationError):
        TrainConfig(variant="wasserstein")


def test_train_config_round_trip_and_hash():
    config = _config(variant="admp-kl-tractable", mask_policy="full")
    assert config.variant is ObjectiveVariant.ADMP_KL_TRACTABLE
    restored = TrainConfig.from_dict({**config.to_dict(), "unknown": 1})
    assert restored == config
    assert config.config_hash() == _config(variant="admp-kl-tractable", seed=99).config_hash()
    assert config.config_hash() != _config(variant="admp-kl-tractable", minibatch=8).config_hash()
    assert config.config_hash(exclude_seed=False) != _config(variant="admp-kl-tractable", seed=99).config_hash(
        exclude_seed=False
    )


# ------------------------------------------------------------------
# MASKS
# ------------------------------------------------------------------
def test_observation_mask_rejects_empty_rows():
    with pytest.raises(MaskError):
        ObservationMask(("a", "b"), np.array([[True, False], [False, False]]))
    mask = ObservationMask(("a", "b"), np.array([[True, False], [False, False]]), allow_empty=True)
    assert mask.observed_in(0) == ("a",)
    assert mask.observed_in(1) == ()
    with pytest.raises(MaskError):
        ObservationMask(("a", "b"), np.ones((2, 3), dtype=bool))


def test_mask_patterns_group_rows():
    mask = ObservationMask(("a", "b"), np.array([[True, True], [True, False], [True, True]]))
    patterns = mask.patterns()
    assert list(patterns) == [(True, True), (True, False)]
    np.testing.assert_array_equal(patterns[(True, True)], [0, 2])


def test_full_policy_refuses_missing_values(rng):
    batch = {"x1": np.array([[1.0], [np.nan]]), "x2": np.zeros((2, 1))}
    with pytest.raises(MaskError):
        mask_for_batch("full", ("x1", "x2"), batch, rng)


def test_missing_policy_masks_nan_rows(rng):
    batch = {"x1": np.array([[1.0], [np.nan], [np.nan]]), "x2": np.array([[2.0], [3.0], [np.nan]])}
    mask, cleaned = mask_for_batch("missing", ("x1", "x2"), batch, rng)
    np.testing.assert_array_equal(mask.present, [[True, True], [False, True], [False, False]])
    assert not np.isnan(cleaned["x1"]).any()
    assert cleaned["x1"][1, 0] == 0.0


def test_drop_policy_keeps_one_variable_per_row(rng):
    batch = {f"x{i}": rng.normal(size=(500, 1)) for i in range(3)}
    mask, _ = mask_for_batch("drop:0.6", ("x0", "x1", "x2"), batch, rng)
    assert mask.present.any(axis=1).all()
    assert 0.25 < 1.0 - mask.present.mean() < 0.6


def test_apply_mask_derives_and_caches(chain_spec):
    graph = load_spec(chain_spec).graph.with_roles(["z1", "x"])
    base = derive_inverse_factorization(graph)
    cache = InverseCache(graph, base)
    assert apply_mask(cache, ("z1", "x"), (True, True)) is base
    partial = apply_mask(cache, ("z1", "x"), (False, True))
    assert partial.observed == ("x",)
    assert apply_mask(cache, ("z1", "x"), (False, True)) is partial
    assert len(cache) == 2
    with pytest.raises(MaskError):
        apply_mask(cache, ("z1", "x"), (False, False))
    assert apply_mask(cache, ("z1", "x"), (False, False), allow_unobserved=True).observed == ()


# ------------------------------------------------------------------
# TRAINING LOOP
# ------------------------------------------------------------------
@pytest.mark.parametrize("variant", [v.value for v in ObjectiveVariant])
def test_every_variant_trains_on_the_linear_gaussian_model(lingauss_spec, variant):
    graph, inverse, data = _loaded(lingauss_spec)
    result = admp_train(graph, inverse, _config(variant=variant), data)
    assert result.state.step == 3
    assert [row["step"] for row in result.metrics] == [1, 2, 3]
    assert all(row["variant"] == variant for row in result.metrics)
    assert _all_finite(result.state)


def test_local_jsd_metrics_and_oracle_hook(lingauss_spec):
    graph, inverse, data = _loaded(lingauss_spec)
    hook = oracle_hook(OracleSpec("conjugate"))
    result = admp_train(graph, inverse, _config(), data, oracle=hook, mmd_samples=64)
    row = result.metrics[-1]
    assert set(row["local_jsd"]) == {"x"}
    assert row["div_loc"] == pytest.approx(sum(row["local_jsd"].values()))
    assert set(row["disc_mean"]["x"]) == {"positive", "negative"}
    assert math.isfinite(row["oracle"]["kl_mean"])
    assert math.isfinite(row["mmd"])


def test_zero_iterations_returns_the_initial_state(lingauss_spec):
    graph, inverse, data = _loaded(lingauss_spec)
    trainer = AdmpTrainer(graph, inverse, _config(iterations=0), data)
    initial = trainer.init_state()
    result = trainer.run(initial.copy())
    assert result.metrics == []
    assert result.state.param_hash("theta") == initial.param_hash("theta")
    assert trainer.sink.rows[0]["header"]


def test_same_seed_same_parameters(lingauss_spec):
    graph, inverse, data = _loaded(lingauss_spec)
    first = admp_train(graph, inverse, _config(), data).state
    second = admp_train(graph, inverse, _config(), data).state
    other = admp_train(graph, inverse, _config(seed=4), data).state
    for group in ("theta", "phi", "xi"):
        assert first.param_hash(group) == second.param_hash(group)
    assert first.param_hash("phi") != other.param_hash("phi")


def test_resume_matches_an_uninterrupted_run(lingauss_spec, tmp_path):
    graph, inverse, data = _loaded(lingauss_spec)
    straight = admp_train(graph, inverse, _config(iterations=6), data).state

    half = admp_train(graph, inverse, _config(iterations=3), data).state
    path = checkpoint_save(half, tmp_path / "run.admp", _config(iterations=3))
    loaded, metadata = read_checkpoint(path)
    assert metadata["config"]["iterations"] == 3
    assert loaded.step == 3
    resumed = admp_train(graph, inverse, _config(iterations=6), data, state=loaded).state

    assert resumed.step == 6
    for group in ("theta", "phi", "xi"):
        assert resumed.param_hash(group) == straight.param_hash(group)


def test_masked_local_jsd_on_the_state_space_model(models_dir):
    graph, inverse, data = _loaded(models_dir / "statespace.model", size=200)
    trainer = AdmpTrainer(graph, inverse, _config(iterations=2, mask_policy="drop:0.3"), data)
    result = trainer.run()
    assert result.state.step == 2
    assert _all_finite(result.state)
    assert len(trainer.cache) > 1


def test_variants_that_need_complete_data_reject_masks(lingauss_spec):
    graph, inverse, data = _loaded(lingauss_spec)
    for variant in ("gan", "admp-kl-tractable", "admp-kl-intractable"):
        with pytest.raises(ConfigurationError):
            AdmpTrainer(graph, inverse, _config(variant=variant, mask_policy="missing"), data)


def test_gan_trains_a_discrete_model(discrete_spec):
    graph, inverse, data = _loaded(discrete_spec, size=200)
    before = AdmpTrainer(graph, inverse, _config(variant="gan"), data).init_state()
    result = admp_train(graph, inverse, _config(variant="gan"), data)
    assert result.state.param_hash("theta") != before.param_hash("theta")
    assert all(math.isfinite(row["gan_value"]) for row in result.metrics)


def test_prepare_dataset_checks_columns(lingauss_spec, discrete_spec):
    graph, inverse, _ = _loaded(lingauss_spec)
    with pytest.raises(ConfigurationError):
        prepare_dataset(graph, inverse.observed, {})
    with pytest.raises(ConfigurationError):
        prepare_dataset(graph, inverse.observed, {"x": np.zeros((4, 2))})
    graph, inverse, _ = _loaded(discrete_spec, size=10)
    arrays = prepare_dataset(graph, inverse.observed, {"x1": np.array([0, 2]), "x2": np.array([1, 1])})
    np.testing.assert_array_equal(arrays["x1"], [[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    with pytest.raises(ConfigurationError):
        prepare_dataset(graph, inverse.observed, {"x1": np.array([3]), "x2": np.array([0])})


@pytest.mark.slow
def test_elbo_recovers_the_conjugate_posterior(lingauss_spec):
    graph, inverse, data = _loaded(lingauss_spec, size=2000)
    config = _config(variant="elbo", iterations=500, minibatch=64, metrics_every=100)
    result = admp_train(graph, inverse, config, data)
    model = CompiledModel(graph, inverse)
    slope, intercept, _ = LinearGaussianOracle.from_model(model, result.state.theta).posterior_affine()
    assert result.state.phi["phi.z.W"][0, 0] == pytest.approx(slope, abs=0.2)
    assert result.state.phi["phi.z.b"][0] == pytest.approx(intercept, abs=0.2)


# ------------------------------------------------------------------
# METRICS
# ------------------------------------------------------------------
def test_metrics_file_round_trip(tmp_path):
    path = tmp_path / "metrics.jsonl"
    with MetricsSink(path) as sink:
        sink.header(variant="admp-jsdloc", seed=0)
        sink.write({"step": 2, "div_loc": np.float64(0.25), "disc_mean": {"x": {"positive": 0.6}}})
        sink.write({"step": 1, "div_loc": float("nan")})
    rows = read_metrics(path)
    assert rows[0]["header"]
    history = metrics_history(rows)
    assert list(history["step"]) == [1, 2]
    assert "disc_mean.x.positive" in history.columns
    assert math.isnan(history["div_loc"].iloc[0])
    assert last_value(rows, "div_loc") == pytest.approx(0.25)
    assert math.isnan(last_value(rows, "missing.key"))


def test_metrics_sink_appends_on_resume(tmp_path):
    path = tmp_path / "metrics.jsonl"
    with MetricsSink(path) as sink:
        sink.write({"step": 1})
    with MetricsSink(path, append=True) as sink:
        sink.write({"step": 2})
    assert [r["step"] for r in read_metrics(path)] == [1, 2]


# ------------------------------------------------------------------
# CHECKPOINTS
# ------------------------------------------------------------------
def _small_state(lingauss_spec, iterations=1):
    graph, inverse, data = _loaded(lingauss_spec, size=64)
    return admp_train(graph, inverse, _config(iterations=iterations), data).state


def test_checkpoint_bytes_decode_bitwise(lingauss_spec):
    state = _small_state(lingauss_spec)
    decoded, metadata = decode_checkpoint(encode_checkpoint(state, extra={"note": "x"}))
    assert metadata["extra"] == {"note": "x"}
    assert decoded.step == state.step
    for group in ("theta", "phi", "xi"):
        assert decoded.param_hash(group) == state.param_hash(group)
    assert decoded.rng.bit_generator.state == state.rng.bit_generator.state
    for key, opt in state.optimizers.items():
        assert decoded.optimizers[key].t == opt.t
        for name, values in opt.m.items():
            np.testing.assert_array_equal(decoded.optimizers[key].m[name], values)


def test_corrupt_checkpoints_are_detected(lingauss_spec, tmp_path):
    blob = encode_checkpoint(_small_state(lingauss_spec))
    with pytest.raises(CheckpointFormatError):
        decode_checkpoint(b"NOPE" + blob[4:])
    flipped = bytearray(blob)
    flipped[len(blob) // 2] ^= 0xFF
    with pytest.raises(CheckpointCorruptError):
        decode_checkpoint(bytes(flipped))
    with pytest.raises(CheckpointCorruptError):
        decode_checkpoint(blob[:-10])
    with pytest.raises(CheckpointFormatError):
        checkpoint_load(tmp_path / "absent.admp")


def test_check_shapes_lists_offending_parameters(lingauss_spec):
    state = _small_state(lingauss_spec)
    other = state.copy()
    other.phi["phi.z.W"] = np.zeros((2, 1))
    other.theta["theta.extra"] = np.zeros(1)
    check_shapes(state.copy(), state)
    with pytest.raises(ConfigurationError) as info:
        check_shapes(other, state)
    assert "phi.z.W" in str(info.value)
    assert "theta.extra (unexpected)" in str(info.value)


# ------------------------------------------------------------------
# EXACT DESCENT
# ------------------------------------------------------------------
def _binary_chain():
    return (
        GraphBuilder("discrete")
        .variable("z", support="categorical", cardinality=3)
        .variable("x", role="observed", support="binary")
        .factor("z", (), FamilySpec(source="table"))
        .factor("x", ("z",), FamilySpec(source="table"))
        .build()
    )


def test_exact_descent_lowers_the_local_divergence(rng):
    descent = ExactLocalDescent(_binary_chain(), np.array([0.3, 0.7]), lr=0.1)
    params = descent.init_params(rng, scale=1.0)
    _, trace = descent.run(params, steps=30)
    assert len(trace) == 31
    assert all(value >= -1e-12 for value in trace)
    assert trace[-1] < trace[0]


def test_exact_descent_optimal_discriminators_are_bounded(rng):
    descent = ExactLocalDescent(_binary_chain(), np.array([0.5, 0.5]))
    params = descent.init_params(rng)
    for table in descent.discriminators(params).values():
        assert np.all((table >= 0.0) & (table <= 1.0))
    # at D* the fixed-discriminator loss equals Div_loc - log 2 per adversary
    loss = descent.loss_locM(params, descent.discriminators(params))
    assert loss == pytest.approx(descent.divergence(params) - len(descent.factors) * math.log(2.0))


def test_exact_descent_checks_the_data_table():
    with pytest.raises(OracleError):
        ExactLocalDescent(_binary_chain(), np.array([0.2, 0.3, 0.5]))
    with pytest.raises(OracleError):
        ExactLocalDescent(_binary_chain(), np.array([0.2, 0.3]))
