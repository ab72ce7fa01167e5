"""
Factor-wise adversarial training loop

Each iteration draws a minibatch, freezes every noise draw it needs, and then
walks the variant's update units in order. A unit trains its adversaries
for ``n_d`` steps on detached tuples, then takes one generative step and one
inference step with those adversaries held fixed.
"""

from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from adversary.local import LocalAdversary, discriminate, discriminator_accuracy, loss_locD
from core.errors import ConfigurationError, NonFiniteError, TrainingAborted
from core.optim import OptimizerState, optimizer_step
from core.tensor import ComputationRecord, Tensor, backward, concat_rows
from graph.families import CompiledModel
from graph.inverse import InverseFactorization
from graph.model_graph import ModelGraph
from graph.sampling import (
    JointSample,
    NoiseBag,
    ancestral_sample,
    conditional_sample,
    draw_noise,
    inference_sample,
    merge_samples,
)
from objectives.gan import gan_value_from_logits, generator_rows
from objectives.local_jsd import admp_jsd_model_loss, local_terms, score_surrogate
from objectives.mmd import mmd_rbf
from objectives.variants import (
    BOTTOM_UP,
    DATA,
    PRIOR,
    RECONSTRUCTION,
    TOP_DOWN,
    ObjectiveVariant,
    UpdateUnit,
    VariantProgram,
    build_program,
    describe_program,
    slot_widths,
)
from objectives.variational import (
    elbo_rows,
    factor_log_prob,
    kl_intractable_generator_rows,
    kl_intractable_objective,
    kl_tractable_objective,
)
from trainer.masking import InverseCache, apply_mask, mask_for_batch
from trainer.metrics import MetricsSink
from trainer.state import ObservationMask, TrainConfig, TrainState
from utils.logging_utils import get_logger
from utils.rng import derived_rng, make_rng

logger = get_logger(__name__)

Dataset = Mapping[str, np.ndarray]
OracleHook = Callable[[CompiledModel, TrainState], Dict[str, float]]

# variants that cannot run on partially observed data
_FULL_ONLY = (
    ObjectiveVariant.GAN,
    ObjectiveVariant.ADMP_KL_TRACTABLE,
    ObjectiveVariant.ADMP_KL_INTRACTABLE,
)


@dataclass
class Minibatch:
    """Observations, mask groups and the frozen noise of one iteration"""

    observations: Dict[str, np.ndarray]
    mask: ObservationMask
    groups: List[Tuple[InverseFactorization, np.ndarray]]
    evidence_free: int
    noise: Dict[str, NoiseBag]


@dataclass
class Streams:
    joints: Dict[str, JointSample]
    parts: List[Tuple[InverseFactorization, JointSample]] = field(default_factory=list)

    def get(self, name: str) -> Optional[JointSample]:
        return self.joints.get(name)


@dataclass
class TrainResult:
    state: TrainState
    metrics: List[Dict[str, Any]]
    program: VariantProgram
    model: CompiledModel


def prepare_dataset(graph: ModelGraph, observed: Sequence[str], dataset: Dataset) -> Dict[str, np.ndarray]:
    """
    Validate and reshape observations to (N, width) float arrays

    Categorical columns given as indices are expanded to one-hot rows; NaN
    marks a missing cell.

    Raises:
        ConfigurationError: missing variable, width mismatch or ragged rows
    """
    arrays: Dict[str, np.ndarray] = {}
    lengths = set()
    for name in observed:
        if name not in dataset:
            raise ConfigurationError(f"dataset has no column for observed variable '{name}'")
        decl = graph.variable(name)
        data = np.asarray(dataset[name], dtype=np.float64)
        data = data.reshape(len(data), -1) if data.ndim else data.reshape(1, 1)
        if decl.support == "categorical" and data.shape[1] == 1 and decl.width > 1:
            missing = np.isnan(data[:, 0])
            index = np.where(missing, 0, data[:, 0]).astype(np.int64)
            if np.any((index < 0) | (index >= decl.width)):
                raise ConfigurationError(f"'{name}': category index outside [0, {decl.width})")
            onehot = np.eye(decl.width)[index]
            onehot[missing] = np.nan
            data = onehot
        if data.shape[1] != decl.width:
            raise ConfigurationError(f"'{name}' has width {decl.width}, dataset gives {data.shape[1]} columns")
        arrays[name] = data
        lengths.add(len(data))
    if len(lengths) > 1:
        raise ConfigurationError(f"dataset columns have different lengths {sorted(lengths)}")
    if not lengths or 0 in lengths:
        raise ConfigurationError("dataset is empty")
    return arrays


class AdmpTrainer:
    """
    Trains one graph with one variant

    Args:
        graph: validated model graph
        inverse: base inverse factorization (overrides applied)
        config: run configuration
        dataset: observed variable -> (N, width) array, NaN for missing cells
        sink: metrics sink (in-memory rows only when omitted)
        oracle: callback returning ground-truth divergences, run at metric steps
        progress: show a progress bar
        mmd_samples: add an MMD between model and data samples of this size to each metric row
    """

    def __init__(
        self,
        graph: ModelGraph,
        inverse: InverseFactorization,
        config: TrainConfig,
        dataset: Dataset,
        sink: Optional[MetricsSink] = None,
        oracle: Optional[OracleHook] = None,
        progress: bool = False,
        mmd_samples: int = 0,
    ):
        if config.masked and config.variant in _FULL_ONLY:
            raise ConfigurationError(
                f"{config.variant.value} needs fully observed data; use --mask-policy full"
            )
        self.graph = graph
        self.config = config
        self.model = CompiledModel(graph, inverse, masked=config.masked)
        self.program = build_program(config.variant, self.model)
        self.observed = tuple(inverse.observed)
        self.latents = tuple(n for n in graph.topological_order if n not in self.observed)
        self.dataset = prepare_dataset(graph, self.observed, dataset)
        self.size = len(next(iter(self.dataset.values())))
        self.cache = InverseCache(graph, inverse)
        self.adversaries = {
            w.name: LocalAdversary(w.name, w.slots, slot_widths(self.model, w.slots))
            for w in self.program.adversaries
        }
        self.sink = sink if sink is not None else MetricsSink()
        self.oracle = oracle
        self.progress = progress
        self.mmd_samples = mmd_samples
        self._unit_losses: Dict[str, Dict[str, float]] = {}
        self._names: Dict[Tuple[str, str], List[str]] = {}
        self._batch: Optional[Minibatch] = None

    # ------------------------------------------------------------------
    # STATE
    # ------------------------------------------------------------------
    def _optimizer(self, group: str) -> OptimizerState:
        lr = {"theta": self.config.lr_theta, "phi": self.config.lr_phi, "xi": self.config.lr_xi}[group]
        return OptimizerState(lr=lr, kind=self.config.optimizer)

    def init_state(self) -> TrainState:
        """Fresh parameters and optimizers, all drawn from the run seed"""
        rng = make_rng(self.config.seed)
        theta = self.model.init_theta(rng)
        phi = self.model.init_phi(rng) if self.config.variant.uses_phi else {}
        xi: Dict[str, np.ndarray] = {}
        for name in sorted(self.adversaries):
            xi.update(self.adversaries[name].init_params(rng))
        state = TrainState(theta=theta, phi=phi, xi=xi, optimizers={}, step=0, rng=rng)
        for unit in self.program.units:
            if unit.adversaries:
                state.optimizers[f"xi.{unit.name}"] = self._optimizer("xi")
            if self.unit_names(unit, "theta", state):
                state.optimizers[f"theta.{unit.name}"] = self._optimizer("theta")
            if self.unit_names(unit, "phi", state):
                state.optimizers[f"phi.{unit.name}"] = self._optimizer("phi")
        return state

    def unit_names(self, unit: UpdateUnit, group: str, state: TrainState) -> List[str]:
        """Trainable parameter names a unit updates in ``group``"""
        key = (unit.name, group)
        if key not in self._names:
            if group == "theta":
                by_var = self.model.theta_names(state.theta)
                variables = unit.theta_vars
            else:
                by_var = self.model.phi_names(state.phi)
                variables = unit.phi_vars
            self._names[key] = [n for v in variables for n in by_var.get(v, [])]
        return self._names[key]

    # ------------------------------------------------------------------
    # MINIBATCH & STREAMS
    # ------------------------------------------------------------------
    def draw_minibatch(self, rng: np.random.Generator) -> Minibatch:
        """Draw rows, mask them and freeze all noise for the iteration"""
        config = self.config
        index = rng.integers(0, self.size, size=config.minibatch)
        raw = {v: self.dataset[v][index] for v in self.observed}
        mask, observations = mask_for_batch(config.mask_policy, self.observed, raw, rng)

        groups: List[Tuple[InverseFactorization, np.ndarray]] = []
        evidence_free = 0
        for pattern, rows in mask.patterns().items():
            inverse = apply_mask(self.cache, self.observed, pattern, allow_unobserved=True)
            if not inverse.observed:
                evidence_free += len(rows)
                continue
            groups.append((inverse, rows))

        streams = set(self.program.streams)
        families = self.model.generative
        order = self.graph.topological_order
        noise: Dict[str, NoiseBag] = {}
        if TOP_DOWN in streams:
            noise[TOP_DOWN] = draw_noise(families, config.particles_k, rng, order)
        bottom_rows = 0
        if streams & {BOTTOM_UP, PRIOR, RECONSTRUCTION}:
            for i, (inverse, rows) in enumerate(groups):
                count = len(rows) * config.particles_l
                noise[f"{BOTTOM_UP}:{i}"] = draw_noise(self.model.inference, count, rng, inverse.order)
                bottom_rows += count
        if PRIOR in streams:
            noise[PRIOR] = draw_noise(families, bottom_rows, rng, order)
        if RECONSTRUCTION in streams:
            noise[RECONSTRUCTION] = draw_noise(families, bottom_rows, rng, [n for n in order if n in self.observed])
        return Minibatch(observations, mask, groups, evidence_free, noise)

    def build_streams(self, batch: Minibatch, theta: Mapping[str, object], phi: Mapping[str, object]) -> Streams:
        """Sample every stream the variant reads, with the minibatch's frozen noise"""
        config = self.config
        need = set(self.program.streams)
        joints: Dict[str, JointSample] = {}
        parts: List[Tuple[InverseFactorization, JointSample]] = []

        if TOP_DOWN in need:
            joints[TOP_DOWN] = ancestral_sample(
                self.graph, theta, config.particles_k, families=self.model.generative, noise=batch.noise[TOP_DOWN]
            )
        if DATA in need:
            values = {v: Tensor(batch.observations[v]) for v in self.observed}
            joints[DATA] = JointSample(values, batch.mask.batch, DATA)
        if need & {BOTTOM_UP, PRIOR, RECONSTRUCTION}:
            for i, (inverse, rows) in enumerate(batch.groups):
                observations = {v: batch.observations[v][rows] for v in inverse.observed}
                joint = inference_sample(
                    inverse, phi, observations, config.particles_l,
                    networks=self.model.inference, noise=batch.noise[f"{BOTTOM_UP}:{i}"],
                )
                parts.append((inverse, joint))
            joints[BOTTOM_UP] = merge_samples([joint for _, joint in parts], BOTTOM_UP)

        bottom = joints.get(BOTTOM_UP)
        if PRIOR in need:
            if bottom.count:
                prior = ancestral_sample(
                    self.graph, theta, bottom.count, families=self.model.generative, noise=batch.noise[PRIOR]
                )
                values = {n: prior[n] for n in self.latents}
                values.update({n: bottom[n] for n in self.observed})
                joints[PRIOR] = JointSample(values, bottom.count, PRIOR)
            else:
                joints[PRIOR] = JointSample({}, 0, PRIOR)
        if RECONSTRUCTION in need:
            if bottom.count:
                joints[RECONSTRUCTION] = conditional_sample(
                    self.graph, theta, bottom, self.observed,
                    families=self.model.generative, noise=batch.noise[RECONSTRUCTION],
                )
            else:
                joints[RECONSTRUCTION] = JointSample({}, 0, RECONSTRUCTION)
        return Streams(joints, parts)

    # ------------------------------------------------------------------
    # UPDATES
    # ------------------------------------------------------------------
    def adversary_step(self, state: TrainState, unit: UpdateUnit,
                       tuples: Sequence[Tuple[LocalAdversary, np.ndarray, np.ndarray]]) -> Tuple[TrainState, float]:
        """One optimizer step on the summed L_locD of the unit's adversaries"""
        if not tuples:
            return state, float("nan")
        names = [n for adv, _, _ in tuples for n in adv.param_names(state.xi)]
        record = ComputationRecord()
        with record:
            bound = record.bind(state.xi, names)
            loss = None
            for adv, positive, negative in tuples:
                term = loss_locD(adv, bound, positive, negative)
                loss = term if loss is None else loss + term
        grads = record.gradients_by_name(backward(record, loss))
        key = f"xi.{unit.name}"
        xi, optimizer = optimizer_step(state.xi, grads, state.optimizers.get(key) or self._optimizer("xi"))
        optimizers = dict(state.optimizers)
        optimizers[key] = optimizer
        return replace(state, xi=xi, optimizers=optimizers), loss.item()

    def adversary_tuples(self, unit: UpdateUnit, streams: Streams) -> List[Tuple[LocalAdversary, np.ndarray, np.ndarray]]:
        """Detached (label-1, label-0) inputs of the unit's adversaries; empty sides are skipped"""
        tuples = []
        for name in unit.adversaries:
            wiring = self.program.adversary(name)
            positive, negative = streams.get(wiring.positive), streams.get(wiring.negative)
            if positive is None or negative is None or not positive.count or not negative.count:
                continue
            tuples.append((
                self.adversaries[name],
                positive.tuple_for(wiring.slots).numpy(),
                negative.tuple_for(wiring.slots).numpy(),
            ))
        return tuples

    def model_losses(self, streams: Streams, theta: Mapping[str, object], phi: Mapping[str, object],
                     xi: Mapping[str, np.ndarray]) -> Dict[str, Tensor]:
        """group -> loss to minimize; ``xi`` enters as constants"""
        variant = self.config.variant
        ns = self.config.non_saturating
        score = self.config.score_function

        if variant in (ObjectiveVariant.ADMP_JSD_LOC, ObjectiveVariant.GLOBAL_BIADV):
            loss = admp_jsd_model_loss(
                streams.get(BOTTOM_UP), streams.get(TOP_DOWN), self.adversaries, xi,
                factors=[w.name for w in self.program.adversaries], non_saturating=ns, score_function=score,
            )
            return {"theta": loss, "phi": loss}

        if variant is ObjectiveVariant.GAN:
            adversary = self.adversaries["data"]
            top_down = streams.get(TOP_DOWN)
            rows = generator_rows(adversary.logits(xi, top_down.tuple_for(adversary.slots)), ns)
            loss = score_surrogate(rows, list(top_down.log_probs.values())) if score else rows.mean()
            return {"theta": loss}

        bottom = streams.get(BOTTOM_UP)
        if not bottom.count:
            return {}

        if variant is ObjectiveVariant.ELBO:
            rows = concat_rows([
                elbo_rows(self.model, theta, phi, joint, inverse=inverse)
                for inverse, joint in streams.parts if joint.count
            ])
            loss = -rows.mean()
            return {"theta": loss, "phi": loss}

        if variant is ObjectiveVariant.ADMP_KL_TRACTABLE:
            log_likelihood = factor_log_prob(self.model, theta, bottom, self.observed)
            objective = kl_tractable_objective(bottom, self.adversaries["z"], xi, log_likelihood)
            return {"theta": -log_likelihood.mean(), "phi": -objective}

        d_z, d_x = self.adversaries["z"], self.adversaries["x"]
        reconstruction = streams.get(RECONSTRUCTION)
        rows = kl_intractable_generator_rows(reconstruction, d_x, xi)
        theta_loss = score_surrogate(rows, list(reconstruction.log_probs.values())) if score else rows.mean()
        return {"theta": theta_loss, "phi": kl_intractable_objective(bottom, d_z, d_x, xi)}

    def model_step(self, state: TrainState, unit: UpdateUnit, record: ComputationRecord,
                   losses: Mapping[str, Tensor]) -> Tuple[TrainState, Dict[str, float]]:
        """Separate optimizer steps for the unit's theta and phi parameters"""
        computed: Dict[int, Dict[str, np.ndarray]] = {}
        values: Dict[str, float] = {}
        for group in ("theta", "phi"):
            loss = losses.get(group)
            names = self.unit_names(unit, group, state)
            if loss is None or not names:
                continue
            values[group] = loss.item()
            if not np.isfinite(values[group]):
                raise TrainingAborted(state.step, unit.name, f"loss[{group}]")
            if not loss.tracked:
                continue
            if id(loss) not in computed:
                computed[id(loss)] = record.gradients_by_name(backward(record, loss))
            wanted = set(names)
            grads = {n: g for n, g in computed[id(loss)].items() if n in wanted}
            if not all(np.all(np.isfinite(g)) for g in grads.values()):
                raise TrainingAborted(state.step, unit.name, f"backward[{group}]")
            key = f"{group}.{unit.name}"
            params, optimizer = optimizer_step(
                state.group(group), grads, state.optimizers.get(key) or self._optimizer(group)
            )
            optimizers = dict(state.optimizers)
            optimizers[key] = optimizer
            state = replace(state, optimizers=optimizers, **{group: params})
        return state, values

    def step(self, state: TrainState) -> TrainState:
        """One iteration: a minibatch, then every update unit in order"""
        batch = self.draw_minibatch(state.rng)
        for unit in self.program.units:
            state = update_factor(self, state, unit, batch)
        state = replace(state, step=state.step + 1)
        self._batch = batch
        return state

    # ------------------------------------------------------------------
    # METRICS
    # ------------------------------------------------------------------
    def evaluate(self, state: TrainState, batch: Minibatch) -> Dict[str, Any]:
        """Metric row for the current parameters on the minibatch's frozen noise"""
        variant = self.config.variant
        streams = self.build_streams(batch, state.theta, state.phi)
        row: Dict[str, Any] = {
            "step": state.step,
            "variant": variant.value,
            "losses": {k: dict(v) for k, v in self._unit_losses.items()},
        }
        if batch.evidence_free:
            row["evidence_free"] = batch.evidence_free

        disc_mean: Dict[str, Dict[str, float]] = {}
        accuracy: Dict[str, float] = {}
        for wiring in self.program.adversaries:
            adversary = self.adversaries[wiring.name]
            positive, negative = streams.get(wiring.positive), streams.get(wiring.negative)
            entry = {}
            if positive is not None and positive.count:
                entry["positive"] = float(discriminate(adversary, state.xi, positive.tuple_for(wiring.slots)).values.mean())
            if negative is not None and negative.count:
                entry["negative"] = float(discriminate(adversary, state.xi, negative.tuple_for(wiring.slots)).values.mean())
            disc_mean[wiring.name] = entry
            if len(entry) == 2:
                accuracy[wiring.name] = discriminator_accuracy(
                    adversary, state.xi, positive.tuple_for(wiring.slots), negative.tuple_for(wiring.slots)
                )
        if disc_mean:
            row["disc_mean"] = disc_mean
            row["accuracy"] = accuracy

        bottom, top = streams.get(BOTTOM_UP), streams.get(TOP_DOWN)
        if variant in (ObjectiveVariant.ADMP_JSD_LOC, ObjectiveVariant.GLOBAL_BIADV) and bottom.count:
            terms = local_terms(bottom, top, self.adversaries, state.xi)
            row["local_jsd"] = terms
            row["div_loc"] = float(sum(terms.values()))
        elif variant is ObjectiveVariant.GAN:
            adversary = self.adversaries["data"]
            row["gan_value"] = gan_value_from_logits(
                adversary.logits(state.xi, streams.get(DATA).tuple_for(adversary.slots)),
                adversary.logits(state.xi, top.tuple_for(adversary.slots)),
            ).item()
        elif bottom is not None and bottom.count:
            losses = self.model_losses(streams, state.theta, state.phi, state.xi)
            if variant is ObjectiveVariant.ELBO:
                row["elbo"] = -losses["theta"].item()
            elif variant is ObjectiveVariant.ADMP_KL_TRACTABLE:
                row["log_likelihood"] = -losses["theta"].item()
                row["kl_objective"] = -losses["phi"].item()
            else:
                row["kl_joint"] = losses["phi"].item()

        if self.mmd_samples:
            row["mmd"] = self.model_data_mmd(state)
        if self.oracle is not None:
            row["oracle"] = self.oracle(self.model, state)
        return row

    def model_data_mmd(self, state: TrainState) -> float:
        """MMD^2 between model draws and complete data rows of the observed tuple"""
        count = self.mmd_samples
        rng = derived_rng(self.config.seed, state.step)
        sample = ancestral_sample(self.graph, state.theta, count, rng, families=self.model.generative)
        model_rows = sample.tuple_for(self.observed).numpy()
        data_rows = np.concatenate([self.dataset[v] for v in self.observed], axis=1)
        data_rows = data_rows[~np.isnan(data_rows).any(axis=1)][:count]
        return mmd_rbf(model_rows, data_rows)

    # ------------------------------------------------------------------
    # RUN
    # ------------------------------------------------------------------
    def run(self, state: Optional[TrainState] = None,
            on_step: Optional[Callable[[TrainState], None]] = None) -> TrainResult:
        """
        Train until ``state.step == config.iterations``

        A resumed state continues where it stopped. Zero iterations return
        the initial state and no metric rows beyond the header.

        Args:
            state: state to continue from (fresh when omitted)
            on_step: called after every iteration and its metric row, e.g. for checkpoints
        """
        config = self.config
        state = state if state is not None else self.init_state()
        if state.step == 0:
            self.sink.header(
                variant=config.variant.value,
                config_hash=config.config_hash(),
                seed=config.seed,
                adversaries=describe_program(self.program),
                units=[u.name for u in self.program.units],
            )
        logger.info(
            "[trainer] %s: %d adversaries, units %s, step %d/%d",
            config.variant.value, len(self.adversaries),
            [u.name for u in self.program.units], state.step, config.iterations,
        )

        bar = tqdm(total=config.iterations, initial=state.step, disable=not self.progress,
                   desc=f"[train] {config.variant.value}", unit="it")
        try:
            while state.step < config.iterations:
                state = self.step(state)
                bar.update(1)
                if state.step % config.metrics_every == 0 or state.step == config.iterations:
                    row = self.evaluate(state, self._batch)
                    self.sink.write(row)
                    if "div_loc" in row:
                        bar.set_postfix(div_loc=f"{row['div_loc']:.4f}")
                    logger.debug("[trainer] step %d: %s", state.step, row)
                if on_step is not None:
                    on_step(state)
        finally:
            bar.close()
        return TrainResult(state, [r for r in self.sink.rows if not r.get("header")], self.program, self.model)


def update_factor(trainer: AdmpTrainer, state: TrainState, unit: UpdateUnit, batch: Minibatch) -> TrainState:
    """
    One update unit: n_d adversary steps, then theta and phi against the fixed adversaries

    Only the unit's own theta/phi parameters are differentiable leaves; the
    streams are sampled once and reused for both phases.

    Raises:
        TrainingAborted: a loss or gradient became non-finite
    """
    theta_names = trainer.unit_names(unit, "theta", state)
    phi_names = trainer.unit_names(unit, "phi", state)
    record = ComputationRecord()
    try:
        with record:
            theta = record.bind(state.theta, theta_names)
            phi = record.bind(state.phi, phi_names)
            streams = trainer.build_streams(batch, theta, phi)

        values: Dict[str, float] = {}
        tuples = trainer.adversary_tuples(unit, streams)
        for _ in range(trainer.config.n_d):
            state, d_loss = trainer.adversary_step(state, unit, tuples)
            if not np.isnan(d_loss):
                if not np.isfinite(d_loss):
                    raise TrainingAborted(state.step, unit.name, "loss_locD")
                values["adversary"] = d_loss

        if theta_names or phi_names:
            with record:
                losses = trainer.model_losses(streams, theta, phi, state.xi)
            state, model_values = trainer.model_step(state, unit, record, losses)
            values.update(model_values)
    except NonFiniteError as err:
        raise TrainingAborted(state.step, unit.name, err.op) from err

    trainer._unit_losses[unit.name] = values
    return state


def admp_train(
    graph: ModelGraph,
    inverse: InverseFactorization,
    config: TrainConfig,
    dataset: Dataset,
    state: Optional[TrainState] = None,
    sink: Optional[MetricsSink] = None,
    oracle: Optional[OracleHook] = None,
    progress: bool = False,
    mmd_samples: int = 0,
    on_step: Optional[Callable[[TrainState], None]] = None,
) -> TrainResult:
    """Build a trainer and run it; see ``AdmpTrainer``"""
    trainer = AdmpTrainer(graph, inverse, config, dataset, sink=sink, oracle=oracle,
                          progress=progress, mmd_samples=mmd_samples)
    return trainer.run(state, on_step)
