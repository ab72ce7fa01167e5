"""
Subcommands: train, eval, graph, gradcheck, compare

Each ``cmd_*`` takes the parsed argparse namespace and returns an exit code;
engine errors propagate to ``cli.main`` which maps them to exit codes.
"""

import json
import subprocess
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from adversary.local import LocalAdversary, loss_locD
from cli.datasets import load_csv, toy_dataset
from cli.plots import plot_metrics, plot_posterior
from cli.spec_parser import ModelSpec, load_spec, parse_spec
from config.settings import (
    BASE_DIR,
    CHECKPOINT_SUFFIX,
    COMPARE_MMD_SAMPLES,
    GRADCHECK_STEP,
    GRADCHECK_TOLERANCE,
    MANIFEST_FILE,
    METRICS_FILE,
    PLOT_SAMPLES,
    REPORT_FILE,
    REPORT_SAMPLES,
    RUNS_DIR,
    get_thread_limit,
)
from core.errors import AdmpError, ConfigurationError, OracleError
from core.gradcheck import autodiff_grad, finite_diff_grad, relative_error
from core.tensor import Tensor
from graph.families import CompiledModel
from graph.inverse import InverseFactorization, derive_inverse_factorization, verify_inverse
from graph.model_graph import ModelGraph, to_dot
from graph.sampling import ancestral_sample, inference_sample
from objectives.mmd import mmd_rbf
from objectives.variants import ObjectiveVariant, build_program, slot_widths
from oracle.conjugate import LinearGaussianOracle
from oracle.quadrature import gaussian_density, gaussian_grid
from oracle.report import oracle_hook, posterior_recovery_report
from trainer.admp import AdmpTrainer
from trainer.checkpoint import check_shapes, checkpoint_save, read_checkpoint
from trainer.metrics import MetricsSink, last_value
from trainer.state import TrainConfig, TrainState
from utils.logging_utils import get_logger
from utils.rng import make_rng

logger = get_logger(__name__)

Dataset = Dict[str, np.ndarray]
FIG1_VARIANTS = ("gan", "global-biadv", "admp-jsdloc", "admp-kl-tractable")


# ------------------------------------------------------------------
# SHARED PLUMBING
# ------------------------------------------------------------------
def parse_list(text: Optional[str]) -> Optional[List[str]]:
    """'a,b' -> ['a', 'b']; None stays None, '' is the empty list"""
    if text is None:
        return None
    return [item.strip() for item in text.split(",") if item.strip()]


def build_id() -> str:
    """git-describe of the source tree, 'unversioned' outside a repository"""
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=BASE_DIR, capture_output=True, text=True, timeout=5, check=True,
        )
    except (OSError, subprocess.SubprocessError):
        return "unversioned"
    return out.stdout.strip() or "unversioned"


@dataclass
class LoadedModel:
    spec: ModelSpec
    graph: ModelGraph
    inverse: InverseFactorization

    @property
    def observed(self) -> Tuple[str, ...]:
        return tuple(self.inverse.observed)


def prepare_model(spec: ModelSpec, observed: Optional[Sequence[str]] = None) -> LoadedModel:
    """Apply an observed-set override and derive the inverse factorization"""
    graph = spec.graph if observed is None else spec.graph.with_roles(observed)
    return LoadedModel(spec, graph, derive_inverse_factorization(graph))


def load_model(path, observed: Optional[str] = None) -> LoadedModel:
    return prepare_model(load_spec(path), parse_list(observed))


def data_source(loaded: LoadedModel, data_path: Optional[str] = None, size: Optional[int] = None) -> Dict[str, Any]:
    """Where training data comes from, in manifest form"""
    if data_path:
        return {"csv": str(data_path)}
    dataset = loaded.spec.dataset
    if dataset is None:
        return {"dataset": "model", "options": {}, "size": size}
    return {"dataset": dataset.name, "options": dataset.options, "size": size}


def load_data(loaded: LoadedModel, source: Mapping[str, Any]) -> Dataset:
    if "csv" in source:
        return load_csv(source["csv"], loaded.graph, loaded.observed)
    return toy_dataset(source["dataset"], loaded.graph, loaded.observed, source.get("options"), source.get("size"))


def config_from_args(args, **overrides) -> TrainConfig:
    """TrainConfig from CLI flags; flags left unset keep the defaults"""
    mapping = {
        "variant": "variant", "iterations": "iters", "seed": "seed", "minibatch": "minibatch",
        "particles_l": "particles_l", "particles_k": "particles_k", "n_d": "nd",
        "lr_theta": "lr_theta", "lr_phi": "lr_phi", "lr_xi": "lr_xi",
        "mask_policy": "mask_policy", "optimizer": "optimizer", "metrics_every": "metrics_every",
    }
    values = {}
    for key, flag in mapping.items():
        value = getattr(args, flag, None)
        if value is not None:
            values[key] = value
    if getattr(args, "non_saturating", False):
        values["non_saturating"] = True
    values.update(overrides)
    return TrainConfig(**values)


def _json_default(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"{type(value).__name__} is not JSON serializable")


def write_json(path: Path, payload: Mapping[str, Any]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n", encoding="utf-8")
    return path


def expected_state(model: CompiledModel, config: TrainConfig) -> TrainState:
    """Freshly initialized parameters in the layout a trainer for ``config`` would use"""
    rng = make_rng(config.seed)
    theta = model.init_theta(rng)
    phi = model.init_phi(rng) if config.variant.uses_phi else {}
    program = build_program(config.variant, model)
    xi: Dict[str, np.ndarray] = {}
    for wiring in sorted(program.adversaries, key=lambda w: w.name):
        xi.update(LocalAdversary(wiring.name, wiring.slots, slot_widths(model, wiring.slots)).init_params(rng))
    return TrainState(theta=theta, phi=phi, xi=xi, rng=rng)


# ------------------------------------------------------------------
# RUN MANIFEST
# ------------------------------------------------------------------
@dataclass
class RunManifest:
    """Everything needed to repeat a training run"""

    spec_path: str
    spec_text: str
    config: Dict[str, Any]
    out_dir: str
    build_id: str
    observed: List[str]
    data: Dict[str, Any]
    mmd_samples: int = 0
    checkpoint_every: int = 0
    created: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat(timespec="seconds"))

    def write(self, path: Path) -> Path:
        return write_json(path, asdict(self))

    @classmethod
    def read(cls, path) -> "RunManifest":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read manifest {path}: {exc}") from None
        return cls(**data)


# ------------------------------------------------------------------
# TRAIN
# ------------------------------------------------------------------
def train_run(manifest: RunManifest, resume: Optional[str] = None, progress: bool = False,
              write_manifest: bool = True) -> Tuple[TrainState, List[Dict[str, Any]]]:
    """
    Run (or continue) the training a manifest describes, writing its artifacts

    Returns:
        (final state, metric rows of this invocation)
    """
    spec = parse_spec(manifest.spec_text, manifest.spec_path)
    loaded = prepare_model(spec, manifest.observed)
    config = TrainConfig.from_dict(manifest.config)
    data = load_data(loaded, manifest.data)
    out = Path(manifest.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if write_manifest:
        manifest.write(out / MANIFEST_FILE)

    hook = oracle_hook(spec.oracle) if spec.oracle is not None else None
    extra = {"spec_path": manifest.spec_path, "observed": list(loaded.observed)}
    state = None
    if resume:
        state, _ = read_checkpoint(resume)
        logger.info("[cli] resuming %s at step %d", resume, state.step)

    def on_step(current: TrainState) -> None:
        every = manifest.checkpoint_every
        if every and current.step % every == 0 and current.step < config.iterations:
            checkpoint_save(current, out / f"step-{current.step:07d}{CHECKPOINT_SUFFIX}", config, extra)

    with MetricsSink(out / METRICS_FILE, append=state is not None) as sink:
        trainer = AdmpTrainer(loaded.graph, loaded.inverse, config, data, sink=sink, oracle=hook,
                              progress=progress, mmd_samples=manifest.mmd_samples)
        if state is not None:
            check_shapes(state, trainer.init_state())
        result = trainer.run(state, on_step)
    checkpoint_save(result.state, out / f"final{CHECKPOINT_SUFFIX}", config, extra)
    return result.state, result.metrics


def cmd_train(args) -> int:
    if args.manifest:
        manifest = RunManifest.read(args.manifest)
        if args.out:
            manifest.out_dir = str(args.out)
    else:
        if not args.spec:
            raise ConfigurationError("train needs --spec (or --manifest)")
        spec_path = str(args.spec)
        spec_text = Path(spec_path).read_text(encoding="utf-8")
        loaded = prepare_model(parse_spec(spec_text, spec_path), parse_list(args.observed))
        config = config_from_args(args)
        out = args.out or RUNS_DIR / f"{loaded.graph.name}-{config.variant.value}-s{config.seed}"
        manifest = RunManifest(
            spec_path=spec_path,
            spec_text=spec_text,
            config=config.to_dict(),
            out_dir=str(out),
            build_id=build_id(),
            observed=list(loaded.observed),
            data=data_source(loaded, args.data, args.data_size),
            mmd_samples=args.mmd_samples,
            checkpoint_every=args.checkpoint_every,
        )

    state, rows = train_run(manifest, resume=args.resume, progress=not args.quiet, write_manifest=not args.resume)
    out = Path(manifest.out_dir)
    if args.plot and rows:
        keys = ["div_loc", "elbo", "log_likelihood", "gan_value", "kl_joint", "mmd", "oracle.kl_mean"]
        plot_metrics(rows, keys, out / "metrics.png")
    print(f"trained {state.step} iterations -> {out}")
    if rows:
        final = rows[-1]
        shown = {k: final[k] for k in ("div_loc", "elbo", "gan_value", "log_likelihood", "kl_joint", "mmd", "oracle")
                 if k in final}
        if shown:
            print(json.dumps(shown, sort_keys=True, default=_json_default))
    return 0


# ------------------------------------------------------------------
# EVAL
# ------------------------------------------------------------------
def conjugate_plot_frame(model: CompiledModel, theta, phi, grid: Sequence[float], samples: int,
                         rng: np.random.Generator, points: int = 201) -> pd.DataFrame:
    """Long-format oracle density and learned-q histogram density per grid observation"""
    oracle = LinearGaussianOracle.from_model(model, theta)
    rows = []
    for x in grid:
        mean, var = oracle.posterior(float(x))
        std = float(np.sqrt(var))
        z_grid = gaussian_grid([mean], [std], points=points, span=4.0)
        for z, density in zip(z_grid, gaussian_density(mean, std)(z_grid)):
            rows.append({"x": float(x), "series": "oracle", "z": float(z), "density": float(density)})
        joint = inference_sample(model.inverse, phi, {oracle.observed: np.array([[float(x)]])}, samples, rng,
                                 model.inference)
        draws = joint[oracle.latent].values.reshape(-1)
        edges = np.linspace(z_grid[0], z_grid[-1], 41)
        hist, _ = np.histogram(draws, bins=edges, density=True)
        for z, density in zip(0.5 * (edges[1:] + edges[:-1]), hist):
            rows.append({"x": float(x), "series": "learned", "z": float(z), "density": float(density)})
    return pd.DataFrame(rows)


def sample_frame(loaded: LoadedModel, theta, data: Dataset, count: int, rng: np.random.Generator) -> pd.DataFrame:
    """Observed columns of model samples and data rows, tagged by series"""
    sample = ancestral_sample(loaded.graph, theta, count, rng)
    frames = []
    for series, values in (("model", {n: sample[n].numpy() for n in loaded.observed}),
                           ("data", {n: data[n][:count] for n in loaded.observed})):
        columns = {}
        for name in loaded.observed:
            block = values[name]
            for j in range(block.shape[1]):
                columns[f"{name}_{j}" if block.shape[1] > 1 else name] = block[:, j]
        frame = pd.DataFrame(columns)
        frame.insert(0, "series", series)
        frames.append(frame)
    return pd.concat(frames, ignore_index=True)


def evaluate_checkpoint(checkpoint: str, loaded: LoadedModel, out: Path, samples: int = REPORT_SAMPLES,
                        data_source_spec: Optional[Mapping[str, Any]] = None, plot: bool = False) -> Dict[str, Any]:
    """
    Posterior-recovery report, model/data MMD and plot data for one checkpoint

    Raises:
        ConfigurationError: the checkpoint does not match the model file (offending parameters listed)
    """
    state, metadata = read_checkpoint(checkpoint)
    config = TrainConfig.from_dict(metadata["config"]) if metadata.get("config") else TrainConfig()
    model = CompiledModel(loaded.graph, loaded.inverse, masked=config.masked)
    check_shapes(state, expected_state(model, config))

    rng = make_rng(config.seed)
    report: Dict[str, Any] = {
        "checkpoint": str(checkpoint),
        "spec": loaded.spec.path,
        "step": state.step,
        "variant": config.variant.value,
        "observed": list(loaded.observed),
    }
    out.mkdir(parents=True, exist_ok=True)
    oracle = loaded.spec.oracle
    if oracle is not None and state.phi:
        posterior = posterior_recovery_report(model, state.theta, state.phi, oracle, samples, rng)
        report["posterior"] = posterior.to_dict()
        posterior.rows.to_csv(out / "posterior.csv", index=False)
        if oracle.kind == "conjugate":
            frame = conjugate_plot_frame(model, state.theta, state.phi, oracle.grid, min(samples, PLOT_SAMPLES), rng)
            frame.to_csv(out / "posterior_plot.csv", index=False)
            if plot:
                plot_posterior(frame, out / "posterior.png")
    elif oracle is None:
        report["notes"] = ["no oracle registered in the model file; posterior recovery skipped"]
    else:
        report["notes"] = [f"variant {config.variant.value} trains no inference networks; posterior recovery skipped"]

    data = load_data(loaded, data_source_spec or data_source(loaded))
    samples_frame = sample_frame(loaded, state.theta, data, PLOT_SAMPLES, rng)
    samples_frame.to_csv(out / "samples.csv", index=False)
    model_rows = samples_frame[samples_frame["series"] == "model"].drop(columns="series").to_numpy(dtype=np.float64)
    data_rows = samples_frame[samples_frame["series"] == "data"].drop(columns="series").to_numpy(dtype=np.float64)
    data_rows = data_rows[~np.isnan(data_rows).any(axis=1)]
    report["mmd"] = mmd_rbf(model_rows, data_rows) if len(data_rows) else None
    write_json(out / REPORT_FILE, report)
    return report


def cmd_eval(args) -> int:
    loaded = load_model(args.spec, args.observed)
    out = Path(args.out or Path(args.checkpoint).parent)
    source = data_source(loaded, args.data, args.data_size)
    report = evaluate_checkpoint(args.checkpoint, loaded, out, args.samples, source, args.plot)
    summary = report.get("posterior", {}).get("summary", {})
    print(f"report -> {out / REPORT_FILE}")
    print(json.dumps({"mmd": report["mmd"], **summary}, sort_keys=True, default=_json_default))
    return 0


# ------------------------------------------------------------------
# GRAPH
# ------------------------------------------------------------------
def describe_graph(loaded: LoadedModel) -> str:
    graph, inverse = loaded.graph, loaded.inverse
    lines = [
        f"model {graph.name}: {len(graph.names)} variables, observed "
        + (", ".join(inverse.observed) or "none"),
        "",
        "inverse factorization: " + (inverse.describe() or "(no latents)"),
    ]
    if inverse.order:
        table = pd.DataFrame(inverse.table(), columns=["latent", "conditioning", "network"])
        lines += ["", table.to_string(index=False)]
    failures = verify_inverse(graph, inverse)
    lines += ["", "d-separation check: " + ("ok" if not failures else "FAILED for " + ", ".join(failures))]
    for warning in inverse.warnings:
        lines.append(f"warning: {warning}")
    return "\n".join(lines)


def cmd_graph(args) -> int:
    loaded = load_model(args.spec, args.observed)
    print(describe_graph(loaded))
    dot = to_dot(loaded.graph, loaded.inverse)
    if args.dot:
        Path(args.dot).write_text(dot, encoding="utf-8")
        print(f"\ndot -> {args.dot}")
    else:
        print()
        print(dot, end="")
    return 0


# ------------------------------------------------------------------
# GRADCHECK
# ------------------------------------------------------------------
def _check_group(group: str, builder: Callable[[Mapping[str, object]], Tensor], params: Mapping[str, np.ndarray],
                 names: Sequence[str], corrupt: Optional[str], h: float, tolerance: float) -> Dict[str, Any]:
    if not names:
        return {"group": group, "parameters": 0, "max_error": None, "worst": "", "status": "n/a"}
    analytic = autodiff_grad(builder, params, names)
    if group == corrupt:
        analytic = {k: -v for k, v in analytic.items()}

    def loss_fn(values: Dict[str, np.ndarray]) -> float:
        return builder({k: Tensor(v, name=k) for k, v in values.items()}).item()

    numeric = finite_diff_grad(loss_fn, params, h, names)
    errors = {n: relative_error(analytic.get(n, np.zeros_like(numeric[n])), numeric[n]) for n in names}
    worst = max(errors, key=errors.get)
    return {
        "group": group,
        "parameters": int(sum(np.size(params[n]) for n in names)),
        "max_error": errors[worst],
        "worst": worst,
        "status": "pass" if errors[worst] < tolerance else "FAIL",
    }


def run_gradcheck(loaded: LoadedModel, config: TrainConfig, data: Dataset, corrupt: Optional[str] = None,
                  h: float = GRADCHECK_STEP, tolerance: float = GRADCHECK_TOLERANCE) -> pd.DataFrame:
    """
    Finite differences against backward() on one frozen minibatch, per parameter group

    Score-function terms are switched off: their gradient has no finite-difference counterpart.

    Args:
        corrupt: group whose analytic gradient is sign-flipped (negative control)

    Returns:
        one row per group (theta, phi, xi): parameters, max_error, worst parameter, status
    """
    config = replace(config, score_function=False)
    trainer = AdmpTrainer(loaded.graph, loaded.inverse, config, data)
    state = trainer.init_state()
    batch = trainer.draw_minibatch(state.rng)

    def model_builder(group: str):
        def build(bound: Mapping[str, object]) -> Tensor:
            theta = bound if group == "theta" else state.theta
            phi = bound if group == "phi" else state.phi
            streams = trainer.build_streams(batch, theta, phi)
            losses = trainer.model_losses(streams, theta, phi, state.xi)
            if group not in losses:
                raise ConfigurationError(f"variant {config.variant.value} has no {group} loss on this batch")
            return losses[group]
        return build

    streams = trainer.build_streams(batch, state.theta, state.phi)
    tuples = {}
    for unit in trainer.program.units:
        for adversary, positive, negative in trainer.adversary_tuples(unit, streams):
            tuples[adversary.name] = (adversary, positive, negative)

    def xi_builder(bound: Mapping[str, object]) -> Tensor:
        loss = None
        for adversary, positive, negative in tuples.values():
            term = loss_locD(adversary, bound, positive, negative)
            loss = term if loss is None else loss + term
        return loss

    theta_names = [n for names in trainer.model.theta_names(state.theta).values() for n in names]
    phi_names = [n for names in trainer.model.phi_names(state.phi).values() for n in names] if state.phi else []
    xi_names = [n for adv, _, _ in tuples.values() for n in adv.param_names(state.xi)]
    rows = [
        _check_group("theta", model_builder("theta"), state.theta, theta_names, corrupt, h, tolerance),
        _check_group("phi", model_builder("phi"), state.phi, phi_names, corrupt, h, tolerance),
        _check_group("xi", xi_builder, state.xi, xi_names, corrupt, h, tolerance),
    ]
    return pd.DataFrame(rows)


def cmd_gradcheck(args) -> int:
    loaded = load_model(args.spec, args.observed)
    config = config_from_args(
        args,
        minibatch=args.minibatch or 8,
        particles_k=args.particles_k or 8,
        particles_l=args.particles_l or 1,
    )
    data = load_data(loaded, data_source(loaded, args.data, args.data_size or 256))
    table = run_gradcheck(loaded, config, data, corrupt=args.corrupt_group)
    print(table.to_string(index=False, na_rep="n/a"))
    failed = table[table["status"] == "FAIL"]["group"].tolist()
    if failed:
        logger.error("[gradcheck] relative error above %.0e in: %s", GRADCHECK_TOLERANCE, ", ".join(failed))
        return 1
    return 0


# ------------------------------------------------------------------
# COMPARE
# ------------------------------------------------------------------
def compare_cell(loaded: LoadedModel, data: Dataset, config: TrainConfig,
                 mmd_samples: int = COMPARE_MMD_SAMPLES) -> Dict[str, Any]:
    """Train one variant x seed cell and summarize it; incompatible variants come back skipped"""
    row: Dict[str, Any] = {
        "variant": config.variant.value,
        "seed": config.seed,
        "config_hash": config.config_hash(),
    }
    started = time.perf_counter()
    try:
        trainer = AdmpTrainer(loaded.graph, loaded.inverse, config, data, mmd_samples=mmd_samples)
    except ConfigurationError as exc:
        logger.warning("[compare] skipping %s: %s", config.variant.value, exc)
        return {**row, "status": "skipped", "note": str(exc)}
    result = trainer.run()
    row["wall_time"] = time.perf_counter() - started
    row["status"] = "ok"
    row["mmd"] = trainer.model_data_mmd(result.state)
    row["div_loc"] = last_value(result.metrics, "div_loc")
    oracle = loaded.spec.oracle
    if oracle is not None and result.state.phi:
        try:
            report = posterior_recovery_report(result.model, result.state.theta, result.state.phi, oracle,
                                               samples=PLOT_SAMPLES, rng=make_rng(config.seed))
            row["oracle_kl"] = report.summary.get("kl_mean")
        except OracleError as exc:
            row["note"] = str(exc)
    return row


def run_compare(loaded: LoadedModel, data: Dataset, base: TrainConfig, variants: Sequence[str],
                seeds: Sequence[int], workers: Optional[int] = None) -> pd.DataFrame:
    """
    Every variant x seed cell on worker threads; rows in (variant, seed) order

    Each cell owns its trainer and state; results are merged here.
    """
    cells = [replace(base, variant=ObjectiveVariant.parse(v), seed=s) for v in variants for s in seeds]
    workers = max(1, min(workers or get_thread_limit(), len(cells)))
    logger.info("[compare] %d cells on %d worker(s)", len(cells), workers)
    rows: Dict[int, Dict[str, Any]] = {}
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = {pool.submit(compare_cell, loaded, data, config): i for i, config in enumerate(cells)}
        for future in as_completed(futures):
            index = futures[future]
            try:
                rows[index] = future.result()
            except AdmpError as exc:
                config = cells[index]
                logger.error("[compare] %s seed %d failed: %s", config.variant.value, config.seed, exc)
                rows[index] = {"variant": config.variant.value, "seed": config.seed,
                               "config_hash": config.config_hash(), "status": "failed", "note": str(exc)}
    columns = ["variant", "seed", "status", "oracle_kl", "mmd", "div_loc", "wall_time", "config_hash", "note"]
    return pd.DataFrame([rows[i] for i in range(len(cells))]).reindex(columns=columns)


def cmd_compare(args) -> int:
    loaded = load_model(args.spec, args.observed)
    variants = parse_list(args.variants) or list(FIG1_VARIANTS)
    for name in variants:
        ObjectiveVariant.parse(name)
    seeds = [int(s) for s in parse_list(args.seeds) or ["0"]]
    base = config_from_args(args, variant=variants[0])
    data = load_data(loaded, data_source(loaded, args.data, args.data_size))
    table = run_compare(loaded, data, base, variants, seeds)
    out = Path(args.out or RUNS_DIR / f"{loaded.graph.name}-compare")
    out.mkdir(parents=True, exist_ok=True)
    table.to_csv(out / "compare.csv", index=False)
    print(table.to_string(index=False, na_rep="-"))
    print(f"\ntable -> {out / 'compare.csv'}")
    return 0
