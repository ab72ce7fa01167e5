"""
Exact local-divergence descent on enumerable discrete models

Generative and inference conditionals are free logit tables. Each step
refreshes the Bayes-optimal discriminators from the current tables and
takes a plain gradient step on L_locM with those discriminators fixed.
"""

from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np
from scipy.special import softmax, xlogy

from config.settings import GRADCHECK_STEP
from core.errors import OracleError
from core.gradcheck import finite_diff_grad
from graph.inverse import InverseFactorization, derive_inverse_factorization
from graph.model_graph import ModelGraph
from objectives.variants import local_adversary_factors
from oracle.enumeration import broadcast_table, exact_local_divergence, marginalize, variable_states
from utils.logging_utils import get_logger

logger = get_logger(__name__)

Params = Dict[str, np.ndarray]


class ExactLocalDescent:
    """
    Args:
        graph: all-discrete model graph
        data: p*(x) over the observed variables, axes in topological order
        inverse: inverse factorization (derived when omitted)
        lr: gradient step size
        h: finite-difference step for the fixed-discriminator gradient
    """

    def __init__(self, graph: ModelGraph, data: np.ndarray, inverse: Optional[InverseFactorization] = None,
                 lr: float = 1e-3, h: float = GRADCHECK_STEP):
        self.graph = graph
        self.inverse = inverse or derive_inverse_factorization(graph)
        self.names = tuple(graph.topological_order)
        self.counts = {n: len(variable_states(graph.variable(n))) for n in self.names}
        self.observed = [n for n in self.names if n in self.inverse.observed]
        expected = tuple(self.counts[n] for n in self.observed)
        data = np.asarray(data, dtype=np.float64)
        if data.shape != expected:
            raise OracleError(f"data table has shape {data.shape}, observed variables need {expected}")
        if abs(data.sum() - 1.0) > 1e-12:
            raise OracleError(f"data table sums to {data.sum()!r}, not 1")
        self.data = data
        self.factors = local_adversary_factors(graph)
        self.lr = lr
        self.h = h

    # --- tables ---
    def _table_shape(self, child: str, given) -> Tuple[int, ...]:
        return tuple(self.counts[g] for g in given) + (self.counts[child],)

    def init_params(self, rng: np.random.Generator, scale: float = 0.5) -> Params:
        params: Params = {}
        for name in self.names:
            params[f"theta.{name}"] = scale * rng.standard_normal(self._table_shape(name, self.graph.parents(name)))
        for name in self.inverse.order:
            params[f"phi.{name}"] = scale * rng.standard_normal(
                self._table_shape(name, self.inverse.conditioning[name])
            )
        return params

    def _product(self, joint: np.ndarray, params: Mapping[str, np.ndarray], group: str, structure) -> np.ndarray:
        for name, given in structure:
            table = softmax(params[f"{group}.{name}"], axis=-1)
            axes = [self.names.index(g) for g in given] + [self.names.index(name)]
            joint = joint * broadcast_table(table, axes, len(self.names))
        return joint

    def p_joint(self, params: Mapping[str, np.ndarray]) -> np.ndarray:
        shape = tuple(self.counts[n] for n in self.names)
        structure = [(n, self.graph.parents(n)) for n in self.names]
        return self._product(np.ones(shape), params, "theta", structure)

    def q_joint(self, params: Mapping[str, np.ndarray]) -> np.ndarray:
        """p*(x) times the inverse factors"""
        axes = [self.names.index(n) for n in self.observed]
        base = broadcast_table(self.data, axes, len(self.names)) if axes else np.ones([1] * len(self.names))
        shape = tuple(self.counts[n] for n in self.names)
        joint = np.broadcast_to(base, shape).copy()
        structure = [(n, self.inverse.conditioning[n]) for n in self.inverse.order]
        return self._product(joint, params, "phi", structure)

    # --- objectives ---
    def _marginals(self, params: Mapping[str, np.ndarray]) -> Dict[str, Tuple[np.ndarray, np.ndarray]]:
        p, q = self.p_joint(params), self.q_joint(params)
        out = {}
        for name in self.factors:
            tuple_vars = [name] + list(self.graph.parents(name))
            out[name] = (marginalize(p, self.names, tuple_vars), marginalize(q, self.names, tuple_vars))
        return out

    def discriminators(self, params: Mapping[str, np.ndarray]) -> Dict[str, np.ndarray]:
        """Bayes-optimal D_i = p_i / (p_i + q_i) over each tuple, 1/2 where both vanish"""
        out = {}
        for name, (p, q) in self._marginals(params).items():
            total = p + q
            out[name] = np.divide(p, total, out=np.full_like(p, 0.5), where=total > 0)
        return out

    def loss_locM(self, params: Mapping[str, np.ndarray], discriminators: Mapping[str, np.ndarray]) -> float:
        """1/2 sum q_i log(1 - D_i) + 1/2 sum p_i log D_i, with 0 log 0 = 0"""
        total = 0.0
        for name, (p, q) in self._marginals(params).items():
            d = discriminators[name]
            total += 0.5 * float(np.sum(xlogy(q, 1.0 - d))) + 0.5 * float(np.sum(xlogy(p, d)))
        return total

    def divergence(self, params: Mapping[str, np.ndarray]) -> float:
        return exact_local_divergence(self.graph, self.names, self.p_joint(params), self.q_joint(params),
                                      self.factors)[0]

    # --- descent ---
    def step(self, params: Mapping[str, np.ndarray]) -> Params:
        frozen = self.discriminators(params)
        grads = finite_diff_grad(lambda values: self.loss_locM(values, frozen), params, self.h)
        return {name: params[name] - self.lr * grads[name] for name in params}

    def run(self, params: Mapping[str, np.ndarray], steps: int) -> Tuple[Params, List[float]]:
        """
        Returns:
            (final params, Div_loc before the first step and after every step)
        """
        params = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
        trace = [self.divergence(params)]
        for _ in range(steps):
            params = self.step(params)
            trace.append(self.divergence(params))
        logger.debug("[exact] Div_loc %.6f -> %.6f over %d steps", trace[0], trace[-1], steps)
        return params, trace
