"""
Local JSD model loss

L_locM = 1/2 E_bottom-up[sum_i log(1 - D_i)] + 1/2 E_top-down[sum_i log D_i]

With Bayes-optimal D_i every adversary contributes JSD_i - log 2, so
Div_loc = L_locM + (number of adversaries) * log 2 is non-negative.
Discriminators enter as constants.
"""

import math
from typing import Dict, Iterable, Mapping, Optional, Sequence

import numpy as np

from core.errors import ConfigurationError
from core.tensor import Tensor
from adversary.local import ratio_log
from graph.sampling import JointSample

LOG2 = math.log(2.0)


def score_surrogate(rows: Tensor, log_probs: Sequence[Tensor]) -> Tensor:
    """
    mean(rows) whose gradient also carries the score-function term

    The value is unchanged; the gradient adds mean(stop(w - mean w) * grad log p)
    for the discrete draws whose log-probabilities are given.
    """
    value = rows.mean()
    tracked = [lp for lp in log_probs if lp.tracked]
    if not tracked:
        return value
    log_p = tracked[0]
    for lp in tracked[1:]:
        log_p = log_p + lp
    weights = rows.values - rows.values.mean()
    extra = (Tensor(weights) * log_p).mean()
    return value + (extra - extra.values)


def jsd_rows(adversaries: Mapping[str, object], xi: Mapping[str, object], joint: JointSample,
             side: str, non_saturating: bool = False) -> Tensor:
    """
    Per-row sum over adversaries of the half-weighted local terms

    side='top_down' gives 1/2 log D (or -1/2 log(1-D) when non-saturating);
    side='bottom_up' gives 1/2 log(1-D) (or -1/2 log D).
    """
    if side == "top_down":
        direction, sign = ("q_over_m", -0.5) if non_saturating else ("p_over_m", 0.5)
    else:
        direction, sign = ("p_over_m", -0.5) if non_saturating else ("q_over_m", 0.5)
    total: Optional[Tensor] = None
    for adv in adversaries.values():
        term = ratio_log(adv, xi, joint.tuple_for(adv.slots), direction)
        total = term if total is None else total + term
    return sign * total


def admp_jsd_model_loss(
    bottom_up: JointSample,
    top_down: JointSample,
    adversaries: Mapping[str, object],
    xi: Mapping[str, object],
    factors: Optional[Iterable[str]] = None,
    non_saturating: bool = False,
    score_function: bool = True,
) -> Tensor:
    """
    Monte-Carlo L_locM, equal-weight means per chain

    Args:
        bottom_up, top_down: the two chains (an empty bottom-up chain contributes nothing)
        adversaries: factor -> adversary (anything with ``slots`` and ``logits``)
        xi: adversary parameters, used as constants
        factors: factors that must each have an adversary
        non_saturating: use the flipped-label generator terms
        score_function: add the score-function term for discrete top-down draws

    Raises:
        ConfigurationError: a required factor has no adversary
    """
    if factors is not None:
        missing = [f for f in factors if f not in adversaries]
        if missing:
            raise ConfigurationError(f"no adversary for factor(s) {missing}")
    if not adversaries:
        raise ConfigurationError("local JSD loss needs at least one adversary")

    total = Tensor(0.0)
    if bottom_up.count:
        total = total + jsd_rows(adversaries, xi, bottom_up, "bottom_up", non_saturating).mean()
    if top_down.count:
        rows = jsd_rows(adversaries, xi, top_down, "top_down", non_saturating)
        if score_function:
            total = total + score_surrogate(rows, list(top_down.log_probs.values()))
        else:
            total = total + rows.mean()
    return total


def local_terms(bottom_up: JointSample, top_down: JointSample, adversaries: Mapping[str, object],
                xi: Mapping[str, object]) -> Dict[str, float]:
    """Per-adversary local JSD estimate 1/2 E_bu log(1-D) + 1/2 E_td log D + log 2"""
    terms = {}
    for name, adv in adversaries.items():
        value = LOG2
        if bottom_up.count:
            value += 0.5 * float(np.mean(ratio_log(adv, xi, bottom_up.tuple_for(adv.slots).detach(), "q_over_m").values))
        if top_down.count:
            value += 0.5 * float(np.mean(ratio_log(adv, xi, top_down.tuple_for(adv.slots).detach(), "p_over_m").values))
        terms[name] = value
    return terms


def local_divergence(bottom_up: JointSample, top_down: JointSample, adversaries: Mapping[str, object],
                     xi: Mapping[str, object]) -> float:
    """Div_loc estimate: L_locM + n log 2"""
    return float(sum(local_terms(bottom_up, top_down, adversaries, xi).values()))
