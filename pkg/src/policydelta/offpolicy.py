"""Counterfactual estimators on logged data.

All estimators reduce a per-record contribution ``z_i`` to its mean and report
``sum((z_i - mean)**2) / ((n - dof_loss) * n)`` as the variance of that mean.
"""

from __future__ import annotations

import warnings

import numpy as np

from .data import Dataset, EstimateResult, Framing, PolicyTable, RewardModel
from .errors import (
    DegenerateWeights,
    InsufficientData,
    UnknownActionSet,
    WrongFraming,
    ZeroPropensity,
)


def delta_weight(pi: PolicyTable, pi_prime: PolicyTable, pi0_propensity, context, action):
    """(pi(a|x) - pi'(a|x)) / pi_0(a|x); scalars or matching arrays."""
    p0 = np.asarray(pi0_propensity, dtype=float)
    if np.any(p0 <= 0):
        raise ZeroPropensity("logging propensity must be positive")
    w = (np.asarray(pi.prob(context, action)) - np.asarray(pi_prime.prob(context, action))) / p0
    return float(w) if np.ndim(w) == 0 else w


def _check_policies(d: Dataset, *policies: PolicyTable) -> None:
    if d.framing is not Framing.OPE:
        raise WrongFraming("off-policy estimators need OPE-framed data; see ab_to_ope")
    if np.any(d.propensity <= 0):
        raise ZeroPropensity("logging propensity must be positive")
    for pi in policies:
        if d.action_count is None or pi.n_actions != d.action_count:
            raise UnknownActionSet(
                f"policy covers {pi.n_actions} actions, dataset declares {d.action_count}"
            )
        if pi.n_contexts > 1 and d.context_id.max() >= pi.n_contexts:
            raise UnknownActionSet(
                f"policy has {pi.n_contexts} context rows, data uses context {int(d.context_id.max())}"
            )


def clip_weights(w: np.ndarray, max_weight: float | None) -> np.ndarray:
    """Cap |w| at ``max_weight``.  Introduces bias; never used by default."""
    if max_weight is None:
        return w
    warnings.warn("weight clipping biases the estimate", stacklevel=3)
    return np.clip(w, -max_weight, max_weight)


def delta_weights(
    d: Dataset, pi: PolicyTable, pi_prime: PolicyTable, max_weight: float | None = None
) -> np.ndarray:
    _check_policies(d, pi, pi_prime)
    w = delta_weight(pi, pi_prime, d.propensity, d.context_id, d.action)
    return clip_weights(np.asarray(w, dtype=float), max_weight)


def weighted_residuals(w: np.ndarray, y: np.ndarray, baseline: float | np.ndarray = 0.0) -> np.ndarray:
    """Per-sample contributions z_i = w_i * (y_i - b_i)."""
    return w * (y - baseline)


def _mean_estimate(z: np.ndarray, dof_loss: int, ci_level: float) -> EstimateResult:
    n = z.size
    if dof_loss < 1:
        raise ValueError("dof_loss must be >= 1")
    if n <= dof_loss:
        raise InsufficientData(f"need more than {dof_loss} records, got {n}")
    point = float(np.mean(z))
    dev = z - point
    var = float(np.dot(dev, dev)) / ((n - dof_loss) * n)
    return EstimateResult.build(point, var, dof_loss=dof_loss, n_used=n, ci_level=ci_level)


def delta_ips_estimate(
    d: Dataset, pi: PolicyTable, pi_prime: PolicyTable, ci_level: float = 0.95,
    *, max_weight: float | None = None,
) -> EstimateResult:
    """Single-pass IPS estimate of V(pi) - V(pi')."""
    w = delta_weights(d, pi, pi_prime, max_weight)
    return _mean_estimate(weighted_residuals(w, d.reward), 1, ci_level)


def estimate_beta_star(
    d: Dataset, pi: PolicyTable, pi_prime: PolicyTable, *, max_weight: float | None = None
) -> float:
    """Plug-in variance-minimising baseline sum(w^2 y) / sum(w^2)."""
    w2 = delta_weights(d, pi, pi_prime, max_weight) ** 2
    denom = float(np.sum(w2))
    if denom == 0.0:
        raise DegenerateWeights("all importance weights are zero")
    return float(np.dot(w2, d.reward)) / denom


def delta_beta_ips_estimate(
    d: Dataset, pi: PolicyTable, pi_prime: PolicyTable, beta: float, dof_loss: int = 2,
    ci_level: float = 0.95, *, max_weight: float | None = None,
) -> EstimateResult:
    """IPS difference estimate with an additive baseline ``beta``.

    Use ``dof_loss=2`` when ``beta`` was estimated on ``d`` itself and 1 when
    it is a fixed external constant.
    """
    if len(d) <= dof_loss:
        raise InsufficientData(f"need more than {dof_loss} records, got {len(d)}")
    w = delta_weights(d, pi, pi_prime, max_weight)
    return _mean_estimate(weighted_residuals(w, d.reward, beta), dof_loss, ci_level)


def _model_expectation(d: Dataset, policy_rows: np.ndarray, f: RewardModel) -> np.ndarray:
    """sum_a rows[i, a] * f(x_i, a) for every record."""
    total = np.zeros(len(d))
    for a in range(policy_rows.shape[1]):
        total += policy_rows[:, a] * f.predict(d, np.full(len(d), a))
    return total


def dr_terms(
    d: Dataset, pi: PolicyTable, f: RewardModel, *, max_weight: float | None = None
) -> np.ndarray:
    _check_policies(d, pi)
    w = clip_weights(np.asarray(pi.prob(d.context_id, d.action), dtype=float) / d.propensity, max_weight)
    rows = pi.rows_for(d.context_id)
    return w * (d.reward - f.predict(d)) + _model_expectation(d, rows, f)


def dr_estimate(
    d: Dataset, pi: PolicyTable, f: RewardModel, ci_level: float = 0.95,
    *, max_weight: float | None = None,
) -> EstimateResult:
    """Doubly robust estimate of the single policy value V(pi)."""
    return _mean_estimate(dr_terms(d, pi, f, max_weight=max_weight), 1, ci_level)


def delta_dr_terms(
    d: Dataset, pi: PolicyTable, pi_prime: PolicyTable, f: RewardModel,
    *, max_weight: float | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-record (weighted residual, model correction) of the DR difference.

    For an action-agnostic f the correction is f(x) * (1 - 1) and is returned
    as exact zeros rather than summed.
    """
    w = delta_weights(d, pi, pi_prime, max_weight)
    residual = weighted_residuals(w, d.reward, f.predict(d))
    if f.action_agnostic:
        correction = np.zeros(len(d))
    else:
        diff = pi.rows_for(d.context_id) - pi_prime.rows_for(d.context_id)
        correction = _model_expectation(d, diff, f)
    return residual, correction


def delta_dr_estimate(
    d: Dataset, pi: PolicyTable, pi_prime: PolicyTable, f: RewardModel, dof_loss: int = 1,
    ci_level: float = 0.95, *, max_weight: float | None = None,
) -> EstimateResult:
    """Doubly robust estimate of V(pi) - V(pi')."""
    residual, correction = delta_dr_terms(d, pi, pi_prime, f, max_weight=max_weight)
    return _mean_estimate(residual + correction, dof_loss, ci_level)


def bessel_factor(n: int) -> float:
    """(n - 1) / (n - 2): ratio between the dof_loss=2 and dof_loss=1 variances."""
    if n < 3:
        raise InsufficientData(f"bessel_factor needs n >= 3, got {n}")
    return (n - 1) / (n - 2)
