"""A/B-test estimators: difference in means and its regression-adjusted form."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .data import Dataset, EstimateResult, RewardModel
from .errors import (
    ActionAwareModelRejected,
    EmptyInput,
    InsufficientData,
    InvalidRecord,
    ZeroVarianceOutcome,
    ZeroVariancePredictor,
)


class SampleKind(str, Enum):
    RAW = "Raw"
    ADJUSTED = "Adjusted"


@dataclass(frozen=True, eq=False)
class AdjustedSample:
    """Outcomes of one arm, either raw ``y`` or residuals ``y - f(x)``."""

    values: np.ndarray
    label: SampleKind = SampleKind.RAW

    def __post_init__(self) -> None:
        v = np.array(self.values, dtype=float).ravel()
        if not np.all(np.isfinite(v)):
            raise InvalidRecord("sample values must be finite")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @classmethod
    def raw(cls, d: Dataset) -> "AdjustedSample":
        return cls(d.reward, SampleKind.RAW)

    @classmethod
    def adjusted(cls, d: Dataset, f: RewardModel) -> "AdjustedSample":
        if not f.action_agnostic:
            raise ActionAwareModelRejected("regression adjustment needs an action-agnostic f(x)")
        return cls(d.reward - f.predict(d), SampleKind.ADJUSTED)

    def __len__(self) -> int:
        return self.values.size


def sample_mean(values: Sequence[float] | np.ndarray) -> float:
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise EmptyInput("mean of an empty sample")
    return float(np.mean(v))


def sample_variance(values: Sequence[float] | np.ndarray, dof_loss: int = 1) -> float:
    """Sum of squared deviations divided by ``n - dof_loss``.

    ``dof_loss=1`` is Bessel's correction for one estimated mean.  Use
    ``dof_loss=2`` when the quantity was centred using two estimated means,
    e.g. an IPS-weighted outcome with a data-driven baseline.
    """
    v = np.asarray(values, dtype=float)
    if dof_loss < 0:
        raise ValueError("dof_loss must be non-negative")
    if v.size <= dof_loss:
        raise InsufficientData(f"need more than {dof_loss} values, got {v.size}")
    dev = v - np.mean(v)
    return float(np.dot(dev, dev) / (v.size - dof_loss))


def _difference_in_means(t: AdjustedSample, c: AdjustedSample, ci_level: float) -> EstimateResult:
    if len(t) < 2 or len(c) < 2:
        raise InsufficientData(f"each arm needs >= 2 records, got {len(t)} and {len(c)}")
    point = sample_mean(t.values) - sample_mean(c.values)
    var = sample_variance(t.values, 1) / len(t) + sample_variance(c.values, 1) / len(c)
    return EstimateResult.build(point, var, dof_loss=2, n_used=len(t) + len(c), ci_level=ci_level)


def dim_estimate(d_t: Dataset, d_c: Dataset, ci_level: float = 0.95) -> EstimateResult:
    """Difference in arm means with the usual two-sample variance.

    Each arm gets its own Bessel correction, so two degrees of freedom are
    consumed in total.
    """
    return _difference_in_means(AdjustedSample.raw(d_t), AdjustedSample.raw(d_c), ci_level)


def radim_estimate(
    d_t: Dataset, d_c: Dataset, f: RewardModel, ci_level: float = 0.95
) -> EstimateResult:
    """Difference in means of the residuals ``y - f(x)``.

    ``f`` is used as given; see :func:`fit_scaling_coefficient` for the
    variance-optimal rescaling.
    """
    return _difference_in_means(
        AdjustedSample.adjusted(d_t, f), AdjustedSample.adjusted(d_c, f), ci_level
    )


def _paired(y, fx) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=float)
    fx = np.asarray(fx, dtype=float)
    if y.shape != fx.shape or y.ndim != 1:
        raise ValueError("y and fx must be 1-D arrays of equal length")
    if y.size < 2:
        raise InsufficientData("need at least 2 paired observations")
    return y, fx


def fit_scaling_coefficient(y, fx) -> float:
    """theta = Cov(y, fx) / Var(fx), the multiplier of f minimising Var(y - theta*f)."""
    y, fx = _paired(y, fx)
    if np.ptp(fx) == 0:
        raise ZeroVariancePredictor("predictions are constant")
    fc = fx - fx.mean()
    return float(np.dot(y - y.mean(), fc) / np.dot(fc, fc))


def residual_variance_ratio(y, fx) -> float:
    """Var(y - theta*fx) / Var(y) for the optimal theta; equals 1 - corr(y, fx)**2."""
    y, fx = _paired(y, fx)
    if np.ptp(y) == 0:
        raise ZeroVarianceOutcome("outcomes are constant")
    theta = fit_scaling_coefficient(y, fx)
    return sample_variance(y - theta * fx) / sample_variance(y)
