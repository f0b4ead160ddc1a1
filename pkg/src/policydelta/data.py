"""Shared data model: logged records, datasets, policies, reward models, results.

Datasets are stored column-wise as read-only numpy arrays so that the
estimators stay vectorised; :class:`LoggedRecord` is the row view used for
ingestion and serialisation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from statistics import NormalDist
from typing import TYPE_CHECKING, Any, Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    ActionOutOfRange,
    EmptyArm,
    EmptyDataset,
    InvalidPolicy,
    InvalidRecord,
    NonFiniteExpectedReward,
    NonFinitePropensity,
    UnknownArmLabel,
    WrongFraming,
)

if TYPE_CHECKING:
    from .synth import SyntheticConfig

ROW_SUM_TOL = 1e-12


class Framing(str, Enum):
    AB = "AB"
    OPE = "OPE"


def _frozen(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class LoggedRecord:
    """One logged interaction (x, a, y, pi_0(a|x)) plus an optional arm label."""

    context_id: int
    covariates: tuple[float, ...]
    action: int
    reward: float
    logging_propensity: float
    arm: str | None = None

    @classmethod
    def from_mapping(cls, raw: Mapping[str, Any]) -> "LoggedRecord":
        try:
            cov = raw.get("covariates", ())
            if isinstance(cov, str):
                cov = [float(c) for c in cov.split(";") if c.strip()]
            prop = raw["propensity"] if "propensity" in raw else raw["logging_propensity"]
            arm = raw.get("arm")
            return cls(
                context_id=int(raw["context_id"]),
                covariates=tuple(float(c) for c in cov),
                action=int(raw["action"]),
                reward=float(raw["reward"]),
                logging_propensity=float(prop),
                arm=None if arm in (None, "") else str(arm),
            )
        except KeyError as exc:
            raise InvalidRecord(f"missing field {exc.args[0]!r}") from None
        except (TypeError, ValueError) as exc:
            raise InvalidRecord(f"malformed record: {exc}") from None

    def to_mapping(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "context_id": self.context_id,
            "covariates": list(self.covariates),
            "action": self.action,
            "reward": self.reward,
            "propensity": self.logging_propensity,
        }
        if self.arm is not None:
            out["arm"] = self.arm
        return out


@dataclass(frozen=True, eq=False)
class Dataset:
    """Validated, immutable collection of logged records.

    ``index`` holds each record's position in the original input, so subsets
    (e.g. the two arms of an A/B test) can be mapped back to it.
    Use :func:`validate_dataset` or :meth:`from_arrays` to build one.
    """

    context_id: np.ndarray
    covariates: np.ndarray
    action: np.ndarray
    reward: np.ndarray
    propensity: np.ndarray
    arm: np.ndarray | None
    framing: Framing
    index: np.ndarray
    action_count: int | None = None
    arm_labels: tuple[str, str] | None = None

    @classmethod
    def from_arrays(
        cls,
        *,
        context_id: Sequence[int] | np.ndarray,
        action: Sequence[int] | np.ndarray,
        reward: Sequence[float] | np.ndarray,
        propensity: Sequence[float] | np.ndarray,
        framing: Framing | str,
        covariates: np.ndarray | Sequence[Sequence[float]] | None = None,
        arm: Sequence[str] | np.ndarray | None = None,
        action_count: int | None = None,
        arm_labels: tuple[str, str] | None = None,
        index: np.ndarray | None = None,
    ) -> "Dataset":
        framing = Framing(framing)
        reward = np.array(reward, dtype=float)
        n = reward.shape[0] if reward.ndim else 0
        if reward.ndim != 1 or n == 0:
            raise EmptyDataset("dataset has no records")
        context_id = np.array(context_id, dtype=np.int64)
        action = np.array(action, dtype=np.int64)
        propensity = np.array(propensity, dtype=float)
        if covariates is None:
            covariates = np.zeros((n, 0))
        covariates = np.array(covariates, dtype=float)
        if covariates.ndim == 1:
            covariates = covariates.reshape(n, -1)
        for name, col in (("context_id", context_id), ("action", action),
                          ("propensity", propensity), ("covariates", covariates)):
            if col.shape[0] != n:
                raise InvalidRecord(f"column {name!r} has {col.shape[0]} rows, expected {n}")
        if not np.all(np.isfinite(reward)):
            raise InvalidRecord("reward must be finite")
        if not np.all(np.isfinite(covariates)):
            raise InvalidRecord("covariates must be finite")
        if not np.all(np.isfinite(propensity)) or np.any(propensity <= 0) or np.any(propensity > 1):
            bad = int(np.flatnonzero(~((propensity > 0) & (propensity <= 1)))[0])
            raise NonFinitePropensity(
                f"record {bad}: propensity {propensity[bad]!r} outside (0, 1]"
            )
        if np.any(action < 0):
            raise ActionOutOfRange("actions must be non-negative")

        arm_arr = None
        if framing is Framing.AB:
            if arm is None:
                raise UnknownArmLabel("AB framing requires an arm label on every record")
            arm_arr = np.array(arm, dtype=object)
            if arm_arr.shape[0] != n:
                raise InvalidRecord("column 'arm' has the wrong length")
            if arm_labels is None:
                arm_labels = _infer_arm_labels(arm_arr, action)
            arm_labels = (str(arm_labels[0]), str(arm_labels[1]))
            is_t = arm_arr == arm_labels[0]
            is_c = arm_arr == arm_labels[1]
            if not np.all(is_t | is_c):
                bad = int(np.flatnonzero(~(is_t | is_c))[0])
                raise UnknownArmLabel(f"record {bad}: arm {arm_arr[bad]!r} not in {arm_labels}")
            if np.any(action != np.where(is_t, 0, 1)):
                raise InvalidRecord("in AB framing the action must be the arm index (0 treatment, 1 control)")
            action_count = 2
        else:
            if action_count is None:
                action_count = int(action.max()) + 1
            if np.any(action >= action_count):
                bad = int(np.flatnonzero(action >= action_count)[0])
                raise ActionOutOfRange(
                    f"record {bad}: action {int(action[bad])} >= action_count {action_count}"
                )
            if arm is not None:
                arm_arr = np.array(arm, dtype=object)

        if index is None:
            index = np.arange(n, dtype=np.int64)
        else:
            index = np.array(index, dtype=np.int64)
        return cls(
            context_id=_frozen(context_id),
            covariates=_frozen(covariates),
            action=_frozen(action),
            reward=_frozen(reward),
            propensity=_frozen(propensity),
            arm=None if arm_arr is None else _frozen(arm_arr),
            framing=framing,
            index=_frozen(index),
            action_count=action_count,
            arm_labels=arm_labels if framing is Framing.AB else None,
        )

    def __len__(self) -> int:
        return int(self.reward.shape[0])

    @property
    def records(self) -> tuple[LoggedRecord, ...]:
        return tuple(
            LoggedRecord(
                context_id=int(self.context_id[i]),
                covariates=tuple(float(c) for c in self.covariates[i]),
                action=int(self.action[i]),
                reward=float(self.reward[i]),
                logging_propensity=float(self.propensity[i]),
                arm=None if self.arm is None else str(self.arm[i]),
            )
            for i in range(len(self))
        )

    def subset(self, mask: np.ndarray) -> "Dataset":
        """Rows selected by a boolean mask or index array, order preserved."""
        idx = np.arange(len(self))[mask]
        if idx.size == 0:
            raise EmptyDataset("subset is empty")
        return self._replace_rows(idx)

    def _replace_rows(self, idx: np.ndarray) -> "Dataset":
        return Dataset(
            context_id=_frozen(self.context_id[idx]),
            covariates=_frozen(self.covariates[idx]),
            action=_frozen(self.action[idx]),
            reward=_frozen(self.reward[idx]),
            propensity=_frozen(self.propensity[idx]),
            arm=None if self.arm is None else _frozen(self.arm[idx]),
            framing=self.framing,
            index=_frozen(self.index[idx]),
            action_count=self.action_count,
            arm_labels=self.arm_labels,
        )

    def with_rewards(self, reward: np.ndarray) -> "Dataset":
        reward = np.array(reward, dtype=float)
        if reward.shape != self.reward.shape:
            raise InvalidRecord("replacement rewards have the wrong shape")
        if not np.all(np.isfinite(reward)):
            raise InvalidRecord("reward must be finite")
        return Dataset(
            context_id=self.context_id, covariates=self.covariates, action=self.action,
            reward=_frozen(reward), propensity=self.propensity, arm=self.arm,
            framing=self.framing, index=self.index, action_count=self.action_count,
            arm_labels=self.arm_labels,
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        same_arm = (self.arm is None and other.arm is None) or (
            self.arm is not None and other.arm is not None
            and np.array_equal(self.arm, other.arm)
        )
        return (
            self.framing == other.framing
            and self.action_count == other.action_count
            and self.arm_labels == other.arm_labels
            and same_arm
            and all(
                np.array_equal(getattr(self, k), getattr(other, k))
                for k in ("context_id", "covariates", "action", "reward", "propensity", "index")
            )
        )

    __hash__ = None  # type: ignore[assignment]


def _infer_arm_labels(arm: np.ndarray, action: np.ndarray) -> tuple[str, str]:
    labels: dict[int, str] = {}
    for a, lab in zip(action.tolist(), arm.tolist()):
        if a not in (0, 1):
            raise ActionOutOfRange(f"AB action must be 0 or 1, got {a}")
        if labels.setdefault(a, lab) != lab:
            raise InvalidRecord(f"action {a} is used by two arm labels: {labels[a]!r}, {lab!r}")
    return (labels.get(0, "treatment"), labels.get(1, "control"))


def validate_dataset(
    raw_records: Iterable[LoggedRecord | Mapping[str, Any]],
    framing: Framing | str,
    *,
    action_count: int | None = None,
    arm_labels: tuple[str, str] | None = None,
) -> Dataset:
    """Validate a collection of records and freeze it into a :class:`Dataset`.

    Raises EmptyDataset, NonFinitePropensity, UnknownArmLabel or
    ActionOutOfRange when a record breaks the framing's invariants.
    """
    recs = [r if isinstance(r, LoggedRecord) else LoggedRecord.from_mapping(r) for r in raw_records]
    if not recs:
        raise EmptyDataset("dataset has no records")
    widths = {len(r.covariates) for r in recs}
    if len(widths) > 1:
        raise InvalidRecord(f"covariate vectors have inconsistent lengths {sorted(widths)}")
    framing = Framing(framing)
    arms = [r.arm for r in recs]
    if framing is Framing.AB and any(a is None for a in arms):
        raise UnknownArmLabel("AB framing requires an arm label on every record")
    return Dataset.from_arrays(
        context_id=[r.context_id for r in recs],
        covariates=np.array([r.covariates for r in recs], dtype=float).reshape(len(recs), widths.pop()),
        action=[r.action for r in recs],
        reward=[r.reward for r in recs],
        propensity=[r.logging_propensity for r in recs],
        arm=None if all(a is None for a in arms) else arms,
        framing=framing,
        action_count=action_count,
        arm_labels=arm_labels,
    )


def split_by_arm(d: Dataset) -> tuple[Dataset, Dataset]:
    """Partition an AB dataset into (treatment, control), preserving order."""
    if d.framing is not Framing.AB:
        raise WrongFraming("split_by_arm requires AB framing")
    assert d.arm is not None and d.arm_labels is not None
    is_t = d.arm == d.arm_labels[0]
    if not is_t.any() or is_t.all():
        raise EmptyArm("one of the arms has no records")
    return d._replace_rows(np.flatnonzero(is_t)), d._replace_rows(np.flatnonzero(~is_t))


@dataclass(frozen=True, eq=False)
class PolicyTable:
    """Row-stochastic matrix ``probabilities[context_id, action]``.

    A single-row table is context-free and broadcasts over every context id.
    """

    probabilities: np.ndarray

    def __post_init__(self) -> None:
        p = np.array(self.probabilities, dtype=float)
        if p.ndim == 1:
            p = p.reshape(1, -1)
        if p.ndim != 2 or p.size == 0:
            raise InvalidPolicy("policy table must be a non-empty matrix")
        if not np.all(np.isfinite(p)) or np.any(p < 0):
            raise InvalidPolicy("policy probabilities must be finite and non-negative")
        sums = p.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > ROW_SUM_TOL):
            raise InvalidPolicy(f"policy rows must sum to 1 (worst row sums to {sums[np.argmax(np.abs(sums - 1))]!r})")
        object.__setattr__(self, "probabilities", _frozen(p))

    @classmethod
    def point_mass(cls, action: int, n_actions: int, n_contexts: int = 1) -> "PolicyTable":
        p = np.zeros((n_contexts, n_actions))
        p[:, action] = 1.0
        return cls(p)

    @classmethod
    def uniform(cls, n_actions: int, n_contexts: int = 1) -> "PolicyTable":
        return cls(np.full((n_contexts, n_actions), 1.0 / n_actions))

    @property
    def n_contexts(self) -> int:
        return self.probabilities.shape[0]

    @property
    def n_actions(self) -> int:
        return self.probabilities.shape[1]

    def prob(self, context_id: Any, action: Any) -> np.ndarray | float:
        """pi(a|x), vectorised over matching arrays of contexts and actions."""
        rows = np.zeros_like(np.asarray(context_id)) if self.n_contexts == 1 else np.asarray(context_id)
        out = self.probabilities[rows, np.asarray(action)]
        return float(out) if np.ndim(out) == 0 else out

    def rows_for(self, context_id: np.ndarray) -> np.ndarray:
        """Full distributions pi(.|x_i), shape (n, n_actions)."""
        if self.n_contexts == 1:
            return np.broadcast_to(self.probabilities[0], (len(context_id), self.n_actions))
        return self.probabilities[np.asarray(context_id)]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PolicyTable):
            return NotImplemented
        return np.array_equal(self.probabilities, other.probabilities)

    __hash__ = None  # type: ignore[assignment]


class ModelKind(str, Enum):
    ACTION_AGNOSTIC = "action_agnostic"
    ACTION_AWARE = "action_aware"


class LinearPredictor:
    """``covariates @ coef + intercept``; one coefficient row per action if 2-D."""

    def __init__(self, coef: Sequence[float] | np.ndarray, intercept: float | Sequence[float] = 0.0):
        self.coef = np.asarray(coef, dtype=float)
        self.intercept = np.asarray(intercept, dtype=float)

    def __call__(self, d: Dataset, actions: np.ndarray | None = None) -> np.ndarray:
        if self.coef.ndim == 1:
            return d.covariates @ self.coef + self.intercept
        coef = self.coef[actions]
        icpt = np.broadcast_to(self.intercept, (self.coef.shape[0],))[actions]
        return np.einsum("ij,ij->i", d.covariates, coef) + icpt


class RecordValues:
    """Per-record predictions looked up by each record's original index."""

    def __init__(self, values: Sequence[float] | np.ndarray):
        self.values = _frozen(np.array(values, dtype=float))

    def __call__(self, d: Dataset, actions: np.ndarray | None = None) -> np.ndarray:
        if d.index.size and d.index.max() >= self.values.size:
            raise InvalidRecord(
                f"{self.values.size} predictions supplied but record index {int(d.index.max())} requested"
            )
        return self.values[d.index]


class ContextActionTable:
    """f(x, a) = table[context_id, a]."""

    def __init__(self, table: np.ndarray | Sequence[Sequence[float]]):
        self.table = _frozen(np.array(table, dtype=float))

    def __call__(self, d: Dataset, actions: np.ndarray | None = None) -> np.ndarray:
        return self.table[d.context_id, actions]


@dataclass(frozen=True)
class RewardModel:
    """Outcome predictor f(x) (action-agnostic) or f(x, a) (action-aware).

    ``fn`` receives the dataset (and, for action-aware models, an action per
    record) and returns one prediction per record.  ``offset`` is added to
    every prediction; :meth:`shifted` is how models get re-centred.
    """

    kind: ModelKind
    fn: Callable[..., np.ndarray]
    offset: float = 0.0

    @property
    def action_agnostic(self) -> bool:
        return self.kind is ModelKind.ACTION_AGNOSTIC

    def predict(self, d: Dataset, actions: np.ndarray | None = None) -> np.ndarray:
        if self.action_agnostic:
            out = np.asarray(self.fn(d), dtype=float)
        else:
            if actions is None:
                actions = d.action
            actions = np.broadcast_to(np.asarray(actions, dtype=np.int64), (len(d),))
            out = np.asarray(self.fn(d, actions), dtype=float)
        out = np.broadcast_to(out, (len(d),))
        return out + self.offset if self.offset else np.array(out)

    def shifted(self, delta: float) -> "RewardModel":
        return RewardModel(self.kind, self.fn, self.offset + float(delta))

    @classmethod
    def zero(cls) -> "RewardModel":
        return cls.constant(0.0)

    @classmethod
    def constant(cls, c: float) -> "RewardModel":
        return cls(ModelKind.ACTION_AGNOSTIC, _Zero(), float(c))

    @classmethod
    def linear(cls, coef: Sequence[float], intercept: float = 0.0) -> "RewardModel":
        return cls(ModelKind.ACTION_AGNOSTIC, LinearPredictor(coef, intercept))

    @classmethod
    def linear_per_action(cls, coef: Sequence[Sequence[float]], intercept: Sequence[float] | float = 0.0) -> "RewardModel":
        return cls(ModelKind.ACTION_AWARE, LinearPredictor(np.atleast_2d(coef), intercept))

    @classmethod
    def from_values(cls, values: Sequence[float] | np.ndarray) -> "RewardModel":
        return cls(ModelKind.ACTION_AGNOSTIC, RecordValues(values))

    @classmethod
    def from_table(cls, table: np.ndarray | Sequence[Sequence[float]]) -> "RewardModel":
        return cls(ModelKind.ACTION_AWARE, ContextActionTable(table))


class _Zero:
    def __call__(self, d: Dataset, actions: np.ndarray | None = None) -> np.ndarray:
        return np.zeros(len(d))


@dataclass(frozen=True)
class EstimateResult:
    point: float
    variance_of_mean: float
    stderr: float
    dof_loss: int
    ci_low: float
    ci_high: float
    n_used: int
    ci_level: float = 0.95

    @classmethod
    def build(cls, point: float, variance_of_mean: float, *, dof_loss: int, n_used: int,
              ci_level: float = 0.95) -> "EstimateResult":
        """Normal-approximation interval ``point +/- z * stderr``."""
        if not 0.0 < ci_level < 1.0:
            raise ValueError(f"ci_level must be in (0, 1), got {ci_level}")
        variance_of_mean = max(float(variance_of_mean), 0.0)
        se = math.sqrt(variance_of_mean)
        z = NormalDist().inv_cdf(0.5 + ci_level / 2.0)
        point = float(point)
        return cls(point, variance_of_mean, se, int(dof_loss), point - z * se, point + z * se,
                   int(n_used), float(ci_level))

    def covers(self, value: float) -> bool:
        return self.ci_low <= value <= self.ci_high

    def to_dict(self) -> dict[str, Any]:
        return {
            "point": self.point,
            "variance_of_mean": self.variance_of_mean,
            "stderr": self.stderr,
            "dof_loss": self.dof_loss,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "n_used": self.n_used,
            "ci_level": self.ci_level,
        }

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "EstimateResult":
        return cls(
            point=float(raw["point"]),
            variance_of_mean=float(raw["variance_of_mean"]),
            stderr=float(raw["stderr"]),
            dof_loss=int(raw["dof_loss"]),
            ci_low=float(raw["ci_low"]),
            ci_high=float(raw["ci_high"]),
            n_used=int(raw["n_used"]),
            ci_level=float(raw.get("ci_level", 0.95)),
        )


def context_distribution(cfg: "SyntheticConfig") -> np.ndarray:
    weights = getattr(cfg, "context_weights", None)
    table = np.asarray(cfg.reward_table, dtype=float)
    if weights is None:
        return np.full(table.shape[0], 1.0 / table.shape[0])
    w = np.asarray(weights, dtype=float)
    return w / w.sum()


def true_policy_value(pi: PolicyTable, dgp: "SyntheticConfig") -> float:
    """Exact V(pi) = sum_x P(x) sum_a pi(a|x) E[Y|x,a] by enumeration."""
    table = np.asarray(dgp.reward_table, dtype=float)
    if not np.all(np.isfinite(table)):
        raise NonFiniteExpectedReward("reward table contains non-finite entries")
    px = context_distribution(dgp)
    probs = pi.rows_for(np.arange(table.shape[0]))
    if probs.shape != table.shape:
        raise InvalidPolicy(f"policy shape {probs.shape} does not match reward table {table.shape}")
    return float(np.sum(px[:, None] * probs * table))
